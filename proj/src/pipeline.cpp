#include "chartmark/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <mutex>
#include <thread>

#include "chartmark/cot.hpp"
#include "chartmark/instruction.hpp"
#include "chartmark/marker.hpp"
#include "chartmark/prompts.hpp"
#include "chartmark/renderer.hpp"
#include "chartmark/util.hpp"

namespace chartmark {

using nlohmann::json;
namespace fs = std::filesystem;

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::meta: return "meta";
    case Stage::cot: return "cot";
    case Stage::code: return "code";
    case Stage::render: return "render";
    case Stage::detect: return "detect";
    case Stage::qa: return "qa";
  }
  return "?";
}

Stage stage_from_string(std::string_view s) {
  for (auto st : kStages) {
    if (to_string(st) == s) return st;
  }
  throw FormatError("unknown stage '" + std::string(s) + "'");
}

// --- config --------------------------------------------------------------------

namespace {

double probability(const json& v, const std::string& name) {
  const double p = v.get<double>();
  if (!(p >= 0 && p <= 1)) throw ConfigError(name + " must be in [0, 1]");
  return p;
}

// Accepts both signed and unsigned JSON integers; documents built in code
// store small literals as signed.
bool is_non_negative_integer(const json& v) {
  return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
}

}  // namespace

PipelineConfig pipeline_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  PipelineConfig c;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "seed") {
        if (!is_non_negative_integer(value)) throw ConfigError("seed must be a non-negative integer");
        c.seed = value.get<std::uint64_t>();
      } else if (key == "n_charts") {
        if (!is_non_negative_integer(value) || value.get<std::uint64_t>() < 1) throw ConfigError("n_charts must be >= 1");
        c.n_charts = value.get<std::size_t>();
      } else if (key == "type_mix") {
        c.type_mix = type_mix_from_json(value);
      } else if (key == "bbox_format") {
        c.bbox_format = bbox_format_from_string(value.get<std::string>());
      } else if (key == "min_marker_px") {
        c.min_marker_px = value.get<double>();
        if (!(c.min_marker_px >= 0) || !std::isfinite(c.min_marker_px)) throw ConfigError("min_marker_px must be >= 0");
      } else if (key == "cap") {
        if (value.is_null()) {
          c.cap.reset();
        } else {
          c.cap = value.get<double>();
          if (!(*c.cap >= 0) || !std::isfinite(*c.cap)) throw ConfigError("cap must be a non-negative number");
        }
      } else if (key == "client") {
        c.client = client_config_from_json(value);
      } else if (key == "fault_injection") {
        if (!value.is_object()) throw ConfigError("fault_injection must be an object");
        for (const auto& [stage, p] : value.items()) {
          if (stage == "cot") {
            c.faults.cot = probability(p, "fault_injection.cot");
          } else if (stage == "code") {
            c.faults.code = probability(p, "fault_injection.code");
          } else if (stage == "render") {
            c.faults.render = probability(p, "fault_injection.render");
          } else if (stage == "detect") {
            c.faults.detect = probability(p, "fault_injection.detect");
          } else {
            throw ConfigError("fault_injection has no stage '" + stage + "'");
          }
        }
      } else if (key == "persist_renders") {
        c.persist_renders = value.get<bool>();
      } else {
        throw ConfigError("unknown config key '" + key + "'");
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  } catch (const SyntaxError& e) {
    throw ConfigError(e.what());
  }
  return c;
}

PipelineConfig load_pipeline_config(const std::string& path) {
  const std::string text = read_file(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return pipeline_config_from_json(j);
}

json to_json(const PipelineConfig& c) {
  return {{"seed", c.seed},
          {"n_charts", c.n_charts},
          {"type_mix", to_json(c.type_mix)},
          {"bbox_format", to_string(c.bbox_format)},
          {"min_marker_px", c.min_marker_px},
          {"cap", c.cap ? json(*c.cap) : json(nullptr)},
          {"client", to_json(c.client)},
          {"fault_injection",
           {{"cot", c.faults.cot}, {"code", c.faults.code}, {"render", c.faults.render}, {"detect", c.faults.detect}}},
          {"persist_renders", c.persist_renders}};
}

std::string config_hash(const PipelineConfig& c) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(to_json(c).dump())));
  return buf;
}

// --- records -------------------------------------------------------------------

double StageReport::success_rate() const {
  return attempted == 0 ? 0.0 : static_cast<double>(passed) / static_cast<double>(attempted);
}

namespace {

json box_json(const PixelBBox& b) { return json::array({b.x0, b.y0, b.x1, b.y1}); }

PixelBBox box_from_json(const json& j) {
  return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>(), j.at(3).get<double>()};
}

}  // namespace

json to_json(const ChartRecord& r) {
  json detections = json::array();
  for (const auto& d : r.detections) {
    detections.push_back(
        {{"step", d.step}, {"raw", box_json(d.raw)}, {"bbox", box_json(d.bbox)}, {"method", d.method}, {"norm", d.norm}});
  }
  std::vector<std::string> stages;
  for (int i = 0; i < r.stages_passed; ++i) stages.emplace_back(to_string(kStages[static_cast<std::size_t>(i)]));
  return {{"id", r.id},
          {"chart_type", to_string(r.chart_type)},
          {"status", r.passed() ? "passed" : "failed"},
          {"stages_passed", stages},
          {"failed_stage", r.failed_stage ? json(to_string(*r.failed_stage)) : json(nullptr)},
          {"reason", r.reason},
          {"n_grounding", r.n_grounding},
          {"n_reasoning", r.n_reasoning},
          {"n_records", r.n_records},
          {"detections", detections},
          {"files", r.files}};
}

ChartRecord chart_record_from_json(const json& j) {
  try {
    ChartRecord r;
    r.id = j.at("id").get<std::string>();
    r.chart_type = chart_type_from_string(j.at("chart_type").get<std::string>());
    const auto& stages = j.at("stages_passed");
    r.stages_passed = static_cast<int>(stages.size());
    for (std::size_t i = 0; i < stages.size(); ++i) {
      if (stage_from_string(stages[i].get<std::string>()) != kStages.at(i)) {
        throw FormatError("stages_passed out of order for " + r.id);
      }
    }
    if (!j.at("failed_stage").is_null()) r.failed_stage = stage_from_string(j.at("failed_stage").get<std::string>());
    r.reason = j.at("reason").get<std::string>();
    r.n_grounding = j.at("n_grounding").get<int>();
    r.n_reasoning = j.at("n_reasoning").get<int>();
    r.n_records = j.at("n_records").get<int>();
    for (const auto& d : j.at("detections")) {
      r.detections.push_back({d.at("step").get<int>(), box_from_json(d.at("raw")), box_from_json(d.at("bbox")),
                              d.at("method").get<std::string>(), d.at("norm").get<std::string>()});
    }
    r.files = j.at("files").get<std::map<std::string, std::vector<std::string>>>();
    return r;
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad chart entry in manifest: ") + e.what());
  } catch (const SyntaxError& e) {
    throw FormatError(std::string("bad chart entry in manifest: ") + e.what());
  }
}

json to_json(const StatsReport& s) {
  const auto hist = [](const std::map<int, std::size_t>& h) {
    json out = json::object();
    for (const auto& [k, v] : h) out[std::to_string(k)] = v;
    return out;
  };
  json types = json::object();
  for (const auto& [t, n] : s.type_counts) {
    types[std::string(to_string(t))] = {{"count", n}, {"share", s.type_share.at(t)}};
  }
  return {{"n_passed", s.n_passed},
          {"n_records", s.n_records},
          {"records_per_chart", s.records_per_chart},
          {"histograms", {{"grounding", hist(s.grounding_hist)}, {"reasoning", hist(s.reasoning_hist)}, {"total", hist(s.total_hist)}}},
          {"total_mode", s.total_mode},
          {"chart_types", types}};
}

json to_json(const DatasetManifest& m) {
  json charts = json::array();
  for (const auto& c : m.charts) charts.push_back(to_json(c));
  json reports = json::array();
  for (const auto& r : m.stage_reports) {
    reports.push_back(
        {{"stage", to_string(r.stage)}, {"attempted", r.attempted}, {"passed", r.passed}, {"success_rate", r.success_rate()}});
  }
  return {{"run_id", m.run_id},
          {"config_hash", m.config_hash},
          {"config", to_json(m.config)},
          {"prompts_version", prompts::kVersion},
          {"complete", m.complete},
          {"charts", charts},
          {"stage_reports", reports},
          {"stats", m.stats ? to_json(*m.stats) : json(nullptr)}};
}

DatasetManifest manifest_from_json(const json& j) {
  try {
    DatasetManifest m;
    m.run_id = j.at("run_id").get<std::string>();
    m.config_hash = j.at("config_hash").get<std::string>();
    m.config = pipeline_config_from_json(j.at("config"));
    m.complete = j.at("complete").get<bool>();
    for (const auto& c : j.at("charts")) m.charts.push_back(chart_record_from_json(c));
    for (const auto& r : j.at("stage_reports")) {
      m.stage_reports.push_back({stage_from_string(r.at("stage").get<std::string>()), r.at("attempted").get<std::size_t>(),
                                 r.at("passed").get<std::size_t>()});
    }
    if (!j.at("stats").is_null()) m.stats = compute_stats(m);
    return m;
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad manifest: ") + e.what());
  }
}

std::string serialize_manifest(const DatasetManifest& m) { return to_json(m).dump(2) + "\n"; }

DatasetManifest load_manifest(const std::string& path) {
  const std::string text = read_file(path);
  try {
    return manifest_from_json(json::parse(text));
  } catch (const json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
}

std::vector<StageReport> stage_reports(const std::vector<ChartRecord>& charts, std::size_t n_charts) {
  std::vector<StageReport> out;
  std::size_t attempted = n_charts;
  for (auto s : kStages) {
    const auto passed = static_cast<std::size_t>(
        std::count_if(charts.begin(), charts.end(), [s](const ChartRecord& c) { return c.passed_stage(s); }));
    out.push_back({s, attempted, passed});
    attempted = passed;
  }
  return out;
}

StatsReport compute_stats(const DatasetManifest& manifest) {
  StatsReport s;
  for (const auto& c : manifest.charts) {
    if (!c.passed()) continue;
    ++s.n_passed;
    s.n_records += static_cast<std::size_t>(c.n_records);
    ++s.grounding_hist[c.n_grounding];
    ++s.reasoning_hist[c.n_reasoning];
    ++s.total_hist[c.n_grounding + c.n_reasoning];
    ++s.type_counts[c.chart_type];
  }
  if (s.n_passed == 0) throw EmptyError("no chart passed every stage");
  const double n = static_cast<double>(s.n_passed);
  for (const auto& [t, count] : s.type_counts) s.type_share[t] = static_cast<double>(count) / n;
  s.records_per_chart = static_cast<double>(s.n_records) / n;
  std::size_t best = 0;
  for (const auto& [k, v] : s.total_hist) {
    if (v > best) {
      best = v;
      s.total_mode = k;
    }
  }
  return s;
}

namespace run_paths {
std::string spec(const std::string& id) { return "specs/" + id + ".json"; }
std::string cot(const std::string& id) { return "cot/" + id + ".json"; }
std::string edited(const std::string& id, int step) { return "edited/" + id + "_s" + std::to_string(step) + ".json"; }
std::string render(const std::string& id, int step) { return "renders/" + id + "_s" + std::to_string(step) + ".svg"; }
std::string records(const std::string& id) { return "records/" + id + ".jsonl"; }
}  // namespace run_paths

// --- per-chart processing --------------------------------------------------------

namespace {

constexpr std::uint64_t kCotSalt = 1;
constexpr std::uint64_t kCapSalt = 2;
constexpr std::uint64_t kFaultSalt = 0xFA017;

class ChartProcessor {
 public:
  ChartProcessor(const PipelineConfig& config, const std::string& out_dir, LlmClient& client, const RunOptions& options)
      : config_(config),
        out_dir_(out_dir),
        client_(client),
        cot_client_(client, std::string(prompts::kCotTemplateId), config.faults.cot, config.seed),
        options_(options) {}

  ChartRecord process(const ChartSpec& spec) const;

 private:
  bool fault(Stage stage, const std::string& id, double p) const {
    if (p <= 0) return false;
    Rng rng(derive_seed(config_.seed, std::string(to_string(stage)) + "/" + id, kFaultSalt));
    return rng.uniform() < p;
  }

  void write(const std::string& rel, std::string_view contents) const {
    write_file_atomic((fs::path(out_dir_) / rel).string(), contents);
  }

  const PipelineConfig& config_;
  std::string out_dir_;
  LlmClient& client_;
  mutable FaultInjectingClient cot_client_;
  const RunOptions& options_;
};

struct EditedRender {
  const Step* step;
  EditedSpec edit;
  std::string svg;
  std::optional<Bitmap> bitmap;
};

std::string edit_instruction(const Step& step) {
  return step.text + " [target: " + to_json(*step.target).dump() + "]";
}

// Adds a stray marker blob to the raster, plus a stray '@' text node when the
// target carries a text marker, so both detection passes see two candidates.
void inject_second_marker(EditedRender& r) {
  if (!find_text_markers(r.svg).empty()) {
    const auto end = r.svg.rfind("</svg>");
    r.svg.insert(end, "<text x=\"4.00\" y=\"16.00\" font-size=\"12.00\" text-anchor=\"start\">@</text>\n");
  }
  if (!r.bitmap) r.bitmap = rasterize(r.edit.spec, decorations(r.edit)).bitmap;
  draw_marker(*r.bitmap, {static_cast<double>(r.bitmap->width()) - 8, static_cast<double>(r.bitmap->height()) - 8});
}

ChartRecord ChartProcessor::process(const ChartSpec& spec) const {
  ChartRecord r;
  r.id = spec.id;
  r.chart_type = spec.chart_type;
  const std::string& id = spec.id;
  const auto passed = [&](Stage s) {
    r.stages_passed = static_cast<int>(s) + 1;
    if (options_.interrupt && options_.interrupt(id, s)) {
      throw Interrupted("interrupted after " + std::string(to_string(s)) + " of " + id);
    }
  };
  const auto fail = [&](Stage s, const std::exception& e) {
    r.failed_stage = s;
    r.reason = e.what();
    return r;
  };

  // meta
  GeometryMap geometry;
  try {
    validate(spec);
    geometry = layout(spec);
  } catch (const Error& e) {
    return fail(Stage::meta, e);
  }
  write(run_paths::spec(id), serialize_spec(spec) + "\n");
  r.files["spec"] = {run_paths::spec(id)};
  passed(Stage::meta);

  // cot
  const std::uint64_t chart_seed = derive_seed(config_.seed, id, kCotSalt);
  CotSample sample;
  try {
    sample = generate_cot_llm(spec, cot_client_, chart_seed);
    check_targets(sample, geometry);
    if (sample.grounding_count() == 0) throw IntegrityError("chain of thought has no Grounding step");
  } catch (const Error& e) {
    return fail(Stage::cot, e);
  }
  r.n_grounding = static_cast<int>(sample.grounding_count());
  r.n_reasoning = static_cast<int>(sample.reasoning_count());
  write(run_paths::cot(id), serialize_cot(sample) + "\n");
  r.files["cot"] = {run_paths::cot(id)};
  passed(Stage::cot);

  // code
  std::vector<EditedRender> edits;
  try {
    const bool drop_marker = fault(Stage::code, id, config_.faults.code);
    for (const auto& step : sample.steps) {
      if (step.kind != StepKind::Grounding) continue;
      ChatRequest request;
      request.template_id = std::string(prompts::kCodeEditTemplateId);
      request.chart_id = id;
      request.seed = chart_seed;
      request.messages.push_back(
          {"user", prompts::code_edit(prompts::code_edit_example(), edit_instruction(step), serialize_spec(spec))});
      std::string reply = client_.chat(request);
      // Simulated teacher slip: the first edit comes back without its marker.
      if (drop_marker && edits.empty()) reply = serialize_spec(spec);
      EditedSpec edit = parse_edited_spec(extract_json_block(reply));
      const auto markers = count_markers(edit);
      if (markers != 1) {
        throw TargetError("edit for step " + std::to_string(step.index) + " carries " + std::to_string(markers) +
                          " markers");
      }
      if (!preserves_content(edit, spec)) throw IntegrityError("edit for step " + std::to_string(step.index) + " changed chart content");
      edits.push_back({&step, std::move(edit), {}, std::nullopt});
    }
  } catch (const Error& e) {
    return fail(Stage::code, e);
  }
  for (const auto& e : edits) {
    write(run_paths::edited(id, e.step->index), serialize_edited_spec(e.edit) + "\n");
    r.files["edited"].push_back(run_paths::edited(id, e.step->index));
  }
  passed(Stage::code);

  // render
  try {
    if (fault(Stage::render, id, config_.faults.render)) throw RenderError("injected renderer failure");
    for (auto& e : edits) {
      const Decorations deco = decorations(e.edit);
      e.svg = render_svg(e.edit.spec, deco).svg;
      if (!deco.markers.empty()) e.bitmap = rasterize(e.edit.spec, deco).bitmap;
    }
  } catch (const Error& e) {
    return fail(Stage::render, e);
  }
  if (config_.persist_renders) {
    for (const auto& e : edits) {
      write(run_paths::render(id, e.step->index), e.svg);
      r.files["renders"].push_back(run_paths::render(id, e.step->index));
    }
  }
  passed(Stage::render);

  // detect
  std::map<int, NormBBox> boxes;
  try {
    if (fault(Stage::detect, id, config_.faults.detect)) inject_second_marker(edits.front());
    const double min_px = config_.min_marker_px * spec.canvas.width / 1000.0;
    for (auto& e : edits) {
      const auto found = detect_markers(e.svg, [&e] {
        if (!e.bitmap) e.bitmap = rasterize(e.edit.spec, decorations(e.edit)).bitmap;
        return *e.bitmap;
      });
      const PixelBBox box = finalize_bbox(found.bbox, spec.canvas, min_px, min_px);
      const NormBBox norm = normalize(box, spec.canvas, config_.bbox_format);
      boxes.emplace(e.step->index, norm);
      r.detections.push_back(
          {e.step->index, found.bbox, box, std::string(to_string(found.method)), serialize(norm)});
    }
  } catch (const Error& e) {
    r.detections.clear();
    return fail(Stage::detect, e);
  }
  passed(Stage::detect);

  // qa
  std::vector<InstructionSample> records;
  try {
    if (!review_qa(sample, spec, client_, chart_seed)) throw IntegrityError("review rejected the question/answer pair");
    records = build_instructions(spec, sample, boxes, config_.cap, derive_seed(config_.seed, id, kCapSalt));
  } catch (const Error& e) {
    return fail(Stage::qa, e);
  }
  std::map<std::string, std::string> images;
  std::string lines;
  for (const auto& rec : records) {
    if (!images.contains(rec.image.file)) {
      images[rec.image.file] = rec.image.variant == ImageVariant::vanilla
                                   ? render_svg(spec).svg
                                   : render_svg(spec, std::span<const PixelBBox>(rec.image.overlay_boxes)).svg;
    }
    lines += to_json(rec).dump() + "\n";
  }
  for (const auto& [file, svg] : images) {
    write(file, svg);
    r.files["images"].push_back(file);
  }
  write(run_paths::records(id), lines);
  r.files["records"] = {run_paths::records(id)};
  r.n_records = static_cast<int>(records.size());
  passed(Stage::qa);
  return r;
}

}  // namespace

// --- run -----------------------------------------------------------------------

void emit_dataset(const DatasetManifest& manifest, const std::string& out_dir) {
  const fs::path root(out_dir);
  std::string dataset;
  for (const auto& c : manifest.charts) {
    if (c.passed()) dataset += read_file((root / run_paths::records(c.id)).string());
  }
  write_file_atomic((root / run_paths::kDataset).string(), dataset);

  json reports = json::array();
  for (const auto& r : manifest.stage_reports) {
    reports.push_back(
        {{"stage", to_string(r.stage)}, {"attempted", r.attempted}, {"passed", r.passed}, {"success_rate", r.success_rate()}});
  }
  write_file_atomic((root / run_paths::kStageReport).string(), reports.dump(2) + "\n");
  const StatsReport stats = manifest.stats.value_or(StatsReport{});
  write_file_atomic((root / run_paths::kStats).string(), to_json(stats).dump(2) + "\n");
}

DatasetManifest run(const PipelineConfig& config, const std::string& out_dir, const RunOptions& options) {
  validate(config.client);
  if (config.n_charts == 0) throw ConfigError("n_charts must be >= 1");
  const fs::path root(out_dir);
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw IoError("cannot create " + out_dir + ": " + ec.message());

  DatasetManifest manifest;
  manifest.config = config;
  manifest.config_hash = config_hash(config);
  manifest.run_id = "run-" + manifest.config_hash.substr(0, 8);
  const std::string manifest_path = (root / run_paths::kManifest).string();

  std::map<std::string, ChartRecord> done;
  if (fs::exists(manifest_path)) {
    DatasetManifest previous = load_manifest(manifest_path);
    if (previous.config_hash != manifest.config_hash) {
      throw ConfigError(out_dir + " holds a run with a different config (hash " + previous.config_hash + ")");
    }
    for (auto& c : previous.charts) done.emplace(c.id, std::move(c));
  }

  const auto specs = generate_corpus(config.seed, config.n_charts, config.type_mix);
  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (!done.contains(specs[i].id)) pending.push_back(i);
  }
  if (options.log) {
    options.log(manifest.run_id + ": " + std::to_string(pending.size()) + " of " + std::to_string(specs.size()) +
                " charts to process");
  }

  auto client = make_client(config.client);
  ChartProcessor processor(config, out_dir, *client, options);

  std::mutex mutex;
  std::size_t since_checkpoint = 0;
  const auto checkpoint = [&] {
    DatasetManifest partial = manifest;
    for (const auto& [id, c] : done) partial.charts.push_back(c);
    write_file_atomic(manifest_path, serialize_manifest(partial));
  };

  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::exception_ptr failure;
  const auto worker = [&] {
    while (!stop.load()) {
      const std::size_t k = next.fetch_add(1);
      if (k >= pending.size()) return;
      try {
        ChartRecord record = processor.process(specs[pending[k]]);
        std::lock_guard lock(mutex);
        done.emplace(record.id, std::move(record));
        const std::size_t threshold = std::max(options.checkpoint_every, done.size() / 8);
        if (++since_checkpoint >= threshold) {
          since_checkpoint = 0;
          checkpoint();
          if (options.log) options.log(std::to_string(done.size()) + "/" + std::to_string(specs.size()) + " charts");
        }
      } catch (...) {
        std::lock_guard lock(mutex);
        if (!failure) failure = std::current_exception();
        stop = true;
      }
    }
  };
  const std::size_t n_workers = std::max<std::size_t>(1, std::min(options.workers, pending.size()));
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (std::size_t i = 0; i < n_workers; ++i) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  for (auto& [id, c] : done) manifest.charts.push_back(std::move(c));
  manifest.stage_reports = stage_reports(manifest.charts, config.n_charts);
  try {
    manifest.stats = compute_stats(manifest);
  } catch (const EmptyError&) {
    manifest.stats.reset();
  }
  manifest.complete = true;
  emit_dataset(manifest, out_dir);
  write_file_atomic(manifest_path, serialize_manifest(manifest));
  return manifest;
}

}  // namespace chartmark
