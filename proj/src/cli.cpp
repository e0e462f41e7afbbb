#include "chartmark/cli.hpp"

#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "chartmark/cot.hpp"
#include "chartmark/eval.hpp"
#include "chartmark/instruction.hpp"
#include "chartmark/marker.hpp"
#include "chartmark/prompts.hpp"
#include "chartmark/renderer.hpp"
#include "chartmark/util.hpp"

namespace chartmark {

using nlohmann::json;
namespace fs = std::filesystem;

std::string html_escape(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&#39;"; break;
      default: out += c;
    }
  }
  return out;
}

// --- gallery -------------------------------------------------------------------

namespace {

constexpr std::string_view kPageStyle =
    "body{font-family:sans-serif;margin:24px;color:#222}img{border:1px solid #ccc;max-width:100%}"
    "table{border-collapse:collapse}td,th{border:1px solid #ddd;padding:4px 8px;vertical-align:top;text-align:left}"
    ".fail{color:#b00}.pass{color:#070}figure{display:inline-block;margin:8px}pre{white-space:pre-wrap}";

std::string page(std::string_view title, std::string_view body) {
  return "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>" + html_escape(title) + "</title><style>" +
         std::string(kPageStyle) + "</style></head><body>\n" + std::string(body) + "</body></html>\n";
}

std::optional<std::string> try_read(const fs::path& p) {
  if (!fs::exists(p)) return std::nullopt;
  return read_file(p.string());
}

}  // namespace

GalleryResult write_gallery(const DatasetManifest& manifest, const std::string& run_dir, const std::string& gallery_dir) {
  const fs::path run(run_dir), out(gallery_dir);
  GalleryResult result;
  const auto image = [&](const std::string& name, const std::string& svg) {
    write_file_atomic((out / "img" / name).string(), svg);
    ++result.images;
    return "img/" + name;
  };

  std::string index = "<h1>" + html_escape(manifest.run_id.empty() ? "run" : manifest.run_id) + "</h1>\n";
  std::size_t n_passed = 0;
  for (const auto& c : manifest.charts) n_passed += c.passed() ? 1 : 0;
  index += "<p>" + std::to_string(manifest.charts.size()) + " samples, " + std::to_string(n_passed) +
           " passed every stage.</p>\n";
  if (!manifest.charts.empty()) {
    index += "<table><tr><th>chart</th><th>type</th><th>status</th><th>steps (G/R)</th><th>records</th></tr>\n";
  }

  for (const auto& c : manifest.charts) {
    std::string body = "<p><a href=\"index.html\">index</a></p>\n<h1>" + html_escape(c.id) + "</h1>\n";
    body += "<p>type " + std::string(to_string(c.chart_type)) + ", ";
    body += c.passed() ? "<span class=\"pass\">passed</span>"
                       : "<span class=\"fail\">failed at " + std::string(to_string(*c.failed_stage)) + ": " +
                             html_escape(c.reason) + "</span>";
    body += "</p>\n";

    if (auto spec_text = try_read(run / run_paths::spec(c.id))) {
      const ChartSpec spec = parse_spec(*spec_text);
      body += "<h2>Vanilla render</h2>\n<figure><img src=\"" + image(c.id + ".svg", render_svg(spec).svg) +
              "\" alt=\"" + html_escape(c.id) + "\"></figure>\n";
    }

    std::optional<CotSample> sample;
    if (auto cot_text = try_read(run / run_paths::cot(c.id))) sample = validate_cot(*cot_text);

    if (auto it = c.files.find("edited"); it != c.files.end()) {
      body += "<h2>Edited renders</h2>\n";
      for (const auto& rel : it->second) {
        const EditedSpec edit = parse_edited_spec(read_file((run / rel).string()));
        Decorations deco = decorations(edit);
        std::string caption = fs::path(rel).stem().string();
        for (const auto& d : c.detections) {
          if (run_paths::edited(c.id, d.step) == rel) {
            deco.overlays.push_back(d.bbox);
            caption += " " + d.method + " " + d.norm;
          }
        }
        const std::string file = image(fs::path(rel).stem().string() + ".svg", render_svg(edit.spec, deco).svg);
        body += "<figure><img src=\"" + file + "\" alt=\"" + html_escape(caption) + "\"><figcaption>" +
                html_escape(caption) + "</figcaption></figure>\n";
      }
    }

    if (sample) {
      body += "<h2>Chain of thought</h2>\n<p><b>Q:</b> " + html_escape(sample->question) + "<br><b>A:</b> " +
              html_escape(answer_to_string(sample->answer)) + "</p>\n<ol start=\"0\">\n";
      for (const auto& step : sample->steps) {
        body += "<li>[" + std::string(to_string(step.kind)) + "] " + html_escape(step.text);
        if (step.target) body += " <i>(" + html_escape(describe(*step.target)) + ")</i>";
        body += "</li>\n";
      }
      body += "</ol>\n";
    }

    if (auto records = try_read(run / run_paths::records(c.id)); records && c.passed()) {
      body += "<h2>Instruction records</h2>\n<table><tr><th>kind</th><th>step</th><th>image</th><th>prompt</th>"
              "<th>ground truth</th></tr>\n";
      std::istringstream lines(*records);
      std::string line;
      while (std::getline(lines, line)) {
        if (line.empty()) continue;
        const json rec = json::parse(line);
        std::string prompt;
        for (const auto& part : rec.at("prompt")) prompt += part.get<std::string>() + "\n";
        body += "<tr><td>" + html_escape(rec.at("kind").get<std::string>()) + "</td><td>" +
                (rec.at("step").is_null() ? std::string() : std::to_string(rec.at("step").get<int>())) + "</td><td>" +
                html_escape(rec.at("image").at("variant").get<std::string>()) + "</td><td><pre>" +
                html_escape(prompt) + "</pre></td><td><pre>" + html_escape(rec.at("ground_truth").get<std::string>()) +
                "</pre></td></tr>\n";
      }
      body += "</table>\n";
    }

    write_file_atomic((out / (c.id + ".html")).string(), page(c.id, body));
    ++result.pages;
    index += "<tr><td><a href=\"" + html_escape(c.id) + ".html\">" + html_escape(c.id) + "</a></td><td>" +
             std::string(to_string(c.chart_type)) + "</td><td>" +
             (c.passed() ? std::string("passed") : "failed at " + std::string(to_string(*c.failed_stage))) +
             "</td><td>" + std::to_string(c.n_grounding) + "/" + std::to_string(c.n_reasoning) + "</td><td>" +
             std::to_string(c.n_records) + "</td></tr>\n";
  }
  if (!manifest.charts.empty()) index += "</table>\n";
  write_file_atomic((out / "index.html").string(), page("gallery", index));
  return result;
}

// --- dispatch ------------------------------------------------------------------

namespace {

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "JSON config file")->check(CLI::ExistingFile);
  cmd->add_option("--out", c.out, "Output path");
  cmd->add_option("--seed", c.seed, "Seed override");
}

PipelineConfig config_or_default(const Common& c) {
  PipelineConfig config = c.config.empty() ? PipelineConfig{} : load_pipeline_config(c.config);
  if (c.seed) config.seed = *c.seed;
  return config;
}

void emit(const std::string& text, const std::string& path, std::ostream& out) {
  if (path.empty()) {
    out << text;
  } else {
    write_file_atomic(path, text);
  }
}

Step find_step(const CotSample& sample, int index) {
  for (const auto& s : sample.steps) {
    if (s.index == index) return s;
  }
  throw TargetError("no step " + std::to_string(index) + " in the chain of thought");
}

std::vector<double> parse_margins(const std::string& text) {
  std::vector<double> margins;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const Answer a = parse_answer_text(item);
    if (!a.is_numeric() || a.percent || a.number() < 0) throw ValidationError("bad margin '" + item + "'");
    margins.push_back(a.number());
  }
  if (margins.empty()) throw ValidationError("no margins given");
  return margins;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Chart instruction dataset builder and relaxed-accuracy evaluator", "chartmark"};
  app.require_subcommand(1);
  app.fallthrough();
  std::size_t workers = 1;
  bool verbose = false;
  app.add_option("--workers", workers, "Parallel chart workers")->check(CLI::Range(1, 256));
  app.add_flag("--verbose", verbose, "Progress messages on stderr");
  app.set_version_flag("--version", std::string(kVersionString));

  Common gen_c, cot_c, edit_c, render_c, detect_c, build_c, stats_c, eval_c, gallery_c;

  auto* gen = app.add_subcommand("gen", "Generate synthetic chart specs into <out>/specs");
  add_common(gen, gen_c);
  std::optional<std::size_t> gen_n;
  std::string gen_type;
  gen->add_option("-n,--count", gen_n, "Number of specs")->check(CLI::PositiveNumber);
  gen->add_option("--type", gen_type, "Only this chart type")->check(CLI::IsMember({"bar", "line", "pie"}));

  auto* cot = app.add_subcommand("cot", "Ask the teacher for a chain of thought on one spec");
  add_common(cot, cot_c);
  std::string cot_spec;
  cot->add_option("--spec", cot_spec, "Chart spec JSON")->required()->check(CLI::ExistingFile);

  auto* edit = app.add_subcommand("edit", "Insert the marker for one Grounding step");
  add_common(edit, edit_c);
  std::string edit_spec, edit_cot;
  int edit_step = 0;
  edit->add_option("--spec", edit_spec, "Chart spec JSON")->required()->check(CLI::ExistingFile);
  edit->add_option("--cot", edit_cot, "Chain-of-thought JSON")->required()->check(CLI::ExistingFile);
  edit->add_option("--step", edit_step, "Step index")->required();

  auto* render = app.add_subcommand("render", "Render a spec (plain or edited) to SVG or PPM");
  add_common(render, render_c);
  std::string render_spec, render_format = "svg", render_geometry;
  render->add_option("--spec", render_spec, "Chart spec JSON")->required()->check(CLI::ExistingFile);
  render->add_option("--format", render_format, "svg or ppm")->check(CLI::IsMember({"svg", "ppm"}));
  render->add_option("--geometry", render_geometry, "Also write the element geometry JSON here");

  auto* detect = app.add_subcommand("detect", "Render an edited spec and locate its marker");
  add_common(detect, detect_c);
  std::string detect_spec;
  detect->add_option("--spec", detect_spec, "Edited chart spec JSON")->required()->check(CLI::ExistingFile);

  auto* build = app.add_subcommand("build", "Run the full pipeline into <out>");
  add_common(build, build_c);

  auto* stats = app.add_subcommand("stats", "Step and chart-type statistics of a run");
  add_common(stats, stats_c);
  std::string stats_run;
  stats->add_option("--run", stats_run, "Run directory")->required()->check(CLI::ExistingDirectory);

  auto* eval = app.add_subcommand("eval", "Relaxed-accuracy evaluation of predictions");
  add_common(eval, eval_c);
  std::string gold_path, pred_path, margins_text = "0.05,0.1,0.2", mode_text = "match", group_by = "group";
  bool strict_text = false;
  eval->add_option("--gold", gold_path, "Gold JSONL {sample_id, answer, group}")->required()->check(CLI::ExistingFile);
  eval->add_option("--pred", pred_path, "Predictions JSONL {sample_id, raw_text}")->required()->check(CLI::ExistingFile);
  eval->add_option("--margins", margins_text, "Comma-separated relative margins");
  eval->add_option("--mode", mode_text, "Answer extraction: direct or match")->check(CLI::IsMember({"direct", "match"}));
  eval->add_option("--group-by", group_by, "Gold field used as the group label");
  eval->add_flag("--strict-text", strict_text, "Compare text answers without dropping periods and 'the'");

  auto* gallery = app.add_subcommand("gallery", "Static HTML pages for offline review of a run");
  add_common(gallery, gallery_c);
  std::string gallery_run;
  gallery->add_option("--run", gallery_run, "Run directory")->required()->check(CLI::ExistingDirectory);

  std::vector<std::string> argv_store{"chartmark"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << kVersionString << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  const auto log = [&](const std::string& msg) {
    if (verbose) err << msg << "\n";
  };

  try {
    if (gen->parsed()) {
      if (gen_c.out.empty()) throw CLI::RequiredError("--out");
      const PipelineConfig config = config_or_default(gen_c);
      const std::size_t n = gen_n.value_or(config.n_charts);
      std::vector<ChartSpec> specs;
      if (gen_type.empty()) {
        specs = generate_corpus(config.seed, n, config.type_mix);
      } else {
        for (std::size_t i = 0; i < n; ++i) specs.push_back(generate_spec(config.seed, i, chart_type_from_string(gen_type)));
      }
      for (const auto& s : specs) {
        write_file_atomic((fs::path(gen_c.out) / run_paths::spec(s.id)).string(), serialize_spec(s) + "\n");
      }
      out << specs.size() << " specs written to " << (fs::path(gen_c.out) / "specs").string() << "\n";
    } else if (cot->parsed()) {
      const PipelineConfig config = config_or_default(cot_c);
      const ChartSpec spec = parse_spec(read_file(cot_spec));
      auto client = make_client(config.client);
      emit(serialize_cot(generate_cot_llm(spec, *client, config.seed)) + "\n", cot_c.out, out);
    } else if (edit->parsed()) {
      const PipelineConfig config = config_or_default(edit_c);
      const ChartSpec spec = parse_spec(read_file(edit_spec));
      const CotSample sample = validate_cot(read_file(edit_cot));
      const Step step = find_step(sample, edit_step);
      if (step.kind != StepKind::Grounding) throw TargetError("step " + std::to_string(edit_step) + " is not a Grounding step");
      auto client = make_client(config.client);
      ChatRequest request;
      request.template_id = std::string(prompts::kCodeEditTemplateId);
      request.chart_id = spec.id;
      request.seed = config.seed;
      request.messages.push_back({"user", prompts::code_edit(prompts::code_edit_example(),
                                                             step.text + " [target: " + to_json(*step.target).dump() + "]",
                                                             serialize_spec(spec))});
      const EditedSpec edited = parse_edited_spec(extract_json_block(client->chat(request)));
      if (!verify_marker(edited)) throw TargetError("edited chart does not carry exactly one marker");
      emit(serialize_edited_spec(edited) + "\n", edit_c.out, out);
    } else if (render->parsed()) {
      if (render_c.out.empty()) throw CLI::RequiredError("--out");
      const EditedSpec edited = parse_edited_spec(read_file(render_spec));
      const Decorations deco = decorations(edited);
      if (render_format == "ppm") {
        const auto r = rasterize(edited.spec, deco);
        write_file_atomic(render_c.out, write_ppm(r.bitmap));
        if (!render_geometry.empty()) write_file_atomic(render_geometry, to_json(r.geometry).dump(2) + "\n");
      } else {
        const auto r = render_svg(edited.spec, deco);
        write_file_atomic(render_c.out, r.svg);
        if (!render_geometry.empty()) write_file_atomic(render_geometry, to_json(r.geometry).dump(2) + "\n");
      }
      out << "wrote " << render_c.out << "\n";
    } else if (detect->parsed()) {
      const PipelineConfig config = config_or_default(detect_c);
      const EditedSpec edited = parse_edited_spec(read_file(detect_spec));
      const Decorations deco = decorations(edited);
      const std::string svg = render_svg(edited.spec, deco).svg;
      const auto found = detect_markers(svg, [&] { return rasterize(edited.spec, deco).bitmap; });
      const double min_px = config.min_marker_px * edited.spec.canvas.width / 1000.0;
      const PixelBBox box = finalize_bbox(found.bbox, edited.spec.canvas, min_px, min_px);
      const json result = {{"method", to_string(found.method)},
                           {"raw", {found.bbox.x0, found.bbox.y0, found.bbox.x1, found.bbox.y1}},
                           {"bbox", {box.x0, box.y0, box.x1, box.y1}},
                           {"norm", serialize(normalize(box, edited.spec.canvas, config.bbox_format))}};
      emit(result.dump(2) + "\n", detect_c.out, out);
    } else if (build->parsed()) {
      if (build_c.config.empty()) throw CLI::RequiredError("--config");
      if (build_c.out.empty()) throw CLI::RequiredError("--out");
      const PipelineConfig config = config_or_default(build_c);
      RunOptions options;
      options.workers = workers;
      options.log = log;
      const DatasetManifest m = run(config, build_c.out, options);
      for (const auto& r : m.stage_reports) {
        out << to_string(r.stage) << ": " << r.passed << "/" << r.attempted << " ("
            << format_fixed(100.0 * r.success_rate(), 2) << "%)\n";
      }
      out << "dataset: " << (fs::path(build_c.out) / run_paths::kDataset).string() << "\n";
    } else if (stats->parsed()) {
      const DatasetManifest m = load_manifest((fs::path(stats_run) / run_paths::kManifest).string());
      const StatsReport s = compute_stats(m);
      emit(to_json(s).dump(2) + "\n", stats_c.out, out);
      if (!stats_c.out.empty()) out << "wrote " << stats_c.out << "\n";
    } else if (eval->parsed()) {
      EvalOptions options;
      options.margins = parse_margins(margins_text);
      options.mode = extract_mode_from_string(mode_text);
      options.match.lenient_text = !strict_text;
      const auto gold = parse_gold_jsonl(read_file(gold_path), group_by);
      const auto preds = parse_predictions_jsonl(read_file(pred_path));
      const EvalReport report = evaluate(preds, gold, options);
      out << format_table(report);
      if (!eval_c.out.empty()) write_file_atomic(eval_c.out, to_json(report).dump(2) + "\n");
    } else if (gallery->parsed()) {
      const DatasetManifest m = load_manifest((fs::path(gallery_run) / run_paths::kManifest).string());
      const std::string dir = gallery_c.out.empty() ? (fs::path(gallery_run) / "gallery").string() : gallery_c.out;
      const GalleryResult g = write_gallery(m, gallery_run, dir);
      out << g.pages << " pages written to " << dir << "\n";
    }
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitDomain;
  } catch (const nlohmann::json::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitDomain;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitDomain;
  }
  return kExitOk;
}

}  // namespace chartmark
