#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "chartmark/bbox.hpp"
#include "chartmark/chart_spec.hpp"
#include "chartmark/error.hpp"
#include "chartmark/llm_client.hpp"
#include "json.hpp"

namespace chartmark {

enum class Stage { meta, cot, code, render, detect, qa };

inline constexpr std::array<Stage, 6> kStages{Stage::meta, Stage::cot, Stage::code,
                                              Stage::render, Stage::detect, Stage::qa};

std::string_view to_string(Stage s);
Stage stage_from_string(std::string_view s);

// Per-stage Bernoulli failure probabilities. Meta and qa have none.
struct FaultConfig {
  double cot = 0;
  double code = 0;
  double render = 0;
  double detect = 0;
  bool operator==(const FaultConfig&) const = default;
};

struct PipelineConfig {
  std::uint64_t seed = 0;
  std::size_t n_charts = 50;
  TypeMix type_mix = reference_type_mix();
  BBoxFormat bbox_format = BBoxFormat::C;
  double min_marker_px = 12.0;  // at canvas width 1000
  std::optional<double> cap;
  ClientConfig client;
  FaultConfig faults;
  // Write the edited SVG renders under renders/. Rasters are never persisted.
  bool persist_renders = true;
};

// Throws ConfigError on unknown keys, wrong types or out-of-range values.
PipelineConfig pipeline_config_from_json(const nlohmann::json& j);
PipelineConfig load_pipeline_config(const std::string& path);
nlohmann::json to_json(const PipelineConfig& c);
// FNV-1a over the canonical config document, 16 hex digits.
std::string config_hash(const PipelineConfig& c);

struct StageReport {
  Stage stage = Stage::meta;
  std::size_t attempted = 0;
  std::size_t passed = 0;
  double success_rate() const;
};

struct Detection {
  int step = 0;
  PixelBBox raw;
  PixelBBox bbox;  // after minimum-size adjustment
  std::string method;
  std::string norm;  // serialized NormBBox
};

struct ChartRecord {
  std::string id;
  ChartType chart_type = ChartType::bar;
  // Number of stages passed, in order. 6 means the chart reached the dataset.
  int stages_passed = 0;
  std::optional<Stage> failed_stage;
  std::string reason;
  int n_grounding = 0;
  int n_reasoning = 0;
  int n_records = 0;
  std::vector<Detection> detections;
  std::map<std::string, std::vector<std::string>> files;  // category -> relative paths

  bool passed() const { return stages_passed == static_cast<int>(kStages.size()); }
  bool passed_stage(Stage s) const { return stages_passed > static_cast<int>(s); }
};

nlohmann::json to_json(const ChartRecord& r);
ChartRecord chart_record_from_json(const nlohmann::json& j);

struct StatsReport {
  std::size_t n_passed = 0;
  std::size_t n_records = 0;
  std::map<int, std::size_t> grounding_hist;
  std::map<int, std::size_t> reasoning_hist;
  std::map<int, std::size_t> total_hist;
  int total_mode = 0;  // smallest most frequent total step count
  std::map<ChartType, std::size_t> type_counts;
  std::map<ChartType, double> type_share;
  double records_per_chart = 0;
};

nlohmann::json to_json(const StatsReport& s);

struct DatasetManifest {
  std::string run_id;
  std::string config_hash;
  PipelineConfig config;
  bool complete = false;
  std::vector<ChartRecord> charts;  // sorted by id
  std::vector<StageReport> stage_reports;
  std::optional<StatsReport> stats;
};

nlohmann::json to_json(const DatasetManifest& m);
DatasetManifest manifest_from_json(const nlohmann::json& j);
std::string serialize_manifest(const DatasetManifest& m);
DatasetManifest load_manifest(const std::string& path);

// attempted(k+1) = passed(k), counted from the per-chart records.
std::vector<StageReport> stage_reports(const std::vector<ChartRecord>& charts, std::size_t n_charts);

// Histograms over passed charts. Throws EmptyError when none passed.
StatsReport compute_stats(const DatasetManifest& manifest);

// Thrown out of run() when RunOptions::interrupt asks to stop.
class Interrupted : public Error {
 public:
  using Error::Error;
};

struct RunOptions {
  std::size_t workers = 1;
  // Called after a chart passes each stage; returning true aborts the run at
  // that point as if the process had been killed.
  std::function<bool(const std::string& chart_id, Stage stage)> interrupt;
  // Progress messages; may be empty.
  std::function<void(const std::string&)> log;
  // Completed charts between manifest checkpoints.
  std::size_t checkpoint_every = 50;
};

// Runs every chart through the stages, resuming from an existing manifest in
// `out_dir` when its config hash matches (ConfigError otherwise), then emits
// the dataset. Outputs depend only on the config, never on scheduling.
DatasetManifest run(const PipelineConfig& config, const std::string& out_dir, const RunOptions& options = {});

// Assembles dataset.jsonl from the per-chart record files, writes stats.json
// and stage_report.json. Charts are taken in id order; records inside a chart
// are already sorted by (kind, step).
void emit_dataset(const DatasetManifest& manifest, const std::string& out_dir);

// Paths inside a run directory.
namespace run_paths {
inline constexpr std::string_view kManifest = "manifest.json";
inline constexpr std::string_view kDataset = "dataset.jsonl";
inline constexpr std::string_view kStats = "stats.json";
inline constexpr std::string_view kStageReport = "stage_report.json";
std::string spec(const std::string& id);
std::string cot(const std::string& id);
std::string edited(const std::string& id, int step);
std::string render(const std::string& id, int step);
std::string records(const std::string& id);
}  // namespace run_paths

}  // namespace chartmark
