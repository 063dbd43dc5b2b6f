#pragma once

// JSON manifests/configs and CSV tables exchanged between subcommands.

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "voxdec/metrics.hpp"
#include "voxdec/model.hpp"
#include "voxdec/pipeline.hpp"
#include "voxdec/saliency.hpp"
#include "voxdec/synth.hpp"

namespace voxdec {

using Json = nlohmann::ordered_json;

inline constexpr const char* kGeneratorVersion = "voxdec-synth/1";
inline constexpr const char* kRunSchema = "voxdec.run/1";
inline constexpr const char* kWeightsSchema = "voxdec.weights/1";
inline constexpr const char* kMetricsSchema = "voxdec.metrics/1";

Json read_json(const std::filesystem::path& path);
/// Pretty-printed with a trailing newline.
void write_json(const std::filesystem::path& path, const Json& doc);
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

Json design_to_json(const TaskDesign& design);
TaskDesign design_from_json(const Json& j);
Json phantom_to_json(const Phantom& phantom);
Phantom phantom_from_json(const Json& j);

/// Sidecar describing one generated run; `volume` is the file name of its VWT.
struct RunManifest {
  std::string volume;
  std::string design_kind;
  std::uint64_t seed = 0;
  std::size_t subject = 0;
  TaskDesign design;
  Phantom phantom;
};

Json manifest_to_json(const RunManifest& m);
/// Validates required keys, types and dense condition indices.
RunManifest manifest_from_json(const Json& j);

struct RunFile {
  std::filesystem::path manifest_path;
  RunManifest manifest;
  RunData data;
};

/// Loads one run given its manifest (.json) or volume (.vwt) path, or a
/// directory holding exactly one run.
RunFile load_run(const std::filesystem::path& path);
/// Every run manifest in a directory, sorted by file name.
std::vector<RunFile> load_runs(const std::filesystem::path& dir);

Json model_config_to_json(const ModelConfig& cfg);
/// Missing `classes` / `grid` keys are taken from `fallback`.
ModelConfig model_config_from_json(const Json& j, const ModelConfig& fallback = {});
Json train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const Json& j);

struct SavedModel {
  ModelConfig model;
  TrainConfig train;
  std::vector<std::string> conditions;
  ModelWeights weights;
  std::vector<EpochRecord> history;
};

/// Parameters go to `path` as one flat VWT vector, metadata to `path` + ".json".
void save_model(const std::filesystem::path& path, const SavedModel& model);
SavedModel load_model(const std::filesystem::path& path);

struct PredictionTable {
  std::vector<std::string> classes;
  std::vector<int> truth;
  std::vector<int> pred;
  std::vector<std::vector<double>> probs;  // frames x K
};

std::string prediction_csv(const PredictionTable& table);
PredictionTable parse_prediction_csv(const std::string& text);

std::string peak_series_csv(const PeakSeries& s, std::size_t frame_offset);

struct SeriesTable {
  std::string name;
  std::vector<double> frame, value, ideal, stimulus;
};
SeriesTable parse_series_csv(const std::string& name, const std::string& text);

/// Number formatting shared by every text artifact so outputs are byte-stable.
std::string format_number(double v);

}  // namespace voxdec
