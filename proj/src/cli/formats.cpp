#include "voxdec/formats.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "voxdec/error.hpp"
#include "voxdec/volume_file.hpp"

namespace voxdec {
namespace fs = std::filesystem;

namespace {

const Json& require(const Json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) throw DataError(where + ": missing key '" + key + "'");
  return j.at(key);
}

template <class T>
T get_as(const Json& j, const char* key, const std::string& where) {
  const Json& v = require(j, key, where);
  try {
    return v.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw DataError(where + ": key '" + key + "' has the wrong type");
  }
}

std::size_t get_size(const Json& j, const char* key, const std::string& where) {
  const Json& v = require(j, key, where);
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
    throw DataError(where + ": key '" + key + "' must be a non-negative integer");
  return v.get<std::size_t>();
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, sep)) out.push_back(cell);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

double parse_double(const std::string& s, const std::string& where) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DataError(where + ": '" + s + "' is not a number");
  }
}

int parse_int(const std::string& s, const std::string& where) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DataError(where + ": '" + s + "' is not an integer");
  }
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

}  // namespace

std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

Json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": invalid JSON (" + e.what() + ")");
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("failed writing " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_json(const fs::path& path, const Json& doc) { write_text(path, doc.dump(2) + "\n"); }

Json design_to_json(const TaskDesign& d) {
  Json events = Json::array();
  for (const auto& e : d.events) events.push_back({{"condition", e.condition}, {"onset", e.onset}, {"duration", e.duration}});
  return {{"tr_s", d.tr_s}, {"T", d.frames}, {"conditions", d.conditions}, {"events", events}};
}

TaskDesign design_from_json(const Json& j) {
  const std::string where = "design";
  TaskDesign d;
  d.tr_s = get_as<double>(j, "tr_s", where);
  d.frames = get_size(j, "T", where);
  d.conditions = get_as<std::vector<std::string>>(j, "conditions", where);
  const Json& events = require(j, "events", where);
  if (!events.is_array()) throw DataError(where + ": 'events' must be an array");
  for (const auto& e : events) {
    TaskEvent ev;
    ev.condition = get_as<int>(e, "condition", "design event");
    ev.onset = get_size(e, "onset", "design event");
    ev.duration = get_size(e, "duration", "design event");
    d.events.push_back(ev);
  }
  if (!(d.tr_s > 0.0)) throw DataError(where + ": tr_s must be positive");
  try {
    d.validate();
  } catch (const DomainError& e) {
    throw DataError(where + ": " + e.what());
  }
  return d;
}

Json phantom_to_json(const Phantom& p) {
  Json rois = Json::array();
  for (std::size_t i = 0; i < p.rois.size(); ++i) {
    const auto& r = p.rois[i];
    rois.push_back({{"condition", i + 1}, {"center", r.center}, {"radii", r.radii}, {"amplitude", r.amplitude}});
  }
  return {{"grid", {p.grid.d, p.grid.h, p.grid.w}},
          {"baseline", p.baseline},
          {"noise_sd", p.noise_sd},
          {"rois", rois}};
}

Phantom phantom_from_json(const Json& j) {
  const std::string where = "phantom";
  Phantom p;
  const auto grid = get_as<std::vector<std::size_t>>(j, "grid", where);
  if (grid.size() != 3) throw DataError(where + ": grid must have 3 extents");
  p.grid = {grid[0], grid[1], grid[2]};
  p.baseline = get_as<double>(j, "baseline", where);
  p.noise_sd = get_as<double>(j, "noise_sd", where);
  const Json& rois = require(j, "rois", where);
  if (!rois.is_array()) throw DataError(where + ": 'rois' must be an array");
  for (std::size_t i = 0; i < rois.size(); ++i) {
    const auto& r = rois[i];
    if (get_size(r, "condition", "phantom roi") != i + 1)
      throw DataError(where + ": ROI conditions must be dense and start at 1");
    Roi roi;
    roi.center = get_as<std::array<double, 3>>(r, "center", "phantom roi");
    roi.radii = get_as<std::array<double, 3>>(r, "radii", "phantom roi");
    roi.amplitude = get_as<double>(r, "amplitude", "phantom roi");
    p.rois.push_back(roi);
  }
  try {
    p.validate();
  } catch (const DomainError& e) {
    throw DataError(where + ": " + e.what());
  }
  return p;
}

Json manifest_to_json(const RunManifest& m) {
  Json j;
  j["schema"] = kRunSchema;
  j["generator_version"] = kGeneratorVersion;
  j["volume"] = m.volume;
  j["design_kind"] = m.design_kind;
  j["seed"] = m.seed;
  j["subject"] = m.subject;
  const Json design = design_to_json(m.design);
  for (const auto& [k, v] : design.items()) j[k] = v;
  j["phantom"] = phantom_to_json(m.phantom);
  return j;
}

RunManifest manifest_from_json(const Json& j) {
  const std::string where = "run manifest";
  if (get_as<std::string>(j, "schema", where) != kRunSchema)
    throw DataError(where + ": unsupported schema '" + j.at("schema").get<std::string>() + "'");
  get_as<std::string>(j, "generator_version", where);
  RunManifest m;
  m.volume = get_as<std::string>(j, "volume", where);
  m.design_kind = get_as<std::string>(j, "design_kind", where);
  m.seed = get_as<std::uint64_t>(j, "seed", where);
  m.subject = get_size(j, "subject", where);
  m.design = design_from_json(j);
  m.phantom = phantom_from_json(require(j, "phantom", where));
  if (m.phantom.rois.size() + 1 != m.design.conditions.size())
    throw DataError(where + ": phantom ROI count does not match the condition list");
  return m;
}

RunFile load_run(const fs::path& path) {
  fs::path manifest = path;
  if (fs::is_directory(path)) {
    const auto runs = load_runs(path);
    if (runs.size() != 1)
      throw DataError(path.string() + ": expected exactly one run, found " + std::to_string(runs.size()));
    return runs.front();
  }
  if (path.extension() == ".vwt") manifest.replace_extension(".json");
  if (!fs::exists(manifest)) throw DataError("run manifest not found: " + manifest.string());
  RunFile rf;
  rf.manifest_path = manifest;
  try {
    rf.manifest = manifest_from_json(read_json(manifest));
  } catch (const DataError& e) {
    throw DataError(manifest.string() + ": " + e.what());
  }
  const fs::path volume = manifest.parent_path() / rf.manifest.volume;
  rf.data.volume = read_volume(volume);
  rf.data.design = rf.manifest.design;
  rf.data.labels = rf.manifest.design.labels();
  const auto& g = rf.manifest.phantom.grid;
  if (rf.data.volume.dims() != Dims{rf.manifest.design.frames, g.d, g.h, g.w})
    throw DataError(volume.string() + ": extents " + format_dims(rf.data.volume.dims()) +
                    " disagree with the manifest");
  return rf;
}

std::vector<RunFile> load_runs(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir.string());
  std::vector<fs::path> manifests;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto& p = entry.path();
    if (p.extension() != ".json") continue;
    // only run sidecars, not configs or metrics that may share the folder
    Json j;
    try {
      j = read_json(p);
    } catch (const DataError&) {
      continue;
    }
    if (j.is_object() && j.value("schema", "") == kRunSchema) manifests.push_back(p);
  }
  std::sort(manifests.begin(), manifests.end());
  if (manifests.empty()) throw DataError("no run manifests in " + dir.string());
  std::vector<RunFile> runs;
  for (const auto& m : manifests) runs.push_back(load_run(m));
  return runs;
}

Json model_config_to_json(const ModelConfig& c) {
  return {{"t", c.t},
          {"c", c.c},
          {"stem_width", c.stem_width},
          {"stage_widths", c.stage_widths},
          {"blocks_per_stage", c.blocks_per_stage},
          {"classes", c.classes},
          {"reduction", c.reduction},
          {"grid", {c.grid.d, c.grid.h, c.grid.w}}};
}

ModelConfig model_config_from_json(const Json& j, const ModelConfig& fallback) {
  const std::string where = "model config";
  if (!j.is_object()) throw DataError(where + ": expected a JSON object");
  static const std::vector<std::string> known{"t", "c", "stem_width", "stage_widths", "blocks_per_stage",
                                              "classes", "reduction", "grid"};
  for (const auto& [k, v] : j.items())
    if (std::find(known.begin(), known.end(), k) == known.end()) throw DataError(where + ": unknown key '" + k + "'");
  ModelConfig c = fallback;
  if (j.contains("t")) c.t = get_size(j, "t", where);
  if (j.contains("c")) c.c = get_size(j, "c", where);
  if (j.contains("stem_width")) c.stem_width = get_size(j, "stem_width", where);
  if (j.contains("stage_widths")) c.stage_widths = get_as<std::vector<std::size_t>>(j, "stage_widths", where);
  if (j.contains("blocks_per_stage")) c.blocks_per_stage = get_size(j, "blocks_per_stage", where);
  if (j.contains("classes")) c.classes = get_size(j, "classes", where);
  if (j.contains("reduction")) c.reduction = get_size(j, "reduction", where);
  if (j.contains("grid")) {
    const auto g = get_as<std::vector<std::size_t>>(j, "grid", where);
    if (g.size() != 3) throw DataError(where + ": grid must have 3 extents");
    c.grid = {g[0], g[1], g[2]};
  }
  try {
    c.validate();
  } catch (const DomainError& e) {
    throw DataError(e.what());
  }
  return c;
}

Json train_config_to_json(const TrainConfig& c) {
  return {{"batch_size", c.batch_size},
          {"weight_decay", c.weight_decay},
          {"epochs", c.epochs},
          {"warmup_epochs", c.warmup_epochs},
          {"window", c.window},
          {"label_shift", c.label_shift},
          {"stride", c.stride},
          {"windows_per_run", c.windows_per_run},
          {"lr_start", c.lr_start},
          {"lr_peak", c.lr_peak},
          {"lr_end", c.lr_end},
          {"validation_runs", c.validation_runs},
          {"seed", c.seed}};
}

TrainConfig train_config_from_json(const Json& j) {
  const std::string where = "train config";
  if (!j.is_object()) throw DataError(where + ": expected a JSON object");
  TrainConfig c;
  const Json defaults = train_config_to_json(c);
  for (const auto& [k, v] : j.items())
    if (!defaults.contains(k)) throw DataError(where + ": unknown key '" + k + "'");
  if (j.contains("batch_size")) c.batch_size = get_size(j, "batch_size", where);
  if (j.contains("weight_decay")) c.weight_decay = get_as<double>(j, "weight_decay", where);
  if (j.contains("epochs")) c.epochs = get_size(j, "epochs", where);
  if (j.contains("warmup_epochs")) c.warmup_epochs = get_size(j, "warmup_epochs", where);
  if (j.contains("window")) c.window = get_size(j, "window", where);
  if (j.contains("label_shift")) c.label_shift = get_size(j, "label_shift", where);
  if (j.contains("stride")) c.stride = get_size(j, "stride", where);
  if (j.contains("windows_per_run")) c.windows_per_run = get_size(j, "windows_per_run", where);
  if (j.contains("lr_start")) c.lr_start = get_as<double>(j, "lr_start", where);
  if (j.contains("lr_peak")) c.lr_peak = get_as<double>(j, "lr_peak", where);
  if (j.contains("lr_end")) c.lr_end = get_as<double>(j, "lr_end", where);
  if (j.contains("validation_runs")) c.validation_runs = get_size(j, "validation_runs", where);
  if (j.contains("seed")) c.seed = get_as<std::uint64_t>(j, "seed", where);
  try {
    c.validate();
  } catch (const DomainError& e) {
    throw DataError(e.what());
  }
  return c;
}

void save_model(const fs::path& path, const SavedModel& m) {
  std::vector<double> flat;
  Json params = Json::array();
  m.weights.for_each([&](const std::string& name, const Tensor& t) {
    params.push_back({{"name", name}, {"dims", t.dims()}});
    flat.insert(flat.end(), t.values().begin(), t.values().end());
  });
  const std::size_t count = flat.size();
  write_volume(path, Tensor({count}, std::move(flat)));
  Json history = Json::array();
  for (const auto& h : m.history)
    history.push_back({{"train_loss", h.train_loss}, {"validation_accuracy", h.validation_accuracy}});
  Json meta{{"schema", kWeightsSchema},
            {"model", model_config_to_json(m.model)},
            {"train", train_config_to_json(m.train)},
            {"conditions", m.conditions},
            {"parameters", params},
            {"history", history}};
  write_json(fs::path(path.string() + ".json"), meta);
}

SavedModel load_model(const fs::path& path) {
  const fs::path meta_path(path.string() + ".json");
  const Json meta = read_json(meta_path);
  const std::string where = meta_path.string();
  if (get_as<std::string>(meta, "schema", where) != kWeightsSchema) throw DataError(where + ": not a weights sidecar");
  SavedModel m;
  m.model = model_config_from_json(require(meta, "model", where));
  m.train = train_config_from_json(require(meta, "train", where));
  m.conditions = get_as<std::vector<std::string>>(meta, "conditions", where);
  if (m.conditions.size() != m.model.classes) throw DataError(where + ": condition list does not match classes");
  for (const auto& h : require(meta, "history", where))
    m.history.push_back({get_as<double>(h, "train_loss", where), get_as<double>(h, "validation_accuracy", where)});

  const Tensor flat = read_volume(path);
  m.weights = init_params(m.model, 0);
  std::size_t at = 0;
  bool overflow = false;
  m.weights.for_each([&](const std::string&, Tensor& t) {
    if (at + t.size() > flat.size()) {
      overflow = true;
      return;
    }
    std::copy(flat.values().begin() + static_cast<long>(at), flat.values().begin() + static_cast<long>(at + t.size()),
              t.values().begin());
    at += t.size();
  });
  if (overflow || at != flat.size())
    throw DataError(path.string() + ": parameter count does not match the model config");
  return m;
}

std::string prediction_csv(const PredictionTable& t) {
  std::string out = "frame_index,true_label,pred_label";
  for (const auto& c : t.classes) out += ",p_" + c;
  out += '\n';
  for (std::size_t i = 0; i < t.pred.size(); ++i) {
    out += std::to_string(i) + ',' + std::to_string(t.truth[i]) + ',' + std::to_string(t.pred[i]);
    for (double p : t.probs[i]) out += ',' + format_number(p);
    out += '\n';
  }
  return out;
}

PredictionTable parse_prediction_csv(const std::string& text) {
  const auto lines = lines_of(text);
  if (lines.empty()) throw DataError("predictions CSV is empty");
  const auto header = split(lines[0], ',');
  if (header.size() < 5 || header[0] != "frame_index" || header[1] != "true_label" || header[2] != "pred_label")
    throw DataError("predictions CSV header must start with frame_index,true_label,pred_label");
  PredictionTable t;
  for (std::size_t c = 3; c < header.size(); ++c) {
    if (header[c].rfind("p_", 0) != 0) throw DataError("predictions CSV column '" + header[c] + "' is not p_<class>");
    t.classes.push_back(header[c].substr(2));
  }
  const int k = static_cast<int>(t.classes.size());
  for (std::size_t r = 1; r < lines.size(); ++r) {
    const std::string where = "predictions CSV row " + std::to_string(r);
    const auto cells = split(lines[r], ',');
    if (cells.size() != header.size()) throw DataError(where + ": wrong column count");
    if (parse_int(cells[0], where) != static_cast<int>(r - 1)) throw DataError(where + ": frame_index out of order");
    const int truth = parse_int(cells[1], where), pred = parse_int(cells[2], where);
    if (truth < 0 || truth >= k || pred < 0 || pred >= k) throw DataError(where + ": label out of range");
    t.truth.push_back(truth);
    t.pred.push_back(pred);
    std::vector<double> probs;
    for (std::size_t c = 3; c < cells.size(); ++c) probs.push_back(parse_double(cells[c], where));
    t.probs.push_back(std::move(probs));
  }
  return t;
}

std::string peak_series_csv(const PeakSeries& s, std::size_t frame_offset) {
  std::string out = "frame,value,ideal,stimulus\n";
  for (std::size_t j = 0; j < s.series.size(); ++j)
    out += std::to_string(frame_offset + j) + ',' + format_number(s.series[j]) + ',' + format_number(s.ideal[j]) +
           ',' + format_number(s.stimulus[j]) + '\n';
  return out;
}

SeriesTable parse_series_csv(const std::string& name, const std::string& text) {
  const auto lines = lines_of(text);
  if (lines.empty() || lines[0] != "frame,value,ideal,stimulus")
    throw DataError(name + ": series CSV header must be frame,value,ideal,stimulus");
  SeriesTable t;
  t.name = name;
  for (std::size_t r = 1; r < lines.size(); ++r) {
    const std::string where = name + " row " + std::to_string(r);
    const auto cells = split(lines[r], ',');
    if (cells.size() != 4) throw DataError(where + ": wrong column count");
    t.frame.push_back(parse_double(cells[0], where));
    t.value.push_back(parse_double(cells[1], where));
    t.ideal.push_back(parse_double(cells[2], where));
    t.stimulus.push_back(parse_double(cells[3], where));
  }
  return t;
}

}  // namespace voxdec
