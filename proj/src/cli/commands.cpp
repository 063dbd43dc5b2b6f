#include "voxdec/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <memory>

#include "voxdec/error.hpp"
#include "voxdec/formats.hpp"
#include "voxdec/metrics.hpp"
#include "voxdec/pipeline.hpp"
#include "voxdec/report.hpp"
#include "voxdec/saliency.hpp"
#include "voxdec/volume_file.hpp"

namespace voxdec {
namespace fs = std::filesystem;

namespace {

struct UsageError : Error {
  using Error::Error;
};

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::string subject_stem(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "sub-%03zu", i);
  return buf;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create directory " + dir.string() + ": " + ec.message());
}

void require_file(const fs::path& p, const char* flag) {
  if (!fs::exists(p)) throw DataError(std::string(flag) + ": file not found: " + p.string());
}

// ---- generate -----------------------------------------------------------------

struct GenerateArgs {
  std::string design;
  std::size_t subjects = 1;
  std::uint64_t seed = 0;
  std::string out;
  std::string grid = "20x24x20";
  double noise_sd = 1.0;
};

void cmd_generate(const GenerateArgs& a, std::ostream& log) {
  Grid grid;
  if (!parse_grid(a.grid, grid.d, grid.h, grid.w)) throw UsageError("--grid must look like DxHxW, got '" + a.grid + "'");
  if (!(a.noise_sd >= 0.0)) throw UsageError("--noise-sd must be >= 0");
  if (a.subjects < 1) throw UsageError("--subjects must be >= 1");
  DesignKind kind;
  try {
    kind = parse_design_kind(a.design);
  } catch (const DomainError& e) {
    throw UsageError(std::string("--design: ") + e.what());
  }
  const TaskDesign design = build_design(kind, a.seed);
  Phantom phantom;
  try {
    phantom = default_phantom(grid, design.classes() - 1, a.noise_sd);
  } catch (const DomainError& e) {
    throw UsageError(std::string("--grid: ") + e.what());
  }
  ensure_dir(a.out);
  for (std::size_t i = 0; i < a.subjects; ++i) {
    const auto stem = subject_stem(i);
    const std::uint64_t noise_seed = splitmix64(a.seed ^ splitmix64(i + 1));
    const RunData run = render_run(design, phantom, noise_seed);
    RunManifest m{stem + ".vwt", to_string(kind), a.seed, i, design, phantom};
    write_volume(fs::path(a.out) / (stem + ".vwt"), run.volume);
    write_json(fs::path(a.out) / (stem + ".json"), manifest_to_json(m));
  }
  log << "generated " << a.subjects << " " << to_string(kind) << " runs (" << design.frames << " frames) in " << a.out
      << "\n";
}

// ---- train --------------------------------------------------------------------

struct TrainArgs {
  std::string data, model_config, train_config, out;
};

void cmd_train(const TrainArgs& a, std::ostream& log) {
  require_file(a.model_config, "--model-config");
  require_file(a.train_config, "--train-config");
  const auto runs = load_runs(a.data);
  const auto& first = runs.front().manifest;
  ModelConfig fallback;
  fallback.classes = first.design.classes();
  fallback.grid = first.phantom.grid;
  const ModelConfig mc = model_config_from_json(read_json(a.model_config), fallback);
  const TrainConfig tc = train_config_from_json(read_json(a.train_config));
  std::vector<RunData> data;
  for (const auto& r : runs) {
    if (r.manifest.design.conditions != first.design.conditions)
      throw DataError(r.manifest_path.string() + ": condition list differs from the other runs");
    if (!(r.manifest.phantom.grid == mc.grid))
      throw DataError(r.manifest_path.string() + ": grid does not match the model config");
    data.push_back(standardize_run(r.data));
  }
  if (mc.classes != first.design.classes())
    throw DataError(a.model_config + ": classes does not match the data's condition count");
  const auto result = train(data, mc, tc, [&](std::size_t e, const EpochRecord& r) {
    log << "epoch " << e + 1 << "/" << tc.epochs << " loss " << format_number(r.train_loss) << " val_acc "
        << format_number(r.validation_accuracy) << "\n";
  });
  save_model(a.out, {mc, tc, first.design.conditions, result.weights, result.history});
  log << "saved " << result.weights.parameter_count() << " parameters to " << a.out << "\n";
}

SavedModel load_model_for(const std::string& path) {
  require_file(path, "--weights");
  return load_model(path);
}

void check_compatible(const SavedModel& m, const RunFile& r) {
  if (r.manifest.design.conditions != m.conditions)
    throw DataError(r.manifest_path.string() + ": condition list does not match the trained model");
  if (!(r.manifest.phantom.grid == m.model.grid))
    throw DataError(r.manifest_path.string() + ": grid does not match the trained model");
  if (r.manifest.design.frames < m.model.t)
    throw DataError(r.manifest_path.string() + ": run is shorter than the model window");
}

// ---- predict ------------------------------------------------------------------

struct PredictArgs {
  std::string weights, run, out;
};

void cmd_predict(const PredictArgs& a, std::ostream& log) {
  const SavedModel model = load_model_for(a.weights);
  const RunFile run = load_run(a.run);
  check_compatible(model, run);
  const Prediction pred = predict_run(model.weights, model.model, standardize_run(run.data), model.train.stride);
  PredictionTable table;
  table.classes = model.conditions;
  table.truth = shift_labels(run.data.labels, model.train.label_shift);
  table.pred = pred.labels;
  const auto k = model.model.classes;
  for (std::size_t i = 0; i < pred.frames(); ++i)
    table.probs.emplace_back(pred.mean_probs.data() + i * k, pred.mean_probs.data() + (i + 1) * k);
  write_text(a.out, prediction_csv(table));
  log << "wrote " << pred.frames() << " frame predictions to " << a.out << " (accuracy "
      << format_number(frame_accuracy(pred, table.truth)) << ")\n";
}

// ---- eval ---------------------------------------------------------------------

struct EvalArgs {
  std::string preds, run, out;
  std::size_t segments = 2;
};

Json evaluate(const PredictionTable& t, const TaskDesign& design, std::size_t segments) {
  const auto k = t.classes.size();
  const auto cm = confusion(t.pred, t.truth, k);
  const auto scores = class_scores(cm);
  Json j;
  j["schema"] = kMetricsSchema;
  j["classes"] = t.classes;
  j["frames"] = t.pred.size();
  j["accuracy"] = cm.accuracy();
  j["confusion"] = cm.counts;
  j["recall"] = scores.recall;
  j["precision"] = scores.precision;
  j["f1"] = scores.f1;
  j["recall_undefined"] = scores.recall_undefined;
  j["precision_undefined"] = scores.precision_undefined;
  j["macro"] = {{"recall", scores.macro_recall}, {"precision", scores.macro_precision}, {"f1", scores.macro_f1}};
  Json roc = Json::array();
  for (std::size_t c = 0; c < k; ++c) {
    std::vector<double> s(t.pred.size());
    std::vector<int> pos(t.pred.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
      s[i] = t.probs[i][c];
      pos[i] = t.truth[i] == static_cast<int>(c);
    }
    Json entry{{"class", t.classes[c]}};
    try {
      const auto curve = roc_auc(s, pos);
      std::vector<double> fpr, tpr;
      for (const auto& p : curve.points) {
        fpr.push_back(p.fpr);
        tpr.push_back(p.tpr);
      }
      entry["auc"] = curve.auc;
      entry["fpr"] = fpr;
      entry["tpr"] = tpr;
    } catch (const DomainError&) {
      entry["auc"] = nullptr;  // class absent (or everywhere) in truth
    }
    roc.push_back(entry);
  }
  j["roc"] = roc;
  Json sim = Json::array();
  const auto hrf = canonical_hrf(design.tr_s);
  for (const auto& s : hrf_similarity(t.pred, t.truth, design, hrf)) {
    Json e{{"condition", design.conditions[static_cast<std::size_t>(s.condition)]}};
    e["pcc"] = s.pcc ? Json(*s.pcc) : Json(nullptr);
    sim.push_back(e);
  }
  j["hrf_similarity"] = sim;
  j["segment_accuracy"] = {{"axis", "contiguous segments of one run"},
                           {"segments", segments},
                           {"values", segment_accuracy(t.pred, t.truth, segments)}};
  j["truth"] = t.truth;
  j["pred"] = t.pred;
  return j;
}

void cmd_eval(const EvalArgs& a, std::ostream& log) {
  require_file(a.preds, "--preds");
  const PredictionTable table = parse_prediction_csv(read_text(a.preds));
  const RunFile run = load_run(a.run);
  if (table.pred.size() != run.manifest.design.frames)
    throw DataError(a.preds + ": has " + std::to_string(table.pred.size()) + " rows, run has " +
                    std::to_string(run.manifest.design.frames) + " frames");
  if (table.classes != run.manifest.design.conditions)
    throw DataError(a.preds + ": class columns do not match the run's conditions");
  if (a.segments < 1 || a.segments > table.pred.size()) throw UsageError("--segments out of range");
  const Json metrics = evaluate(table, run.manifest.design, a.segments);
  write_json(a.out, metrics);
  log << "accuracy " << format_number(metrics["accuracy"].get<double>()) << ", macro F1 "
      << format_number(metrics["macro"]["f1"].get<double>()) << "\n";
}

// ---- saliency -----------------------------------------------------------------

struct SaliencyArgs {
  std::string weights, runs, out;
  double fdr_q = 0.05;
  std::string seed_class = "predicted";
};

void cmd_saliency(const SaliencyArgs& a, std::ostream& log) {
  if (!(a.fdr_q > 0.0 && a.fdr_q < 1.0)) throw UsageError("--fdr-q must lie in (0, 1)");
  if (a.seed_class != "predicted" && a.seed_class != "truth")
    throw UsageError("--seed-class must be 'predicted' or 'truth'");
  const SavedModel model = load_model_for(a.weights);
  const auto runs = load_runs(a.runs);
  const TaskDesign& design = runs.front().manifest.design;
  std::vector<SaliencyMap> maps;
  for (const auto& r : runs) {
    check_compatible(model, r);
    if (!(r.manifest.design == design))
      throw DataError(r.manifest_path.string() + ": group maps need every run to share one task design");
    const RunData z = standardize_run(r.data);
    const Prediction pred = predict_run(model.weights, model.model, z, 1);
    const auto truth = shift_labels(r.data.labels, model.train.label_shift);
    maps.push_back(saliency_run(model.weights, model.model, z, pred,
                                a.seed_class == "truth" ? SeedClass::truth : SeedClass::predicted, truth));
    log << "saliency " << r.manifest_path.filename().string() << ": " << maps.back().count() << " volumes\n";
  }
  const SaliencyMap group = group_average(maps);
  const auto hrf = canonical_hrf(design.tr_s);
  const GlmResult glm = glm_map(group, design, hrf, model.train.label_shift);

  const fs::path out(a.out);
  ensure_dir(out);
  write_volume(out / "saliency.vwt", group.frames);
  write_json(out / "saliency.vwt.json", {{"kind", "group guided-backprop saliency"},
                                         {"runs", runs.size()},
                                         {"frame_offset", group.frame_offset},
                                         {"seed_class", a.seed_class}});
  Json summary = Json::array();
  for (std::size_t i = 0; i < glm.conditions.size(); ++i) {
    const int cond = glm.conditions[i];
    const std::string name = design.conditions[static_cast<std::size_t>(cond)];
    const auto reject = fdr_threshold(glm.pvalue[i].values(), a.fdr_q);
    Tensor mask(glm.beta[i].dims());
    double cutoff = 0.0;
    std::size_t count = 0;
    for (std::size_t v = 0; v < reject.size(); ++v)
      if (reject[v]) {
        mask[v] = 1.0;
        cutoff = std::max(cutoff, glm.pvalue[i][v]);
        ++count;
      }
    const Json sidecar{{"condition", name},
                       {"condition_index", cond},
                       {"fdr_q", a.fdr_q},
                       {"p_cutoff", count ? Json(cutoff) : Json(nullptr)},
                       {"rejected_voxels", count},
                       {"dof", glm.dof}};
    const std::pair<const char*, const Tensor*> maps_out[] = {
        {"beta", &glm.beta[i]}, {"tstat", &glm.tstat[i]}, {"pvalue", &glm.pvalue[i]}, {"mask", &mask}};
    for (const auto& [kind, tensor] : maps_out) {
      const std::string file = std::string(kind) + "_" + name + ".vwt";
      write_volume(out / file, *tensor);
      Json meta = sidecar;
      meta["map"] = kind;
      write_json(out / (file + ".json"), meta);
    }
    Json entry = sidecar;
    try {
      const PeakSeries peak = peak_series(group, glm, cond, design, hrf);
      write_text(out / ("peak_" + name + ".csv"), peak_series_csv(peak, group.frame_offset));
      entry["peak_voxel"] = peak.voxel;
      entry["peak_pcc"] = peak.pcc;
    } catch (const DomainError& e) {
      entry["peak_voxel"] = nullptr;
      entry["peak_note"] = e.what();
    }
    summary.push_back(entry);
  }
  write_json(out / "saliency_summary.json", {{"conditions", summary}});
  log << "wrote GLM maps for " << glm.conditions.size() << " conditions to " << a.out << "\n";
}

// ---- report -------------------------------------------------------------------

struct ReportArgs {
  std::string metrics, out;
  std::vector<std::string> series;
};

void cmd_report(const ReportArgs& a, std::ostream& log) {
  require_file(a.metrics, "--metrics");
  std::vector<SeriesTable> tables;
  for (const auto& s : a.series) {
    require_file(s, "--series");
    tables.push_back(parse_series_csv(fs::path(s).stem().string(), read_text(s)));
  }
  write_text(a.out, render_report(read_json(a.metrics), tables));
  log << "wrote " << a.out << "\n";
}

}  // namespace

bool parse_grid(const std::string& text, std::size_t& d, std::size_t& h, std::size_t& w) {
  unsigned long a = 0, b = 0, c = 0;
  char tail = 0;
  if (std::sscanf(text.c_str(), "%lux%lux%lu%c", &a, &b, &c, &tail) != 3) return false;
  if (a == 0 || b == 0 || c == 0) return false;
  d = a;
  h = b;
  w = c;
  return true;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Volume-wise task-state decoding for task fMRI", "voxdec"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Synthesize phantom BOLD runs with manifests");
  g->add_option("--design", gen.design, "block | event")->required();
  g->add_option("--subjects", gen.subjects, "Number of runs")->required();
  g->add_option("--seed", gen.seed, "Seed for every random choice")->required();
  g->add_option("--out", gen.out, "Output directory")->required();
  g->add_option("--grid", gen.grid, "Grid extents DxHxW");
  g->add_option("--noise-sd", gen.noise_sd, "Gaussian noise standard deviation");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train the decoder on a directory of runs");
  t->add_option("--data", tr.data, "Run directory")->required();
  t->add_option("--model-config", tr.model_config, "Model config JSON")->required();
  t->add_option("--train-config", tr.train_config, "Training config JSON")->required();
  t->add_option("--out", tr.out, "Weights file (.vwt)")->required();

  PredictArgs pr;
  auto* p = app.add_subcommand("predict", "Sliding-window inference with majority voting");
  p->add_option("--weights", pr.weights, "Weights file")->required();
  p->add_option("--run", pr.run, "Run manifest, volume, or single-run directory")->required();
  p->add_option("--out", pr.out, "Predictions CSV")->required();

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Score predictions against the run design");
  e->add_option("--preds", ev.preds, "Predictions CSV")->required();
  e->add_option("--run", ev.run, "Run manifest, volume, or single-run directory")->required();
  e->add_option("--out", ev.out, "Metrics JSON")->required();
  e->add_option("--segments", ev.segments, "Contiguous segments for segment accuracy");

  SaliencyArgs sa;
  auto* s = app.add_subcommand("saliency", "Guided-backprop saliency and GLM activation maps");
  s->add_option("--weights", sa.weights, "Weights file")->required();
  s->add_option("--runs", sa.runs, "Directory of runs sharing one design")->required();
  s->add_option("--fdr-q", sa.fdr_q, "Benjamini-Hochberg level")->required();
  s->add_option("--out", sa.out, "Output directory")->required();
  s->add_option("--seed-class", sa.seed_class, "predicted | truth");

  ReportArgs re;
  auto* r = app.add_subcommand("report", "Render an SVG report");
  r->add_option("--metrics", re.metrics, "Metrics JSON")->required();
  r->add_option("--out", re.out, "SVG file")->required();
  r->add_option("--series", re.series, "Peak series CSV (repeatable)");

  // CLI11 consumes a reversed argument vector without the program name
  std::vector<std::string> rev(args.size() > 1 ? args.begin() + 1 : args.end(), args.end());
  std::reverse(rev.begin(), rev.end());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& ex) {
    err << "error: " << ex.what() << "\n" << app.help();
    return kExitUsage;
  }

  try {
    if (g->parsed()) cmd_generate(gen, out);
    if (t->parsed()) cmd_train(tr, out);
    if (p->parsed()) cmd_predict(pr, out);
    if (e->parsed()) cmd_eval(ev, out);
    if (s->parsed()) cmd_saliency(sa, out);
    if (r->parsed()) cmd_report(re, out);
  } catch (const UsageError& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitData;
  }
  return kExitOk;
}

}  // namespace voxdec
