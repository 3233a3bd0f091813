#include "runner.hpp"

#include <algorithm>
#include <chrono>
#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <set>
#include <sstream>

#include "ieoml/common.hpp"
#include "ieoml/metrics.hpp"

#ifndef IEOML_VERSION
#define IEOML_VERSION "0.0.0"
#endif

namespace ieo::cli {

namespace fs = std::filesystem;

std::string version() { return IEOML_VERSION; }

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
  return buf;
}

nlohmann::json to_json(const RunManifest& m) {
  auto stages = nlohmann::json::array();
  for (const auto& [name, seconds] : m.stages) stages.push_back({{"stage", name}, {"seconds", seconds}});
  return {{"command", m.command},  {"config_hash", m.config_hash}, {"version", m.version},
          {"seed", m.seed},        {"workers", m.workers},         {"stages", stages},
          {"files", m.files},      {"warnings", m.warnings},       {"errors", m.errors},
          {"status", m.ok() ? "ok" : "error"}};
}

namespace {

// Stage keys for the per-command seed streams.
enum StageKey : std::uint64_t { kSweep = 2, kMulticlass, kLdo, kScenarios, kIeo, kFusion, kImportance, kTiming };

class Session {
 public:
  Session(const ExperimentConfig& config, const RunOptions& options, RunManifest& manifest)
      : config(config), options(options), manifest(manifest), dir_(options.out_dir) {}

  void write(const std::string& name, const std::string& content) {
    write_text_file((dir_ / name).string(), content);
    manifest.files.push_back(name);
  }

  template <typename F>
  auto stage(const std::string& name, F&& fn) {
    const auto start = std::chrono::steady_clock::now();
    auto finish = [&] {
      manifest.stages.emplace_back(name, std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    };
    if constexpr (std::is_void_v<decltype(fn())>) {
      fn();
      finish();
    } else {
      auto out = fn();
      finish();
      return out;
    }
  }

  std::uint64_t seed() const { return manifest.seed; }
  int workers() const { return options.workers; }

  std::vector<ModelSpec> seeded(std::vector<ModelSpec> specs, std::uint64_t stage_key) const {
    for (std::size_t i = 0; i < specs.size(); ++i) specs[i].params.seed = stream_seed(seed(), {stage_key, i});
    return specs;
  }

  const ExperimentConfig& config;
  const RunOptions& options;
  RunManifest& manifest;

 private:
  fs::path dir_;
};

// Output-name label per model; repeated kinds get their list position appended.
std::vector<std::string> model_labels(const std::vector<ModelSpec>& specs) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const auto n = std::count_if(specs.begin(), specs.end(), [&](const auto& s) { return s.kind == specs[i].kind; });
    out.push_back(to_string(specs[i].kind) + (n > 1 ? "-" + std::to_string(i) : ""));
  }
  return out;
}

Dataset load_dataset(Session& s) {
  return s.stage("load", [&] {
    const auto& src = s.config.dataset;
    if (src.synth) {
      auto synth = *src.synth;
      if (!s.config.document.at("dataset").at("synth").contains("seed")) synth.seed = s.seed();
      return synthesize(synth);
    }
    const auto& csv = *src.csv;
    auto loaded = load_csv(csv.path, csv.schema, csv.column_map, csv.options);
    const auto& r = loaded.report;
    if (r.dropped_bad_target > 0)
      s.manifest.warnings.push_back("load: dropped " + std::to_string(r.dropped_bad_target) +
                                    " rows with a missing or invalid duration");
    if (r.dropped_by_filter > 0)
      s.manifest.warnings.push_back("load: " + std::to_string(r.dropped_by_filter) + " rows removed by filters");
    if (loaded.dataset.empty()) throw std::runtime_error("load: no usable rows in " + csv.path);
    return std::move(loaded.dataset);
  });
}

void run_profile(Session& s, const Dataset& data) {
  const auto report = s.stage("profile", [&] { return profile(data, {s.config.profile.histogram_bins}); });
  s.write("profile.json", to_json(report).dump(2) + "\n");
  std::ostringstream ecdf;
  ecdf << "duration,cumulative\n";
  for (const auto& [d, f] : report.ecdf) ecdf << format_number(d) << ',' << format_number(f) << '\n';
  s.write("ecdf.csv", ecdf.str());
  std::ostringstream hist;
  hist << "log1p_lower,log1p_upper,count\n";
  for (std::size_t i = 0; i < report.log_histogram.counts.size(); ++i)
    hist << format_number(report.log_histogram.edges[i]) << ',' << format_number(report.log_histogram.edges[i + 1])
         << ',' << report.log_histogram.counts[i] << '\n';
  s.write("log_histogram.csv", hist.str());
  std::ostringstream fits;
  fits << "distribution,log_likelihood,aic,converged,params\n";
  for (const auto& f : report.fitted) {
    std::string params;
    for (const auto& [k, v] : f.params) params += (params.empty() ? "" : ";") + k + "=" + format_number(v);
    fits << f.distribution << ',' << format_number(f.log_likelihood) << ',' << format_number(f.aic) << ','
         << (f.converged ? 1 : 0) << ',' << params << '\n';
    if (!f.converged) s.manifest.warnings.push_back("profile: " + f.distribution + " fit did not converge");
  }
  s.write("distribution_fits.csv", fits.str());
  if (report.shifted_records > 0)
    s.manifest.warnings.push_back("profile: " + std::to_string(report.shifted_records) +
                                  " zero durations shifted by " + format_number(report.zero_shift) + " min for fitting");
}

void run_synth(Session& s, const Dataset& data) {
  if (!s.config.dataset.synth) throw PreconditionError("synth: the config has no dataset.synth block");
  s.stage("write", [&] {
    const auto path = (fs::path(s.options.out_dir) / "dataset.csv").string();
    const auto tmp = path + ".tmp";
    fs::create_directories(s.options.out_dir);
    write_csv(data, tmp);
    fs::rename(tmp, path);
  });
  s.manifest.files.push_back("dataset.csv");
  auto synth = *s.config.dataset.synth;
  if (!s.config.document.at("dataset").at("synth").contains("seed")) synth.seed = s.seed();
  s.write("synth_config.json", nlohmann::json(synth).dump(2) + "\n");
}

void run_sweep(Session& s, const EncodedMatrix& x, std::span<const double> y) {
  const auto& b = s.config.sweep;
  const auto models = s.seeded(b.models, kSweep);
  const auto report = s.stage("sweep", [&] {
    return threshold_sweep(x, y, models, {b.tc_values, b.folds, s.workers(), b.min_per_class});
  });
  for (const auto& r : report.rows)
    if (!r.evaluable)
      s.manifest.warnings.push_back("sweep: tc=" + format_number(r.tc) + " " + to_string(r.kind) +
                                    " not evaluable" + (r.note.empty() ? "" : ": " + r.note));
  s.write("sweep.csv", to_csv(report));
  s.write("sweep.json", to_json(report).dump(2) + "\n");
}

void run_multiclass(Session& s, const EncodedMatrix& x, std::span<const double> y) {
  const auto& b = s.config.multiclass;
  const auto models = s.seeded(b.models, kMulticlass);
  const auto labels = model_labels(models);
  const QuantileGridOptions options{b.q1_values, b.q2_values, b.folds, s.workers(), b.min_per_class};
  nlohmann::json doc{{"grids", nlohmann::json::array()}};
  for (std::size_t i = 0; i < models.size(); ++i) {
    const auto grid = s.stage("quantile-grid:" + labels[i], [&] { return quantile_grid(x, y, models[i], options); });
    const auto unevaluable = std::count_if(grid.cells.begin(), grid.cells.end(), [](const auto& c) { return !c.evaluable; });
    if (unevaluable > 0)
      s.manifest.warnings.push_back("multiclass: " + std::to_string(unevaluable) + " " + labels[i] +
                                    " grid cells not evaluable");
    s.write("quantile_grid_" + labels[i] + ".csv", to_csv(grid));
    doc["grids"].push_back(to_json(grid));
  }
  const auto presets = s.stage("presets", [&] { return multiclass_presets(x, y, models, options); });
  for (const auto& p : presets)
    if (!p.evaluable)
      s.manifest.warnings.push_back("multiclass: preset " + to_string(p.preset) + " not evaluable");
  s.write("multiclass_presets.csv", to_csv(presets));
  s.write("multiclass.json", doc.dump(2) + "\n");
}

void run_ldo(Session& s, const EncodedMatrix& x, std::span<const double> y) {
  const auto& b = s.config.ldo_sweep;
  const auto models = s.seeded(b.models, kLdo);
  LdoSweepOptions options;
  options.tc = b.tc;
  options.side = b.side;
  options.folds = b.folds;
  options.workers = s.workers();
  options.min_per_class = b.min_per_class;
  const auto report = s.stage("ldo-sweep", [&] { return ldo_hdo_sweep(x, y, models, b.thresholds, options); });
  for (const auto& r : report.rows) {
    if (r.over_half_removed)
      s.manifest.warnings.push_back("ldo-sweep: threshold " + format_number(r.threshold) + " removes over half the data");
    if (!r.evaluable)
      s.manifest.warnings.push_back("ldo-sweep: threshold " + format_number(r.threshold) + " not evaluable");
  }
  s.write("ldo_sweep.csv", to_csv(report));
  s.write("ldo_sweep.json", to_json(report).dump(2) + "\n");
}

void run_scenarios_cmd(Session& s, const EncodedMatrix& x, std::span<const double> y) {
  const auto& b = s.config.scenarios;
  const auto models = s.seeded(b.models, kScenarios);
  const auto table = s.stage("scenarios", [&] {
    return run_scenarios(x, y, b.tc, models, b.scenarios, b.folds, b.transform, s.workers());
  });
  std::set<std::string> refused;
  for (const auto& cell : table.cells)
    if (!cell.result && refused.insert(to_string(cell.scenario)).second) s.manifest.errors.push_back(cell.error);
  s.write("scenarios_mape.csv", to_csv(table));
  std::ostringstream rmse_csv;
  rmse_csv << "scenario";
  for (auto k : table.kinds) rmse_csv << ',' << to_string(k);
  rmse_csv << '\n';
  for (std::size_t i = 0; i < table.scenarios.size(); ++i) {
    rmse_csv << to_string(table.scenarios[i]);
    for (std::size_t m = 0; m < table.kinds.size(); ++m) {
      rmse_csv << ',';
      if (const auto& r = table.at(i, m).result) rmse_csv << format_number(r->rmse);
    }
    rmse_csv << '\n';
  }
  s.write("scenarios_rmse.csv", rmse_csv.str());
  s.write("scenarios.json", to_json(table).dump(2) + "\n");

  auto time_model = b.time_model;
  time_model.params.seed = stream_seed(s.seed(), {kScenarios, 0xF0});
  const auto rows = s.stage("time-folding", [&] {
    return quantiled_time_folding(x, y, b.time_groups, time_model, b.transform);
  });
  s.write("time_folding.csv", to_csv(rows));
}

void run_ieo_cmd(Session& s, const EncodedMatrix& x, std::span<const double> durations) {
  const auto& b = s.config.ieo;
  const auto y = b.task == Task::Classification ? binary_labels(durations, b.tc)
                                                : std::vector<double>(durations.begin(), durations.end());
  std::ostringstream summary, timing;
  summary << "model,mode,best_draw,cv_metric,validation_metric,final_removed,part_rows,validation_rows\n";
  timing << "model,mode,seconds\n";
  nlohmann::json doc = nlohmann::json::object();
  for (std::size_t i = 0; i < b.models.size(); ++i) {
    const auto kind = b.models[i];
    const HyperSpace space{b.model_space.value_or(default_model_space(kind)), b.orm_space};
    for (auto mode : b.modes) {
      CvPlan plan;
      plan.folds = b.folds;
      plan.mode = mode;
      plan.iterations = b.iterations;
      // shared across modes so every mode sees the same model draws
      plan.seed = stream_seed(s.seed(), {kIeo, i});
      plan.transform = b.task == Task::Regression ? b.transform : TargetTransform::None;
      plan.task = b.task;
      plan.validation_fraction = b.validation_fraction;
      plan.workers = s.workers();
      const auto name = to_string(kind) + "_" + to_string(mode);
      const auto start = std::chrono::steady_clock::now();
      const auto result = s.stage("ieo:" + name, [&] { return run_ieo(x, y, kind, plan, space, b.metric); });
      timing << to_string(kind) << ',' << to_string(mode) << ','
             << format_number(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()) << '\n';
      const auto failed = std::count_if(result.trace.begin(), result.trace.end(), [](const auto& d) { return d.failed; });
      if (failed > 0)
        s.manifest.warnings.push_back("ieo: " + name + " had " + std::to_string(failed) + " failed draws");
      summary << to_string(kind) << ',' << to_string(mode) << ',' << result.best.draw_index << ','
              << format_number(result.best_metric) << ','
              << (result.validation_metric ? format_number(*result.validation_metric) : "") << ','
              << result.final_removed << ',' << result.part_indices.size() << ',' << result.validation_indices.size()
              << '\n';
      s.write("ieo_" + name + "_trace.csv", trace_to_csv(result));
      doc[name] = to_json(result);
    }
  }
  s.write("ieo_summary.csv", summary.str());
  s.write("ieo_timing.csv", timing.str());
  s.write("ieo.json", doc.dump(2) + "\n");
}

void run_fusion_cmd(Session& s, const EncodedMatrix& x, std::span<const double> y) {
  const auto& b = s.config.fusion;
  auto config = default_fusion_config();
  config.meta_folds = b.meta_folds;
  config.transform = b.transform;
  std::uint64_t k = 0;
  for (auto* spec : {&config.classifier, &config.regressor_a, &config.regressor_b, &config.regressor_all, &config.meta})
    spec->params.seed = stream_seed(s.seed(), {kFusion, k++});
  const auto folds = s.stage("fusion", [&] { return evaluate_composites(x, y, config, b.tc, b.folds, s.workers()); });
  s.write("fusion_folds.csv", to_csv(folds));
  std::ostringstream summary;
  summary << "method,mean_rmse,mean_mape\n";
  auto row = [&](const char* name, double CompositeFold::*r, double CompositeFold::*m) {
    double sr = 0, sm = 0;
    for (const auto& f : folds) {
      sr += f.*r;
      sm += f.*m;
    }
    const double n = static_cast<double>(folds.size());
    summary << name << ',' << format_number(sr / n) << ',' << format_number(sm / n) << '\n';
  };
  row("single", &CompositeFold::single_rmse, &CompositeFold::single_mape);
  row("pipeline", &CompositeFold::pipeline_rmse, &CompositeFold::pipeline_mape);
  row("fusion", &CompositeFold::fusion_rmse, &CompositeFold::fusion_mape);
  s.write("fusion_summary.csv", summary.str());
}

void run_importance_cmd(Session& s, const EncodedMatrix& x, std::span<const double> y) {
  const auto& b = s.config.importance;
  auto model = b.model;
  model.params.seed = stream_seed(s.seed(), {kImportance, 0});
  auto options = b.options;
  options.seed = stream_seed(s.seed(), {kImportance, 1});
  options.workers = s.workers();
  const auto r = s.stage("importance", [&] { return subset_importance(x, y, b.tc, model, options); });
  for (const auto* rep : {&r.all, &r.a, &r.b})
    if (rep->flagged) s.manifest.warnings.push_back("importance: subset " + rep->subset + " flagged: " + rep->note);
  const std::vector<ImportanceReport> reports{r.all, r.a, r.b};
  s.write("importance.csv", to_csv(reports));
  nlohmann::json doc{{"all", to_json(r.all)}, {"A", to_json(r.a)}, {"B", to_json(r.b)}};
  if (!r.a.flagged && !r.b.flagged) doc["rank_correlation_a_b"] = rank_correlation(r.a, r.b);
  s.write("importance.json", doc.dump(2) + "\n");
}

void run_timing_cmd(Session& s, const EncodedMatrix& x, std::span<const double> y) {
  const auto& b = s.config.timing;
  CvPlan plan;
  plan.folds = b.folds;
  plan.seed = stream_seed(s.seed(), {kTiming});
  plan.transform = b.transform;
  plan.workers = s.workers();
  const auto curve = s.stage("iteration-curve", [&] { return iteration_curve(x, y, b.models, b.counts, plan, b.metric); });
  std::ostringstream metric, seconds;
  metric << "model,iterations,best_metric\n";
  seconds << "model,iterations,seconds\n";
  for (const auto& p : curve) {
    metric << to_string(p.kind) << ',' << p.iterations << ',' << format_number(p.best_metric) << '\n';
    seconds << to_string(p.kind) << ',' << p.iterations << ',' << format_number(p.seconds) << '\n';
  }
  s.write("iteration_curve.csv", metric.str());
  s.write("iteration_curve_timing.csv", seconds.str());

  std::ostringstream fits;
  fits << "model,rows,seconds\n";
  for (std::size_t i = 0; i < b.models.size(); ++i) {
    auto params = default_params(b.models[i]);
    params.seed = stream_seed(s.seed(), {kTiming, i});
    const auto start = std::chrono::steady_clock::now();
    fit_model(b.models[i], x, y, params, {Task::Regression, b.transform});
    fits << to_string(b.models[i]) << ',' << x.rows() << ','
         << format_number(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()) << '\n';
  }
  s.write("model_fit_timing.csv", fits.str());
}

}  // namespace

RunManifest run(const ExperimentConfig& config, const RunOptions& options) {
  if (std::find(kCommands.begin(), kCommands.end(), options.command) == kCommands.end())
    throw PreconditionError("unknown command '" + options.command + "'");
  if (options.workers < 1) throw PreconditionError("--workers must be >= 1");

  RunManifest manifest;
  manifest.command = options.command;
  manifest.version = version();
  manifest.seed = options.seed.value_or(config.seed);
  manifest.workers = options.workers;
  auto effective = config.document;
  effective["seed"] = manifest.seed;
  manifest.config_hash = fnv1a_hex(effective.dump());

  fs::create_directories(options.out_dir);
  Session s(config, options, manifest);
  try {
    const auto data = load_dataset(s);
    const auto& cmd = options.command;
    if (cmd == "profile") run_profile(s, data);
    else if (cmd == "synth") run_synth(s, data);
    else {
      const auto x = s.stage("encode", [&] { return encode(data); });
      const auto& y = data.durations();
      if (cmd == "sweep") run_sweep(s, x, y);
      else if (cmd == "multiclass") run_multiclass(s, x, y);
      else if (cmd == "ldo-sweep") run_ldo(s, x, y);
      else if (cmd == "scenarios") run_scenarios_cmd(s, x, y);
      else if (cmd == "ieo") run_ieo_cmd(s, x, y);
      else if (cmd == "fusion") run_fusion_cmd(s, x, y);
      else if (cmd == "importance") run_importance_cmd(s, x, y);
      else if (cmd == "timing") run_timing_cmd(s, x, y);
    }
  } catch (const std::exception& e) {
    manifest.errors.push_back(options.command + ": " + e.what());
  }
  std::sort(manifest.files.begin(), manifest.files.end());
  write_text_file((fs::path(options.out_dir) / "manifest.json").string(), to_json(manifest).dump(2) + "\n");
  return manifest;
}

}  // namespace ieo::cli
