#include "config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace ieo::cli {

namespace {

// Walks one JSON object, remembers which keys were read and rejects the rest.
class Reader {
 public:
  Reader(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_, "expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key) && !j_.at(key).is_null(); }
  void mark(const std::string& key) { seen_.insert(key); }
  std::string at(const std::string& key) const { return path_ + "." + key; }

  const nlohmann::json& raw(const std::string& key) {
    seen_.insert(key);
    if (!has(key)) throw ConfigError(at(key), "required field missing");
    return j_.at(key);
  }

  Reader child(const std::string& key) { return Reader(raw(key), at(key)); }

  std::uint64_t u64(const std::string& key) {
    const auto& v = raw(key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
      throw ConfigError(at(key), "expected a non-negative integer");
    return v.get<std::uint64_t>();
  }
  std::size_t size(const std::string& key, std::size_t fallback, std::size_t min = 0) {
    if (!has(key)) {
      seen_.insert(key);
      return fallback;
    }
    const auto v = static_cast<std::size_t>(u64(key));
    if (v < min) throw ConfigError(at(key), "must be >= " + std::to_string(min));
    return v;
  }
  double number(const std::string& key, double fallback) {
    if (!has(key)) {
      seen_.insert(key);
      return fallback;
    }
    const auto& v = raw(key);
    if (!v.is_number()) throw ConfigError(at(key), "expected a number");
    return v.get<double>();
  }
  std::optional<double> optional_number(const std::string& key) {
    if (!has(key)) {
      seen_.insert(key);
      return std::nullopt;
    }
    return number(key, 0.0);
  }
  std::string text(const std::string& key) {
    const auto& v = raw(key);
    if (!v.is_string()) throw ConfigError(at(key), "expected a string");
    return v.get<std::string>();
  }
  std::vector<double> numbers(const std::string& key, std::vector<double> fallback) {
    if (!has(key)) {
      seen_.insert(key);
      return fallback;
    }
    const auto& v = raw(key);
    if (!v.is_array()) throw ConfigError(at(key), "expected an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number()) throw ConfigError(at(key) + "[" + std::to_string(i) + "]", "expected a number");
      out.push_back(v[i].get<double>());
    }
    return out;
  }

  // Parses a string field through `convert`, reporting its message at the path.
  template <typename T, typename F>
  T parsed(const std::string& key, T fallback, F convert) {
    if (!has(key)) {
      seen_.insert(key);
      return fallback;
    }
    const auto value = text(key);
    try {
      return convert(value);
    } catch (const std::exception& e) {
      throw ConfigError(at(key), e.what());
    }
  }

  template <typename T, typename F>
  std::vector<T> parsed_list(const std::string& key, std::vector<T> fallback, F convert) {
    if (!has(key)) {
      seen_.insert(key);
      return fallback;
    }
    const auto& v = raw(key);
    if (!v.is_array() || v.empty()) throw ConfigError(at(key), "expected a non-empty array of strings");
    std::vector<T> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const auto p = at(key) + "[" + std::to_string(i) + "]";
      if (!v[i].is_string()) throw ConfigError(p, "expected a string");
      try {
        out.push_back(convert(v[i].get<std::string>()));
      } catch (const std::exception& e) {
        throw ConfigError(p, e.what());
      }
    }
    return out;
  }

  void finish() const {
    for (const auto& [key, value] : j_.items())
      if (!seen_.count(key)) throw ConfigError(at(key), "unknown field");
  }

 private:
  const nlohmann::json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

// Model entries are a kind name or {"kind": ..., "params": {...}}; params are
// merged over the kind's defaults.
ModelSpec model_spec(const nlohmann::json& j, const std::string& path) {
  auto kind_of = [&](const nlohmann::json& v, const std::string& p) {
    if (!v.is_string()) throw ConfigError(p, "expected a model name");
    try {
      return model_kind_from_string(v.get<std::string>());
    } catch (const std::exception& e) {
      throw ConfigError(p, e.what());
    }
  };
  if (j.is_string()) {
    const auto kind = kind_of(j, path);
    return {kind, default_params(kind)};
  }
  Reader r(j, path);
  const auto kind = kind_of(r.raw("kind"), r.at("kind"));
  nlohmann::json merged = default_params(kind);
  if (r.has("params")) {
    const auto& params = r.raw("params");
    if (!params.is_object()) throw ConfigError(r.at("params"), "expected an object");
    for (const auto& [key, value] : params.items()) {
      const auto p = r.at("params") + "." + key;
      if (key == "seed") throw ConfigError(p, "model seeds derive from the top-level seed");
      if (!merged.contains(key)) throw ConfigError(p, "unknown parameter");
      merged[key] = value;
    }
  }
  r.finish();
  ModelSpec spec{kind, {}};
  try {
    spec.params = merged.get<ModelParams>();
    spec.params.validate(kind);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(r.at("params"), e.what());
  }
  return spec;
}

std::vector<ModelSpec> model_specs(Reader& r, const std::string& key, std::vector<ModelKind> fallback) {
  if (!r.has(key)) {
    r.mark(key);
    return default_specs(fallback);
  }
  const auto& v = r.raw(key);
  if (!v.is_array() || v.empty()) throw ConfigError(r.at(key), "expected a non-empty array of models");
  std::vector<ModelSpec> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(model_spec(v[i], r.at(key) + "[" + std::to_string(i) + "]"));
  return out;
}

ModelSpace model_space(Reader r) {
  ModelSpace s;
  auto int_range = [&](const std::string& key, IntRange& out) {
    if (!r.has(key)) return r.mark(key);
    const auto v = r.numbers(key, {});
    if (v.size() != 2 || v[0] != std::floor(v[0]) || v[1] != std::floor(v[1]) || v[0] > v[1])
      throw ConfigError(r.at(key), "expected [lo, hi] integers with lo <= hi");
    out = {static_cast<int>(v[0]), static_cast<int>(v[1])};
  };
  auto real_range = [&](const std::string& key, RealRange& out) {
    if (!r.has(key)) return r.mark(key);
    const auto v = r.numbers(key, {});
    if (v.size() != 2 || v[0] > v[1]) throw ConfigError(r.at(key), "expected [lo, hi] with lo <= hi");
    out.lo = v[0];
    out.hi = v[1];
    if (out.log_scale && !(out.lo > 0.0)) throw ConfigError(r.at(key), "log-scale range needs lo > 0");
  };
  int_range("max_depth", s.max_depth);
  int_range("min_samples_leaf", s.min_samples_leaf);
  int_range("n_rounds", s.n_rounds);
  real_range("learning_rate", s.learning_rate);
  real_range("subsample", s.subsample);
  real_range("colsample", s.colsample);
  real_range("lambda", s.lambda);
  real_range("gamma", s.gamma);
  real_range("min_child_weight", s.min_child_weight);
  int_range("n_trees", s.n_trees);
  real_range("bootstrap_fraction", s.bootstrap_fraction);
  real_range("feature_fraction", s.feature_fraction);
  int_range("k", s.k);
  real_range("ridge", s.ridge);
  if (r.has("goss")) {
    auto g = r.child("goss");
    RealRange top{0.1, 0.3}, other{0.05, 0.2};
    auto range = [&](const std::string& key, RealRange& out) {
      const auto v = g.numbers(key, {out.lo, out.hi});
      if (v.size() != 2 || v[0] > v[1] || v[0] <= 0.0 || v[1] >= 1.0)
        throw ConfigError(g.at(key), "expected [lo, hi] inside (0, 1)");
      out = {v[0], v[1]};
    };
    range("top_fraction", top);
    range("other_fraction", other);
    g.finish();
    s.goss = std::make_pair(top, other);
  } else {
    r.mark("goss");
  }
  r.finish();
  return s;
}

OrmSpace orm_space(Reader r) {
  OrmSpace s;
  s.methods = r.parsed_list("methods", s.methods, orm_method_from_string);
  auto grid = [&](const std::string& key, std::vector<double>& out) {
    out = r.numbers(key, out);
    for (double v : out)
      if (!(v >= 0.0 && v <= 0.05)) throw ConfigError(r.at(key), "fractions must lie in [0, 0.05]");
  };
  grid("extra_percent_grid", s.extra_percent_grid);
  grid("intra_percent_grid", s.intra_percent_grid);
  auto int_range = [&](const std::string& key, IntRange& out) {
    const auto v = r.numbers(key, {static_cast<double>(out.lo), static_cast<double>(out.hi)});
    if (v.size() != 2 || v[0] > v[1] || v[0] < 1) throw ConfigError(r.at(key), "expected [lo, hi] with 1 <= lo <= hi");
    out = {static_cast<int>(v[0]), static_cast<int>(v[1])};
  };
  int_range("n_trees", s.n_trees);
  int_range("subsample_size", s.subsample_size);
  int_range("k", s.k);
  r.finish();
  return s;
}

DatasetSource dataset_source(Reader r) {
  DatasetSource out;
  if (r.has("csv") == r.has("synth")) throw ConfigError(r.at("csv"), "exactly one of csv or synth is required");
  if (r.has("synth")) {
    r.mark("csv");
    const auto& j = r.raw("synth");
    if (!j.is_object()) throw ConfigError(r.at("synth"), "expected an object");
    static const std::set<std::string> known{"n", "seed", "mu", "sigma", "effects", "noise_features",
                                             "round_to_minutes", "short_fraction", "corrupt_fraction",
                                             "corrupt_factor", "leak_duration"};
    for (const auto& [key, value] : j.items())
      if (!known.count(key)) throw ConfigError(r.at("synth") + "." + key, "unknown field");
    try {
      out.synth = j.get<SynthConfig>();
    } catch (const std::exception& e) {
      throw ConfigError(r.at("synth"), e.what());
    }
  } else {
    r.mark("synth");
    auto c = r.child("csv");
    CsvSource src;
    src.path = c.text("path");
    try {
      src.schema = c.raw("schema").get<FeatureSchema>();
      src.schema.validate();
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError(c.at("schema"), e.what());
    }
    if (c.has("column_map")) {
      const auto& m = c.raw("column_map");
      if (!m.is_object()) throw ConfigError(c.at("column_map"), "expected an object of strings");
      for (const auto& [key, value] : m.items()) {
        if (!value.is_string()) throw ConfigError(c.at("column_map") + "." + key, "expected a string");
        src.column_map[key] = value.get<std::string>();
      }
    } else {
      c.mark("column_map");
    }
    if (c.has("duration_from")) {
      auto d = c.child("duration_from");
      src.options.duration_from = DurationFromTimestamps{d.text("start"), d.text("end")};
      d.finish();
    } else {
      c.mark("duration_from");
    }
    if (c.has("filters")) {
      const auto& f = c.raw("filters");
      if (!f.is_array()) throw ConfigError(c.at("filters"), "expected an array");
      for (std::size_t i = 0; i < f.size(); ++i) {
        Reader fr(f[i], c.at("filters") + "[" + std::to_string(i) + "]");
        RowFilter filter;
        filter.column = fr.text("column");
        const auto& values = fr.raw("values");
        if (!values.is_array()) throw ConfigError(fr.at("values"), "expected an array of strings");
        for (const auto& v : values) {
          if (!v.is_string()) throw ConfigError(fr.at("values"), "expected an array of strings");
          filter.values.push_back(v.get<std::string>());
        }
        fr.finish();
        src.options.filters.push_back(std::move(filter));
      }
    } else {
      c.mark("filters");
    }
    c.finish();
    out.csv = std::move(src);
  }
  r.finish();
  return out;
}

const std::vector<ModelKind> kBaselines{ModelKind::Gbt, ModelKind::GbtReg, ModelKind::RandomForest, ModelKind::Knn,
                                        ModelKind::Linear};

template <typename Block, typename Fill>
void block(Reader& top, const std::string& key, Block& out, Fill fill) {
  if (!top.has(key)) {
    top.mark(key);
    static const nlohmann::json kEmpty = nlohmann::json::object();
    Reader empty(kEmpty, top.at(key));
    fill(empty, out);
    return;
  }
  auto r = top.child(key);
  fill(r, out);
  r.finish();
}

}  // namespace

ExperimentConfig parse_config(const nlohmann::json& document) {
  ExperimentConfig c;
  c.document = document;
  Reader top(document, "config");
  c.seed = top.u64("seed");
  c.dataset = dataset_source(top.child("dataset"));
  if (c.dataset.synth && !document.at("dataset").at("synth").contains("seed")) c.dataset.synth->seed = c.seed;
  if (top.has("output_dir")) c.output_dir = top.text("output_dir");
  else top.mark("output_dir");

  block(top, "profile", c.profile, [](Reader& r, ProfileBlock& b) { b.histogram_bins = r.size("histogram_bins", 30, 1); });
  block(top, "sweep", c.sweep, [](Reader& r, SweepBlock& b) {
    b.tc_values = r.numbers("tc_values", b.tc_values);
    if (b.tc_values.empty()) throw ConfigError(r.at("tc_values"), "must not be empty");
    for (double tc : b.tc_values)
      if (!(tc > 0.0)) throw ConfigError(r.at("tc_values"), "thresholds must be > 0");
    b.models = model_specs(r, "models", kBaselines);
    b.folds = r.size("folds", b.folds, 2);
    b.min_per_class = r.size("min_per_class", b.min_per_class, 1);
  });
  block(top, "multiclass", c.multiclass, [](Reader& r, MulticlassBlock& b) {
    b.models = model_specs(r, "models", {ModelKind::Gbt});
    b.q1_values = r.numbers("q1_values", b.q1_values);
    b.q2_values = r.numbers("q2_values", b.q2_values);
    for (const auto* v : {&b.q1_values, &b.q2_values})
      for (double q : *v)
        if (!(q > 0.0 && q < 1.0)) throw ConfigError(r.at(v == &b.q1_values ? "q1_values" : "q2_values"), "quantiles must lie in (0, 1)");
    b.folds = r.size("folds", b.folds, 2);
    b.min_per_class = r.size("min_per_class", b.min_per_class, 1);
  });
  block(top, "ldo_sweep", c.ldo_sweep, [](Reader& r, LdoBlock& b) {
    b.thresholds = r.numbers("thresholds", b.thresholds);
    if (!std::is_sorted(b.thresholds.begin(), b.thresholds.end()) || b.thresholds.empty())
      throw ConfigError(r.at("thresholds"), "expected a non-empty ascending array");
    b.side = r.parsed("side", b.side, [](const std::string& s) {
      if (s == "low") return TrimSide::Low;
      if (s == "high") return TrimSide::High;
      throw std::invalid_argument("expected \"low\" or \"high\"");
    });
    b.tc = r.optional_number("tc");
    if (b.tc && !(*b.tc > 0.0)) throw ConfigError(r.at("tc"), "must be > 0");
    b.models = model_specs(r, "models", {ModelKind::Gbt, ModelKind::RandomForest});
    b.folds = r.size("folds", b.folds, 2);
    b.min_per_class = r.size("min_per_class", b.min_per_class, 1);
  });
  block(top, "scenarios", c.scenarios, [](Reader& r, ScenariosBlock& b) {
    b.tc = r.number("tc", b.tc);
    if (!(b.tc > 0.0)) throw ConfigError(r.at("tc"), "must be > 0");
    b.models = model_specs(r, "models", {ModelKind::Gbt, ModelKind::GbtReg, ModelKind::RandomForest});
    b.scenarios = r.parsed_list("scenarios", b.scenarios, scenario_from_string);
    b.folds = r.size("folds", b.folds, 2);
    b.transform = r.parsed("transform", b.transform, target_transform_from_string);
    b.time_groups = r.size("time_groups", b.time_groups, 2);
    if (r.has("time_model")) b.time_model = model_spec(r.raw("time_model"), r.at("time_model"));
    else {
      r.mark("time_model");
      b.time_model = {ModelKind::Gbt, default_params(ModelKind::Gbt)};
    }
  });
  block(top, "ieo", c.ieo, [](Reader& r, IeoBlock& b) {
    b.models = r.parsed_list("models", b.models, model_kind_from_string);
    b.modes = r.parsed_list("modes", b.modes, orm_mode_from_string);
    b.folds = r.size("folds", b.folds, 2);
    b.iterations = r.size("iterations", b.iterations, 1);
    b.metric = r.parsed("metric", b.metric, metric_from_string);
    b.transform = r.parsed("transform", b.transform, target_transform_from_string);
    b.task = r.parsed("task", b.task, [](const std::string& s) {
      if (s == "regression") return Task::Regression;
      if (s == "classification") return Task::Classification;
      throw std::invalid_argument("expected \"regression\" or \"classification\"");
    });
    b.tc = r.number("tc", b.tc);
    b.validation_fraction = r.number("validation_fraction", b.validation_fraction);
    if (!(b.validation_fraction >= 0.0 && b.validation_fraction < 1.0))
      throw ConfigError(r.at("validation_fraction"), "must lie in [0, 1)");
    if ((b.task == Task::Classification) != (b.metric == Metric::F1))
      throw ConfigError(r.at("metric"), "f1 goes with classification, mape/rmse with regression");
    if (b.task == Task::Classification && !(b.tc > 0.0)) throw ConfigError(r.at("tc"), "must be > 0");
    if (r.has("model_space")) b.model_space = model_space(r.child("model_space"));
    else r.mark("model_space");
    if (r.has("orm_space")) b.orm_space = orm_space(r.child("orm_space"));
    else r.mark("orm_space");
  });
  block(top, "fusion", c.fusion, [](Reader& r, FusionBlock& b) {
    b.tc = r.number("tc", b.tc);
    if (!(b.tc > 0.0)) throw ConfigError(r.at("tc"), "must be > 0");
    b.folds = r.size("folds", b.folds, 2);
    b.meta_folds = r.size("meta_folds", b.meta_folds, 2);
    b.transform = r.parsed("transform", b.transform, target_transform_from_string);
  });
  block(top, "importance", c.importance, [](Reader& r, ImportanceBlock& b) {
    b.tc = r.number("tc", b.tc);
    if (!(b.tc > 0.0)) throw ConfigError(r.at("tc"), "must be > 0");
    if (r.has("model")) b.model = model_spec(r.raw("model"), r.at("model"));
    else {
      r.mark("model");
      b.model = {ModelKind::Gbt, default_params(ModelKind::Gbt)};
    }
    auto& o = b.options;
    o.method = r.parsed("method", o.method, importance_method_from_string);
    o.metric = r.parsed("metric", o.metric, metric_from_string);
    if (o.metric == Metric::F1) throw ConfigError(r.at("metric"), "importance runs on regression metrics");
    o.n_repeats = r.size("n_repeats", o.n_repeats, 1);
    o.shapley_records = r.size("shapley_records", o.shapley_records, 1);
    o.background_size = r.size("background_size", o.background_size, 1);
    o.shapley_samples = r.size("shapley_samples", o.shapley_samples, 1);
    o.min_records = r.size("min_records", o.min_records, 2);
    o.transform = r.parsed("transform", o.transform, target_transform_from_string);
  });
  block(top, "timing", c.timing, [](Reader& r, TimingBlock& b) {
    b.models = r.parsed_list("models", b.models, model_kind_from_string);
    if (r.has("counts")) {
      b.counts.clear();
      for (double v : r.numbers("counts", {})) {
        if (!(v >= 1.0) || v != std::floor(v)) throw ConfigError(r.at("counts"), "expected positive integers");
        b.counts.push_back(static_cast<std::size_t>(v));
      }
      if (b.counts.empty()) throw ConfigError(r.at("counts"), "must not be empty");
    } else {
      r.mark("counts");
    }
    b.folds = r.size("folds", b.folds, 2);
    b.metric = r.parsed("metric", b.metric, metric_from_string);
    if (b.metric == Metric::F1) throw ConfigError(r.at("metric"), "timing runs on regression metrics");
    b.transform = r.parsed("transform", b.transform, target_transform_from_string);
  });
  top.finish();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config", std::string("invalid JSON: ") + e.what());
  }
  return parse_config(j);
}

}  // namespace ieo::cli
