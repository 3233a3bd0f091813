#include "ieoml/labeling.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <tuple>

#include "ieoml/common.hpp"
#include "ieoml/metrics.hpp"
#include "ieoml/tuning.hpp"

namespace ieo {

void BinaryThreshold::validate() const {
  if (!(tc > 0.0) || !std::isfinite(tc)) throw PreconditionError("binary threshold must be > 0");
}

void MultiClassThresholds::validate() const {
  if (!(t1 > 0.0) || !(t2 > t1) || !std::isfinite(t2))
    throw PreconditionError("multiclass thresholds need 0 < t1 < t2");
}

std::vector<double> binary_labels(std::span<const double> durations, double tc) {
  BinaryThreshold{tc}.validate();
  std::vector<double> out;
  out.reserve(durations.size());
  for (double y : durations) out.push_back(y <= tc ? 0.0 : 1.0);
  return out;
}

std::vector<double> multiclass_labels(std::span<const double> durations, const MultiClassThresholds& thresholds) {
  thresholds.validate();
  std::vector<double> out;
  out.reserve(durations.size());
  for (double y : durations) {
    if (y <= thresholds.t1) out.push_back(0.0);
    else if (y < thresholds.t2) out.push_back(1.0);
    else out.push_back(2.0);
  }
  return out;
}

std::string to_string(MutcdClass c) {
  switch (c) {
    case MutcdClass::Minor: return "minor";
    case MutcdClass::Intermediate: return "intermediate";
    case MutcdClass::Major: return "major";
  }
  return "minor";
}

std::vector<MutcdClass> mutcd_labels(std::span<const double> durations) {
  std::vector<MutcdClass> out;
  out.reserve(durations.size());
  for (double y : durations) {
    if (y < 30.0) out.push_back(MutcdClass::Minor);
    else if (y <= 120.0) out.push_back(MutcdClass::Intermediate);
    else out.push_back(MutcdClass::Major);
  }
  return out;
}

std::vector<double> default_tc_values() {
  std::vector<double> v;
  for (int t = 20; t <= 70; t += 5) v.push_back(t);
  return v;
}

namespace {

std::vector<double> out_of_fold(const EncodedMatrix& x, std::span<const double> labels, const ClassifierSpec& spec,
                                std::size_t folds) {
  return cross_val_predict(x, labels, spec.kind, spec.params, folds, FitOptions{Task::Classification, {}});
}

std::size_t count_label(std::span<const double> labels, double label) {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), label));
}

void check_models(std::span<const ClassifierSpec> models) {
  if (models.empty()) throw PreconditionError("sweep: no models");
  for (const auto& m : models) m.params.validate(m.kind);
}

std::string csv_bool(bool b) { return b ? "1" : "0"; }

}  // namespace

std::optional<SweepRow> SweepReport::best() const {
  std::optional<SweepRow> out;
  for (const auto& r : rows)
    if (r.evaluable && (!out || r.f1 > out->f1)) out = r;
  return out;
}

SweepReport threshold_sweep(const EncodedMatrix& x, std::span<const double> durations,
                            std::span<const ClassifierSpec> models, const SweepOptions& options) {
  if (x.rows() != durations.size()) throw PreconditionError("threshold_sweep: X rows and durations differ");
  if (options.tc_values.empty()) throw PreconditionError("threshold_sweep: no thresholds");
  check_models(models);
  if (options.folds < 2 || options.folds > durations.size()) throw PreconditionError("threshold_sweep: bad fold count");

  SweepReport report;
  report.rows.resize(options.tc_values.size() * models.size());
  parallel_for(report.rows.size(), options.workers, [&](std::size_t cell) {
    const double tc = options.tc_values[cell / models.size()];
    const auto& spec = models[cell % models.size()];
    SweepRow row;
    row.tc = tc;
    row.kind = spec.kind;
    const auto labels = binary_labels(durations, tc);
    const std::size_t negatives = count_label(labels, 0.0);
    row.class_balance = static_cast<double>(negatives) / static_cast<double>(labels.size());
    if (negatives < options.min_per_class || labels.size() - negatives < options.min_per_class) {
      row.evaluable = false;
      row.note = "too few records in a class";
    } else {
      const auto pred = out_of_fold(x, labels, spec, options.folds);
      const auto m = classification_metrics(labels, pred, 1.0);
      row.precision = m.precision;
      row.recall = m.recall;
      row.accuracy = m.accuracy;
      row.f1 = m.f1;
      row.below_min_f1 = m.f1 < kMinAcceptableF1;
    }
    report.rows[cell] = row;
  });
  std::stable_sort(report.rows.begin(), report.rows.end(),
                   [](const SweepRow& a, const SweepRow& b) { return a.tc < b.tc; });
  return report;
}

SweepReport threshold_sweep(const Dataset& dataset, std::span<const ClassifierSpec> models,
                            const SweepOptions& options) {
  return threshold_sweep(encode(dataset), dataset.durations(), models, options);
}

std::string to_csv(const SweepReport& report) {
  std::ostringstream out;
  out << "tc,model,precision,recall,accuracy,f1,class_balance,evaluable,below_min_f1\n";
  for (const auto& r : report.rows) {
    out << format_number(r.tc) << ',' << to_string(r.kind) << ',' << format_number(r.precision) << ','
        << format_number(r.recall) << ',' << format_number(r.accuracy) << ',' << format_number(r.f1) << ','
        << format_number(r.class_balance) << ',' << csv_bool(r.evaluable) << ',' << csv_bool(r.below_min_f1) << '\n';
  }
  return out.str();
}

nlohmann::json to_json(const SweepReport& report) {
  auto rows = nlohmann::json::array();
  for (const auto& r : report.rows) {
    rows.push_back({{"tc", r.tc},
                    {"model", to_string(r.kind)},
                    {"precision", r.precision},
                    {"recall", r.recall},
                    {"accuracy", r.accuracy},
                    {"f1", r.f1},
                    {"class_balance", r.class_balance},
                    {"evaluable", r.evaluable},
                    {"below_min_f1", r.below_min_f1},
                    {"note", r.note}});
  }
  nlohmann::json j{{"rows", rows}, {"min_acceptable_f1", kMinAcceptableF1}};
  if (auto b = report.best()) j["best"] = {{"tc", b->tc}, {"model", to_string(b->kind)}, {"f1", b->f1}};
  return j;
}

std::optional<GridCell> QuantileGrid::best() const {
  std::optional<GridCell> out;
  for (const auto& c : cells)
    if (c.evaluable && (!out || c.f1_macro > out->f1_macro)) out = c;
  return out;
}

QuantileGrid quantile_grid(const EncodedMatrix& x, std::span<const double> durations, const ClassifierSpec& model,
                           const QuantileGridOptions& options) {
  if (x.rows() != durations.size()) throw PreconditionError("quantile_grid: X rows and durations differ");
  model.params.validate(model.kind);
  if (options.folds < 2 || options.folds > durations.size()) throw PreconditionError("quantile_grid: bad fold count");

  QuantileGrid grid;
  grid.kind = model.kind;
  for (double q1 : options.q1_values)
    for (double q2 : options.q2_values)
      if (q1 < q2) grid.cells.push_back({q1, q2});
  std::sort(grid.cells.begin(), grid.cells.end(),
            [](const GridCell& a, const GridCell& b) { return std::tie(a.q1, a.q2) < std::tie(b.q1, b.q2); });

  static constexpr double kClasses[] = {0.0, 1.0, 2.0};
  parallel_for(grid.cells.size(), options.workers, [&](std::size_t i) {
    auto& cell = grid.cells[i];
    cell.t1 = quantile(durations, cell.q1);
    cell.t2 = quantile(durations, cell.q2);
    if (!(cell.t1 > 0.0) || !(cell.t2 > cell.t1)) {
      cell.evaluable = false;
      return;
    }
    const auto labels = multiclass_labels(durations, {cell.t1, cell.t2});
    for (int c = 0; c < 3; ++c) cell.class_counts[c] = count_label(labels, kClasses[c]);
    if (std::any_of(std::begin(cell.class_counts), std::end(cell.class_counts),
                    [&](std::size_t n) { return n < options.min_per_class; })) {
      cell.evaluable = false;
      return;
    }
    const auto pred = out_of_fold(x, labels, model, options.folds);
    cell.f1_macro = f1_macro(labels, pred, kClasses);
  });
  return grid;
}

QuantileGrid quantile_grid(const Dataset& dataset, const ClassifierSpec& model, const QuantileGridOptions& options) {
  return quantile_grid(encode(dataset), dataset.durations(), model, options);
}

std::string to_csv(const QuantileGrid& grid) {
  std::ostringstream out;
  out << "q1,q2,t1,t2,model,f1_macro,n_class0,n_class1,n_class2,evaluable\n";
  for (const auto& c : grid.cells) {
    out << format_number(c.q1) << ',' << format_number(c.q2) << ',' << format_number(c.t1) << ','
        << format_number(c.t2) << ',' << to_string(grid.kind) << ',' << format_number(c.f1_macro) << ','
        << c.class_counts[0] << ',' << c.class_counts[1] << ',' << c.class_counts[2] << ',' << csv_bool(c.evaluable)
        << '\n';
  }
  return out.str();
}

std::string to_string(MulticlassPreset preset) {
  return preset == MulticlassPreset::Mutcd ? "mutcd" : "equal-split";
}

std::vector<PresetScore> multiclass_presets(const EncodedMatrix& x, std::span<const double> durations,
                                            std::span<const ClassifierSpec> models,
                                            const QuantileGridOptions& options) {
  if (x.rows() != durations.size()) throw PreconditionError("multiclass_presets: X rows and durations differ");
  check_models(models);
  if (options.folds < 2 || options.folds > durations.size())
    throw PreconditionError("multiclass_presets: bad fold count");

  std::vector<PresetScore> scores;
  std::vector<const ClassifierSpec*> specs;
  for (auto preset : {MulticlassPreset::EqualSplit, MulticlassPreset::Mutcd})
    for (const auto& m : models) {
      scores.push_back({preset, m.kind});
      specs.push_back(&m);
    }

  static constexpr double kClasses[] = {0.0, 1.0, 2.0};
  parallel_for(scores.size(), options.workers, [&](std::size_t i) {
    auto& s = scores[i];
    std::vector<double> labels;
    if (s.preset == MulticlassPreset::Mutcd) {
      s.t1 = 30.0;
      s.t2 = 120.0;
      for (auto c : mutcd_labels(durations)) labels.push_back(static_cast<double>(c));
    } else {
      s.t1 = quantile(durations, 1.0 / 3.0);
      s.t2 = quantile(durations, 2.0 / 3.0);
      if (!(s.t1 > 0.0) || !(s.t2 > s.t1)) {
        s.evaluable = false;
        return;
      }
      labels = multiclass_labels(durations, {s.t1, s.t2});
    }
    for (int c = 0; c < 3; ++c) s.class_counts[c] = count_label(labels, kClasses[c]);
    if (std::any_of(std::begin(s.class_counts), std::end(s.class_counts),
                    [&](std::size_t n) { return n < options.min_per_class; })) {
      s.evaluable = false;
      return;
    }
    s.f1_macro = f1_macro(labels, out_of_fold(x, labels, *specs[i], options.folds), kClasses);
  });
  return scores;
}

std::string to_csv(const std::vector<PresetScore>& scores) {
  std::ostringstream out;
  out << "preset,model,t1,t2,f1_macro,n_class0,n_class1,n_class2,evaluable\n";
  for (const auto& s : scores)
    out << to_string(s.preset) << ',' << to_string(s.kind) << ',' << format_number(s.t1) << ','
        << format_number(s.t2) << ',' << format_number(s.f1_macro) << ',' << s.class_counts[0] << ','
        << s.class_counts[1] << ',' << s.class_counts[2] << ',' << csv_bool(s.evaluable) << '\n';
  return out.str();
}

nlohmann::json to_json(const QuantileGrid& grid) {
  auto cells = nlohmann::json::array();
  for (const auto& c : grid.cells) {
    cells.push_back({{"q1", c.q1},
                     {"q2", c.q2},
                     {"t1", c.t1},
                     {"t2", c.t2},
                     {"f1_macro", c.f1_macro},
                     {"class_counts", {c.class_counts[0], c.class_counts[1], c.class_counts[2]}},
                     {"evaluable", c.evaluable}});
  }
  nlohmann::json j{{"model", to_string(grid.kind)}, {"cells", cells}};
  if (auto b = grid.best()) j["best"] = {{"q1", b->q1}, {"q2", b->q2}, {"f1_macro", b->f1_macro}};
  return j;
}

LdoReport ldo_hdo_sweep(const EncodedMatrix& x, std::span<const double> durations,
                        std::span<const ClassifierSpec> models, std::span<const double> thresholds,
                        const LdoSweepOptions& options) {
  if (x.rows() != durations.size()) throw PreconditionError("ldo_hdo_sweep: X rows and durations differ");
  check_models(models);
  if (thresholds.empty()) throw PreconditionError("ldo_hdo_sweep: no thresholds");
  if (!std::is_sorted(thresholds.begin(), thresholds.end()))
    throw PreconditionError("ldo_hdo_sweep: thresholds must be ascending");

  LdoReport report;
  report.side = options.side;
  if (options.tc) {
    report.tc = *options.tc;
  } else {
    SweepOptions so;
    so.folds = options.folds;
    so.workers = options.workers;
    so.min_per_class = options.min_per_class;
    const auto best = threshold_sweep(x, durations, models, so).best();
    if (!best) throw PreconditionError("ldo_hdo_sweep: no evaluable threshold on the full data");
    report.tc = best->tc;
  }
  BinaryThreshold{report.tc}.validate();

  const double n = static_cast<double>(durations.size());
  report.rows.resize(thresholds.size());
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    const double t = thresholds[i];
    std::vector<std::size_t> keep;
    for (std::size_t r = 0; r < durations.size(); ++r) {
      const bool drop = options.side == TrimSide::Low ? durations[r] < t : durations[r] > t;
      if (!drop) keep.push_back(r);
    }
    LdoRow row;
    row.threshold = t;
    row.remaining = keep.size();
    row.remaining_fraction = static_cast<double>(keep.size()) / n;
    row.over_half_removed = row.remaining_fraction < 0.5;

    std::vector<double> kept_durations;
    for (auto r : keep) kept_durations.push_back(durations[r]);
    const auto labels = kept_durations.empty() ? std::vector<double>{} : binary_labels(kept_durations, report.tc);
    const std::size_t negatives = count_label(labels, 0.0);
    if (keep.size() < options.folds || negatives < options.min_per_class ||
        labels.size() - negatives < options.min_per_class) {
      row.evaluable = false;
      report.rows[i] = row;
      continue;
    }
    const auto xs = x.select_rows(keep);
    std::vector<double> f1(models.size(), 0.0);
    parallel_for(models.size(), options.workers, [&](std::size_t m) {
      const auto pred = out_of_fold(xs, labels, models[m], options.folds);
      f1[m] = classification_metrics(labels, pred, 1.0).f1;
    });
    const auto best = static_cast<std::size_t>(std::max_element(f1.begin(), f1.end()) - f1.begin());
    row.best_f1 = f1[best];
    row.best_kind = models[best].kind;
    report.rows[i] = row;
  }
  return report;
}

LdoReport ldo_hdo_sweep(const Dataset& dataset, std::span<const ClassifierSpec> models,
                        std::span<const double> thresholds, const LdoSweepOptions& options) {
  return ldo_hdo_sweep(encode(dataset), dataset.durations(), models, thresholds, options);
}

std::string to_csv(const LdoReport& report) {
  std::ostringstream out;
  out << "threshold,side,tc,remaining,remaining_fraction,best_f1,best_model,evaluable,over_half_removed\n";
  for (const auto& r : report.rows) {
    out << format_number(r.threshold) << ',' << (report.side == TrimSide::Low ? "low" : "high") << ','
        << format_number(report.tc) << ',' << r.remaining << ',' << format_number(r.remaining_fraction) << ','
        << format_number(r.best_f1) << ',' << (r.best_kind ? to_string(*r.best_kind) : "") << ','
        << csv_bool(r.evaluable) << ',' << csv_bool(r.over_half_removed) << '\n';
  }
  return out.str();
}

nlohmann::json to_json(const LdoReport& report) {
  auto rows = nlohmann::json::array();
  for (const auto& r : report.rows) {
    rows.push_back({{"threshold", r.threshold},
                    {"remaining", r.remaining},
                    {"remaining_fraction", r.remaining_fraction},
                    {"best_f1", r.best_f1},
                    {"best_model", r.best_kind ? nlohmann::json(to_string(*r.best_kind)) : nlohmann::json()},
                    {"evaluable", r.evaluable},
                    {"over_half_removed", r.over_half_removed}});
  }
  return {{"tc", report.tc}, {"side", report.side == TrimSide::Low ? "low" : "high"}, {"rows", rows}};
}

}  // namespace ieo
