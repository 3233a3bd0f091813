#include "ieoml/importance.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "ieoml/common.hpp"
#include "ieoml/scenarios.hpp"

namespace ieo {

std::string to_string(ImportanceMethod method) {
  return method == ImportanceMethod::Permutation ? "permutation" : "shapley-sampling";
}

ImportanceMethod importance_method_from_string(const std::string& text) {
  if (text == "permutation") return ImportanceMethod::Permutation;
  if (text == "shapley-sampling" || text == "shapley") return ImportanceMethod::ShapleySampling;
  throw PreconditionError("unknown importance method '" + text + "'");
}

double ImportanceReport::score_of(const std::string& name) const {
  for (const auto& f : features)
    if (f.name == name) return f.score;
  throw PreconditionError("importance report has no feature '" + name + "'");
}

std::size_t ImportanceReport::rank_of(const std::string& name) const {
  for (const auto& f : features)
    if (f.name == name) return f.rank;
  throw PreconditionError("importance report has no feature '" + name + "'");
}

namespace {

double column_variance(const Matrix& x, std::size_t c) {
  if (x.rows() == 0) return 0.0;
  double m = 0.0;
  for (std::size_t r = 0; r < x.rows(); ++r) m += x(r, c);
  m /= static_cast<double>(x.rows());
  double v = 0.0;
  for (std::size_t r = 0; r < x.rows(); ++r) v += (x(r, c) - m) * (x(r, c) - m);
  return v / static_cast<double>(x.rows());
}

bool column_constant(const Matrix& x, std::size_t c) {
  for (std::size_t r = 1; r < x.rows(); ++r)
    if (x(r, c) != x(0, c)) return false;
  return true;
}

void shuffle_in_place(std::vector<double>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[uniform_index(rng, i)]);
}

std::vector<double> gather(std::span<const double> v, std::span<const std::size_t> idx) {
  std::vector<double> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(v[i]);
  return out;
}

// Marginal contributions along one permutation against one background row.
void accumulate_path(const PredictFn& f, std::span<const double> record, std::span<const double> base,
                     std::span<const std::size_t> order, std::span<double> phi) {
  const std::size_t m = record.size();
  Matrix path(m + 1, m);
  for (std::size_t c = 0; c < m; ++c) path(0, c) = base[c];
  for (std::size_t step = 0; step < m; ++step) {
    for (std::size_t c = 0; c < m; ++c) path(step + 1, c) = path(step, c);
    path(step + 1, order[step]) = record[order[step]];
  }
  const auto values = f(path);
  if (values.size() != m + 1) throw PreconditionError("shapley: prediction function returned the wrong row count");
  for (std::size_t step = 0; step < m; ++step) phi[order[step]] += values[step + 1] - values[step];
}

}  // namespace

void assign_ranks(ImportanceReport& report, const Matrix& x) {
  const std::size_t m = report.features.size();
  if (x.cols() != m) throw PreconditionError("assign_ranks: report and matrix widths differ");
  std::vector<char> constant(m);
  std::vector<double> variance(m);
  for (std::size_t j = 0; j < m; ++j) {
    constant[j] = column_constant(x, j);
    variance[j] = column_variance(x, j);
  }
  auto order = iota_indices(m);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (constant[a] != constant[b]) return constant[a] < constant[b];
    const double sa = report.features[a].score, sb = report.features[b].score;
    if (sa != sb) return sa > sb;
    if (variance[a] != variance[b]) return variance[a] > variance[b];
    return a < b;
  });
  for (std::size_t r = 0; r < m; ++r) report.features[order[r]].rank = r + 1;
}

ImportanceReport permutation_importance(const TrainedModel& model, const EncodedMatrix& x, std::span<const double> y,
                                        Metric metric, std::size_t n_repeats, std::uint64_t seed, int workers) {
  if (x.rows() != y.size()) throw PreconditionError("permutation_importance: X rows and y length differ");
  if (n_repeats < 1) throw PreconditionError("permutation_importance: n_repeats must be >= 1");
  if (x.feature_names != model.feature_names())
    throw PreconditionError("permutation_importance: model was fitted on a different feature set");
  ImportanceReport report;
  report.method = ImportanceMethod::Permutation;
  report.records = x.rows();
  report.baseline = evaluate(metric, y, model.predict(x));
  const double sign = higher_is_better(metric) ? -1.0 : 1.0;
  const std::size_t m = x.cols();
  std::vector<double> scores(m, 0.0);
  parallel_for(m, workers, [&](std::size_t j) {
    double total = 0.0;
    Matrix shuffled = x.values;
    for (std::size_t r = 0; r < n_repeats; ++r) {
      auto column = x.values.column(j);
      Rng rng = make_rng(seed, {static_cast<std::uint64_t>(j), static_cast<std::uint64_t>(r)});
      shuffle_in_place(column, rng);
      for (std::size_t i = 0; i < column.size(); ++i) shuffled(i, j) = column[i];
      total += sign * (evaluate(metric, y, model.predict_values(shuffled)) - report.baseline);
    }
    scores[j] = total / static_cast<double>(n_repeats);
  });
  for (std::size_t j = 0; j < m; ++j) report.features.push_back({x.feature_names[j], scores[j], 0});
  assign_ranks(report, x.values);
  return report;
}

ShapleyResult shapley_sampling(const PredictFn& f, const std::vector<std::string>& names, const Matrix& background,
                               std::span<const double> record, const ShapleyOptions& options) {
  const std::size_t m = record.size();
  if (m == 0) throw PreconditionError("shapley: empty record");
  if (names.size() != m || background.cols() != m) throw PreconditionError("shapley: record, names and background widths differ");
  if (background.rows() == 0) throw PreconditionError("shapley: background must be non-empty");
  if (!options.exhaustive && options.n_samples < 1) throw PreconditionError("shapley: n_samples must be >= 1");
  if (options.exhaustive && m > kMaxExhaustiveFeatures)
    throw PreconditionError("shapley: exhaustive enumeration is limited to " + std::to_string(kMaxExhaustiveFeatures) +
                            " features");

  ShapleyResult result;
  result.names = names;
  result.contributions.assign(m, 0.0);
  {
    Matrix single(1, m);
    for (std::size_t c = 0; c < m; ++c) single(0, c) = record[c];
    result.prediction = f(single).at(0);
    const auto bg = f(background);
    result.background_mean = mean(bg);
  }

  const std::size_t slots = options.exhaustive ? background.rows() : options.n_samples;
  std::vector<std::vector<double>> partial(slots);
  std::size_t paths_per_slot = 1;
  if (options.exhaustive)
    for (std::size_t k = 2; k <= m; ++k) paths_per_slot *= k;

  parallel_for(slots, options.workers, [&](std::size_t s) {
    std::vector<double> phi(m, 0.0);
    auto order = iota_indices(m);
    if (options.exhaustive) {
      do {
        accumulate_path(f, record, background.row(s), order, phi);
      } while (std::next_permutation(order.begin(), order.end()));
    } else {
      Rng rng = make_rng(options.seed, {static_cast<std::uint64_t>(s)});
      for (std::size_t i = m; i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
      accumulate_path(f, record, background.row(s % background.rows()), order, phi);
    }
    partial[s] = std::move(phi);
  });

  for (const auto& phi : partial)
    for (std::size_t j = 0; j < m; ++j) result.contributions[j] += phi[j];
  const double paths = static_cast<double>(slots * paths_per_slot);
  for (auto& c : result.contributions) c /= paths;
  result.evaluations = slots * paths_per_slot * (m + 1);
  return result;
}

ShapleyResult shapley_sampling(const TrainedModel& model, const EncodedMatrix& background,
                               std::span<const double> record, const ShapleyOptions& options) {
  if (background.feature_names != model.feature_names())
    throw PreconditionError("shapley: model was fitted on a different feature set");
  const PredictFn f = [&model](const Matrix& m) { return model.predict_values(m); };
  return shapley_sampling(f, background.feature_names, background.values, record, options);
}

std::vector<std::size_t> background_rows(std::size_t n, std::size_t size, std::uint64_t seed) {
  auto rows = iota_indices(n);
  if (size >= n) return rows;
  Rng rng = make_rng(seed, {0xB6});
  for (std::size_t i = 0; i < size; ++i) std::swap(rows[i], rows[i + uniform_index(rng, n - i)]);
  rows.resize(size);
  std::sort(rows.begin(), rows.end());
  return rows;
}

ImportanceReport shapley_importance(const TrainedModel& model, const EncodedMatrix& x, std::size_t n_records,
                                    std::size_t background_size, const ShapleyOptions& options) {
  if (x.rows() == 0) throw PreconditionError("shapley_importance: no records");
  const auto background = x.select_rows(background_rows(x.rows(), background_size, options.seed));
  const auto explained = background_rows(x.rows(), n_records, stream_seed(options.seed, {0xE7}));
  const std::size_t m = x.cols();
  std::vector<double> total(m, 0.0);
  for (std::size_t i = 0; i < explained.size(); ++i) {
    ShapleyOptions o = options;
    o.seed = stream_seed(options.seed, {static_cast<std::uint64_t>(i), 0x5A});
    const auto r = shapley_sampling(model, background, x.values.row(explained[i]), o);
    for (std::size_t j = 0; j < m; ++j) total[j] += std::abs(r.contributions[j]);
  }
  ImportanceReport report;
  report.method = ImportanceMethod::ShapleySampling;
  report.records = explained.size();
  for (std::size_t j = 0; j < m; ++j)
    report.features.push_back({x.feature_names[j], total[j] / static_cast<double>(explained.size()), 0});
  assign_ranks(report, x.values);
  return report;
}

SubsetImportance subset_importance(const EncodedMatrix& x, std::span<const double> durations, double tc,
                                   const ModelSpec& model, const SubsetImportanceOptions& options) {
  if (x.rows() != durations.size()) throw PreconditionError("subset_importance: X rows and durations differ");
  const auto split = split_ab(durations, tc);
  const auto all = iota_indices(durations.size());

  auto report_for = [&](const std::vector<std::size_t>& rows, const char* tag, std::uint64_t key) {
    ImportanceReport report;
    report.method = options.method;
    report.subset = tag;
    report.records = rows.size();
    if (rows.size() < options.min_records) {
      report.flagged = true;
      report.note = "subset " + std::string(tag) + " has " + std::to_string(rows.size()) + " records (< " +
                    std::to_string(options.min_records) + ")";
      return report;
    }
    const auto xs = x.select_rows(rows);
    const auto ys = gather(durations, rows);
    ModelParams params = model.params;
    params.seed = stream_seed(model.params.seed, {key});
    const auto fitted = fit_model(model.kind, xs, ys, params, FitOptions{Task::Regression, options.transform});
    if (options.method == ImportanceMethod::Permutation) {
      report = permutation_importance(fitted, xs, ys, options.metric, options.n_repeats,
                                      stream_seed(options.seed, {key}), options.workers);
    } else {
      ShapleyOptions so;
      so.n_samples = options.shapley_samples;
      so.seed = stream_seed(options.seed, {key});
      so.workers = options.workers;
      report = shapley_importance(fitted, xs, options.shapley_records, options.background_size, so);
    }
    report.subset = tag;
    return report;
  };

  SubsetImportance out;
  out.all = report_for(all, "all", 0);
  out.a = report_for(split.a, "A", 1);
  out.b = report_for(split.b, "B", 2);
  return out;
}

std::string to_csv(std::span<const ImportanceReport> reports) {
  std::ostringstream out;
  out << "feature,score,rank,subset,method\n";
  for (const auto& r : reports)
    for (const auto& f : r.features)
      out << f.name << ',' << format_number(f.score) << ',' << f.rank << ',' << r.subset << ',' << to_string(r.method)
          << '\n';
  return out.str();
}

nlohmann::json to_json(const ImportanceReport& report) {
  auto features = nlohmann::json::array();
  for (const auto& f : report.features) features.push_back({{"name", f.name}, {"score", f.score}, {"rank", f.rank}});
  return {{"method", to_string(report.method)}, {"subset", report.subset},   {"records", report.records},
          {"baseline", report.baseline},       {"flagged", report.flagged}, {"note", report.note},
          {"features", features}};
}

double rank_correlation(const ImportanceReport& a, const ImportanceReport& b) {
  std::vector<double> ra, rb;
  for (const auto& f : a.features) {
    for (const auto& g : b.features)
      if (g.name == f.name) {
        ra.push_back(static_cast<double>(f.rank));
        rb.push_back(static_cast<double>(g.rank));
      }
  }
  if (ra.size() < 2) throw PreconditionError("rank_correlation: fewer than two shared features");
  const double ma = mean(ra), mb = mean(rb);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  return saa > 0.0 && sbb > 0.0 ? sab / std::sqrt(saa * sbb) : 0.0;
}

}  // namespace ieo
