#include "ieoml/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <type_traits>

#include <Eigen/Dense>

#include "ieoml/metrics.hpp"

namespace ieo {

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::Gbt: return "gbt";
    case ModelKind::GbtReg: return "gbt-reg";
    case ModelKind::RandomForest: return "random-forest";
    case ModelKind::Knn: return "knn";
    case ModelKind::Linear: return "linear";
    case ModelKind::Tree: return "tree";
  }
  return "tree";
}

ModelKind model_kind_from_string(const std::string& text) {
  for (auto k : {ModelKind::Gbt, ModelKind::GbtReg, ModelKind::RandomForest, ModelKind::Knn, ModelKind::Linear,
                 ModelKind::Tree})
    if (to_string(k) == text) return k;
  throw PreconditionError("unknown model kind '" + text + "'");
}

std::string to_string(Task task) { return task == Task::Regression ? "regression" : "classification"; }

std::string to_string(TargetTransform transform) { return transform == TargetTransform::None ? "none" : "log1p"; }

TargetTransform target_transform_from_string(const std::string& text) {
  if (text == "none") return TargetTransform::None;
  if (text == "log1p") return TargetTransform::Log1p;
  throw PreconditionError("unknown target transform '" + text + "'");
}

void ModelParams::validate(ModelKind kind) const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw PreconditionError(std::string("model params: ") + what);
  };
  auto is_rate = [](double v) { return v > 0.0 && v <= 1.0; };
  switch (kind) {
    case ModelKind::Gbt:
    case ModelKind::GbtReg:
      require(n_rounds >= 1, "n_rounds must be >= 1");
      require(is_rate(learning_rate), "learning_rate must lie in (0, 1]");
      require(is_rate(subsample), "subsample must lie in (0, 1]");
      require(is_rate(colsample), "colsample must lie in (0, 1]");
      require(lambda >= 0.0 && gamma >= 0.0 && min_child_weight >= 0.0, "lambda, gamma, min_child_weight must be >= 0");
      if (goss) {
        require(goss->top_fraction > 0.0 && goss->other_fraction > 0.0 &&
                    goss->top_fraction + goss->other_fraction <= 1.0,
                "goss fractions must be positive and sum to at most 1");
      }
      [[fallthrough]];
    case ModelKind::Tree:
      require(max_depth >= 0, "max_depth must be >= 0");
      require(min_samples_leaf >= 1, "min_samples_leaf must be >= 1");
      break;
    case ModelKind::RandomForest:
      require(n_trees >= 1, "n_trees must be >= 1");
      require(max_depth >= 0, "max_depth must be >= 0");
      require(min_samples_leaf >= 1, "min_samples_leaf must be >= 1");
      require(is_rate(bootstrap_fraction), "bootstrap_fraction must lie in (0, 1]");
      require(is_rate(feature_fraction), "feature_fraction must lie in (0, 1]");
      break;
    case ModelKind::Knn:
      require(k >= 1, "k must be >= 1");
      break;
    case ModelKind::Linear:
      require(ridge >= 0.0, "ridge must be >= 0");
      break;
  }
}

void to_json(nlohmann::json& j, const ModelParams& p) {
  j = nlohmann::json{{"max_depth", p.max_depth},
                     {"min_samples_leaf", p.min_samples_leaf},
                     {"n_rounds", p.n_rounds},
                     {"learning_rate", p.learning_rate},
                     {"subsample", p.subsample},
                     {"colsample", p.colsample},
                     {"lambda", p.lambda},
                     {"gamma", p.gamma},
                     {"min_child_weight", p.min_child_weight},
                     {"n_trees", p.n_trees},
                     {"bootstrap_fraction", p.bootstrap_fraction},
                     {"bootstrap", p.bootstrap},
                     {"feature_fraction", p.feature_fraction},
                     {"k", p.k},
                     {"ridge", p.ridge},
                     {"seed", p.seed}};
  if (p.goss) j["goss"] = {{"top_fraction", p.goss->top_fraction}, {"other_fraction", p.goss->other_fraction}};
}

void from_json(const nlohmann::json& j, ModelParams& p) {
  p = ModelParams{};
  p.max_depth = j.value("max_depth", p.max_depth);
  p.min_samples_leaf = j.value("min_samples_leaf", p.min_samples_leaf);
  p.n_rounds = j.value("n_rounds", p.n_rounds);
  p.learning_rate = j.value("learning_rate", p.learning_rate);
  p.subsample = j.value("subsample", p.subsample);
  p.colsample = j.value("colsample", p.colsample);
  p.lambda = j.value("lambda", p.lambda);
  p.gamma = j.value("gamma", p.gamma);
  p.min_child_weight = j.value("min_child_weight", p.min_child_weight);
  p.n_trees = j.value("n_trees", p.n_trees);
  p.bootstrap_fraction = j.value("bootstrap_fraction", p.bootstrap_fraction);
  p.bootstrap = j.value("bootstrap", p.bootstrap);
  p.feature_fraction = j.value("feature_fraction", p.feature_fraction);
  p.k = j.value("k", p.k);
  p.ridge = j.value("ridge", p.ridge);
  p.seed = j.value("seed", p.seed);
  if (j.contains("goss") && !j.at("goss").is_null())
    p.goss = GossParams{j.at("goss").value("top_fraction", 0.2), j.at("goss").value("other_fraction", 0.1)};
}

namespace {

void check_fit_input(const EncodedMatrix& x, std::span<const double> y, std::size_t min_rows = 2) {
  if (x.rows() != y.size()) throw PreconditionError("fit: X rows and y length differ");
  if (y.size() < min_rows) throw PreconditionError("fit: at least " + std::to_string(min_rows) + " rows required");
  for (double v : y)
    if (!std::isfinite(v)) throw PreconditionError("fit: non-finite target");
}

int count_classes(std::span<const double> y) {
  int max_label = 0;
  for (double v : y) {
    if (v < 0.0 || v != std::floor(v)) throw PreconditionError("fit: class labels must be non-negative integers");
    max_label = std::max(max_label, static_cast<int>(v));
  }
  return std::max(2, max_label + 1);
}

std::vector<double> forward_transform(std::span<const double> y, const FitOptions& options) {
  std::vector<double> out(y.begin(), y.end());
  if (options.task == Task::Regression && options.transform == TargetTransform::Log1p) {
    for (auto& v : out) {
      if (v <= -1.0) throw PreconditionError("fit: log1p transform needs targets > -1");
      v = std::log1p(v);
    }
  }
  return out;
}

std::size_t argmax_lowest(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < values.size(); ++k)
    if (values[k] > values[best]) best = k;
  return best;
}

/// Gradient stats for squared error against targets (g = -y, h = 1).
std::vector<double> mean_stats(std::span<const double> targets, std::span<const std::uint32_t> mult) {
  std::vector<double> stats(targets.size() * 2);
  for (std::size_t i = 0; i < targets.size(); ++i) {
    stats[2 * i] = -targets[i] * mult[i];
    stats[2 * i + 1] = static_cast<double>(mult[i]);
  }
  return stats;
}

std::vector<double> class_stats(std::span<const double> labels, int classes, std::span<const std::uint32_t> mult) {
  std::vector<double> stats(labels.size() * static_cast<std::size_t>(classes), 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i)
    stats[i * static_cast<std::size_t>(classes) + static_cast<std::size_t>(labels[i])] = static_cast<double>(mult[i]);
  return stats;
}

Tree grow_cart(const Matrix& x, const SortedColumns& sorted, std::span<const double> targets, Task task, int classes,
               std::span<const std::uint32_t> mult, const ModelParams& params, double feature_fraction, Rng* rng) {
  GrowthParams gp;
  gp.max_depth = params.max_depth;
  gp.min_samples_leaf = static_cast<std::size_t>(params.min_samples_leaf);
  gp.feature_fraction = feature_fraction;
  std::vector<double> stats;
  std::size_t dim = 2;
  if (task == Task::Regression) {
    gp.criterion = SplitCriterion::Gradient;
    stats = mean_stats(targets, mult);
  } else {
    gp.criterion = SplitCriterion::Gini;
    dim = static_cast<std::size_t>(classes);
    stats = class_stats(targets, classes, mult);
  }
  return grow_tree({x, sorted, stats, dim, mult, {}}, gp, rng);
}

// --------------------------------------------------------------------------
// Boosting

double sigmoid(double z) { return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

struct BoostSetup {
  Task task;
  int classes;  // 0 for regression
};

std::size_t boost_outputs(const BoostSetup& s) {
  return s.task == Task::Regression || s.classes == 2 ? 1 : static_cast<std::size_t>(s.classes);
}

template <typename RoundCallback>
BoostedModel boost(const Matrix& x, std::span<const double> targets, const ModelParams& params, BoostingVariant variant,
                   const BoostSetup& setup, RoundCallback&& on_round) {
  const std::size_t n = x.rows();
  const std::size_t outputs = boost_outputs(setup);
  const bool second = variant == BoostingVariant::SecondOrderRegularised;
  BoostedModel model;
  model.learning_rate = params.learning_rate;
  model.base.assign(outputs, 0.0);
  if (setup.task == Task::Regression) {
    model.base[0] = mean(targets);
  } else {
    std::vector<double> prior(static_cast<std::size_t>(setup.classes), 0.0);
    for (double v : targets) prior[static_cast<std::size_t>(v)] += 1.0;
    for (auto& p : prior) p = std::clamp(p / static_cast<double>(n), 1e-6, 1.0 - 1e-6);
    if (outputs == 1) {
      model.base[0] = std::log(prior[1] / (1.0 - prior[1]));
    } else {
      for (std::size_t k = 0; k < outputs; ++k) model.base[k] = std::log(prior[k]);
    }
  }

  std::vector<double> raw(n * outputs);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < outputs; ++k) raw[i * outputs + k] = model.base[k];

  const SortedColumns sorted(x);
  GrowthParams gp;
  gp.criterion = SplitCriterion::Gradient;
  gp.max_depth = params.max_depth;
  gp.min_samples_leaf = static_cast<std::size_t>(params.min_samples_leaf);
  if (second) {
    gp.lambda = params.lambda;
    gp.gamma = params.gamma;
    gp.min_child_weight = params.min_child_weight;
    gp.second_order_gain = true;
  }

  std::vector<double> grad(n * outputs), hess(n * outputs), prob(outputs);
  std::vector<std::uint32_t> mult(n);
  std::vector<double> weight(n);
  std::vector<double> stats(2 * n);

  for (int round = 0; round < params.n_rounds; ++round) {
    // gradients of the loss w.r.t. the raw score
    for (std::size_t i = 0; i < n; ++i) {
      if (setup.task == Task::Regression) {
        grad[i] = raw[i] - targets[i];
        hess[i] = 1.0;
      } else if (outputs == 1) {
        const double p = sigmoid(raw[i]);
        grad[i] = p - targets[i];
        hess[i] = second ? std::max(p * (1.0 - p), 1e-16) : 1.0;
      } else {
        const double* r = raw.data() + i * outputs;
        const double mx = *std::max_element(r, r + outputs);
        double z = 0.0;
        for (std::size_t k = 0; k < outputs; ++k) z += (prob[k] = std::exp(r[k] - mx));
        for (std::size_t k = 0; k < outputs; ++k) {
          const double p = prob[k] / z;
          const double yk = static_cast<std::size_t>(targets[i]) == k ? 1.0 : 0.0;
          grad[i * outputs + k] = p - yk;
          hess[i * outputs + k] = second ? std::max(p * (1.0 - p), 1e-16) : 1.0;
        }
      }
    }

    Rng rng = make_rng(params.seed, {static_cast<std::uint64_t>(round), 0x9b});
    std::fill(weight.begin(), weight.end(), 1.0);
    if (params.goss) {
      std::vector<double> magnitude(n, 0.0);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < outputs; ++k) magnitude[i] += std::abs(grad[i * outputs + k]);
      auto order = iota_indices(n);
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return magnitude[a] > magnitude[b]; });
      const auto top = static_cast<std::size_t>(std::ceil(params.goss->top_fraction * static_cast<double>(n)));
      const auto other = std::min(n - std::min(top, n),
                                  static_cast<std::size_t>(std::floor(params.goss->other_fraction * static_cast<double>(n))));
      std::fill(mult.begin(), mult.end(), 0U);
      for (std::size_t i = 0; i < std::min(top, n); ++i) mult[order[i]] = 1;
      std::vector<std::size_t> rest(order.begin() + static_cast<std::ptrdiff_t>(std::min(top, n)), order.end());
      const double amplify = (1.0 - params.goss->top_fraction) / params.goss->other_fraction;
      for (std::size_t i = 0; i < other; ++i) {
        const std::size_t j = i + uniform_index(rng, rest.size() - i);
        std::swap(rest[i], rest[j]);
        mult[rest[i]] = 1;
        weight[rest[i]] = amplify;
      }
    } else if (params.subsample < 1.0) {
      const auto take = std::max<std::size_t>(
          1, static_cast<std::size_t>(std::floor(params.subsample * static_cast<double>(n))));
      auto order = iota_indices(n);
      std::fill(mult.begin(), mult.end(), 0U);
      for (std::size_t i = 0; i < take; ++i) {
        const std::size_t j = i + uniform_index(rng, n - i);
        std::swap(order[i], order[j]);
        mult[order[i]] = 1;
      }
    } else {
      std::fill(mult.begin(), mult.end(), 1U);
    }

    std::vector<std::size_t> features;
    if (params.colsample < 1.0 && x.cols() > 0) {
      const auto take = std::max<std::size_t>(
          1, static_cast<std::size_t>(std::ceil(params.colsample * static_cast<double>(x.cols()))));
      features = iota_indices(x.cols());
      for (std::size_t i = 0; i < take; ++i) {
        const std::size_t j = i + uniform_index(rng, features.size() - i);
        std::swap(features[i], features[j]);
      }
      features.resize(take);
      std::sort(features.begin(), features.end());
    }

    std::vector<Tree> trees;
    trees.reserve(outputs);
    for (std::size_t k = 0; k < outputs; ++k) {
      for (std::size_t i = 0; i < n; ++i) {
        stats[2 * i] = weight[i] * grad[i * outputs + k];
        stats[2 * i + 1] = weight[i] * hess[i * outputs + k];
      }
      trees.push_back(grow_tree({x, sorted, stats, 2, mult, features}, gp));
    }
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < outputs; ++k)
        raw[i * outputs + k] += params.learning_rate * trees[k].leaf_value(x.row(i))[0];
    model.rounds.push_back(std::move(trees));
    on_round(std::span<const double>(raw));
  }
  return model;
}

std::vector<double> boosted_raw(const BoostedModel& m, const Matrix& x) {
  const std::size_t outputs = m.base.size();
  std::vector<double> raw(x.rows() * outputs);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto row = x.row(i);
    for (std::size_t k = 0; k < outputs; ++k) {
      double acc = 0.0;
      for (const auto& round : m.rounds) acc += round[k].leaf_value(row)[0];
      raw[i * outputs + k] = m.base[k] + m.learning_rate * acc;
    }
  }
  return raw;
}

// --------------------------------------------------------------------------
// kNN

std::vector<std::size_t> nearest(const KnnModel& m, std::span<const double> query) {
  const std::size_t n = m.train.rows();
  std::vector<double> z(query.size());
  for (std::size_t c = 0; c < z.size(); ++c) z[c] = (query[c] - m.center[c]) / m.scale[c];
  std::vector<std::pair<double, std::size_t>> dist(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = m.train.row(i);
    double d = 0.0;
    for (std::size_t c = 0; c < z.size(); ++c) {
      const double e = row[c] - z[c];
      d += e * e;
    }
    dist[i] = {d, i};
  }
  const auto k = static_cast<std::size_t>(m.k);
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
  std::vector<std::size_t> out(k);
  for (std::size_t i = 0; i < k; ++i) out[i] = dist[i].second;
  return out;
}

// --------------------------------------------------------------------------
// Linear

std::vector<double> fit_least_squares(const Matrix& x, std::span<const double> y, double ridge) {
  const std::size_t n = x.rows(), m = x.cols();
  Eigen::MatrixXd xc(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
  Eigen::VectorXd yc(static_cast<Eigen::Index>(n));
  std::vector<double> col_mean(m, 0.0);
  for (std::size_t c = 0; c < m; ++c) col_mean[c] = mean(x.column(c));
  const double y_mean = mean(y);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < m; ++c)
      xc(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = x(i, c) - col_mean[c];
    yc(static_cast<Eigen::Index>(i)) = y[i] - y_mean;
  }
  std::vector<double> w(m + 1, 0.0);
  if (m > 0) {
    Eigen::MatrixXd gram = xc.transpose() * xc;
    gram.diagonal().array() += ridge;
    const Eigen::VectorXd rhs = xc.transpose() * yc;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
    const auto d = ldlt.vectorD();
    const double scale = std::max(1.0, d.cwiseAbs().maxCoeff());
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || d.minCoeff() <= 1e-12 * scale)
      throw PreconditionError("fit_linear: singular normal equations; use ridge > 0");
    const Eigen::VectorXd beta = ldlt.solve(rhs);
    for (std::size_t c = 0; c < m; ++c) w[c + 1] = beta(static_cast<Eigen::Index>(c));
  }
  double intercept = y_mean;
  for (std::size_t c = 0; c < m; ++c) intercept -= w[c + 1] * col_mean[c];
  w[0] = intercept;
  return w;
}

std::vector<double> fit_logistic(const Matrix& x, std::span<const double> y, double ridge) {
  // Gradient descent on standardised features, mapped back afterwards.
  const std::size_t n = x.rows(), m = x.cols();
  std::vector<double> center(m), scale(m);
  for (std::size_t c = 0; c < m; ++c) {
    const auto col = x.column(c);
    center[c] = mean(col);
    double ss = 0.0;
    for (double v : col) ss += (v - center[c]) * (v - center[c]);
    const double sd = std::sqrt(ss / static_cast<double>(n));
    scale[c] = sd > 0.0 ? sd : 1.0;
  }
  Matrix z(n, m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < m; ++c) z(i, c) = (x(i, c) - center[c]) / scale[c];
  // Lipschitz bound of the mean logistic loss: (1 + sum of squared columns / n) / 4.
  double lipschitz = 1.0;
  for (std::size_t c = 0; c < m; ++c) {
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) ss += z(i, c) * z(i, c);
    lipschitz += ss / static_cast<double>(n);
  }
  lipschitz = 0.25 * lipschitz + ridge;
  const double step = 1.0 / lipschitz;
  std::vector<double> w(m + 1, 0.0), grad;
  for (int it = 0; it < 10000; ++it) {
    logistic_objective(z, y, w, ridge, &grad);
    double norm = 0.0;
    for (double g : grad) norm += g * g;
    if (std::sqrt(norm) < 1e-6) break;
    for (std::size_t j = 0; j <= m; ++j) w[j] -= step * grad[j];
  }
  std::vector<double> out(m + 1);
  out[0] = w[0];
  for (std::size_t c = 0; c < m; ++c) {
    out[c + 1] = w[c + 1] / scale[c];
    out[0] -= w[c + 1] * center[c] / scale[c];
  }
  return out;
}

double linear_score(const std::vector<double>& w, std::span<const double> row) {
  double acc = w[0];
  for (std::size_t c = 0; c < row.size(); ++c) acc += w[c + 1] * row[c];
  return acc;
}

}  // namespace

double logistic_objective(const Matrix& x, std::span<const double> y, std::span<const double> weights, double ridge,
                          std::vector<double>* gradient) {
  const std::size_t n = x.rows(), m = x.cols();
  if (weights.size() != m + 1) throw PreconditionError("logistic_objective: weight length must be cols + 1");
  double loss = 0.0;
  if (gradient) gradient->assign(m + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = x.row(i);
    double s = weights[0];
    for (std::size_t c = 0; c < m; ++c) s += weights[c + 1] * row[c];
    // log(1 + e^s) - y s, stable
    loss += (s > 0 ? s + std::log1p(std::exp(-s)) : std::log1p(std::exp(s))) - y[i] * s;
    if (gradient) {
      const double r = sigmoid(s) - y[i];
      (*gradient)[0] += r;
      for (std::size_t c = 0; c < m; ++c) (*gradient)[c + 1] += r * row[c];
    }
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  loss *= inv_n;
  double penalty = 0.0;
  for (std::size_t c = 1; c <= m; ++c) penalty += weights[c] * weights[c];
  loss += 0.5 * ridge * penalty;
  if (gradient) {
    for (auto& g : *gradient) g *= inv_n;
    for (std::size_t c = 1; c <= m; ++c) (*gradient)[c] += ridge * weights[c];
  }
  return loss;
}

// --------------------------------------------------------------------------
// TrainedModel

TrainedModel::TrainedModel(ModelKind kind, FitOptions options, std::vector<std::string> feature_names,
                           int num_classes, Body body)
    : kind_(kind), options_(options), feature_names_(std::move(feature_names)), num_classes_(num_classes),
      body_(std::move(body)) {}

std::vector<double> TrainedModel::predict(const EncodedMatrix& x) const {
  if (x.feature_names != feature_names_)
    throw PreconditionError("predict: feature names differ from the fitted schema");
  return predict_values(x.values);
}

std::vector<double> TrainedModel::raw_regression(const Matrix& x) const {
  std::vector<double> out(x.rows());
  std::visit(
      [&](const auto& m) {
        using M = std::decay_t<decltype(m)>;
        for (std::size_t i = 0; i < x.rows(); ++i) {
          const auto row = x.row(i);
          if constexpr (std::is_same_v<M, TreeModel>) {
            out[i] = m.tree.leaf_value(row)[0];
          } else if constexpr (std::is_same_v<M, BoostedModel>) {
            double acc = 0.0;
            for (const auto& round : m.rounds) acc += round[0].leaf_value(row)[0];
            out[i] = m.base[0] + m.learning_rate * acc;
          } else if constexpr (std::is_same_v<M, ForestModel>) {
            double acc = 0.0;
            for (const auto& t : m.trees) acc += t.leaf_value(row)[0];
            out[i] = acc / static_cast<double>(m.trees.size());
          } else if constexpr (std::is_same_v<M, KnnModel>) {
            double acc = 0.0;
            const auto idx = nearest(m, row);
            for (auto j : idx) acc += m.targets[j];
            out[i] = acc / static_cast<double>(idx.size());
          } else {
            out[i] = linear_score(m.weights[0], row);
          }
        }
      },
      body_);
  return out;
}

Matrix TrainedModel::predict_proba(const Matrix& x) const {
  if (options_.task != Task::Classification) throw PreconditionError("predict_proba: regression model");
  const auto classes = static_cast<std::size_t>(num_classes_);
  Matrix out(x.rows(), classes);
  std::visit(
      [&](const auto& m) {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, BoostedModel>) {
          const auto raw = boosted_raw(m, x);
          const std::size_t outputs = m.base.size();
          for (std::size_t i = 0; i < x.rows(); ++i) {
            if (outputs == 1) {
              const double p = sigmoid(raw[i]);
              out(i, 0) = 1.0 - p;
              out(i, 1) = p;
            } else {
              const double* r = raw.data() + i * outputs;
              const double mx = *std::max_element(r, r + outputs);
              double z = 0.0;
              for (std::size_t k = 0; k < outputs; ++k) z += std::exp(r[k] - mx);
              for (std::size_t k = 0; k < outputs; ++k) out(i, k) = std::exp(r[k] - mx) / z;
            }
          }
        } else {
          for (std::size_t i = 0; i < x.rows(); ++i) {
            const auto row = x.row(i);
            if constexpr (std::is_same_v<M, TreeModel>) {
              const auto& v = m.tree.leaf_value(row);
              for (std::size_t k = 0; k < classes; ++k) out(i, k) = v[k];
            } else if constexpr (std::is_same_v<M, ForestModel>) {
              for (const auto& t : m.trees) {
                const auto& v = t.leaf_value(row);
                out(i, argmax_lowest(v)) += 1.0 / static_cast<double>(m.trees.size());
              }
            } else if constexpr (std::is_same_v<M, KnnModel>) {
              const auto idx = nearest(m, row);
              for (auto j : idx) out(i, static_cast<std::size_t>(m.targets[j])) += 1.0 / static_cast<double>(idx.size());
            } else {
              if (m.weights.size() == 1) {
                const double p = sigmoid(linear_score(m.weights[0], row));
                out(i, 0) = 1.0 - p;
                out(i, 1) = p;
              } else {
                double total = 0.0;
                for (std::size_t k = 0; k < classes; ++k) total += out(i, k) = sigmoid(linear_score(m.weights[k], row));
                for (std::size_t k = 0; k < classes; ++k) out(i, k) /= total;
              }
            }
          }
        }
      },
      body_);
  return out;
}

std::vector<double> TrainedModel::predict_values(const Matrix& x) const {
  if (x.cols() != feature_names_.size()) throw PreconditionError("predict: column count differs from the fit");
  if (options_.task == Task::Regression) {
    auto out = raw_regression(x);
    if (options_.transform == TargetTransform::Log1p)
      for (auto& v : out) v = std::expm1(v);
    return out;
  }
  const Matrix proba = predict_proba(x);
  std::vector<double> labels(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    if (const auto* b = std::get_if<BoostedModel>(&body_); b && b->base.size() == 1) {
      // raw score > 0 <=> p > 0.5; exact ties go to class 0
      labels[i] = proba(i, 1) > proba(i, 0) ? 1.0 : 0.0;
      continue;
    }
    labels[i] = static_cast<double>(argmax_lowest(proba.row(i)));
  }
  return labels;
}

nlohmann::json TrainedModel::to_json() const {
  nlohmann::json j;
  j["format"] = "ieoml-model";
  j["version"] = kModelFormatVersion;
  j["kind"] = ieo::to_string(kind_);
  j["task"] = ieo::to_string(options_.task);
  j["target_transform"] = ieo::to_string(options_.transform);
  j["feature_names"] = feature_names_;
  j["num_classes"] = num_classes_;
  std::visit(
      [&](const auto& m) {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, TreeModel>) {
          j["tree"] = m.tree;
        } else if constexpr (std::is_same_v<M, BoostedModel>) {
          j["base"] = m.base;
          j["learning_rate"] = m.learning_rate;
          j["rounds"] = m.rounds;
        } else if constexpr (std::is_same_v<M, ForestModel>) {
          j["trees"] = m.trees;
        } else if constexpr (std::is_same_v<M, KnnModel>) {
          j["k"] = m.k;
          j["center"] = m.center;
          j["scale"] = m.scale;
          j["targets"] = m.targets;
          j["train"] = m.train.data();
        } else {
          j["weights"] = m.weights;
        }
      },
      body_);
  return j;
}

TrainedModel TrainedModel::from_json(const nlohmann::json& j) {
  if (j.value("format", std::string()) != "ieoml-model") throw PreconditionError("model json: wrong format tag");
  if (j.value("version", 0) != kModelFormatVersion) throw PreconditionError("model json: unsupported version");
  const auto kind = model_kind_from_string(j.at("kind").get<std::string>());
  FitOptions options;
  options.task = j.at("task").get<std::string>() == "classification" ? Task::Classification : Task::Regression;
  options.transform = target_transform_from_string(j.at("target_transform").get<std::string>());
  auto names = j.at("feature_names").get<std::vector<std::string>>();
  const int classes = j.at("num_classes").get<int>();
  Body body;
  switch (kind) {
    case ModelKind::Tree: body = TreeModel{j.at("tree").get<Tree>()}; break;
    case ModelKind::Gbt:
    case ModelKind::GbtReg: {
      BoostedModel b;
      b.base = j.at("base").get<std::vector<double>>();
      b.learning_rate = j.at("learning_rate").get<double>();
      b.rounds = j.at("rounds").get<std::vector<std::vector<Tree>>>();
      body = std::move(b);
      break;
    }
    case ModelKind::RandomForest: body = ForestModel{j.at("trees").get<std::vector<Tree>>()}; break;
    case ModelKind::Knn: {
      KnnModel m;
      m.k = j.at("k").get<int>();
      m.center = j.at("center").get<std::vector<double>>();
      m.scale = j.at("scale").get<std::vector<double>>();
      m.targets = j.at("targets").get<std::vector<double>>();
      const auto flat = j.at("train").get<std::vector<double>>();
      m.train = Matrix(m.targets.size(), names.size());
      for (std::size_t i = 0; i < m.targets.size(); ++i)
        for (std::size_t c = 0; c < names.size(); ++c) m.train(i, c) = flat.at(i * names.size() + c);
      body = std::move(m);
      break;
    }
    case ModelKind::Linear: body = LinearModel{j.at("weights").get<std::vector<std::vector<double>>>()}; break;
  }
  return TrainedModel(kind, options, std::move(names), classes, std::move(body));
}

// --------------------------------------------------------------------------
// fit_*

TrainedModel fit_tree(const EncodedMatrix& x, std::span<const double> y, const ModelParams& params,
                      const FitOptions& options) {
  params.validate(ModelKind::Tree);
  check_fit_input(x, y);
  const auto targets = forward_transform(y, options);
  const int classes = options.task == Task::Classification ? count_classes(targets) : 0;
  const SortedColumns sorted(x.values);
  const std::vector<std::uint32_t> mult(x.rows(), 1U);
  Tree tree = grow_cart(x.values, sorted, targets, options.task, classes, mult, params, 1.0, nullptr);
  return TrainedModel(ModelKind::Tree, options, x.feature_names, classes, TreeModel{std::move(tree)});
}

TrainedModel fit_gbt(const EncodedMatrix& x, std::span<const double> y, const ModelParams& params,
                     BoostingVariant variant, const FitOptions& options) {
  const ModelKind kind = variant == BoostingVariant::FirstOrder ? ModelKind::Gbt : ModelKind::GbtReg;
  params.validate(kind);
  check_fit_input(x, y);
  const auto targets = forward_transform(y, options);
  const int classes = options.task == Task::Classification ? count_classes(targets) : 0;
  auto model = boost(x.values, targets, params, variant, {options.task, classes}, [](std::span<const double>) {});
  return TrainedModel(kind, options, x.feature_names, classes, std::move(model));
}

std::vector<double> boosting_training_curve(const EncodedMatrix& x, std::span<const double> y,
                                            const ModelParams& params, BoostingVariant variant) {
  params.validate(variant == BoostingVariant::FirstOrder ? ModelKind::Gbt : ModelKind::GbtReg);
  check_fit_input(x, y);
  std::vector<double> curve;
  boost(x.values, y, params, variant, {Task::Regression, 0},
        [&](std::span<const double> raw) { curve.push_back(rmse(y, raw)); });
  return curve;
}

TrainedModel fit_random_forest(const EncodedMatrix& x, std::span<const double> y, const ModelParams& params,
                               const FitOptions& options) {
  params.validate(ModelKind::RandomForest);
  check_fit_input(x, y);
  const auto targets = forward_transform(y, options);
  const int classes = options.task == Task::Classification ? count_classes(targets) : 0;
  const std::size_t n = x.rows();
  const SortedColumns sorted(x.values);
  ForestModel forest;
  forest.trees.reserve(static_cast<std::size_t>(params.n_trees));
  const auto draw = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(params.bootstrap_fraction * static_cast<double>(n))));
  for (int t = 0; t < params.n_trees; ++t) {
    Rng rng = make_rng(params.seed, {static_cast<std::uint64_t>(t), 0x7f});
    std::vector<std::uint32_t> mult(n, 0U);
    if (params.bootstrap) {
      for (std::size_t i = 0; i < draw; ++i) ++mult[uniform_index(rng, n)];
    } else if (draw >= n) {
      std::fill(mult.begin(), mult.end(), 1U);
    } else {
      auto order = iota_indices(n);
      for (std::size_t i = 0; i < draw; ++i) {
        const std::size_t j = i + uniform_index(rng, n - i);
        std::swap(order[i], order[j]);
        mult[order[i]] = 1U;
      }
    }
    forest.trees.push_back(
        grow_cart(x.values, sorted, targets, options.task, classes, mult, params, params.feature_fraction, &rng));
  }
  return TrainedModel(ModelKind::RandomForest, options, x.feature_names, classes, std::move(forest));
}

TrainedModel fit_knn(const EncodedMatrix& x, std::span<const double> y, const ModelParams& params,
                     const FitOptions& options) {
  params.validate(ModelKind::Knn);
  check_fit_input(x, y, 1);
  if (static_cast<std::size_t>(params.k) > x.rows()) throw PreconditionError("fit_knn: k exceeds the training size");
  const auto targets = forward_transform(y, options);
  const int classes = options.task == Task::Classification ? count_classes(targets) : 0;
  KnnModel m;
  m.k = params.k;
  m.targets = targets;
  const std::size_t n = x.rows(), cols = x.cols();
  m.center.resize(cols);
  m.scale.resize(cols);
  for (std::size_t c = 0; c < cols; ++c) {
    const auto col = x.values.column(c);
    m.center[c] = mean(col);
    double ss = 0.0;
    for (double v : col) ss += (v - m.center[c]) * (v - m.center[c]);
    const double sd = std::sqrt(ss / static_cast<double>(n));
    m.scale[c] = sd > 0.0 ? sd : 1.0;
  }
  m.train = Matrix(n, cols);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < cols; ++c) m.train(i, c) = (x.values(i, c) - m.center[c]) / m.scale[c];
  return TrainedModel(ModelKind::Knn, options, x.feature_names, classes, std::move(m));
}

TrainedModel fit_linear(const EncodedMatrix& x, std::span<const double> y, const ModelParams& params,
                        const FitOptions& options) {
  params.validate(ModelKind::Linear);
  check_fit_input(x, y);
  const auto targets = forward_transform(y, options);
  LinearModel m;
  int classes = 0;
  if (options.task == Task::Regression) {
    m.weights.push_back(fit_least_squares(x.values, targets, params.ridge));
  } else {
    classes = count_classes(targets);
    if (classes == 2) {
      m.weights.push_back(fit_logistic(x.values, targets, params.ridge));
    } else {
      for (int k = 0; k < classes; ++k) {
        std::vector<double> binary(targets.size());
        for (std::size_t i = 0; i < targets.size(); ++i) binary[i] = targets[i] == k ? 1.0 : 0.0;
        m.weights.push_back(fit_logistic(x.values, binary, params.ridge));
      }
    }
  }
  return TrainedModel(ModelKind::Linear, options, x.feature_names, classes, std::move(m));
}

TrainedModel fit_model(ModelKind kind, const EncodedMatrix& x, std::span<const double> y, const ModelParams& params,
                       const FitOptions& options) {
  switch (kind) {
    case ModelKind::Tree: return fit_tree(x, y, params, options);
    case ModelKind::Gbt: return fit_gbt(x, y, params, BoostingVariant::FirstOrder, options);
    case ModelKind::GbtReg: return fit_gbt(x, y, params, BoostingVariant::SecondOrderRegularised, options);
    case ModelKind::RandomForest: return fit_random_forest(x, y, params, options);
    case ModelKind::Knn: return fit_knn(x, y, params, options);
    case ModelKind::Linear: return fit_linear(x, y, params, options);
  }
  throw PreconditionError("fit_model: unknown kind");
}

ModelParams default_params(ModelKind kind) {
  ModelParams p;
  switch (kind) {
    case ModelKind::Gbt:
    case ModelKind::GbtReg:
      p.n_rounds = 60;
      p.max_depth = 4;
      p.learning_rate = 0.1;
      break;
    case ModelKind::RandomForest:
      p.n_trees = 60;
      p.max_depth = 10;
      p.feature_fraction = 0.5;
      break;
    case ModelKind::Tree:
      p.max_depth = 8;
      p.min_samples_leaf = 5;
      break;
    case ModelKind::Knn:
      p.k = 15;
      break;
    case ModelKind::Linear:
      p.ridge = 1e-3;
      break;
  }
  return p;
}

std::vector<ModelSpec> default_specs(std::span<const ModelKind> kinds) {
  std::vector<ModelSpec> out;
  for (auto k : kinds) out.push_back({k, default_params(k)});
  return out;
}

}  // namespace ieo
