#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "ieoml/dataset.hpp"

namespace ieo {

namespace {

constexpr double kZeroShift = 0.5;
constexpr double kLogTwoPi = 1.8378770664093453;

/// Root of a monotone function on [lo, hi] by bisection.
template <typename F>
std::optional<double> bisect(F f, double lo, double hi, int iterations = 200) {
  double flo = f(lo);
  const double fhi = f(hi);
  if (!std::isfinite(flo) || !std::isfinite(fhi) || (flo > 0) == (fhi > 0)) return std::nullopt;
  for (int i = 0; i < iterations; ++i) {
    const double mid = 0.5 * (lo + hi);
    const double fm = f(mid);
    if ((fm > 0) == (flo > 0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
    if (hi - lo <= 1e-14 * std::max(1.0, std::abs(mid))) break;
  }
  return 0.5 * (lo + hi);
}

DistributionFit finish(std::string name, std::map<std::string, double> params, double ll, bool ok) {
  DistributionFit fit;
  fit.distribution = std::move(name);
  fit.params = std::move(params);
  fit.log_likelihood = ll;
  fit.converged = ok && std::isfinite(ll);
  fit.aic = fit.converged ? 2.0 * 2.0 - 2.0 * ll : std::numeric_limits<double>::infinity();
  return fit;
}

DistributionFit fit_log_normal(std::span<const double> logs) {
  const double n = static_cast<double>(logs.size());
  const double mu = mean(logs);
  double ss = 0.0;
  for (double l : logs) ss += (l - mu) * (l - mu);
  const double sigma = std::sqrt(ss / n);
  const double sum_log = std::accumulate(logs.begin(), logs.end(), 0.0);
  const double ll = -sum_log - n * std::log(sigma) - 0.5 * n * kLogTwoPi - ss / (2.0 * sigma * sigma);
  return finish("log-normal", {{"mu", mu}, {"sigma", sigma}}, ll, sigma > 0.0);
}

DistributionFit fit_weibull(std::span<const double> logs) {
  const double n = static_cast<double>(logs.size());
  const double mean_log = mean(logs);
  const double max_log = *std::max_element(logs.begin(), logs.end());
  // Profile equation in the shape k: weighted mean of ln y under weights y^k,
  // minus 1/k, minus mean ln y. Increasing in k.
  auto equation = [&](double log_k) {
    const double k = std::exp(log_k);
    double sw = 0.0, swl = 0.0;
    for (double l : logs) {
      const double w = std::exp(k * (l - max_log));
      sw += w;
      swl += w * l;
    }
    return swl / sw - 1.0 / k - mean_log;
  };
  const auto log_k = bisect(equation, std::log(1e-3), std::log(1e3));
  if (!log_k) return finish("weibull", {}, -std::numeric_limits<double>::infinity(), false);
  const double k = std::exp(*log_k);
  double sw = 0.0;
  for (double l : logs) sw += std::exp(k * (l - max_log));
  // ln(lambda) = (1/k) ln(mean y^k)
  const double log_lambda = max_log + std::log(sw / n) / k;
  double ll = n * std::log(k) - n * k * log_lambda + (k - 1.0) * (mean_log * n);
  for (double l : logs) ll -= std::exp(k * (l - log_lambda));
  return finish("weibull", {{"shape", k}, {"scale", std::exp(log_lambda)}}, ll, true);
}

DistributionFit fit_log_logistic(std::span<const double> logs) {
  // ln y ~ Logistic(m, s); alternate exact one-dimensional score solves.
  const double n = static_cast<double>(logs.size());
  double m = median(std::vector<double>(logs.begin(), logs.end()));
  double var = 0.0;
  const double mu = mean(logs);
  for (double l : logs) var += (l - mu) * (l - mu);
  double s = std::max(1e-6, std::sqrt(3.0 * var / n) / M_PI);
  const double lo_l = *std::min_element(logs.begin(), logs.end());
  const double hi_l = *std::max_element(logs.begin(), logs.end());
  bool ok = hi_l > lo_l;
  for (int iter = 0; ok && iter < 500; ++iter) {
    const double prev_m = m, prev_s = s;
    auto location_score = [&](double loc) {
      double acc = 0.0;
      for (double l : logs) acc += std::tanh((l - loc) / (2.0 * s));
      return acc;
    };
    const auto new_m = bisect([&](double loc) { return -location_score(loc); }, lo_l - 1.0, hi_l + 1.0);
    if (!new_m) {
      ok = false;
      break;
    }
    m = *new_m;
    auto scale_score = [&](double log_scale) {
      const double sc = std::exp(log_scale);
      double acc = 0.0;
      for (double l : logs) {
        const double z = (l - m) / sc;
        acc += z * std::tanh(z / 2.0);
      }
      return n - acc;  // increasing in the scale
    };
    const auto new_log_s = bisect(scale_score, std::log(1e-8), std::log(1e4));
    if (!new_log_s) {
      ok = false;
      break;
    }
    s = std::exp(*new_log_s);
    if (std::abs(m - prev_m) < 1e-12 && std::abs(s - prev_s) < 1e-12 * s) break;
  }
  double ll = 0.0;
  for (double l : logs) {
    const double z = (l - m) / s;
    // log density of the logistic at z, stable for large |z|
    const double a = std::abs(z);
    ll += -a - std::log(s) - 2.0 * std::log1p(std::exp(-a)) - l;
  }
  return finish("log-logistic", {{"scale", std::exp(m)}, {"shape", 1.0 / s}}, ll, ok);
}

}  // namespace

double ecdf_at(std::span<const double> durations, double t) {
  if (durations.empty()) return 0.0;
  const auto count = std::count_if(durations.begin(), durations.end(), [t](double d) { return d <= t; });
  return static_cast<double>(count) / static_cast<double>(durations.size());
}

std::vector<DistributionFit> fit_distributions(std::span<const double> durations) {
  if (durations.size() < 10) throw PreconditionError("fit_distributions: at least 10 durations required");
  std::vector<double> logs;
  logs.reserve(durations.size());
  for (double d : durations) logs.push_back(std::log(d > 0.0 ? d : kZeroShift));
  std::vector<DistributionFit> fits{fit_log_normal(logs), fit_log_logistic(logs), fit_weibull(logs)};
  std::stable_sort(fits.begin(), fits.end(), [](const DistributionFit& a, const DistributionFit& b) {
    if (a.converged != b.converged) return a.converged;
    return a.aic < b.aic;
  });
  return fits;
}

ProfileReport profile(const Dataset& dataset, const ProfileOptions& options) {
  if (dataset.empty()) throw PreconditionError("profile: empty dataset");
  const auto& d = dataset.durations();
  ProfileReport report;
  report.n = d.size();
  report.mean = mean(d);
  report.median = median(d);
  report.max = *std::max_element(d.begin(), d.end());
  report.zero_shift = kZeroShift;
  report.shifted_records = static_cast<std::size_t>(std::count(d.begin(), d.end(), 0.0));

  std::vector<double> sorted = d;
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (i + 1 < sorted.size() && sorted[i + 1] == sorted[i]) continue;
    report.ecdf.emplace_back(sorted[i], static_cast<double>(i + 1) / n);
  }

  const std::size_t bins = std::max<std::size_t>(1, options.histogram_bins);
  const double lo = std::log1p(sorted.front());
  double hi = std::log1p(sorted.back());
  if (hi <= lo) hi = lo + 1.0;
  const double width = (hi - lo) / static_cast<double>(bins);
  report.log_histogram.edges.resize(bins + 1);
  for (std::size_t b = 0; b <= bins; ++b) report.log_histogram.edges[b] = lo + width * static_cast<double>(b);
  report.log_histogram.edges.back() = hi;
  report.log_histogram.counts.assign(bins, 0);
  for (double v : sorted) {
    auto b = static_cast<std::size_t>((std::log1p(v) - lo) / width);
    report.log_histogram.counts[std::min(b, bins - 1)]++;
  }

  if (d.size() >= 10) report.fitted = fit_distributions(d);
  return report;
}

nlohmann::json to_json(const ProfileReport& report) {
  nlohmann::json j;
  auto ecdf = nlohmann::json::array();
  for (const auto& [x, f] : report.ecdf) ecdf.push_back({x, f});
  j["ecdf"] = std::move(ecdf);
  j["log_histogram"] = {{"edges", report.log_histogram.edges}, {"counts", report.log_histogram.counts}};
  auto fitted = nlohmann::json::array();
  for (const auto& f : report.fitted) {
    fitted.push_back({{"distribution", f.distribution},
                      {"params", f.params},
                      {"log_likelihood", f.converged ? nlohmann::json(f.log_likelihood) : nlohmann::json()},
                      {"aic", f.converged ? nlohmann::json(f.aic) : nlohmann::json()},
                      {"converged", f.converged}});
  }
  j["fitted"] = std::move(fitted);
  j["zero_shift"] = report.zero_shift;
  j["shifted_records"] = report.shifted_records;
  j["summary"] = {{"n", report.n}, {"mean", report.mean}, {"median", report.median}, {"max", report.max}};
  return j;
}

}  // namespace ieo
