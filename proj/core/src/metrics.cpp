#include "spam/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "spam/error.hpp"

namespace spam {

std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < v.size(); ++c)
    if (v[c] > v[best]) best = c;
  return best;
}

double expected_calibration_error(std::span<const double> confidence, std::span<const std::uint8_t> correct,
                                  std::size_t bins) {
  if (confidence.size() != correct.size()) throw StructuralError("ece: confidence and correctness lengths differ");
  if (confidence.empty()) throw StructuralError("ece: empty input");
  std::vector<double> conf_sum(bins, 0.0), acc_sum(bins, 0.0);
  std::vector<std::size_t> count(bins, 0);
  for (std::size_t n = 0; n < confidence.size(); ++n) {
    const double b = std::ceil(confidence[n] * static_cast<double>(bins)) - 1.0;
    const auto k = static_cast<std::size_t>(std::clamp(b, 0.0, static_cast<double>(bins - 1)));
    conf_sum[k] += confidence[n];
    acc_sum[k] += correct[n] ? 1.0 : 0.0;
    ++count[k];
  }
  const double total = static_cast<double>(confidence.size());
  double ece = 0.0;
  for (std::size_t k = 0; k < bins; ++k) {
    if (count[k] == 0) continue;
    const double nb = static_cast<double>(count[k]);
    ece += nb / total * std::abs(acc_sum[k] / nb - conf_sum[k] / nb);
  }
  return ece;
}

EvalResult evaluate_probabilities(const Matrix& probs, std::span<const std::size_t> labels) {
  const std::size_t n = probs.rows();
  if (n == 0) throw StructuralError("evaluate: empty dataset");
  if (labels.size() != n) throw StructuralError("evaluate: label count does not match predictions");
  const std::size_t classes = probs.cols();
  EvalResult r;
  r.n = n;
  std::vector<double> conf(n);
  std::vector<std::uint8_t> correct(n);
  double hits = 0.0, nll = 0.0, brier = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto p = probs.row(i);
    const std::size_t y = labels[i];
    if (y >= classes) throw StructuralError("evaluate: label out of range");
    const std::size_t pred = argmax(p);
    conf[i] = p[pred];
    correct[i] = pred == y;
    hits += correct[i];
    nll -= std::log(std::max(p[y], std::numeric_limits<double>::min()));
    for (std::size_t c = 0; c < classes; ++c) {
      const double d = p[c] - (c == y ? 1.0 : 0.0);
      brier += d * d;
    }
  }
  const double dn = static_cast<double>(n);
  r.accuracy = hits / dn;
  r.nll = nll / dn;
  r.brier = brier / dn;
  r.ece = expected_calibration_error(conf, correct);
  return r;
}

EvalResult evaluate(const Network& net, const Likelihood& lik, const Dataset& data) {
  if (data.empty()) throw StructuralError("evaluate: empty dataset");
  const Matrix f = forward(net, data.features);
  if (!lik.is_categorical()) {
    EvalResult r;
    r.n = data.size();
    r.nll = total_nll(lik, f, data.targets) / static_cast<double>(r.n);
    r.accuracy = r.ece = r.brier = std::numeric_limits<double>::quiet_NaN();
    return r;
  }
  // nll straight from logits keeps precision for confident predictions.
  Matrix probs(f.rows(), f.cols());
  std::vector<std::size_t> labels(f.rows());
  for (std::size_t i = 0; i < f.rows(); ++i) {
    const auto p = softmax(f.row(i));
    std::copy(p.begin(), p.end(), probs.row(i).begin());
    labels[i] = data.label(i);
  }
  EvalResult r = evaluate_probabilities(probs, labels);
  r.nll = total_nll(lik, f, data.targets) / static_cast<double>(r.n);
  return r;
}

}  // namespace spam
