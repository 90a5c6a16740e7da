#include "spare/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace spare {

double mean_of(const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("mean of an empty list");
  double sum = std::accumulate(values.begin(), values.end(), 0.0);
  return sum / static_cast<double>(values.size());
}

double population_std(const std::vector<double>& values) {
  double mu = mean_of(values);
  double acc = 0.0;
  for (double v : values) acc += (v - mu) * (v - mu);
  return std::sqrt(acc / static_cast<double>(values.size()));
}

double nrmse(const std::vector<double>& preds, const std::vector<double>& targets,
             double train_std) {
  if (preds.size() != targets.size() || preds.empty())
    throw std::invalid_argument("nrmse: need equal, non-empty prediction/target lists");
  if (!(train_std > 0.0)) throw ZeroStd("training targets have zero standard deviation");
  double acc = 0.0;
  for (size_t i = 0; i < preds.size(); ++i) {
    double d = preds[i] - targets[i];
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(preds.size())) / train_std;
}

double auroc(const std::vector<double>& scores, const std::vector<double>& labels) {
  if (scores.size() != labels.size() || scores.empty())
    throw std::invalid_argument("auroc: need equal, non-empty score/label lists");
  size_t n = scores.size();
  int64_t positives = 0;
  for (double y : labels) {
    if (y != 0.0 && y != 1.0) throw std::invalid_argument("auroc: labels must be 0 or 1");
    if (y == 1.0) ++positives;
  }
  int64_t negatives = static_cast<int64_t>(n) - positives;
  if (positives == 0 || negatives == 0)
    throw SingleClass("need both classes, got " + std::to_string(positives) + " positives of " +
                      std::to_string(n));

  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return scores[a] < scores[b]; });

  // 1-based ranks, tied scores sharing the average rank of their run.
  double positive_rank_sum = 0.0;
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
    for (size_t k = i; k < j; ++k)
      if (labels[order[k]] == 1.0) positive_rank_sum += avg_rank;
    i = j;
  }
  double u = positive_rank_sum -
             0.5 * static_cast<double>(positives) * (static_cast<double>(positives) + 1.0);
  return u / (static_cast<double>(positives) * static_cast<double>(negatives));
}

}  // namespace spare
