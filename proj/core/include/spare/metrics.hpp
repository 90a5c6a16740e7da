#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace spare {

struct ZeroStd : std::runtime_error {
  explicit ZeroStd(const std::string& what) : std::runtime_error("nrmse: " + what) {}
};
struct SingleClass : std::runtime_error {
  explicit SingleClass(const std::string& what) : std::runtime_error("auroc: " + what) {}
};

double mean_of(const std::vector<double>& values);
double population_std(const std::vector<double>& values);

/// sqrt(mean((pred - target)²)) / train_std; train_std is the population
/// standard deviation of the training-split targets.
double nrmse(const std::vector<double>& preds, const std::vector<double>& targets,
             double train_std);

/// Probability that a random positive outranks a random negative, ties
/// counting one half (rank / Mann-Whitney formulation). Labels must be 0 or
/// 1 with both classes present.
double auroc(const std::vector<double>& scores, const std::vector<double>& labels);

}  // namespace spare
