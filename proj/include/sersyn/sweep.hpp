#pragma once

#include <vector>

#include "sersyn/corpus.hpp"
#include "sersyn/metrics.hpp"
#include "sersyn/strategies.hpp"

namespace sersyn::metrics {

/// Cross-validates `plan` once per ratio. Ratio 0 runs the baseline
/// strategy with the plan's other settings. Ratios must be ascending and
/// non-negative (ConfigError otherwise).
std::vector<ResultsBlock> ratio_sweep(const corpus::Corpus& corpus, const train::TrainPlan& plan,
                                      const std::vector<double>& ratios, int jobs = 1);

/// The plan a single ratio of the sweep runs. Non-zero ratios of a
/// baseline plan run random_mix.
train::TrainPlan plan_for_ratio(const train::TrainPlan& plan, double ratio);

}  // namespace sersyn::metrics
