#include "sersyn/sweep.hpp"

#include <cmath>

#include "sersyn/errors.hpp"

namespace sersyn::metrics {

train::TrainPlan plan_for_ratio(const train::TrainPlan& plan, double ratio) {
    train::TrainPlan p = plan;
    if (ratio == 0) {
        p.strategy = train::Strategy::baseline;
    } else {
        // A baseline plan has nothing to add synthetic data to; plain mixing
        // is the natural reading of "baseline + ratio".
        if (p.strategy == train::Strategy::baseline) p.strategy = train::Strategy::random_mix;
        p.ratio = ratio;
    }
    return p;
}

std::vector<ResultsBlock> ratio_sweep(const corpus::Corpus& corpus, const train::TrainPlan& plan,
                                      const std::vector<double>& ratios, int jobs) {
    if (ratios.empty()) throw ConfigError("sweep: no ratios given");
    for (std::size_t i = 0; i < ratios.size(); ++i) {
        if (!std::isfinite(ratios[i]) || ratios[i] < 0) {
            throw ConfigError("sweep: ratio " + format_ratio(ratios[i]) + " is not >= 0");
        }
        if (i > 0 && !(ratios[i] > ratios[i - 1])) {
            throw ConfigError("sweep: ratios must be strictly ascending");
        }
    }
    std::vector<ResultsBlock> blocks;
    for (double r : ratios) {
        const auto cv = train::run_cross_validation(corpus, plan_for_ratio(plan, r), jobs);
        blocks.push_back({r, cv.aggregate});
    }
    return blocks;
}

}  // namespace sersyn::metrics
