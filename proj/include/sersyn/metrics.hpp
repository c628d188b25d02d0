#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace sersyn::metrics {

/// Rows are true classes, columns predicted classes.
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(std::size_t num_classes = 4);

    void add(int truth, int predicted, std::uint64_t count = 1);

    std::size_t num_classes() const { return m_classes; }
    std::uint64_t at(std::size_t truth, std::size_t predicted) const {
        return m_counts[truth * m_classes + predicted];
    }
    std::uint64_t row_total(std::size_t truth) const;
    std::uint64_t total() const;

    nlohmann::json to_json() const;
    static ConfusionMatrix from_rows(const std::vector<std::vector<std::uint64_t>>& rows);

    bool operator==(const ConfusionMatrix&) const = default;

private:
    std::size_t m_classes;
    std::vector<std::uint64_t> m_counts;
};

struct Accuracy {
    double wa = 0;
    double ua = 0;
    /// Set when some class had no utterances and was left out of UA.
    bool empty_classes = false;
};

/// WA = trace / total; UA = mean recall over classes with a non-empty row.
/// Throws ValidationError for an all-zero matrix.
Accuracy wa_ua(const ConfusionMatrix& confusion);

struct FoldResult {
    int fold = 1;
    double wa = 0;
    double ua = 0;
    ConfusionMatrix confusion;
};

FoldResult make_fold_result(int fold, const ConfusionMatrix& confusion);

struct Aggregate {
    double mean_wa = 0;
    double mean_ua = 0;
    std::vector<FoldResult> folds;  // sorted by fold index
};

/// Unweighted mean over folds 1..expected_folds; each must appear once.
Aggregate aggregate_folds(std::vector<FoldResult> results, int expected_folds = 5);

/// Results CSV: "ratio,fold,wa,ua" header, per-fold rows, then a
/// "<ratio>,mean,<wa>,<ua>" row for each block.
struct ResultsBlock {
    double ratio = 0;
    Aggregate aggregate;
};

std::string format_ratio(double ratio);
std::string results_csv(const std::vector<ResultsBlock>& blocks);
/// Rows of one block without the header.
std::string results_rows(const ResultsBlock& block);

}  // namespace sersyn::metrics
