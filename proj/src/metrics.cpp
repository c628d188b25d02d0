#include "sersyn/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <nlohmann/json.hpp>

#include "sersyn/errors.hpp"

namespace sersyn::metrics {

ConfusionMatrix::ConfusionMatrix(std::size_t num_classes)
    : m_classes(num_classes), m_counts(num_classes * num_classes, 0) {
    if (num_classes == 0) throw ValidationError("confusion matrix needs at least one class");
}

void ConfusionMatrix::add(int truth, int predicted, std::uint64_t count) {
    if (truth < 0 || predicted < 0 || static_cast<std::size_t>(truth) >= m_classes ||
        static_cast<std::size_t>(predicted) >= m_classes) {
        throw ValidationError("confusion matrix: class index out of range");
    }
    m_counts[static_cast<std::size_t>(truth) * m_classes + static_cast<std::size_t>(predicted)] +=
        count;
}

std::uint64_t ConfusionMatrix::row_total(std::size_t truth) const {
    std::uint64_t sum = 0;
    for (std::size_t p = 0; p < m_classes; ++p) sum += at(truth, p);
    return sum;
}

std::uint64_t ConfusionMatrix::total() const {
    std::uint64_t sum = 0;
    for (auto c : m_counts) sum += c;
    return sum;
}

nlohmann::json ConfusionMatrix::to_json() const {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t t = 0; t < m_classes; ++t) {
        nlohmann::json row = nlohmann::json::array();
        for (std::size_t p = 0; p < m_classes; ++p) row.push_back(at(t, p));
        rows.push_back(row);
    }
    return rows;
}

ConfusionMatrix ConfusionMatrix::from_rows(const std::vector<std::vector<std::uint64_t>>& rows) {
    ConfusionMatrix m(rows.size());
    for (std::size_t t = 0; t < rows.size(); ++t) {
        if (rows[t].size() != rows.size()) throw ValidationError("confusion matrix must be square");
        for (std::size_t p = 0; p < rows.size(); ++p) {
            m.add(static_cast<int>(t), static_cast<int>(p), rows[t][p]);
        }
    }
    return m;
}

Accuracy wa_ua(const ConfusionMatrix& confusion) {
    const std::uint64_t total = confusion.total();
    if (total == 0) throw ValidationError("wa_ua: confusion matrix is empty");
    Accuracy acc;
    std::uint64_t correct = 0;
    double recall_sum = 0;
    std::size_t present = 0;
    for (std::size_t c = 0; c < confusion.num_classes(); ++c) {
        correct += confusion.at(c, c);
        const std::uint64_t row = confusion.row_total(c);
        if (row == 0) {
            acc.empty_classes = true;
            continue;
        }
        recall_sum += static_cast<double>(confusion.at(c, c)) / static_cast<double>(row);
        ++present;
    }
    acc.wa = static_cast<double>(correct) / static_cast<double>(total);
    acc.ua = recall_sum / static_cast<double>(present);
    return acc;
}

FoldResult make_fold_result(int fold, const ConfusionMatrix& confusion) {
    const auto acc = wa_ua(confusion);
    return {fold, acc.wa, acc.ua, confusion};
}

Aggregate aggregate_folds(std::vector<FoldResult> results, int expected_folds) {
    if (expected_folds < 1) throw ValidationError("aggregate_folds: expected_folds must be >= 1");
    std::sort(results.begin(), results.end(),
              [](const FoldResult& a, const FoldResult& b) { return a.fold < b.fold; });
    if (results.size() != static_cast<std::size_t>(expected_folds)) {
        throw ValidationError("aggregate_folds: expected " + std::to_string(expected_folds) +
                              " folds, got " + std::to_string(results.size()));
    }
    Aggregate agg;
    for (int k = 0; k < expected_folds; ++k) {
        if (results[static_cast<std::size_t>(k)].fold != k + 1) {
            throw ValidationError("aggregate_folds: fold " + std::to_string(k + 1) +
                                  " is missing or duplicated");
        }
        agg.mean_wa += results[static_cast<std::size_t>(k)].wa;
        agg.mean_ua += results[static_cast<std::size_t>(k)].ua;
    }
    agg.mean_wa /= expected_folds;
    agg.mean_ua /= expected_folds;
    agg.folds = std::move(results);
    return agg;
}

std::string format_ratio(double ratio) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", ratio);
    return buf;
}

namespace {

std::string row(const std::string& ratio, const std::string& fold, double wa, double ua) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%s,%s,%.6f,%.6f\n", ratio.c_str(), fold.c_str(), wa, ua);
    return buf;
}

}  // namespace

std::string results_rows(const ResultsBlock& block) {
    const std::string r = format_ratio(block.ratio);
    std::string out;
    for (const auto& f : block.aggregate.folds) out += row(r, std::to_string(f.fold), f.wa, f.ua);
    out += row(r, "mean", block.aggregate.mean_wa, block.aggregate.mean_ua);
    return out;
}

std::string results_csv(const std::vector<ResultsBlock>& blocks) {
    std::string out = "ratio,fold,wa,ua\n";
    for (const auto& b : blocks) out += results_rows(b);
    return out;
}

}  // namespace sersyn::metrics
