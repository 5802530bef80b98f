#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "dferclip/dataset.hpp"
#include "dferclip/errors.hpp"

namespace dfer {

/// Rows are true classes, columns predictions.
struct ConfusionMatrix {
    int classes = 0;
    std::vector<long long> counts;  // row-major C x C

    ConfusionMatrix() = default;
    explicit ConfusionMatrix(int c) : classes(c), counts(static_cast<size_t>(c) * c, 0) {}
    long long& at(int true_class, int pred) {
        return counts[static_cast<size_t>(true_class) * classes + pred];
    }
    long long at(int true_class, int pred) const {
        return counts[static_cast<size_t>(true_class) * classes + pred];
    }
    long long total() const;
    long long row_sum(int true_class) const;
};

ConfusionMatrix confusion(const std::vector<int>& preds, const std::vector<int>& labels,
                          int classes);

struct MetricsReport {
    double war = 0.0;
    double uar = 0.0;
    std::vector<double> per_class_recall;  // -1 marks classes with no true samples
    long long n = 0;
    int fold = -1;
    std::uint64_t seed = 0;
};

/// WAR is overall accuracy; UAR averages per-class recall over classes that
/// actually appear in the sample.
MetricsReport war_uar(const ConfusionMatrix& cm);

/// Five-fold protocol: test set is fold f, train set the remainder.
std::pair<std::vector<size_t>, std::vector<size_t>> kfold_protocol(const DatasetManifest& manifest,
                                                                   int fold);

/// Single 80/20 split realized as "last fold is the test set".
std::pair<std::vector<size_t>, std::vector<size_t>> holdout_protocol(
    const DatasetManifest& manifest);

}  // namespace dfer
