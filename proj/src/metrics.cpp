#include "dferclip/metrics.hpp"

namespace dfer {

long long ConfusionMatrix::total() const {
    long long n = 0;
    for (long long c : counts) n += c;
    return n;
}

long long ConfusionMatrix::row_sum(int true_class) const {
    long long n = 0;
    for (int p = 0; p < classes; ++p) n += at(true_class, p);
    return n;
}

ConfusionMatrix confusion(const std::vector<int>& preds, const std::vector<int>& labels,
                          int classes) {
    if (preds.size() != labels.size()) {
        throw DataError("confusion: " + std::to_string(preds.size()) + " predictions vs " +
                        std::to_string(labels.size()) + " labels");
    }
    if (classes < 1) throw DataError("confusion: need at least one class");
    ConfusionMatrix cm(classes);
    for (size_t i = 0; i < preds.size(); ++i) {
        const int t = labels[i], p = preds[i];
        if (t < 0 || t >= classes || p < 0 || p >= classes) {
            throw DataError("confusion: pair (" + std::to_string(t) + ", " + std::to_string(p) +
                            ") at index " + std::to_string(i) + " outside [0, " +
                            std::to_string(classes) + ")");
        }
        ++cm.at(t, p);
    }
    return cm;
}

MetricsReport war_uar(const ConfusionMatrix& cm) {
    MetricsReport r;
    r.n = cm.total();
    if (r.n < 1) throw DataError("war_uar: empty confusion matrix");
    long long diag = 0;
    double recall_sum = 0.0;
    int present = 0;
    for (int k = 0; k < cm.classes; ++k) {
        diag += cm.at(k, k);
        const long long support = cm.row_sum(k);
        if (support > 0) {
            const double recall = static_cast<double>(cm.at(k, k)) / static_cast<double>(support);
            r.per_class_recall.push_back(recall);
            recall_sum += recall;
            ++present;
        } else {
            r.per_class_recall.push_back(-1.0);
        }
    }
    r.war = static_cast<double>(diag) / static_cast<double>(r.n);
    r.uar = recall_sum / static_cast<double>(present);
    return r;
}

namespace {

std::pair<std::vector<size_t>, std::vector<size_t>> split_by_fold(const DatasetManifest& manifest,
                                                                  int fold) {
    std::vector<size_t> train, test;
    for (size_t i = 0; i < manifest.clips.size(); ++i) {
        const int f = manifest.clips[i].fold;
        if (f < 0) {
            throw ProtocolError("fold protocol: clip " + manifest.clips[i].path +
                                " has no fold label");
        }
        (f == fold ? test : train).push_back(i);
    }
    return {std::move(train), std::move(test)};
}

}  // namespace

std::pair<std::vector<size_t>, std::vector<size_t>> kfold_protocol(const DatasetManifest& manifest,
                                                                   int fold) {
    if (fold < 0 || fold > 4) {
        throw ProtocolError("fold protocol: fold " + std::to_string(fold) + " outside 0..4");
    }
    return split_by_fold(manifest, fold);
}

std::pair<std::vector<size_t>, std::vector<size_t>> holdout_protocol(
    const DatasetManifest& manifest) {
    return split_by_fold(manifest, 4);
}

}  // namespace dfer
