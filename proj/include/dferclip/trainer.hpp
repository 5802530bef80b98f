#pragma once

#include <json.hpp>

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "dferclip/checkpoint.hpp"
#include "dferclip/dataset.hpp"
#include "dferclip/metrics.hpp"
#include "dferclip/model.hpp"

namespace dfer {

/// Trainable parameter groups with their own learning rates, plus the frozen
/// text-encoder set. Derived from registry names; an unknown name is an
/// integrity error.
struct ParamGroups {
    std::vector<NamedParam> image;
    std::vector<NamedParam> temporal;
    std::vector<NamedParam> context;
    std::vector<NamedParam> frozen;

    Index trainable_size() const;
    Index frozen_size() const;
};

ParamGroups partition_parameters(const ParamRegistry& registry);

/// Multi-step schedule: lr0 * gamma^(number of milestones <= epoch).
double lr_at_epoch(double lr0, int epoch, const std::vector<int>& milestones, double gamma);

struct TrainConfig {
    int epochs = 50;
    int batch_size = 8;
    std::vector<int> milestones = {30, 40};
    double gamma = 0.1;
    double momentum = 0.0;
    double lr_image = 1e-5;
    double lr_temporal = 1e-2;
    double lr_context = 1e-3;
    std::vector<std::uint64_t> seeds = {0, 1, 2};
    bool eval_each_epoch = true;
    AugmentFlags augment;

    void validate() const;
};

void to_json(nlohmann::ordered_json& j, const TrainConfig& c);
void from_json(const nlohmann::ordered_json& j, TrainConfig& c);

struct ExperimentConfig {
    ModelConfig model;
    PromptSpec prompt;
    TrainConfig train;
};

void to_json(nlohmann::ordered_json& j, const ExperimentConfig& c);
void from_json(const nlohmann::ordered_json& j, ExperimentConfig& c);

struct RunRecord {
    std::uint64_t seed = 0;
    std::vector<double> train_loss;  // one entry per epoch
    std::vector<double> eval_war;
    std::vector<double> eval_uar;
    std::string checkpoint_path;
    double wall_seconds = 0.0;
};

void to_json(nlohmann::ordered_json& j, const RunRecord& r);

struct ClipSample {
    std::vector<Tensor> frames;  // T tensors of [3 x H x W]
    int label = -1;
};

struct GroupLrs {
    double image = 0.0;
    double temporal = 0.0;
    double context = 0.0;
};

struct SgdState {
    std::unordered_map<detail::TensorStorage*, std::vector<double>> velocity;
};

/// One optimizer step: forward over the batch, cross-entropy against the
/// labels, backward, per-group SGD update. Class text embeddings are
/// recomputed inside the step since the contexts are training. Returns the
/// batch loss.
double train_step(Model& model, const std::vector<ClipSample>& batch, const ParamGroups& groups,
                  const GroupLrs& lrs, double momentum, SgdState& state, int batch_id);

struct EvalResult {
    ConfusionMatrix cm;
    MetricsReport metrics;
};

EvalResult evaluate_clips(const Model& model, const std::vector<VideoClip>& clips);
EvalResult evaluate(const Model& model, const DatasetManifest& manifest,
                    const std::vector<size_t>& indices);

struct FitOutcome {
    std::vector<RunRecord> records;
    double mean_war = 0.0;  // arithmetic mean over seeds, final epoch
    double mean_uar = 0.0;
};

/// Full recipe: for every seed, rebuild the model, train with shuffled
/// seeded batches, evaluate per epoch, checkpoint (when out_dir is set), and
/// report the mean over seeds. Completed runs are appended to `records` even
/// if a later run aborts.
FitOutcome fit(const ExperimentConfig& config, const DatasetManifest& manifest,
               const std::vector<size_t>& train_indices, const std::vector<size_t>& test_indices,
               const DescriptionSet& descriptions, const std::string& out_dir,
               std::vector<RunRecord>& records);

}  // namespace dfer
