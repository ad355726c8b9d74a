#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "c2d/bank.hpp"
#include "c2d/contrastive.hpp"
#include "c2d/model.hpp"
#include "c2d/pseudo.hpp"
#include "c2d/synthdata.hpp"

namespace c2d {

enum class SamplerKind { weighted, topk };
enum class BankInit { saliency, blob, none, external };

struct TrainConfig {
    int epochs = 30;
    double learning_rate = 0.05;
    double weight_decay = 0.0;
    double alpha = 0.7; // bank EMA coefficient
    double tau = 0.07;  // contrastive temperature
    double render_sigma = 2.0;
    double prior_blur_sigma = 2.0;
    ContrastiveConfig contrastive;
    bool use_contrastive = true;
    // When false the prior is rebuilt from the current prediction at every
    // step instead of the historical bank (ablation).
    bool use_bank = true;
    SamplerKind sampler = SamplerKind::weighted;
    BankInit bank_init = BankInit::saliency;
    int blob_radius = 8;
    std::string external_saliency_dir;
    uint64_t seed = 7;
    double labeled_fraction = 0.0; // semi-supervised: fraction with gt points
    int snapshot_every = 0;        // bank snapshots every E epochs (0 = off)
};

struct EpochRecord {
    int epoch = 0;
    double mean_map_loss = 0.0;
    double mean_ctr_loss = 0.0;
    double train_mae = 0.0;
    double val_mae = 0.0;
    double val_mse = 0.0;
    std::string bank_snapshot; // path, empty when none written

    std::string to_json() const;
};

// Mean squared pixel error and its gradient 2*(pred-target)/(H*W).
std::pair<double, Grid2D> map_loss(const Grid2D& pred, const Grid2D& target);

// Per-epoch staging of predictions for the end-of-epoch bank update. Entry i
// only ever receives predictions from image i; applying twice is an error.
class EpochStage {
public:
    explicit EpochStage(size_t n) : staged_(n) {}
    void stage(int index, Grid2D prediction);
    // ema_update for every staged entry, bump the bank epoch, clear the stage.
    void apply(HistoricalMapBank& bank);
    bool applied() const { return applied_; }

private:
    std::vector<std::optional<Grid2D>> staged_;
    bool applied_ = false;
};

struct StepDiag {
    double map_loss = 0.0;
    double ctr_loss = 0.0;
    int ctr_batches = 0;
    double pred_count = 0.0;
};

// One optimization step on one image: forward, pseudo-target construction
// (or the gt map when gt_points is given), Eq-style combined loss with 1:1
// weighting, backward, SGD step, and staging of the prediction.
StepDiag train_step(const Grid2D& image_norm, int count, int index, HistoricalMapBank& bank,
                    ModelParams& params, const TrainConfig& cfg, EpochStage& stage,
                    int epoch, const PointSet* gt_points);

// Labeled subset for semi-supervised training: a seeded shuffle of [0, n)
// truncated to round(fraction*n) indices.
std::vector<int> labeled_subset(uint64_t seed, int n, double fraction);

struct TrainResult {
    ModelParams params;
    float norm_mean = 0.0f;
    float norm_std = 1.0f;
    HistoricalMapBank bank;
    std::vector<EpochRecord> records;
};

// Called after each epoch's bank update; returning a non-empty string records
// it as the epoch's bank snapshot reference.
using SnapshotHook = std::function<std::string(int epoch, const HistoricalMapBank&)>;

// Full training loop: bank initialization per cfg.bank_init, per-dataset
// mean-std image normalization, seeded per-epoch shuffles, end-of-epoch EMA
// bank updates, per-epoch validation MAE/MSE.
TrainResult train_run(const std::vector<SyntheticScene>& train_scenes,
                      const std::vector<SyntheticScene>& val_scenes, const TrainConfig& cfg,
                      const SnapshotHook& snapshot_hook = nullptr);

// Forward pass on a raw image with the stored normalization; returns the
// predicted density map.
Grid2D predict_density(const Grid2D& image, const ModelParams& params, float norm_mean,
                       float norm_std);

} // namespace c2d
