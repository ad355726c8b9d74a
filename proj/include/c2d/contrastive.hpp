#pragma once

#include <optional>
#include <vector>

#include "c2d/grid.hpp"
#include "c2d/model.hpp"
#include "c2d/rng.hpp"

namespace c2d {

struct ContrastiveConfig {
    double threshold = 0.2; // on the max-normalized density
    int patch = 8;          // cell side in pixels
    int negatives = 8;      // K
    int batch_cap = 16;     // pair batches per image
    // The loss as published omits the positive from the denominator; this
    // switch restores the standard form.
    bool include_positive_in_denominator = false;
};

// Patch cell in cell coordinates (cell (cu, cv) covers pixels
// [cu*patch, (cu+1)*patch) x [cv*patch, (cv+1)*patch)).
struct CellRef {
    int cu = 0;
    int cv = 0;
};

// One anchor/positive pair (crowd cells) plus K background cells.
struct PairCells {
    CellRef anchor;
    CellRef positive;
    std::vector<CellRef> negatives;
};

// Max-normalizes the density, binarizes at the threshold, tiles full
// patch-size cells, and classifies: crowd if > 50% of pixels are 1,
// background if < 10%, discarded otherwise. Cells whose raw feature average
// is the zero vector are dropped. Returns min(#crowd-1, cap) batches with
// anchor/positive drawn as two distinct crowd cells and K distinct background
// cells, all uniformly; an empty list when there are fewer than 2 crowd or K
// background cells.
std::vector<PairCells> select_pairs(const Grid2D& density, const FeatureGrid& features,
                                    const ContrastiveConfig& cfg, Rng& rng);

// Cell feature average, L2-normalized; nullopt if the raw average is zero.
std::optional<std::vector<double>> patch_embedding(const FeatureGrid& features, CellRef cell,
                                                   int patch);

struct InfoNceResult {
    double loss = 0.0;
    std::vector<double> d_anchor;
    std::vector<double> d_positive;
    std::vector<std::vector<double>> d_negatives;
};

// loss = -log[ exp(a.p/tau) / sum_k exp(a.n_k/tau) ]; with
// include_positive_in_denominator the positive joins the sum. Analytic
// gradients w.r.t. every embedding. Throws ParamError for tau <= 0.
InfoNceResult info_nce(const std::vector<double>& anchor, const std::vector<double>& positive,
                       const std::vector<std::vector<double>>& negatives, double tau,
                       bool include_positive_in_denominator = false);

struct ContrastiveResult {
    double loss = 0.0;
    FeatureGrid feature_grads; // empty when no batches contributed
    int batches_used = 0;
};

// Mean info_nce over the batches, with gradients routed back to the feature
// cells through the embedding average and L2 normalization. Empty batches
// yield loss 0 and no grads.
ContrastiveResult contrastive_loss(const FeatureGrid& features,
                                   const std::vector<PairCells>& batches,
                                   const ContrastiveConfig& cfg, double tau);

} // namespace c2d
