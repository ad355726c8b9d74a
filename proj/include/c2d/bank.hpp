#pragma once

#include <filesystem>
#include <vector>

#include "c2d/grid.hpp"
#include "c2d/saliency.hpp"

namespace c2d {

// Per-image store of exponentially averaged past predictions. Entry i is only
// ever updated from predictions on image i.
struct HistoricalMapBank {
    std::vector<Grid2D> entries;
    double alpha = 0.7;
    int epoch = 0;
    // Updates that had negative prediction pixels clamped to zero.
    long clamp_warnings = 0;

    int entry_width() const { return entries.empty() ? 0 : entries.front().width; }
    int entry_height() const { return entries.empty() ? 0 : entries.front().height; }
};

// Nonnegative map summing to 1, ready for weighted location sampling.
struct ProbabilityPrior {
    Grid2D map;
    bool degenerate = false; // uniform fallback for an all-zero entry
};

// Entry i = saliency map i, epoch 0. All maps must share one shape and alpha
// must lie in [0,1].
HistoricalMapBank init_bank(const std::vector<SaliencyMap>& saliency_maps, double alpha);

// Baseline initialization: every entry is a centered disk of ones of the
// given radius (pixels with du^2+dv^2 <= radius^2 around the center).
HistoricalMapBank init_bank_blob(int width, int height, int n, int radius, double alpha);

// entry_i <- alpha*predicted + (1-alpha)*entry_i. Negative prediction pixels
// are clamped to 0 first (counted in clamp_warnings).
void ema_update(HistoricalMapBank& bank, int i, const Grid2D& predicted);

// normalize_max -> gaussian_blur(blur_sigma) -> clamp tiny negatives ->
// divide by the total so the map sums to 1. An all-zero entry yields the
// uniform prior, flagged degenerate.
ProbabilityPrior make_prior(const HistoricalMapBank& bank, int i, double blur_sigma);

// Same normalization pipeline applied to a free-standing map (used by the
// bank-less ablation, where the prior is rebuilt from the current prediction).
ProbabilityPrior make_prior_from_map(const Grid2D& map, double blur_sigma);

// Directory layout: bank.json manifest {format_version, n, alpha, epoch,
// height, width} plus entry_%06d.c2dg per entry. Loading is strict: the
// manifest and the entry files must agree exactly.
void save_bank(const HistoricalMapBank& bank, const std::filesystem::path& dir);
HistoricalMapBank load_bank(const std::filesystem::path& dir);

} // namespace c2d
