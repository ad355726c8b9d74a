#pragma once

#include <filesystem>
#include <utility>
#include <vector>

#include "c2d/bank.hpp"
#include "c2d/grid.hpp"
#include "c2d/rng.hpp"

namespace c2d {

// Integer pixel locations (u, v), all distinct and inside the host grid.
// Where points carry an ordering (detections, top-k picks) the vector order
// is meaningful.
struct PointSet {
    std::vector<std::pair<int, int>> points;
    // Set when a request asked for more points than the prior supports; the
    // remainder was filled uniformly over unchosen pixels.
    bool support_exhausted = false;

    size_t size() const { return points.size(); }
};

// Sequential weighted sampling without replacement: each draw picks a
// not-yet-chosen pixel with probability proportional to its prior mass
// renormalized over the remaining pixels. Deterministic given the RNG state.
// If count exceeds the prior's support, the full support is sampled, the
// remainder is filled uniformly over unchosen pixels, and the result is
// flagged support_exhausted.
PointSet sample_locations(const ProbabilityPrior& prior, int count, Rng& rng);

// Naive baseline: the count pixels of largest prior mass, ties broken by
// row-major index order. count > H*W returns every pixel, flagged.
PointSet top_k_locations(const ProbabilityPrior& prior, int count);

// Renders each point as a truncated Gaussian kernel (radius ceil(3*sigma)),
// renormalized after border truncation so every point contributes mass
// exactly 1; the output therefore integrates to |points|.
Grid2D render_pseudo_density(const PointSet& points, double sigma, int width, int height);

// CSV with header "u,v", one integer pair per row.
void save_points_csv(const PointSet& points, const std::filesystem::path& path);
PointSet load_points_csv(const std::filesystem::path& path);

} // namespace c2d
