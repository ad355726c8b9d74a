#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "c2d/grid.hpp"
#include "c2d/pseudo.hpp"
#include "c2d/rng.hpp"

namespace c2d {

struct SceneConfig {
    int size = 64;               // square scenes
    int count_min = 5;
    int count_max = 50;
    int cluster_count = 4;
    double cluster_spread = 6.0; // isotropic Gaussian sigma around cluster centers
    int head_radius = 2;
    double background = 0.3;     // low-frequency background amplitude
    double noise = 0.05;         // per-pixel uniform noise amplitude
    double render_sigma = 2.0;   // gt density kernel width, same rule as pseudo maps
};

// One generated crowd scene. count == |gt_points| and the gt density
// integrates to count.
struct SyntheticScene {
    Grid2D image;       // grayscale in [0,1]
    PointSet gt_points; // distinct integer head positions
    Grid2D gt_density;
    int count = 0;
};

// Deterministic per RNG state. Draw order: count, cluster centers, head
// positions, background field, pixel noise. Throws a generation error when
// distinct heads cannot be placed within 100*count attempts.
SyntheticScene gen_scene(Rng& rng, const SceneConfig& cfg);

struct SyntheticDataset {
    std::vector<SyntheticScene> train, val, test;
    uint64_t seed = 0;
    SceneConfig cfg;
};

// n scenes generated from per-index substreams of the seed, partitioned by a
// seeded shuffle into train/val/test.
SyntheticDataset gen_dataset(uint64_t seed, int n, const SceneConfig& cfg, double train_frac,
                             double val_frac, double test_frac);

// Directory layout: manifest.json at the root; per split subdirectory,
// scene_%06d.image.c2dg / .points.csv / .density.c2dg (plus .image.pgm when
// write_pgm is set).
void save_dataset(const SyntheticDataset& dataset, const std::filesystem::path& dir,
                  bool write_pgm = false);
SyntheticDataset load_dataset(const std::filesystem::path& dir);

} // namespace c2d
