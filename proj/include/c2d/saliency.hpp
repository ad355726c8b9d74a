#pragma once

#include <filesystem>

#include "c2d/grid.hpp"

namespace c2d {

// Unsupervised spatial prior in [0,1], same shape as the source image.
struct SaliencyMap {
    Grid2D map;
};

// Spectral-residual saliency: FFT of the mean-normalized image, log-amplitude
// minus its 3x3 box-filtered version, inverse transform with the original
// phase, squared magnitude, Gaussian blur sigma=2.5, max-normalize.
// Deterministic; a constant image yields an all-zero map. Throws ParamError
// for images smaller than 8x8.
SaliencyMap spectral_residual_saliency(const Grid2D& image);

// Loads a precomputed saliency map (.c2dg or 8/16-bit PGM) and rescales it to
// [0,1] by its maximum.
SaliencyMap load_external_saliency(const std::filesystem::path& path);

} // namespace c2d
