#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "c2d/grid.hpp"

namespace c2d {

inline constexpr int kConv1Channels = 8;
inline constexpr int kFeatureChannels = 16;

// Named weight buffer with a paired gradient buffer of identical shape.
struct Tensor {
    std::string name;
    std::vector<int> shape;
    std::vector<float> w;
    std::vector<float> g;

    Tensor() = default;
    Tensor(std::string n, std::vector<int> s);
    size_t count() const { return w.size(); }
};

// Predictor weights: conv1 3x3 (1->8), conv2 3x3 (8->16), head 1x1 (16->1),
// each with bias. Convolutions use same (zero) padding; output keeps the
// input resolution.
struct ModelParams {
    Tensor conv1_w{"conv1_w", {kConv1Channels, 1, 3, 3}};
    Tensor conv1_b{"conv1_b", {kConv1Channels}};
    Tensor conv2_w{"conv2_w", {kFeatureChannels, kConv1Channels, 3, 3}};
    Tensor conv2_b{"conv2_b", {kFeatureChannels}};
    Tensor head_w{"head_w", {1, kFeatureChannels, 1, 1}};
    Tensor head_b{"head_b", {1}};

    std::array<Tensor*, 6> tensors();
    std::array<const Tensor*, 6> tensors() const;
    void zero_grads();
};

// Spatial feature stack, channel-major: value(c, u, v) = values[(c*H + v)*W + u].
// Held in double so finite-difference gradient checks are not noise-limited;
// weights themselves stay float32.
struct FeatureGrid {
    int channels = 0;
    int width = 0;
    int height = 0;
    std::vector<double> values;

    FeatureGrid() = default;
    FeatureGrid(int c, int w, int h, double fill = 0.0)
        : channels(c), width(w), height(h),
          values(static_cast<size_t>(c) * w * h, fill) {}

    double at(int c, int u, int v) const {
        return values[(static_cast<size_t>(c) * height + v) * width + u];
    }
    double& at(int c, int u, int v) {
        return values[(static_cast<size_t>(c) * height + v) * width + u];
    }
    double* plane(int c) { return values.data() + static_cast<size_t>(c) * width * height; }
    const double* plane(int c) const {
        return values.data() + static_cast<size_t>(c) * width * height;
    }
};

// Intermediates of one forward pass, consumed by backward. One cache per
// concurrent inference; params themselves stay read-only in forward.
struct ForwardCache {
    bool valid = false;
    Grid2D input;
    std::vector<double> z1, a1, z2; // conv pre/post activations
    FeatureGrid features;           // relu(z2), the contrastive feature path
    std::vector<double> head_pre;   // pre-softplus head output
    Grid2D density;                 // softplus(head_pre), strictly positive
};

// conv1 -> ReLU -> conv2 -> ReLU = features; 1x1 head -> softplus = density.
// The image is expected mean-std normalized by the caller. Throws ParamError
// below 8x8.
void forward(const Grid2D& image, const ModelParams& params, ForwardCache& cache);

// Accumulates parameter gradients for both loss paths (density head and
// contrastive feature path) into the params' gradient buffers. d_features may
// be empty (no contrastive contribution). Throws StateError without a prior
// forward on this cache.
void backward(ModelParams& params, const ForwardCache& cache, const Grid2D& d_density,
              const FeatureGrid& d_features);

// params <- params - lr*(grad + weight_decay*params); grads zeroed after the
// step. Refuses the step (NumericError naming the tensor) on non-finite grads.
void sgd_step(ModelParams& params, double learning_rate, double weight_decay);

// Kernels uniform in [-a, a] with a = sqrt(6/(fan_in+fan_out)); biases zero.
// Deterministic per seed.
ModelParams init_params(uint64_t seed);

// Params checkpoint: magic "C2DP", u32 version, then per tensor (u32 name
// length, name, u32 rank, u32 dims, float32 LE data). norm_mean/norm_std are
// the dataset normalization constants applied before forward.
void save_checkpoint(const ModelParams& params, float norm_mean, float norm_std,
                     const std::filesystem::path& path);

struct LoadedModel {
    ModelParams params;
    float norm_mean = 0.0f;
    float norm_std = 1.0f;
};
LoadedModel load_checkpoint(const std::filesystem::path& path);

} // namespace c2d
