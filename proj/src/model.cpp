#include "c2d/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "c2d/errors.hpp"
#include "c2d/rng.hpp"

namespace c2d {

Tensor::Tensor(std::string n, std::vector<int> s) : name(std::move(n)), shape(std::move(s)) {
    size_t count = 1;
    for (int d : shape) count *= static_cast<size_t>(d);
    w.assign(count, 0.0f);
    g.assign(count, 0.0f);
}

std::array<Tensor*, 6> ModelParams::tensors() {
    return {&conv1_w, &conv1_b, &conv2_w, &conv2_b, &head_w, &head_b};
}

std::array<const Tensor*, 6> ModelParams::tensors() const {
    return {&conv1_w, &conv1_b, &conv2_w, &conv2_b, &head_w, &head_b};
}

void ModelParams::zero_grads() {
    for (Tensor* t : tensors()) std::fill(t->g.begin(), t->g.end(), 0.0f);
}

namespace {

// out[v][u] += w * in[v+dy][u+dx] over the in-bounds overlap (zero padding).
void shifted_axpy(double* out, const double* in, int w, int h, int dy, int dx, double weight) {
    const int v0 = std::max(0, -dy), v1 = std::min(h, h - dy);
    const int u0 = std::max(0, -dx), u1 = std::min(w, w - dx);
    for (int v = v0; v < v1; ++v) {
        double* orow = out + static_cast<size_t>(v) * w;
        const double* irow = in + static_cast<size_t>(v + dy) * w + dx;
        for (int u = u0; u < u1; ++u) orow[u] += weight * irow[u];
    }
}

// sum over the overlap of b[v][u] * a[v+dy][u+dx].
double shifted_dot(const double* a, const double* b, int w, int h, int dy, int dx) {
    const int v0 = std::max(0, -dy), v1 = std::min(h, h - dy);
    const int u0 = std::max(0, -dx), u1 = std::min(w, w - dx);
    double acc = 0.0;
    for (int v = v0; v < v1; ++v) {
        const double* brow = b + static_cast<size_t>(v) * w;
        const double* arow = a + static_cast<size_t>(v + dy) * w + dx;
        for (int u = u0; u < u1; ++u) acc += brow[u] * arow[u];
    }
    return acc;
}

// 3x3 convolution, zero padding, same resolution.
void conv3x3_forward(const double* in, int in_ch, double* out, int out_ch, int w, int h,
                     const Tensor& weights, const Tensor& bias) {
    const size_t plane = static_cast<size_t>(w) * h;
    for (int o = 0; o < out_ch; ++o) {
        double* oplane = out + o * plane;
        std::fill(oplane, oplane + plane, static_cast<double>(bias.w[o]));
        for (int i = 0; i < in_ch; ++i) {
            const double* iplane = in + i * plane;
            const float* k = &weights.w[(static_cast<size_t>(o) * in_ch + i) * 9];
            for (int ky = 0; ky < 3; ++ky) {
                for (int kx = 0; kx < 3; ++kx) {
                    shifted_axpy(oplane, iplane, w, h, ky - 1, kx - 1, k[ky * 3 + kx]);
                }
            }
        }
    }
}

void conv3x3_backward(const double* in, int in_ch, const double* d_out, int out_ch, int w, int h,
                      const Tensor& weights, Tensor& d_weights, Tensor& d_bias, double* d_in) {
    const size_t plane = static_cast<size_t>(w) * h;
    for (int o = 0; o < out_ch; ++o) {
        const double* dplane = d_out + o * plane;
        double db = 0.0;
        for (size_t p = 0; p < plane; ++p) db += dplane[p];
        d_bias.g[o] += static_cast<float>(db);
        for (int i = 0; i < in_ch; ++i) {
            const double* iplane = in + i * plane;
            const size_t kbase = (static_cast<size_t>(o) * in_ch + i) * 9;
            for (int ky = 0; ky < 3; ++ky) {
                for (int kx = 0; kx < 3; ++kx) {
                    d_weights.g[kbase + ky * 3 + kx] += static_cast<float>(
                        shifted_dot(iplane, dplane, w, h, ky - 1, kx - 1));
                    if (d_in != nullptr) {
                        // d_in[v+dy][u+dx] += w * d_out[v][u]
                        shifted_axpy(d_in + i * plane, dplane, w, h, -(ky - 1), -(kx - 1),
                                     weights.w[kbase + ky * 3 + kx]);
                    }
                }
            }
        }
    }
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double sigmoid(double x) {
    const double e = std::exp(-std::abs(x));
    const double s = 1.0 / (1.0 + e);
    return x >= 0.0 ? s : 1.0 - s;
}

} // namespace

void forward(const Grid2D& image, const ModelParams& params, ForwardCache& cache) {
    if (image.width < 8 || image.height < 8) {
        throw ParamError("forward: image must be at least 8x8, got " +
                         std::to_string(image.width) + "x" + std::to_string(image.height));
    }
    const int w = image.width, h = image.height;
    const size_t plane = static_cast<size_t>(w) * h;

    cache.input = image;
    std::vector<double> input_d(plane);
    for (size_t p = 0; p < plane; ++p) input_d[p] = image.values[p];

    cache.z1.assign(plane * kConv1Channels, 0.0);
    conv3x3_forward(input_d.data(), 1, cache.z1.data(), kConv1Channels, w, h, params.conv1_w,
                    params.conv1_b);
    cache.a1 = cache.z1;
    for (double& v : cache.a1) v = std::max(v, 0.0);

    cache.z2.assign(plane * kFeatureChannels, 0.0);
    conv3x3_forward(cache.a1.data(), kConv1Channels, cache.z2.data(), kFeatureChannels, w, h,
                    params.conv2_w, params.conv2_b);
    cache.features = FeatureGrid(kFeatureChannels, w, h);
    for (size_t i = 0; i < cache.z2.size(); ++i) {
        cache.features.values[i] = std::max(cache.z2[i], 0.0);
    }

    cache.head_pre.assign(plane, static_cast<double>(params.head_b.w[0]));
    for (int c = 0; c < kFeatureChannels; ++c) {
        const double hw = params.head_w.w[c];
        const double* fplane = cache.features.plane(c);
        for (size_t p = 0; p < plane; ++p) cache.head_pre[p] += hw * fplane[p];
    }
    cache.density = Grid2D(w, h);
    for (size_t p = 0; p < plane; ++p) {
        cache.density.values[p] = static_cast<float>(softplus(cache.head_pre[p]));
    }
    cache.valid = true;
}

void backward(ModelParams& params, const ForwardCache& cache, const Grid2D& d_density,
              const FeatureGrid& d_features) {
    if (!cache.valid) throw StateError("backward: no matching forward pass cached");
    const int w = cache.input.width, h = cache.input.height;
    const size_t plane = static_cast<size_t>(w) * h;
    if (!d_density.same_shape(cache.density)) {
        throw ParamError("backward: d_density shape mismatch");
    }
    const bool has_dfeat = !d_features.values.empty();
    if (has_dfeat && (d_features.channels != kFeatureChannels || d_features.width != w ||
                      d_features.height != h)) {
        throw ParamError("backward: d_features shape mismatch");
    }

    // Head: density = softplus(head_pre), head_pre = head_w . features + head_b
    std::vector<double> ds(plane);
    for (size_t p = 0; p < plane; ++p) {
        ds[p] = d_density.values[p] * sigmoid(cache.head_pre[p]);
    }
    double db = 0.0;
    for (size_t p = 0; p < plane; ++p) db += ds[p];
    params.head_b.g[0] += static_cast<float>(db);

    std::vector<double> da2(plane * kFeatureChannels, 0.0);
    for (int c = 0; c < kFeatureChannels; ++c) {
        const double* fplane = cache.features.plane(c);
        double dw = 0.0;
        for (size_t p = 0; p < plane; ++p) dw += ds[p] * fplane[p];
        params.head_w.g[c] += static_cast<float>(dw);
        double* dplane = da2.data() + c * plane;
        const double hw = params.head_w.w[c];
        for (size_t p = 0; p < plane; ++p) dplane[p] = ds[p] * hw;
        if (has_dfeat) {
            const double* ext = d_features.plane(c);
            for (size_t p = 0; p < plane; ++p) dplane[p] += ext[p];
        }
    }

    // ReLU at conv2 output
    std::vector<double> dz2(plane * kFeatureChannels);
    for (size_t i = 0; i < dz2.size(); ++i) dz2[i] = cache.z2[i] > 0.0 ? da2[i] : 0.0;

    std::vector<double> da1(plane * kConv1Channels, 0.0);
    conv3x3_backward(cache.a1.data(), kConv1Channels, dz2.data(), kFeatureChannels, w, h,
                     params.conv2_w, params.conv2_w, params.conv2_b, da1.data());

    std::vector<double> dz1(plane * kConv1Channels);
    for (size_t i = 0; i < dz1.size(); ++i) dz1[i] = cache.z1[i] > 0.0 ? da1[i] : 0.0;

    std::vector<double> input_d(plane);
    for (size_t p = 0; p < plane; ++p) input_d[p] = cache.input.values[p];
    conv3x3_backward(input_d.data(), 1, dz1.data(), kConv1Channels, w, h, params.conv1_w,
                     params.conv1_w, params.conv1_b, nullptr);
}

void sgd_step(ModelParams& params, double learning_rate, double weight_decay) {
    for (const Tensor* t : params.tensors()) {
        for (size_t i = 0; i < t->g.size(); ++i) {
            if (!std::isfinite(t->g[i])) {
                throw NumericError("sgd_step: non-finite gradient in tensor " + t->name);
            }
        }
    }
    for (Tensor* t : params.tensors()) {
        for (size_t i = 0; i < t->w.size(); ++i) {
            const double step = learning_rate * (t->g[i] + weight_decay * t->w[i]);
            t->w[i] = static_cast<float>(t->w[i] - step);
        }
        std::fill(t->g.begin(), t->g.end(), 0.0f);
    }
}

ModelParams init_params(uint64_t seed) {
    ModelParams params;
    int idx = 0;
    for (Tensor* t : params.tensors()) {
        const bool is_bias = t->shape.size() == 1;
        Rng rng = Rng::stream(seed, {0x1417, static_cast<uint64_t>(idx++)});
        if (is_bias) continue; // biases stay zero
        const int out_ch = t->shape[0];
        const int in_ch = t->shape[1];
        const int k = t->shape[2] * t->shape[3];
        const double fan_in = static_cast<double>(in_ch) * k;
        const double fan_out = static_cast<double>(out_ch) * k;
        const double a = std::sqrt(6.0 / (fan_in + fan_out));
        for (float& v : t->w) v = static_cast<float>(rng.uniform(-a, a));
    }
    return params;
}

namespace {

constexpr char kCkptMagic[4] = {'C', '2', 'D', 'P'};
constexpr uint32_t kCkptVersion = 1;

void write_u32(std::ostream& os, uint32_t x) {
    unsigned char b[4] = {static_cast<unsigned char>(x & 0xff),
                          static_cast<unsigned char>((x >> 8) & 0xff),
                          static_cast<unsigned char>((x >> 16) & 0xff),
                          static_cast<unsigned char>((x >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

bool read_u32(std::istream& is, uint32_t& out) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) return false;
    out = static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
          (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
    return true;
}

void write_tensor(std::ostream& os, const std::string& name, const std::vector<int>& shape,
                  const std::vector<float>& data) {
    write_u32(os, static_cast<uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(os, static_cast<uint32_t>(shape.size()));
    for (int d : shape) write_u32(os, static_cast<uint32_t>(d));
    for (float f : data) {
        uint32_t x;
        std::memcpy(&x, &f, 4);
        write_u32(os, x);
    }
}

} // namespace

void save_checkpoint(const ModelParams& params, float norm_mean, float norm_std,
                     const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("checkpoint: cannot open for writing: " + path.string());
    os.write(kCkptMagic, 4);
    write_u32(os, kCkptVersion);
    for (const Tensor* t : params.tensors()) write_tensor(os, t->name, t->shape, t->w);
    write_tensor(os, "norm_mean", {1}, {norm_mean});
    write_tensor(os, "norm_std", {1}, {norm_std});
    if (!os) throw FormatError("checkpoint: write failed: " + path.string());
}

LoadedModel load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("checkpoint: cannot open: " + path.string());
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kCkptMagic, 4) != 0) {
        throw FormatError("checkpoint: bad magic in " + path.string());
    }
    uint32_t version = 0;
    if (!read_u32(is, version) || version != kCkptVersion) {
        throw FormatError("checkpoint: unsupported version in " + path.string());
    }

    LoadedModel model;
    std::vector<std::string> seen;
    uint32_t name_len = 0;
    while (read_u32(is, name_len)) {
        if (name_len == 0 || name_len > 256) {
            throw FormatError("checkpoint: bad tensor name length in " + path.string());
        }
        std::string name(name_len, '\0');
        if (!is.read(name.data(), name_len)) {
            throw FormatError("checkpoint: truncated tensor name in " + path.string());
        }
        uint32_t rank = 0;
        if (!read_u32(is, rank) || rank > 8) {
            throw FormatError("checkpoint: bad rank for tensor " + name);
        }
        std::vector<int> shape(rank);
        size_t count = 1;
        for (uint32_t i = 0; i < rank; ++i) {
            uint32_t d = 0;
            if (!read_u32(is, d) || d == 0) {
                throw FormatError("checkpoint: bad dim for tensor " + name);
            }
            shape[i] = static_cast<int>(d);
            count *= d;
        }
        std::vector<float> data(count);
        for (size_t i = 0; i < count; ++i) {
            uint32_t x = 0;
            if (!read_u32(is, x)) {
                throw FormatError("checkpoint: truncated data for tensor " + name);
            }
            std::memcpy(&data[i], &x, 4);
        }
        seen.push_back(name);

        bool matched = false;
        for (Tensor* t : model.params.tensors()) {
            if (t->name == name) {
                if (t->shape != shape) {
                    throw FormatError("checkpoint: shape mismatch for tensor " + name);
                }
                t->w = std::move(data);
                matched = true;
                break;
            }
        }
        if (!matched) {
            if (name == "norm_mean") {
                model.norm_mean = data.at(0);
            } else if (name == "norm_std") {
                model.norm_std = data.at(0);
            } else {
                throw FormatError("checkpoint: unknown tensor " + name + " in " + path.string());
            }
        }
    }
    for (const Tensor* t : model.params.tensors()) {
        if (std::find(seen.begin(), seen.end(), t->name) == seen.end()) {
            throw FormatError("checkpoint: missing tensor " + t->name + " in " + path.string());
        }
    }
    return model;
}

} // namespace c2d
