#include "c2d/saliency.hpp"

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <mutex>
#include <vector>

#include "c2d/errors.hpp"

namespace c2d {

namespace {

// The FFTW planner is not thread-safe; plan creation/destruction is locked.
// Executing distinct plans concurrently is fine.
std::mutex& fftw_planner_mutex() {
    static std::mutex m;
    return m;
}

struct FftPlan {
    fftw_plan plan;
    FftPlan(int h, int w, fftw_complex* in, fftw_complex* out, int sign) {
        std::lock_guard<std::mutex> lock(fftw_planner_mutex());
        plan = fftw_plan_dft_2d(h, w, in, out, sign, FFTW_ESTIMATE);
    }
    ~FftPlan() {
        std::lock_guard<std::mutex> lock(fftw_planner_mutex());
        fftw_destroy_plan(plan);
    }
    FftPlan(const FftPlan&) = delete;
    FftPlan& operator=(const FftPlan&) = delete;
};

// 3x3 box filter with reflect borders, preserves constants.
std::vector<double> box3(const std::vector<double>& in, int w, int h) {
    std::vector<double> out(in.size());
    for (int v = 0; v < h; ++v) {
        for (int u = 0; u < w; ++u) {
            double acc = 0.0;
            for (int dv = -1; dv <= 1; ++dv) {
                for (int du = -1; du <= 1; ++du) {
                    acc += in[static_cast<size_t>(reflect_index(v + dv, h)) * w +
                              reflect_index(u + du, w)];
                }
            }
            out[static_cast<size_t>(v) * w + u] = acc / 9.0;
        }
    }
    return out;
}

} // namespace

SaliencyMap spectral_residual_saliency(const Grid2D& image) {
    if (image.width < 8 || image.height < 8) {
        throw ParamError("spectral_residual_saliency: image must be at least 8x8, got " +
                         std::to_string(image.width) + "x" + std::to_string(image.height));
    }
    if (!image.all_finite()) {
        throw ParamError("spectral_residual_saliency: image contains non-finite values");
    }
    const int w = image.width, h = image.height;
    const size_t n = image.size();

    double mean = 0.0;
    for (float v : image.values) mean += v;
    mean /= static_cast<double>(n);

    double max_abs = 0.0;
    std::vector<std::complex<double>> buf(n), spec(n);
    for (size_t i = 0; i < n; ++i) {
        const double x = image.values[i] - mean;
        buf[i] = {x, 0.0};
        max_abs = std::max(max_abs, std::abs(x));
    }
    // No structure after mean removal -> zero residual -> zero saliency.
    if (max_abs == 0.0) return {Grid2D(w, h, 0.0f)};

    auto* fin = reinterpret_cast<fftw_complex*>(buf.data());
    auto* fout = reinterpret_cast<fftw_complex*>(spec.data());
    {
        FftPlan fwd(h, w, fin, fout, FFTW_FORWARD);
        fftw_execute(fwd.plan);
    }

    constexpr double kAmpFloor = 1e-12;
    std::vector<double> log_amp(n), phase(n);
    for (size_t i = 0; i < n; ++i) {
        log_amp[i] = std::log(std::abs(spec[i]) + kAmpFloor);
        phase[i] = std::arg(spec[i]);
    }
    const std::vector<double> smoothed = box3(log_amp, w, h);
    for (size_t i = 0; i < n; ++i) {
        const double residual_amp = std::exp(log_amp[i] - smoothed[i]);
        spec[i] = std::polar(residual_amp, phase[i]);
    }
    {
        FftPlan inv(h, w, fout, fin, FFTW_BACKWARD);
        fftw_execute(inv.plan);
    }

    Grid2D raw(w, h);
    for (size_t i = 0; i < n; ++i) {
        raw.values[i] = static_cast<float>(std::norm(buf[i]));
    }
    return {normalize_max(gaussian_blur(raw, 2.5))};
}

SaliencyMap load_external_saliency(const std::filesystem::path& path) {
    Grid2D map;
    if (path.extension() == ".c2dg") {
        map = load_c2dg(path);
    } else {
        map = load_pgm(path);
    }
    for (float& v : map.values) {
        if (!std::isfinite(v) || v < 0.0f) v = 0.0f;
    }
    return {normalize_max(map)};
}

} // namespace c2d
