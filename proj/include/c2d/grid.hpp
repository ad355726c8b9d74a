#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

namespace c2d {

// Single-channel W x H raster. Values are float32, stored row-major and
// indexed (u, v) with u in [0, W) and v in [0, H). All grid operations
// return new grids; instances are treated as immutable once built.
struct Grid2D {
    int width = 0;
    int height = 0;
    std::vector<float> values;

    Grid2D() = default;
    Grid2D(int w, int h, float fill = 0.0f);

    float at(int u, int v) const { return values[static_cast<size_t>(v) * width + u]; }
    float& at(int u, int v) { return values[static_cast<size_t>(v) * width + u]; }

    size_t size() const { return values.size(); }
    bool same_shape(const Grid2D& other) const {
        return width == other.width && height == other.height;
    }
    bool all_finite() const;
    float max_value() const;
};

// Axis-aligned subregion, inclusive top-left (u0, v0).
struct Rect {
    int u0 = 0;
    int v0 = 0;
    int width = 0;
    int height = 0;
};

// Sum of all values. Accumulation is row-major in double; subregion sums use
// the same order so exact tilings partition the total bit-exactly.
double integrate(const Grid2D& map);

// Sum of values inside the rect. Throws BoundsError if the rect is not fully
// inside the map.
double subregion_count(const Grid2D& map, const Rect& region);

// Divide by the map maximum; an all-zero map is returned unchanged.
Grid2D normalize_max(const Grid2D& map);

// Separable Gaussian, kernel radius ceil(3*sigma), kernel renormalized to
// sum 1, reflect border. Throws ParamError for sigma <= 0.
Grid2D gaussian_blur(const Grid2D& map, double sigma);

// Output pixel = 1 iff input pixel > t.
Grid2D threshold_binarize(const Grid2D& map, double t);

// Mirror index into [0, n): -1 -> 0, -2 -> 1, n -> n-1.
int reflect_index(int i, int n);

// Binary grid format ".c2dg": magic "C2DG", u32 LE version=1, height, width,
// then height*width float32 LE row-major.
void save_c2dg(const Grid2D& map, const std::filesystem::path& path);
Grid2D load_c2dg(const std::filesystem::path& path);

// 16-bit binary PGM (P5, maxval 65535, big-endian samples). Values are
// rescaled linearly to [0, 65535] by the map max; an all-zero map exports
// all zeros.
void save_pgm16(const Grid2D& map, const std::filesystem::path& path);

// Reads P2/P5 PGM, 8 or 16 bit. Returns raw gray values as floats.
Grid2D load_pgm(const std::filesystem::path& path);

} // namespace c2d
