#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "c2d/errors.hpp"
#include "c2d/rng.hpp"
#include "c2d/saliency.hpp"

using namespace c2d;

namespace {

std::filesystem::path temp_dir() {
    auto dir = std::filesystem::temp_directory_path() / "c2d_test_saliency";
    std::filesystem::create_directories(dir);
    return dir;
}

Grid2D blob_image(int size, int cu, int cv) {
    Grid2D img(size, size, 0.2f);
    for (int dv = -1; dv <= 1; ++dv) {
        for (int du = -1; du <= 1; ++du) img.at(cu + du, cv + dv) = 1.0f;
    }
    return img;
}

} // namespace

TEST_CASE("constant image yields all-zero saliency") {
    const SaliencyMap s = spectral_residual_saliency(Grid2D(16, 16, 0.42f));
    for (float v : s.map.values) CHECK(v == 0.0f);
}

TEST_CASE("saliency peaks near a planted blob") {
    const int cu = 16, cv = 16;
    const SaliencyMap s = spectral_residual_saliency(blob_image(32, cu, cv));
    // brute-force argmax scan
    int best_u = 0, best_v = 0;
    float best = -1.0f;
    for (int v = 0; v < 32; ++v) {
        for (int u = 0; u < 32; ++u) {
            if (s.map.at(u, v) > best) {
                best = s.map.at(u, v);
                best_u = u;
                best_v = v;
            }
        }
    }
    CHECK(std::abs(best_u - cu) <= 3);
    CHECK(std::abs(best_v - cv) <= 3);
}

TEST_CASE("saliency output is in [0,1] and deterministic") {
    Rng rng(3);
    Grid2D img(24, 20);
    for (float& v : img.values) v = static_cast<float>(rng.uniform());
    const SaliencyMap a = spectral_residual_saliency(img);
    const SaliencyMap b = spectral_residual_saliency(img);
    CHECK(a.map.values == b.map.values);
    float max_seen = 0.0f;
    for (float v : a.map.values) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
        max_seen = std::max(max_seen, v);
    }
    CHECK(max_seen == 1.0f);
}

TEST_CASE("saliency is invariant to constant offsets") {
    const Grid2D base = blob_image(32, 10, 20);
    Grid2D shifted = base;
    for (float& v : shifted.values) v += 7.5f;
    const SaliencyMap a = spectral_residual_saliency(base);
    const SaliencyMap b = spectral_residual_saliency(shifted);
    for (size_t i = 0; i < a.map.values.size(); ++i) {
        CHECK(std::abs(a.map.values[i] - b.map.values[i]) <= 1e-5f);
    }
}

TEST_CASE("saliency rejects tiny images") {
    CHECK_THROWS_AS(spectral_residual_saliency(Grid2D(7, 16, 0.0f)), ParamError);
    CHECK_THROWS_AS(spectral_residual_saliency(Grid2D(16, 7, 0.0f)), ParamError);
}

TEST_CASE("external saliency round trip through c2dg") {
    const SaliencyMap s = spectral_residual_saliency(blob_image(32, 8, 8));
    const auto path = temp_dir() / "saliency.c2dg";
    save_c2dg(s.map, path);
    const SaliencyMap back = load_external_saliency(path);
    CHECK(back.map.values == s.map.values);
}

TEST_CASE("external saliency rescales 8-bit pgm to [0,1]") {
    const auto path = temp_dir() / "gray.pgm";
    {
        std::ofstream os(path, std::ios::binary);
        os << "P5\n2 2\n255\n";
        const unsigned char px[4] = {0, 51, 102, 255};
        os.write(reinterpret_cast<const char*>(px), 4);
    }
    const SaliencyMap s = load_external_saliency(path);
    CHECK(s.map.at(1, 1) == 1.0f);
    CHECK(s.map.at(0, 0) == 0.0f);
    CHECK(s.map.at(1, 0) == doctest::Approx(51.0 / 255.0));
}

TEST_CASE("external saliency rejects truncated pgm") {
    const auto path = temp_dir() / "bad.pgm";
    {
        std::ofstream os(path, std::ios::binary);
        os << "P5\n4 4\n255\nxy";
    }
    CHECK_THROWS_AS(load_external_saliency(path), FormatError);
}
