#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "c2d/errors.hpp"
#include "c2d/metrics.hpp"
#include "c2d/rng.hpp"

using namespace c2d;

namespace {

Grid2D random_map(int w, int h, uint64_t seed) {
    Rng rng(seed);
    Grid2D g(w, h);
    for (float& v : g.values) v = static_cast<float>(rng.uniform());
    return g;
}

} // namespace

TEST_CASE("counting_errors hand cases") {
    auto [mae0, mse0] = counting_errors({3, 7, 1}, {3, 7, 1});
    CHECK(mae0 == 0.0);
    CHECK(mse0 == 0.0);

    auto [mae1, mse1] = counting_errors({13}, {10});
    CHECK(mae1 == doctest::Approx(3.0));
    CHECK(mse1 == doctest::Approx(3.0));

    auto [mae2, mse2] = counting_errors({4, 10}, {0, 10});
    CHECK(mae2 == doctest::Approx(2.0));
    CHECK(mse2 == doctest::Approx(std::sqrt(8.0)));

    CHECK_THROWS_AS(counting_errors({}, {}), ParamError);
    CHECK_THROWS_AS(counting_errors({1.0}, {1.0, 2.0}), ParamError);
}

TEST_CASE("counting_errors matches a brute-force oracle on random lists") {
    Rng rng(17);
    for (int trial = 0; trial < 100; ++trial) {
        const size_t n = 1 + rng.uniform_int(40);
        std::vector<double> pred(n), gt(n);
        for (size_t i = 0; i < n; ++i) {
            pred[i] = rng.uniform(0.0, 300.0);
            gt[i] = rng.uniform(0.0, 300.0);
        }
        const auto [mae, mse] = counting_errors(pred, gt);
        // independent recomputation, reversed accumulation order
        double abs_sum = 0.0, sq_sum = 0.0;
        for (size_t i = n; i-- > 0;) {
            abs_sum += std::abs(gt[i] - pred[i]);
            sq_sum += (gt[i] - pred[i]) * (gt[i] - pred[i]);
        }
        CHECK(std::abs(mae - abs_sum / n) <= 1e-9);
        CHECK(std::abs(mse - std::sqrt(sq_sum / n)) <= 1e-9);
    }
}

TEST_CASE("ssim identities") {
    const Grid2D x = random_map(24, 18, 3);
    CHECK(ssim(x, x) == 1.0);

    const Grid2D zero(24, 18, 0.0f);
    CHECK(ssim(x, zero) < 1.0);

    const Grid2D y = random_map(24, 18, 4);
    CHECK(std::abs(ssim(x, y) - ssim(y, x)) <= 1e-9);
    CHECK(ssim(x, y) >= -1.0);
    CHECK(ssim(x, y) <= 1.0);

    CHECK_THROWS_AS(ssim(x, Grid2D(10, 10, 0.0f)), ParamError);
}

TEST_CASE("psnr hand cases and monotonicity") {
    const Grid2D x = random_map(16, 16, 5);
    CHECK(std::isinf(psnr(x, x)));

    // uniform difference 0.1 on [0,1]: 10*log10(1/0.01) = 20 dB
    Grid2D a(8, 8, 1.0f);
    Grid2D b(8, 8, 0.9f);
    CHECK(psnr(a, b) == doctest::Approx(20.0).epsilon(1e-6));

    Grid2D c(8, 8, 0.8f);
    CHECK(psnr(a, b) > psnr(a, c));
}

TEST_CASE("subregion_eval equals a brute-force tiling oracle") {
    const Grid2D pred = random_map(4, 4, 7);
    const Grid2D gt = random_map(4, 4, 8);

    auto [mae0, mse0] = subregion_eval(pred, pred, 2);
    CHECK(mae0 == 0.0);
    CHECK(mse0 == 0.0);

    // tile >= size reduces to the whole-image pair
    auto [mae_full, mse_full] = subregion_eval(pred, gt, 4);
    const auto [mae_ref, mse_ref] = counting_errors({integrate(pred)}, {integrate(gt)});
    CHECK(mae_full == doctest::Approx(mae_ref));
    CHECK(mse_full == doctest::Approx(mse_ref));

    // hand-built 2x2 tiles
    std::vector<double> tp, tg;
    for (int v0 = 0; v0 < 4; v0 += 2) {
        for (int u0 = 0; u0 < 4; u0 += 2) {
            double sp = 0.0, sg = 0.0;
            for (int v = v0; v < v0 + 2; ++v) {
                for (int u = u0; u < u0 + 2; ++u) {
                    sp += pred.at(u, v);
                    sg += gt.at(u, v);
                }
            }
            tp.push_back(sp);
            tg.push_back(sg);
        }
    }
    const auto [mae_o, mse_o] = counting_errors(tp, tg);
    const auto [mae, mse] = subregion_eval(pred, gt, 2);
    CHECK(mae == doctest::Approx(mae_o).epsilon(1e-12));
    CHECK(mse == doctest::Approx(mse_o).epsilon(1e-12));
}

TEST_CASE("subregion tiles partition the whole-map count bit-exactly") {
    PointSet points;
    points.points = {{5, 9}, {20, 4}, {11, 30}, {30, 30}, {17, 18}};
    const Grid2D map = render_pseudo_density(points, 2.0, 32, 32);
    const double whole = integrate(map);
    for (int tile : {3, 8, 11}) {
        double total = 0.0;
        for (int v0 = 0; v0 < 32; v0 += tile) {
            for (int u0 = 0; u0 < 32; u0 += tile) {
                total += subregion_count(
                    map, {u0, v0, std::min(tile, 32 - u0), std::min(tile, 32 - v0)});
            }
        }
        CHECK(total == whole);
    }
}

TEST_CASE("localize finds rendered kernels") {
    CHECK(localize(Grid2D(16, 16, 0.0f), 0.01, 2).points.empty());

    PointSet one;
    one.points = {{10, 10}};
    const Grid2D single = render_pseudo_density(one, 2.0, 32, 32);
    const PointSet found = localize(single, 0.2 * single.max_value(), 2);
    REQUIRE(found.size() == 1);
    CHECK(std::abs(found.points[0].first - 10) <= 1);
    CHECK(std::abs(found.points[0].second - 10) <= 1);

    PointSet two;
    two.points = {{8, 8}, {8 + 6, 8 + 6}}; // 3*nms_radius apart in each axis
    const Grid2D pair = render_pseudo_density(two, 1.5, 32, 32);
    const PointSet found2 = localize(pair, 0.2 * pair.max_value(), 2);
    CHECK(found2.size() == 2);
}

TEST_CASE("localization_prf matching") {
    PointSet gt;
    gt.points = {{4, 4}, {20, 20}};

    Prf exact = localization_prf(gt, gt, 2.0);
    CHECK(exact.precision == 1.0);
    CHECK(exact.recall == 1.0);
    CHECK(exact.f1 == 1.0);

    Prf none = localization_prf(PointSet{}, gt, 2.0);
    CHECK(none.precision == 0.0);
    CHECK(none.recall == 0.0);
    CHECK(none.f1 == 0.0);

    PointSet one;
    one.points = {{5, 4}}; // within radius of (4,4) only
    Prf partial = localization_prf(one, gt, 2.0);
    CHECK(partial.precision == doctest::Approx(1.0));
    CHECK(partial.recall == doctest::Approx(0.5));
    CHECK(partial.f1 == doctest::Approx(2.0 / 3.0));

    Prf both_empty = localization_prf(PointSet{}, PointSet{}, 2.0);
    CHECK(both_empty.f1 == 1.0);
}

TEST_CASE("localization matching is one-to-one") {
    PointSet gt;
    gt.points = {{10, 10}};
    PointSet det;
    det.points = {{10, 10}, {11, 10}}; // both near the single gt point
    const Prf prf = localization_prf(det, gt, 3.0);
    CHECK(prf.precision == doctest::Approx(0.5));
    CHECK(prf.recall == doctest::Approx(1.0));
}

TEST_CASE("eval report serializes psnr sentinel") {
    EvalReport r;
    r.psnr = std::numeric_limits<double>::infinity();
    r.ssim = 1.0;
    r.n_images = 2;
    CHECK(r.to_json().find("+inf") != std::string::npos);
    CHECK(r.to_table().find("+inf") != std::string::npos);
}
