#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <set>

#include "c2d/errors.hpp"
#include "c2d/synthdata.hpp"

using namespace c2d;

namespace {

SceneConfig small_cfg() {
    SceneConfig cfg;
    cfg.size = 32;
    cfg.count_min = 0;
    cfg.count_max = 40;
    cfg.cluster_count = 3;
    cfg.cluster_spread = 4.0;
    return cfg;
}

std::filesystem::path fresh_dir(const char* name) {
    auto dir = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(dir);
    return dir;
}

} // namespace

TEST_CASE("empty count range gives a blank scene") {
    SceneConfig cfg = small_cfg();
    cfg.count_min = cfg.count_max = 0;
    Rng rng(1);
    const SyntheticScene scene = gen_scene(rng, cfg);
    CHECK(scene.count == 0);
    CHECK(scene.gt_points.points.empty());
    CHECK(integrate(scene.gt_density) == 0.0);
    for (float v : scene.image.values) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
    }
}

TEST_CASE("scene generation is deterministic per seed") {
    const SceneConfig cfg = small_cfg();
    Rng a(77), b(77), c(78);
    const SyntheticScene sa = gen_scene(a, cfg);
    const SyntheticScene sb = gen_scene(b, cfg);
    const SyntheticScene sc = gen_scene(c, cfg);
    CHECK(sa.image.values == sb.image.values);
    CHECK(sa.gt_points.points == sb.gt_points.points);
    CHECK(sa.gt_density.values == sb.gt_density.values);
    CHECK(sa.image.values != sc.image.values);
}

TEST_CASE("gt density integrates to the count") {
    const SceneConfig cfg = small_cfg();
    for (int i = 0; i < 500; ++i) {
        Rng rng(1000 + i);
        const SyntheticScene scene = gen_scene(rng, cfg);
        CHECK(scene.count == static_cast<int>(scene.gt_points.size()));
        CHECK(std::abs(integrate(scene.gt_density) - scene.count) <=
              1e-4 * std::max(1, scene.count));
    }
}

TEST_CASE("heads are distinct pixels inside bounds") {
    const SceneConfig cfg = small_cfg();
    for (int i = 0; i < 50; ++i) {
        Rng rng(400 + i);
        const SyntheticScene scene = gen_scene(rng, cfg);
        std::set<std::pair<int, int>> unique(scene.gt_points.points.begin(),
                                             scene.gt_points.points.end());
        CHECK(unique.size() == scene.gt_points.size());
        for (const auto& [u, v] : scene.gt_points.points) {
            CHECK(u >= 0);
            CHECK(u < cfg.size);
            CHECK(v >= 0);
            CHECK(v < cfg.size);
        }
    }
}

TEST_CASE("denser configs raise mean occupancy") {
    SceneConfig sparse = small_cfg();
    sparse.count_min = 2;
    sparse.count_max = 5;
    SceneConfig dense = small_cfg();
    dense.count_min = 60;
    dense.count_max = 80;
    double sparse_mean = 0.0, dense_mean = 0.0;
    for (int i = 0; i < 20; ++i) {
        Rng ra(i), rb(i);
        const SyntheticScene a = gen_scene(ra, sparse);
        const SyntheticScene b = gen_scene(rb, dense);
        sparse_mean += integrate(a.image) / a.image.size();
        dense_mean += integrate(b.image) / b.image.size();
    }
    CHECK(dense_mean > sparse_mean);
}

TEST_CASE("impossible placements raise a generation error") {
    SceneConfig cfg = small_cfg();
    cfg.count_min = cfg.count_max = 5;
    cfg.cluster_count = 1;
    cfg.cluster_spread = 0.0; // every draw lands on the same pixel
    Rng rng(9);
    CHECK_THROWS_AS(gen_scene(rng, cfg), std::runtime_error);
}

TEST_CASE("gen_scene validates config") {
    Rng rng(1);
    SceneConfig tiny = small_cfg();
    tiny.size = 16;
    CHECK_THROWS_AS(gen_scene(rng, tiny), ParamError);
    SceneConfig inverted = small_cfg();
    inverted.count_min = 10;
    inverted.count_max = 5;
    CHECK_THROWS_AS(gen_scene(rng, inverted), ParamError);
}

TEST_CASE("gen_dataset splits and reproduces") {
    const SceneConfig cfg = small_cfg();
    const SyntheticDataset d = gen_dataset(2024, 10, cfg, 0.8, 0.1, 0.1);
    CHECK(d.train.size() == 8);
    CHECK(d.val.size() == 1);
    CHECK(d.test.size() == 1);

    // regeneration oracle: same seed reproduces every scene bitwise
    const SyntheticDataset d2 = gen_dataset(2024, 10, cfg, 0.8, 0.1, 0.1);
    for (size_t i = 0; i < d.train.size(); ++i) {
        CHECK(d.train[i].image.values == d2.train[i].image.values);
        CHECK(d.train[i].gt_points.points == d2.train[i].gt_points.points);
    }
    CHECK(d.test[0].image.values == d2.test[0].image.values);

    CHECK_THROWS_AS(gen_dataset(1, 10, cfg, 0.5, 0.1, 0.1), ParamError);
}

TEST_CASE("dataset save/load round trip") {
    const SceneConfig cfg = small_cfg();
    const SyntheticDataset d = gen_dataset(31337, 12, cfg, 0.5, 0.25, 0.25);
    const auto dir = fresh_dir("c2d_test_synth_rt");
    save_dataset(d, dir);
    const SyntheticDataset back = load_dataset(dir);
    REQUIRE(back.train.size() == d.train.size());
    REQUIRE(back.val.size() == d.val.size());
    REQUIRE(back.test.size() == d.test.size());
    CHECK(back.seed == d.seed);
    CHECK(back.cfg.size == cfg.size);
    for (size_t i = 0; i < d.train.size(); ++i) {
        CHECK(back.train[i].image.values == d.train[i].image.values);
        CHECK(back.train[i].gt_points.points == d.train[i].gt_points.points);
        CHECK(back.train[i].gt_density.values == d.train[i].gt_density.values);
        CHECK(back.train[i].count == d.train[i].count);
    }

    // manifest counts must agree with the points on disk
    const auto manifest = dir / "manifest.json";
    CHECK(std::filesystem::exists(manifest));
    PointSet tampered = d.train[0].gt_points;
    tampered.points.emplace_back(0, 0);
    if (d.train[0].gt_points.points.front() != std::pair<int, int>{0, 0}) {
        save_points_csv(tampered, dir / "train" / "scene_000000.points.csv");
        CHECK_THROWS_AS(load_dataset(dir), IntegrityError);
    }
}
