#include "c2d/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>

#include "json.hpp"

#include "c2d/errors.hpp"

namespace c2d {

namespace {

constexpr uint64_t kSceneTag = 0x5ce7e;
constexpr uint64_t kSplitTag = 0x5b117;

std::string scene_stem(int i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "scene_%06d", i);
    return buf;
}

} // namespace

SyntheticScene gen_scene(Rng& rng, const SceneConfig& cfg) {
    if (cfg.size < 32) throw ParamError("gen_scene: size must be >= 32");
    if (cfg.count_min < 0 || cfg.count_max < cfg.count_min) {
        throw ParamError("gen_scene: bad count range");
    }
    const long capacity = static_cast<long>(cfg.size) * cfg.size;
    if (cfg.count_max > capacity) {
        throw ParamError("gen_scene: count range exceeds pixel capacity");
    }
    if (cfg.cluster_count < 1) throw ParamError("gen_scene: cluster_count must be >= 1");

    SyntheticScene scene;
    const int n = cfg.size;
    scene.count =
        cfg.count_min + static_cast<int>(rng.uniform_int(cfg.count_max - cfg.count_min + 1));

    std::vector<std::pair<double, double>> centers(cfg.cluster_count);
    for (auto& c : centers) {
        c.first = rng.uniform(0.0, n);
        c.second = rng.uniform(0.0, n);
    }

    std::set<std::pair<int, int>> used;
    long attempts = 0;
    const long max_attempts = 100L * std::max(1, scene.count);
    while (static_cast<int>(used.size()) < scene.count) {
        if (++attempts > max_attempts) {
            throw std::runtime_error("gen_scene: could not place " + std::to_string(scene.count) +
                                     " distinct heads after " + std::to_string(max_attempts) +
                                     " attempts");
        }
        const auto& c = centers[rng.uniform_int(centers.size())];
        const int u = std::clamp(static_cast<int>(std::lround(c.first + cfg.cluster_spread * rng.normal())),
                                 0, n - 1);
        const int v = std::clamp(static_cast<int>(std::lround(c.second + cfg.cluster_spread * rng.normal())),
                                 0, n - 1);
        if (used.insert({u, v}).second) scene.gt_points.points.emplace_back(u, v);
    }

    // Low-frequency background: three random sinusoids rescaled to
    // [0, cfg.background].
    scene.image = Grid2D(n, n, 0.0f);
    struct Wave {
        double fu, fv, phase, amp;
    };
    Wave waves[3];
    for (Wave& w : waves) {
        w.fu = rng.uniform(0.5, 2.0);
        w.fv = rng.uniform(0.5, 2.0);
        w.phase = rng.uniform(0.0, 2.0 * M_PI);
        w.amp = rng.uniform(0.5, 1.0);
    }
    std::vector<double> bg(scene.image.size());
    double bg_min = 0.0, bg_max = 0.0;
    for (int v = 0; v < n; ++v) {
        for (int u = 0; u < n; ++u) {
            double x = 0.0;
            for (const Wave& w : waves) {
                x += w.amp * std::sin(2.0 * M_PI * (w.fu * u + w.fv * v) / n + w.phase);
            }
            bg[static_cast<size_t>(v) * n + u] = x;
            if (v == 0 && u == 0) {
                bg_min = bg_max = x;
            } else {
                bg_min = std::min(bg_min, x);
                bg_max = std::max(bg_max, x);
            }
        }
    }
    const double bg_scale = bg_max > bg_min ? cfg.background / (bg_max - bg_min) : 0.0;
    for (size_t i = 0; i < bg.size(); ++i) {
        scene.image.values[i] = static_cast<float>((bg[i] - bg_min) * bg_scale);
    }

    for (const auto& [hu, hv] : scene.gt_points.points) {
        for (int dv = -cfg.head_radius; dv <= cfg.head_radius; ++dv) {
            for (int du = -cfg.head_radius; du <= cfg.head_radius; ++du) {
                if (du * du + dv * dv > cfg.head_radius * cfg.head_radius) continue;
                const int u = hu + du, v = hv + dv;
                if (u < 0 || u >= n || v < 0 || v >= n) continue;
                scene.image.at(u, v) += 0.9f;
            }
        }
    }

    for (float& p : scene.image.values) {
        p += static_cast<float>(rng.uniform() * cfg.noise);
        p = std::clamp(p, 0.0f, 1.0f);
    }

    scene.gt_density = render_pseudo_density(scene.gt_points, cfg.render_sigma, n, n);
    return scene;
}

SyntheticDataset gen_dataset(uint64_t seed, int n, const SceneConfig& cfg, double train_frac,
                             double val_frac, double test_frac) {
    if (n < 0) throw ParamError("gen_dataset: n must be >= 0");
    if (std::abs(train_frac + val_frac + test_frac - 1.0) > 1e-9) {
        throw ParamError("gen_dataset: split fractions must sum to 1");
    }
    std::vector<SyntheticScene> scenes;
    scenes.reserve(n);
    for (int i = 0; i < n; ++i) {
        Rng rng = Rng::stream(seed, {kSceneTag, static_cast<uint64_t>(i)});
        scenes.push_back(gen_scene(rng, cfg));
    }

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng = Rng::stream(seed, {kSplitTag});
    for (int i = n - 1; i > 0; --i) {
        const int j = static_cast<int>(shuffle_rng.uniform_int(i + 1));
        std::swap(order[i], order[j]);
    }

    const int n_train = static_cast<int>(std::llround(train_frac * n));
    const int n_val = static_cast<int>(std::llround(val_frac * n));

    SyntheticDataset out;
    out.seed = seed;
    out.cfg = cfg;
    for (int k = 0; k < n; ++k) {
        SyntheticScene& s = scenes[order[k]];
        if (k < n_train) {
            out.train.push_back(std::move(s));
        } else if (k < n_train + n_val) {
            out.val.push_back(std::move(s));
        } else {
            out.test.push_back(std::move(s));
        }
    }
    return out;
}

namespace {

nlohmann::json cfg_to_json(const SceneConfig& cfg) {
    return {
        {"size", cfg.size},
        {"count_min", cfg.count_min},
        {"count_max", cfg.count_max},
        {"cluster_count", cfg.cluster_count},
        {"cluster_spread", cfg.cluster_spread},
        {"head_radius", cfg.head_radius},
        {"background", cfg.background},
        {"noise", cfg.noise},
        {"render_sigma", cfg.render_sigma},
    };
}

SceneConfig cfg_from_json(const nlohmann::json& j) {
    SceneConfig cfg;
    cfg.size = j.at("size").get<int>();
    cfg.count_min = j.at("count_min").get<int>();
    cfg.count_max = j.at("count_max").get<int>();
    cfg.cluster_count = j.at("cluster_count").get<int>();
    cfg.cluster_spread = j.at("cluster_spread").get<double>();
    cfg.head_radius = j.at("head_radius").get<int>();
    cfg.background = j.at("background").get<double>();
    cfg.noise = j.at("noise").get<double>();
    cfg.render_sigma = j.at("render_sigma").get<double>();
    return cfg;
}

void save_split(const std::vector<SyntheticScene>& scenes, const std::filesystem::path& dir,
                bool write_pgm, nlohmann::json& manifest_counts) {
    std::filesystem::create_directories(dir);
    for (size_t i = 0; i < scenes.size(); ++i) {
        const std::string stem = scene_stem(static_cast<int>(i));
        save_c2dg(scenes[i].image, dir / (stem + ".image.c2dg"));
        save_points_csv(scenes[i].gt_points, dir / (stem + ".points.csv"));
        save_c2dg(scenes[i].gt_density, dir / (stem + ".density.c2dg"));
        if (write_pgm) save_pgm16(scenes[i].image, dir / (stem + ".image.pgm"));
        manifest_counts.push_back(scenes[i].count);
    }
}

std::vector<SyntheticScene> load_split(const std::filesystem::path& dir, size_t expected) {
    std::vector<SyntheticScene> scenes;
    scenes.reserve(expected);
    for (size_t i = 0; i < expected; ++i) {
        const std::string stem = scene_stem(static_cast<int>(i));
        SyntheticScene s;
        s.image = load_c2dg(dir / (stem + ".image.c2dg"));
        s.gt_points = load_points_csv(dir / (stem + ".points.csv"));
        s.gt_density = load_c2dg(dir / (stem + ".density.c2dg"));
        s.count = static_cast<int>(s.gt_points.size());
        scenes.push_back(std::move(s));
    }
    return scenes;
}

} // namespace

void save_dataset(const SyntheticDataset& dataset, const std::filesystem::path& dir,
                  bool write_pgm) {
    std::filesystem::create_directories(dir);
    nlohmann::json manifest = {
        {"format_version", 1},
        {"seed", dataset.seed},
        {"cfg", cfg_to_json(dataset.cfg)},
        {"train_counts", nlohmann::json::array()},
        {"val_counts", nlohmann::json::array()},
        {"test_counts", nlohmann::json::array()},
    };
    save_split(dataset.train, dir / "train", write_pgm, manifest["train_counts"]);
    save_split(dataset.val, dir / "val", write_pgm, manifest["val_counts"]);
    save_split(dataset.test, dir / "test", write_pgm, manifest["test_counts"]);
    std::ofstream os(dir / "manifest.json");
    if (!os) throw FormatError("save_dataset: cannot write manifest in " + dir.string());
    os << manifest.dump(2) << "\n";
}

SyntheticDataset load_dataset(const std::filesystem::path& dir) {
    std::ifstream is(dir / "manifest.json");
    if (!is) throw IntegrityError("load_dataset: missing manifest.json in " + dir.string());
    nlohmann::json manifest;
    try {
        is >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("load_dataset: bad manifest: " + std::string(e.what()));
    }
    SyntheticDataset out;
    out.seed = manifest.at("seed").get<uint64_t>();
    out.cfg = cfg_from_json(manifest.at("cfg"));
    out.train = load_split(dir / "train", manifest.at("train_counts").size());
    out.val = load_split(dir / "val", manifest.at("val_counts").size());
    out.test = load_split(dir / "test", manifest.at("test_counts").size());

    auto check_counts = [&](const std::vector<SyntheticScene>& scenes, const nlohmann::json& counts,
                            const char* split) {
        for (size_t i = 0; i < scenes.size(); ++i) {
            if (scenes[i].count != counts[i].get<int>()) {
                throw IntegrityError(std::string("load_dataset: ") + split + " scene " +
                                     std::to_string(i) + " count disagrees with manifest");
            }
        }
    };
    check_counts(out.train, manifest.at("train_counts"), "train");
    check_counts(out.val, manifest.at("val_counts"), "val");
    check_counts(out.test, manifest.at("test_counts"), "test");
    return out;
}

} // namespace c2d
