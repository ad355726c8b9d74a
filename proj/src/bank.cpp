#include "c2d/bank.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <string>

#include "json.hpp"

#include "c2d/errors.hpp"

namespace c2d {

namespace {

void check_alpha(double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
        throw ParamError("bank: alpha must be in [0,1], got " + std::to_string(alpha));
    }
}

std::string entry_filename(int i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "entry_%06d.c2dg", i);
    return buf;
}

} // namespace

HistoricalMapBank init_bank(const std::vector<SaliencyMap>& saliency_maps, double alpha) {
    check_alpha(alpha);
    HistoricalMapBank bank;
    bank.alpha = alpha;
    bank.entries.reserve(saliency_maps.size());
    for (size_t i = 0; i < saliency_maps.size(); ++i) {
        const Grid2D& m = saliency_maps[i].map;
        if (i > 0 && !m.same_shape(saliency_maps[0].map)) {
            throw ParamError("init_bank: saliency map " + std::to_string(i) +
                             " shape mismatch");
        }
        bank.entries.push_back(m);
    }
    return bank;
}

HistoricalMapBank init_bank_blob(int width, int height, int n, int radius, double alpha) {
    check_alpha(alpha);
    if (radius < 0 || 2 * radius >= std::min(width, height)) {
        throw ParamError("init_bank_blob: radius " + std::to_string(radius) +
                         " too large for " + std::to_string(width) + "x" +
                         std::to_string(height));
    }
    Grid2D disk(width, height, 0.0f);
    const int cu = width / 2, cv = height / 2;
    for (int dv = -radius; dv <= radius; ++dv) {
        for (int du = -radius; du <= radius; ++du) {
            if (du * du + dv * dv <= radius * radius) disk.at(cu + du, cv + dv) = 1.0f;
        }
    }
    HistoricalMapBank bank;
    bank.alpha = alpha;
    bank.entries.assign(static_cast<size_t>(n), disk);
    return bank;
}

void ema_update(HistoricalMapBank& bank, int i, const Grid2D& predicted) {
    if (i < 0 || static_cast<size_t>(i) >= bank.entries.size()) {
        throw ParamError("ema_update: entry index " + std::to_string(i) + " out of range");
    }
    Grid2D& entry = bank.entries[i];
    if (!predicted.same_shape(entry)) {
        throw ParamError("ema_update: prediction shape mismatch for entry " + std::to_string(i));
    }
    const double a = bank.alpha;
    bool clamped = false;
    for (size_t k = 0; k < entry.values.size(); ++k) {
        double p = predicted.values[k];
        if (p < 0.0) {
            p = 0.0;
            clamped = true;
        }
        entry.values[k] = static_cast<float>(a * p + (1.0 - a) * entry.values[k]);
    }
    if (clamped) ++bank.clamp_warnings;
}

ProbabilityPrior make_prior_from_map(const Grid2D& map, double blur_sigma) {
    Grid2D m = gaussian_blur(normalize_max(map), blur_sigma);
    double total = 0.0;
    for (float& v : m.values) {
        if (v < 0.0f) v = 0.0f;
        total += v;
    }
    ProbabilityPrior prior;
    if (total <= 0.0) {
        const float uniform = 1.0f / static_cast<float>(m.size());
        prior.map = Grid2D(m.width, m.height, uniform);
        prior.degenerate = true;
        return prior;
    }
    for (float& v : m.values) v = static_cast<float>(v / total);
    prior.map = std::move(m);
    return prior;
}

ProbabilityPrior make_prior(const HistoricalMapBank& bank, int i, double blur_sigma) {
    if (i < 0 || static_cast<size_t>(i) >= bank.entries.size()) {
        throw ParamError("make_prior: entry index " + std::to_string(i) + " out of range");
    }
    return make_prior_from_map(bank.entries[i], blur_sigma);
}

void save_bank(const HistoricalMapBank& bank, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    nlohmann::json manifest = {
        {"format_version", 1},
        {"n", bank.entries.size()},
        {"alpha", bank.alpha},
        {"epoch", bank.epoch},
        {"height", bank.entry_height()},
        {"width", bank.entry_width()},
    };
    std::ofstream os(dir / "bank.json");
    if (!os) throw FormatError("save_bank: cannot write manifest in " + dir.string());
    os << manifest.dump(2) << "\n";
    for (size_t i = 0; i < bank.entries.size(); ++i) {
        save_c2dg(bank.entries[i], dir / entry_filename(static_cast<int>(i)));
    }
}

HistoricalMapBank load_bank(const std::filesystem::path& dir) {
    std::ifstream is(dir / "bank.json");
    if (!is) throw IntegrityError("load_bank: missing manifest bank.json in " + dir.string());
    nlohmann::json manifest;
    try {
        is >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("load_bank: bad manifest: " + std::string(e.what()));
    }
    if (manifest.value("format_version", 0) != 1) {
        throw FormatError("load_bank: unsupported manifest format_version");
    }
    const size_t n = manifest.at("n").get<size_t>();
    const int h = manifest.at("height").get<int>();
    const int w = manifest.at("width").get<int>();

    // Strict integrity: exactly the manifest's entry files, no more, no less.
    std::set<std::string> on_disk;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        const std::string name = e.path().filename().string();
        if (name.rfind("entry_", 0) == 0 && e.path().extension() == ".c2dg") {
            on_disk.insert(name);
        }
    }
    HistoricalMapBank bank;
    bank.alpha = manifest.at("alpha").get<double>();
    bank.epoch = manifest.at("epoch").get<int>();
    bank.entries.reserve(n);
    for (size_t i = 0; i < n; ++i) {
        const std::string name = entry_filename(static_cast<int>(i));
        if (!on_disk.erase(name)) {
            throw IntegrityError("load_bank: missing entry file " + name + " in " + dir.string());
        }
        Grid2D entry = load_c2dg(dir / name);
        if (entry.width != w || entry.height != h) {
            throw IntegrityError("load_bank: entry " + name + " shape " +
                                 std::to_string(entry.width) + "x" + std::to_string(entry.height) +
                                 " disagrees with manifest " + std::to_string(w) + "x" +
                                 std::to_string(h));
        }
        bank.entries.push_back(std::move(entry));
    }
    if (!on_disk.empty()) {
        throw IntegrityError("load_bank: unexpected entry file " + *on_disk.begin() + " in " +
                             dir.string() + " (manifest n=" + std::to_string(n) + ")");
    }
    return bank;
}

} // namespace c2d
