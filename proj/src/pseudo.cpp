#include "c2d/pseudo.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>

#include "c2d/errors.hpp"

namespace c2d {

PointSet sample_locations(const ProbabilityPrior& prior, int count, Rng& rng) {
    if (count < 0) throw ParamError("sample_locations: count must be >= 0");
    const Grid2D& m = prior.map;
    const size_t n = m.size();

    std::vector<double> weights(n);
    for (size_t i = 0; i < n; ++i) weights[i] = std::max(0.0f, m.values[i]);

    PointSet out;
    std::vector<char> chosen(n, 0);
    int picked = 0;
    while (picked < count) {
        // Fresh total each draw keeps the walk consistent with the weights.
        double total = 0.0;
        for (double w : weights) total += w;
        if (total <= 0.0) break; // support exhausted
        const double r = rng.uniform() * total;
        double acc = 0.0;
        size_t idx = n;
        for (size_t i = 0; i < n; ++i) {
            acc += weights[i];
            if (weights[i] > 0.0 && acc > r) {
                idx = i;
                break;
            }
        }
        if (idx == n) {
            // Rounding pushed r past the last prefix sum; take the last
            // remaining supported pixel.
            for (size_t i = n; i-- > 0;) {
                if (weights[i] > 0.0) {
                    idx = i;
                    break;
                }
            }
        }
        weights[idx] = 0.0;
        chosen[idx] = 1;
        out.points.emplace_back(static_cast<int>(idx % m.width), static_cast<int>(idx / m.width));
        ++picked;
    }

    if (picked < count) {
        out.support_exhausted = true;
        std::vector<size_t> rest;
        rest.reserve(n - picked);
        for (size_t i = 0; i < n; ++i) {
            if (!chosen[i]) rest.push_back(i);
        }
        const size_t need = std::min<size_t>(count - picked, rest.size());
        // Partial Fisher-Yates: uniform distinct picks from the remainder.
        for (size_t j = 0; j < need; ++j) {
            const size_t k = j + rng.uniform_int(rest.size() - j);
            std::swap(rest[j], rest[k]);
            out.points.emplace_back(static_cast<int>(rest[j] % m.width),
                                    static_cast<int>(rest[j] / m.width));
        }
    }
    return out;
}

PointSet top_k_locations(const ProbabilityPrior& prior, int count) {
    if (count < 0) throw ParamError("top_k_locations: count must be >= 0");
    const Grid2D& m = prior.map;
    const size_t n = m.size();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        if (m.values[a] != m.values[b]) return m.values[a] > m.values[b];
        return a < b;
    });
    PointSet out;
    if (static_cast<size_t>(count) > n) {
        out.support_exhausted = true;
    }
    const size_t take = std::min<size_t>(count, n);
    out.points.reserve(take);
    for (size_t j = 0; j < take; ++j) {
        out.points.emplace_back(static_cast<int>(order[j] % m.width),
                                static_cast<int>(order[j] / m.width));
    }
    return out;
}

Grid2D render_pseudo_density(const PointSet& points, double sigma, int width, int height) {
    if (!(sigma > 0.0)) throw ParamError("render_pseudo_density: sigma must be > 0");
    Grid2D out(width, height, 0.0f);
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
    for (const auto& [pu, pv] : points.points) {
        if (pu < 0 || pu >= width || pv < 0 || pv >= height) {
            throw BoundsError("render_pseudo_density: point (" + std::to_string(pu) + "," +
                              std::to_string(pv) + ") outside " + std::to_string(width) + "x" +
                              std::to_string(height));
        }
        const int u0 = std::max(0, pu - radius), u1 = std::min(width - 1, pu + radius);
        const int v0 = std::max(0, pv - radius), v1 = std::min(height - 1, pv + radius);
        double mass = 0.0;
        for (int v = v0; v <= v1; ++v) {
            for (int u = u0; u <= u1; ++u) {
                const double du = u - pu, dv = v - pv;
                mass += std::exp(-(du * du + dv * dv) * inv2s2);
            }
        }
        // mass > 0 always: the point itself contributes exp(0).
        for (int v = v0; v <= v1; ++v) {
            for (int u = u0; u <= u1; ++u) {
                const double du = u - pu, dv = v - pv;
                out.at(u, v) += static_cast<float>(std::exp(-(du * du + dv * dv) * inv2s2) / mass);
            }
        }
    }
    return out;
}

void save_points_csv(const PointSet& points, const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw FormatError("points csv: cannot open for writing: " + path.string());
    os << "u,v\n";
    for (const auto& [u, v] : points.points) os << u << "," << v << "\n";
    if (!os) throw FormatError("points csv: write failed: " + path.string());
}

PointSet load_points_csv(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw FormatError("points csv: cannot open: " + path.string());
    std::string line;
    if (!std::getline(is, line) || (line != "u,v" && line != "u,v\r")) {
        throw FormatError("points csv: missing 'u,v' header in " + path.string());
    }
    PointSet out;
    size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        std::istringstream ss(line);
        int u = 0, v = 0;
        char comma = 0;
        if (!(ss >> u >> comma >> v) || comma != ',') {
            throw FormatError("points csv: bad row " + std::to_string(lineno) + " in " +
                              path.string());
        }
        out.points.emplace_back(u, v);
    }
    return out;
}

} // namespace c2d
