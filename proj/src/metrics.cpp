#include "c2d/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "c2d/errors.hpp"

namespace c2d {

std::pair<double, double> counting_errors(const std::vector<double>& pred_counts,
                                          const std::vector<double>& gt_counts) {
    if (pred_counts.empty() || pred_counts.size() != gt_counts.size()) {
        throw ParamError("counting_errors: lists must be nonempty and equal length");
    }
    double abs_sum = 0.0, sq_sum = 0.0;
    for (size_t i = 0; i < pred_counts.size(); ++i) {
        const double d = gt_counts[i] - pred_counts[i];
        abs_sum += std::abs(d);
        sq_sum += d * d;
    }
    const double n = static_cast<double>(pred_counts.size());
    return {abs_sum / n, std::sqrt(sq_sum / n)};
}

namespace {

constexpr double kSsimWindowSigma = 1.5; // radius ceil(3*1.5) = 5 -> 11x11
constexpr double kSsimC1 = 0.01 * 0.01;
constexpr double kSsimC2 = 0.03 * 0.03;

void check_same_shape(const Grid2D& a, const Grid2D& b, const char* op) {
    if (!a.same_shape(b)) {
        throw ParamError(std::string(op) + ": shape mismatch " + std::to_string(a.width) + "x" +
                         std::to_string(a.height) + " vs " + std::to_string(b.width) + "x" +
                         std::to_string(b.height));
    }
}

// Rescale both maps to [0,1] by their shared maximum.
std::pair<Grid2D, Grid2D> shared_max_rescale(const Grid2D& a, const Grid2D& b) {
    const float m = std::max(a.max_value(), b.max_value());
    Grid2D ra = a, rb = b;
    if (m > 0.0f) {
        for (float& v : ra.values) v /= m;
        for (float& v : rb.values) v /= m;
    }
    return {std::move(ra), std::move(rb)};
}

Grid2D multiply(const Grid2D& a, const Grid2D& b) {
    Grid2D out(a.width, a.height);
    for (size_t i = 0; i < out.values.size(); ++i) out.values[i] = a.values[i] * b.values[i];
    return out;
}

} // namespace

double ssim(const Grid2D& a_in, const Grid2D& b_in) {
    check_same_shape(a_in, b_in, "ssim");
    auto [a, b] = shared_max_rescale(a_in, b_in);

    const Grid2D mu_a = gaussian_blur(a, kSsimWindowSigma);
    const Grid2D mu_b = gaussian_blur(b, kSsimWindowSigma);
    const Grid2D aa = gaussian_blur(multiply(a, a), kSsimWindowSigma);
    const Grid2D bb = gaussian_blur(multiply(b, b), kSsimWindowSigma);
    const Grid2D ab = gaussian_blur(multiply(a, b), kSsimWindowSigma);

    double total = 0.0;
    for (size_t i = 0; i < a.values.size(); ++i) {
        const double ma = mu_a.values[i], mb = mu_b.values[i];
        const double var_a = aa.values[i] - ma * ma;
        const double var_b = bb.values[i] - mb * mb;
        const double cov = ab.values[i] - ma * mb;
        const double num = (2.0 * ma * mb + kSsimC1) * (2.0 * cov + kSsimC2);
        const double den = (ma * ma + mb * mb + kSsimC1) * (var_a + var_b + kSsimC2);
        total += num / den;
    }
    return total / static_cast<double>(a.values.size());
}

double psnr(const Grid2D& a_in, const Grid2D& b_in) {
    check_same_shape(a_in, b_in, "psnr");
    auto [a, b] = shared_max_rescale(a_in, b_in);
    double sq = 0.0;
    for (size_t i = 0; i < a.values.size(); ++i) {
        const double d = static_cast<double>(a.values[i]) - b.values[i];
        sq += d * d;
    }
    const double mse = sq / static_cast<double>(a.values.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

std::pair<double, double> subregion_eval(const Grid2D& pred, const Grid2D& gt, int tile) {
    check_same_shape(pred, gt, "subregion_eval");
    if (tile < 1) throw ParamError("subregion_eval: tile must be >= 1");
    std::vector<double> pred_counts, gt_counts;
    for (int v0 = 0; v0 < pred.height; v0 += tile) {
        for (int u0 = 0; u0 < pred.width; u0 += tile) {
            Rect r{u0, v0, std::min(tile, pred.width - u0), std::min(tile, pred.height - v0)};
            pred_counts.push_back(subregion_count(pred, r));
            gt_counts.push_back(subregion_count(gt, r));
        }
    }
    return counting_errors(pred_counts, gt_counts);
}

PointSet localize(const Grid2D& pred, double min_density, int nms_radius) {
    if (nms_radius < 1) throw ParamError("localize: nms_radius must be >= 1");
    struct Candidate {
        int u, v;
        float value;
    };
    std::vector<Candidate> candidates;
    for (int v = 0; v < pred.height; ++v) {
        for (int u = 0; u < pred.width; ++u) {
            const float x = pred.at(u, v);
            if (!(x > min_density)) continue;
            bool strict_max = true;
            for (int dv = -nms_radius; dv <= nms_radius && strict_max; ++dv) {
                for (int du = -nms_radius; du <= nms_radius; ++du) {
                    if (du == 0 && dv == 0) continue;
                    const int uu = u + du, vv = v + dv;
                    if (uu < 0 || uu >= pred.width || vv < 0 || vv >= pred.height) continue;
                    if (pred.at(uu, vv) >= x) {
                        strict_max = false;
                        break;
                    }
                }
            }
            if (strict_max) candidates.push_back({u, v, x});
        }
    }
    std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
        if (a.value != b.value) return a.value > b.value;
        return std::make_pair(a.v, a.u) < std::make_pair(b.v, b.u);
    });
    PointSet out;
    const double r2 = static_cast<double>(nms_radius) * nms_radius;
    for (const Candidate& c : candidates) {
        bool suppressed = false;
        for (const auto& [ku, kv] : out.points) {
            const double du = c.u - ku, dv = c.v - kv;
            if (du * du + dv * dv <= r2) {
                suppressed = true;
                break;
            }
        }
        if (!suppressed) out.points.emplace_back(c.u, c.v);
    }
    return out;
}

Prf localization_prf(const PointSet& detected, const PointSet& gt, double match_radius) {
    Prf out;
    if (detected.points.empty() && gt.points.empty()) {
        out.f1 = 1.0;
        return out;
    }
    std::vector<char> claimed(gt.points.size(), 0);
    int matches = 0;
    const double r2 = match_radius * match_radius;
    for (const auto& [du, dv] : detected.points) {
        double best = std::numeric_limits<double>::infinity();
        size_t best_idx = gt.points.size();
        for (size_t j = 0; j < gt.points.size(); ++j) {
            if (claimed[j]) continue;
            const double ddu = du - gt.points[j].first, ddv = dv - gt.points[j].second;
            const double d2 = ddu * ddu + ddv * ddv;
            if (d2 <= r2 && d2 < best) {
                best = d2;
                best_idx = j;
            }
        }
        if (best_idx < gt.points.size()) {
            claimed[best_idx] = 1;
            ++matches;
        }
    }
    out.precision =
        detected.points.empty() ? 0.0 : static_cast<double>(matches) / detected.points.size();
    out.recall = gt.points.empty() ? 0.0 : static_cast<double>(matches) / gt.points.size();
    out.f1 = (out.precision + out.recall) > 0.0
                 ? 2.0 * out.precision * out.recall / (out.precision + out.recall)
                 : 0.0;
    return out;
}

std::string EvalReport::to_json() const {
    nlohmann::json j = {
        {"mae", mae},
        {"mse", mse},
        {"ssim", ssim},
        {"subregion_mae", subregion_mae},
        {"subregion_mse", subregion_mse},
        {"precision", precision},
        {"recall", recall},
        {"f1", f1},
        {"n_images", n_images},
    };
    if (std::isinf(psnr)) {
        j["psnr"] = "+inf";
    } else {
        j["psnr"] = psnr;
    }
    return j.dump(2);
}

std::string EvalReport::to_table() const {
    std::ostringstream os;
    auto row = [&os](const char* name, double value) {
        os << name;
        for (size_t i = std::strlen(name); i < 16; ++i) os << ' ';
        if (std::isinf(value)) {
            os << "+inf\n";
        } else {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "%.6f", value);
            os << buf << "\n";
        }
    };
    os << "metric          value\n";
    row("mae", mae);
    row("mse", mse);
    row("ssim", ssim);
    row("psnr", psnr);
    row("subregion_mae", subregion_mae);
    row("subregion_mse", subregion_mse);
    row("precision", precision);
    row("recall", recall);
    row("f1", f1);
    row("n_images", static_cast<double>(n_images));
    return os.str();
}

} // namespace c2d
