#include "c2d/contrastive.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "c2d/errors.hpp"

namespace c2d {

namespace {

struct CellEmbedding {
    std::vector<double> e;
    double raw_norm = 0.0;
};

std::optional<CellEmbedding> embed(const FeatureGrid& features, CellRef cell, int patch) {
    const int u0 = cell.cu * patch, v0 = cell.cv * patch;
    std::vector<double> avg(features.channels, 0.0);
    for (int c = 0; c < features.channels; ++c) {
        double acc = 0.0;
        for (int v = v0; v < v0 + patch; ++v) {
            for (int u = u0; u < u0 + patch; ++u) acc += features.at(c, u, v);
        }
        avg[c] = acc / (static_cast<double>(patch) * patch);
    }
    double norm_sq = 0.0;
    for (double x : avg) norm_sq += x * x;
    if (norm_sq == 0.0) return std::nullopt;
    CellEmbedding out;
    out.raw_norm = std::sqrt(norm_sq);
    for (double& x : avg) x /= out.raw_norm;
    out.e = std::move(avg);
    return out;
}

} // namespace

std::optional<std::vector<double>> patch_embedding(const FeatureGrid& features, CellRef cell,
                                                   int patch) {
    auto cell_embedding = embed(features, cell, patch);
    if (!cell_embedding) return std::nullopt;
    return std::move(cell_embedding->e);
}

std::vector<PairCells> select_pairs(const Grid2D& density, const FeatureGrid& features,
                                    const ContrastiveConfig& cfg, Rng& rng) {
    if (!(cfg.threshold > 0.0 && cfg.threshold <= 1.0)) {
        throw ParamError("select_pairs: threshold must be in (0,1]");
    }
    if (cfg.patch < 1 || cfg.negatives < 1) {
        throw ParamError("select_pairs: patch and K must be >= 1");
    }
    if (density.width != features.width || density.height != features.height) {
        throw ParamError("select_pairs: density and features not spatially aligned");
    }
    const Grid2D mask = threshold_binarize(normalize_max(density), cfg.threshold);

    const int ncu = density.width / cfg.patch;
    const int ncv = density.height / cfg.patch;
    std::vector<CellRef> crowd, background;
    for (int cv = 0; cv < ncv; ++cv) {
        for (int cu = 0; cu < ncu; ++cu) {
            int ones = 0;
            for (int v = cv * cfg.patch; v < (cv + 1) * cfg.patch; ++v) {
                for (int u = cu * cfg.patch; u < (cu + 1) * cfg.patch; ++u) {
                    ones += mask.at(u, v) > 0.0f ? 1 : 0;
                }
            }
            const double frac = static_cast<double>(ones) / (cfg.patch * cfg.patch);
            const CellRef cell{cu, cv};
            if (frac <= 0.5 && frac >= 0.1) continue; // ambiguous boundary cell
            if (!patch_embedding(features, cell, cfg.patch).has_value()) continue;
            if (frac > 0.5) {
                crowd.push_back(cell);
            } else {
                background.push_back(cell);
            }
        }
    }
    if (crowd.size() < 2 || background.size() < static_cast<size_t>(cfg.negatives)) return {};

    const int n_batches =
        std::min<int>(static_cast<int>(crowd.size()) - 1, std::max(0, cfg.batch_cap));
    std::vector<PairCells> batches;
    batches.reserve(n_batches);
    std::vector<size_t> bg_idx(background.size());
    for (int b = 0; b < n_batches; ++b) {
        PairCells pair;
        const size_t ia = rng.uniform_int(crowd.size());
        size_t ip = rng.uniform_int(crowd.size() - 1);
        if (ip >= ia) ++ip;
        pair.anchor = crowd[ia];
        pair.positive = crowd[ip];
        std::iota(bg_idx.begin(), bg_idx.end(), size_t{0});
        for (int k = 0; k < cfg.negatives; ++k) {
            const size_t j = k + rng.uniform_int(bg_idx.size() - k);
            std::swap(bg_idx[k], bg_idx[j]);
            pair.negatives.push_back(background[bg_idx[k]]);
        }
        batches.push_back(std::move(pair));
    }
    return batches;
}

InfoNceResult info_nce(const std::vector<double>& anchor, const std::vector<double>& positive,
                       const std::vector<std::vector<double>>& negatives, double tau,
                       bool include_positive_in_denominator) {
    if (!(tau > 0.0)) throw ParamError("info_nce: tau must be > 0");
    if (negatives.empty()) throw ParamError("info_nce: at least one negative required");
    const size_t dim = anchor.size();

    auto dot = [dim](const std::vector<double>& a, const std::vector<double>& b) {
        double acc = 0.0;
        for (size_t i = 0; i < dim; ++i) acc += a[i] * b[i];
        return acc;
    };

    const double s_pos = dot(anchor, positive) / tau;
    std::vector<double> s_den;
    s_den.reserve(negatives.size() + 1);
    for (const auto& n : negatives) s_den.push_back(dot(anchor, n) / tau);
    if (include_positive_in_denominator) s_den.push_back(s_pos);

    const double s_max = *std::max_element(s_den.begin(), s_den.end());
    double z = 0.0;
    for (double s : s_den) z += std::exp(s - s_max);
    const double lse = s_max + std::log(z);

    InfoNceResult res;
    res.loss = -s_pos + lse;

    std::vector<double> softmax(s_den.size());
    for (size_t i = 0; i < s_den.size(); ++i) softmax[i] = std::exp(s_den[i] - s_max) / z;

    res.d_anchor.assign(dim, 0.0);
    res.d_positive.assign(dim, 0.0);
    res.d_negatives.assign(negatives.size(), std::vector<double>(dim, 0.0));
    for (size_t i = 0; i < dim; ++i) {
        double da = -positive[i] / tau;
        for (size_t k = 0; k < negatives.size(); ++k) da += softmax[k] * negatives[k][i] / tau;
        if (include_positive_in_denominator) da += softmax.back() * positive[i] / tau;
        res.d_anchor[i] = da;
        res.d_positive[i] = -anchor[i] / tau;
        if (include_positive_in_denominator) {
            res.d_positive[i] += softmax.back() * anchor[i] / tau;
        }
        for (size_t k = 0; k < negatives.size(); ++k) {
            res.d_negatives[k][i] = softmax[k] * anchor[i] / tau;
        }
    }
    return res;
}

namespace {

// d(loss)/d(raw cell average) from d(loss)/d(normalized embedding), then
// spread uniformly over the cell's pixels.
void scatter_embedding_grad(FeatureGrid& grads, CellRef cell, int patch,
                            const std::vector<double>& embedding, double raw_norm,
                            const std::vector<double>& d_embedding, double scale) {
    const size_t dim = embedding.size();
    double tangent_coeff = 0.0;
    for (size_t i = 0; i < dim; ++i) tangent_coeff += d_embedding[i] * embedding[i];
    const double area = static_cast<double>(patch) * patch;
    const int u0 = cell.cu * patch, v0 = cell.cv * patch;
    for (size_t c = 0; c < dim; ++c) {
        const double dv_raw = (d_embedding[c] - tangent_coeff * embedding[c]) / raw_norm;
        const double per_pixel = scale * dv_raw / area;
        for (int v = v0; v < v0 + patch; ++v) {
            for (int u = u0; u < u0 + patch; ++u) {
                grads.at(static_cast<int>(c), u, v) += per_pixel;
            }
        }
    }
}

} // namespace

ContrastiveResult contrastive_loss(const FeatureGrid& features,
                                   const std::vector<PairCells>& batches,
                                   const ContrastiveConfig& cfg, double tau) {
    ContrastiveResult res;
    if (batches.empty()) return res;

    FeatureGrid grads(features.channels, features.width, features.height, 0.0f);
    double total = 0.0;
    int used = 0;
    const double inv_b = 1.0 / static_cast<double>(batches.size());
    for (const PairCells& pair : batches) {
        const auto anchor = embed(features, pair.anchor, cfg.patch);
        const auto positive = embed(features, pair.positive, cfg.patch);
        if (!anchor || !positive) continue;
        std::vector<CellEmbedding> negs;
        negs.reserve(pair.negatives.size());
        bool ok = true;
        for (CellRef n : pair.negatives) {
            auto e = embed(features, n, cfg.patch);
            if (!e) {
                ok = false;
                break;
            }
            negs.push_back(std::move(*e));
        }
        if (!ok) continue;

        std::vector<std::vector<double>> neg_vecs;
        neg_vecs.reserve(negs.size());
        for (const auto& n : negs) neg_vecs.push_back(n.e);
        const InfoNceResult nce =
            info_nce(anchor->e, positive->e, neg_vecs, tau, cfg.include_positive_in_denominator);

        total += nce.loss;
        scatter_embedding_grad(grads, pair.anchor, cfg.patch, anchor->e, anchor->raw_norm,
                               nce.d_anchor, inv_b);
        scatter_embedding_grad(grads, pair.positive, cfg.patch, positive->e, positive->raw_norm,
                               nce.d_positive, inv_b);
        for (size_t k = 0; k < negs.size(); ++k) {
            scatter_embedding_grad(grads, pair.negatives[k], cfg.patch, negs[k].e,
                                   negs[k].raw_norm, nce.d_negatives[k], inv_b);
        }
        ++used;
    }
    if (used == 0) return res;
    res.loss = total * inv_b;
    res.feature_grads = std::move(grads);
    res.batches_used = used;
    return res;
}

} // namespace c2d
