#include "c2d/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "json.hpp"

#include "c2d/errors.hpp"
#include "c2d/metrics.hpp"
#include "c2d/saliency.hpp"

namespace c2d {

namespace {

// RNG stream tags; one substream per (purpose, epoch, image).
constexpr uint64_t kTagSample = 1;
constexpr uint64_t kTagPairs = 2;
constexpr uint64_t kTagShuffle = 3;
constexpr uint64_t kTagLabeled = 4;

} // namespace

std::pair<double, Grid2D> map_loss(const Grid2D& pred, const Grid2D& target) {
    if (!pred.same_shape(target)) throw ParamError("map_loss: shape mismatch");
    const double n = static_cast<double>(pred.size());
    Grid2D grad(pred.width, pred.height);
    double loss = 0.0;
    for (size_t i = 0; i < pred.values.size(); ++i) {
        const double d = static_cast<double>(pred.values[i]) - target.values[i];
        loss += d * d;
        grad.values[i] = static_cast<float>(2.0 * d / n);
    }
    return {loss / n, std::move(grad)};
}

void EpochStage::stage(int index, Grid2D prediction) {
    if (applied_) throw StateError("EpochStage: staging after the bank update");
    if (index < 0 || static_cast<size_t>(index) >= staged_.size()) {
        throw ParamError("EpochStage: index out of range");
    }
    staged_[index] = std::move(prediction);
}

void EpochStage::apply(HistoricalMapBank& bank) {
    if (applied_) throw StateError("EpochStage: bank already updated from this stage");
    if (bank.entries.size() != staged_.size()) {
        throw ParamError("EpochStage: bank size mismatch");
    }
    for (size_t i = 0; i < staged_.size(); ++i) {
        if (staged_[i].has_value()) {
            ema_update(bank, static_cast<int>(i), *staged_[i]);
            staged_[i].reset();
        }
    }
    ++bank.epoch;
    applied_ = true;
}

StepDiag train_step(const Grid2D& image_norm, int count, int index, HistoricalMapBank& bank,
                    ModelParams& params, const TrainConfig& cfg, EpochStage& stage,
                    int epoch, const PointSet* gt_points) {
    ForwardCache cache;
    forward(image_norm, params, cache);

    Grid2D target;
    if (gt_points != nullptr) {
        target = render_pseudo_density(*gt_points, cfg.render_sigma, image_norm.width,
                                       image_norm.height);
    } else {
        const ProbabilityPrior prior =
            cfg.use_bank ? make_prior(bank, index, cfg.prior_blur_sigma)
                         : make_prior_from_map(cache.density, cfg.prior_blur_sigma);
        PointSet points;
        if (cfg.sampler == SamplerKind::weighted) {
            Rng rng = Rng::stream(cfg.seed, {kTagSample, static_cast<uint64_t>(epoch),
                                             static_cast<uint64_t>(index)});
            points = sample_locations(prior, count, rng);
        } else {
            points = top_k_locations(prior, count);
        }
        target = render_pseudo_density(points, cfg.render_sigma, image_norm.width,
                                       image_norm.height);
    }

    auto [m_loss, d_density] = map_loss(cache.density, target);

    StepDiag diag;
    diag.map_loss = m_loss;
    diag.pred_count = integrate(cache.density);

    FeatureGrid d_features;
    if (cfg.use_contrastive) {
        Rng pair_rng = Rng::stream(cfg.seed, {kTagPairs, static_cast<uint64_t>(epoch),
                                              static_cast<uint64_t>(index)});
        const std::vector<PairCells> pairs =
            select_pairs(cache.density, cache.features, cfg.contrastive, pair_rng);
        ContrastiveResult ctr = contrastive_loss(cache.features, pairs, cfg.contrastive, cfg.tau);
        diag.ctr_loss = ctr.loss;
        diag.ctr_batches = ctr.batches_used;
        d_features = std::move(ctr.feature_grads);
    }

    const double total = diag.map_loss + diag.ctr_loss;
    if (!std::isfinite(total)) {
        throw NumericError("train_step: non-finite loss at epoch " + std::to_string(epoch) +
                           ", image " + std::to_string(index));
    }

    backward(params, cache, d_density, d_features);
    sgd_step(params, cfg.learning_rate, cfg.weight_decay);

    stage.stage(index, std::move(cache.density));
    return diag;
}

std::vector<int> labeled_subset(uint64_t seed, int n, double fraction) {
    if (!(fraction >= 0.0 && fraction <= 1.0)) {
        throw ParamError("labeled_subset: fraction must be in [0,1]");
    }
    const int k = static_cast<int>(std::llround(fraction * n));
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng = Rng::stream(seed, {kTagLabeled});
    for (int i = n - 1; i > 0; --i) {
        const int j = static_cast<int>(rng.uniform_int(i + 1));
        std::swap(order[i], order[j]);
    }
    order.resize(k);
    std::sort(order.begin(), order.end());
    return order;
}

namespace {

HistoricalMapBank build_bank(const std::vector<SyntheticScene>& scenes, const TrainConfig& cfg) {
    const int n = static_cast<int>(scenes.size());
    const int w = n > 0 ? scenes[0].image.width : 0;
    const int h = n > 0 ? scenes[0].image.height : 0;
    switch (cfg.bank_init) {
        case BankInit::saliency: {
            std::vector<SaliencyMap> maps;
            maps.reserve(n);
            for (const SyntheticScene& s : scenes) {
                maps.push_back(spectral_residual_saliency(s.image));
            }
            return init_bank(maps, cfg.alpha);
        }
        case BankInit::blob:
            return init_bank_blob(w, h, n, cfg.blob_radius, cfg.alpha);
        case BankInit::none: {
            // No spatial information: zero entries. make_prior falls back to
            // the uniform prior until the first bank update.
            std::vector<SaliencyMap> maps(n, SaliencyMap{Grid2D(w, h, 0.0f)});
            return init_bank(maps, cfg.alpha);
        }
        case BankInit::external: {
            std::vector<SaliencyMap> maps;
            maps.reserve(n);
            for (int i = 0; i < n; ++i) {
                char name[32];
                std::snprintf(name, sizeof(name), "saliency_%06d", i);
                std::filesystem::path base =
                    std::filesystem::path(cfg.external_saliency_dir) / name;
                std::filesystem::path p = base;
                p += ".c2dg";
                if (!std::filesystem::exists(p)) {
                    p = base;
                    p += ".pgm";
                }
                if (!std::filesystem::exists(p)) {
                    throw IntegrityError("bank init: missing external saliency map for image " +
                                         std::to_string(i) + " under " +
                                         cfg.external_saliency_dir);
                }
                SaliencyMap m = load_external_saliency(p);
                if (m.map.width != w || m.map.height != h) {
                    throw IntegrityError("bank init: external map " + p.string() +
                                         " shape mismatch");
                }
                maps.push_back(std::move(m));
            }
            return init_bank(maps, cfg.alpha);
        }
    }
    throw ParamError("build_bank: unknown bank_init");
}

} // namespace

TrainResult train_run(const std::vector<SyntheticScene>& train_scenes,
                      const std::vector<SyntheticScene>& val_scenes, const TrainConfig& cfg,
                      const SnapshotHook& snapshot_hook) {
    if (cfg.epochs < 0) throw ParamError("train_run: epochs must be >= 0");
    if (!(cfg.learning_rate > 0.0)) throw ParamError("train_run: learning_rate must be > 0");
    const int n = static_cast<int>(train_scenes.size());

    TrainResult result;
    result.bank = build_bank(train_scenes, cfg);
    result.params = init_params(cfg.seed);

    // Per-dataset mean-std normalization, computed on the train split.
    double sum = 0.0, sq_sum = 0.0;
    size_t pixels = 0;
    for (const SyntheticScene& s : train_scenes) {
        for (float v : s.image.values) {
            sum += v;
            sq_sum += static_cast<double>(v) * v;
        }
        pixels += s.image.size();
    }
    const double mean = pixels > 0 ? sum / pixels : 0.0;
    const double var = pixels > 0 ? std::max(0.0, sq_sum / pixels - mean * mean) : 1.0;
    const double stdev = std::sqrt(var) > 1e-6 ? std::sqrt(var) : 1.0;
    result.norm_mean = static_cast<float>(mean);
    result.norm_std = static_cast<float>(stdev);

    // Same float arithmetic as predict_density so inference on a training
    // image reproduces the training-time input exactly.
    auto normalize = [&result](const Grid2D& img) {
        Grid2D out = img;
        for (float& v : out.values) v = (v - result.norm_mean) / result.norm_std;
        return out;
    };
    std::vector<Grid2D> norm_images;
    norm_images.reserve(n);
    for (const SyntheticScene& s : train_scenes) norm_images.push_back(normalize(s.image));
    std::vector<Grid2D> norm_val;
    norm_val.reserve(val_scenes.size());
    for (const SyntheticScene& s : val_scenes) norm_val.push_back(normalize(s.image));

    std::vector<char> labeled(n, 0);
    for (int i : labeled_subset(cfg.seed, n, cfg.labeled_fraction)) labeled[i] = 1;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<int> order(n);
        std::iota(order.begin(), order.end(), 0);
        Rng shuffle_rng = Rng::stream(cfg.seed, {kTagShuffle, static_cast<uint64_t>(epoch)});
        for (int i = n - 1; i > 0; --i) {
            const int j = static_cast<int>(shuffle_rng.uniform_int(i + 1));
            std::swap(order[i], order[j]);
        }

        EpochStage stage(n);
        EpochRecord record;
        record.epoch = epoch;
        double mae_sum = 0.0;
        for (int idx : order) {
            const SyntheticScene& scene = train_scenes[idx];
            const PointSet* gt = labeled[idx] ? &scene.gt_points : nullptr;
            const StepDiag diag = train_step(norm_images[idx], scene.count, idx, result.bank,
                                             result.params, cfg, stage, epoch, gt);
            record.mean_map_loss += diag.map_loss;
            record.mean_ctr_loss += diag.ctr_loss;
            mae_sum += std::abs(diag.pred_count - scene.count);
        }
        if (n > 0) {
            record.mean_map_loss /= n;
            record.mean_ctr_loss /= n;
            record.train_mae = mae_sum / n;
        }
        stage.apply(result.bank);

        if (!val_scenes.empty()) {
            std::vector<double> pred_counts, gt_counts;
            ForwardCache cache;
            for (size_t i = 0; i < val_scenes.size(); ++i) {
                forward(norm_val[i], result.params, cache);
                pred_counts.push_back(integrate(cache.density));
                gt_counts.push_back(val_scenes[i].count);
            }
            const auto [mae, mse] = counting_errors(pred_counts, gt_counts);
            record.val_mae = mae;
            record.val_mse = mse;
        }

        if (snapshot_hook && cfg.snapshot_every > 0 &&
            ((epoch + 1) % cfg.snapshot_every == 0 || epoch + 1 == cfg.epochs)) {
            record.bank_snapshot = snapshot_hook(epoch, result.bank);
        }
        result.records.push_back(std::move(record));
    }
    return result;
}

Grid2D predict_density(const Grid2D& image, const ModelParams& params, float norm_mean,
                       float norm_std) {
    Grid2D norm = image;
    for (float& v : norm.values) {
        v = (v - norm_mean) / (norm_std > 0.0f ? norm_std : 1.0f);
    }
    ForwardCache cache;
    forward(norm, params, cache);
    return std::move(cache.density);
}

std::string EpochRecord::to_json() const {
    nlohmann::json j = {
        {"epoch", epoch},
        {"mean_map_loss", mean_map_loss},
        {"mean_ctr_loss", mean_ctr_loss},
        {"train_mae", train_mae},
        {"val_mae", val_mae},
        {"val_mse", val_mse},
        {"bank_snapshot", bank_snapshot},
    };
    return j.dump();
}

} // namespace c2d
