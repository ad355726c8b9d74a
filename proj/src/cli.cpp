#include "c2d/cli.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <thread>

#include "json.hpp"

#include "c2d/errors.hpp"
#include "c2d/metrics.hpp"
#include "c2d/saliency.hpp"

namespace c2d::cli {

namespace fs = std::filesystem;
using nlohmann::json;

std::string file_checksum(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("checksum: cannot open " + path.string());
    uint64_t h = 0xcbf29ce484222325ULL;
    char buf[65536];
    while (is.read(buf, sizeof(buf)) || is.gcount() > 0) {
        const std::streamsize got = is.gcount();
        for (std::streamsize i = 0; i < got; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ULL;
        }
        if (!is) break;
    }
    char hex[17];
    std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(h));
    return hex;
}

int thread_cap() {
    const char* env = std::getenv("C2D_THREADS");
    if (env == nullptr) return 1;
    const int n = std::atoi(env);
    return std::max(1, n);
}

namespace {

void parallel_for(size_t n, int threads, const std::function<void(size_t)>& body) {
    threads = static_cast<int>(std::min<size_t>(static_cast<size_t>(threads), n));
    if (threads <= 1) {
        for (size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<size_t> next{0};
    std::vector<std::thread> pool;
    std::atomic<bool> failed{false};
    std::string error;
    std::mutex error_mutex;
    for (int t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
            size_t i;
            while ((i = next.fetch_add(1)) < n && !failed.load()) {
                try {
                    body(i);
                } catch (const std::exception& e) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    failed.store(true);
                    if (error.empty()) error = e.what();
                }
            }
        });
    }
    for (std::thread& t : pool) t.join();
    if (failed.load()) throw std::runtime_error(error);
}

// Atomic write: temp file in the same directory, then rename.
void write_file_atomic(const fs::path& path, const std::string& content) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary);
        if (!os) throw FormatError("cannot write " + tmp.string());
        os << content;
    }
    fs::rename(tmp, path);
}

class RunClock {
public:
    RunClock() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

void write_run_manifest(const fs::path& dir, const std::string& command, json args,
                        const std::vector<fs::path>& artifacts, double seconds) {
    json outputs = json::object();
    for (const fs::path& p : artifacts) {
        outputs[fs::relative(p, dir).string()] = file_checksum(p);
    }
    json manifest = {
        {"format_version", 1},
        {"command", command},
        {"args", std::move(args)},
        {"outputs", std::move(outputs)},
        {"duration_seconds", seconds},
    };
    write_file_atomic(dir / "run_manifest.json", manifest.dump(2) + "\n");
}

std::string sampler_name(SamplerKind s) {
    return s == SamplerKind::weighted ? "weighted" : "topk";
}

SamplerKind sampler_from_name(const std::string& s) {
    if (s == "weighted") return SamplerKind::weighted;
    if (s == "topk") return SamplerKind::topk;
    throw ParamError("--sampler must be weighted|topk, got '" + s + "'");
}

std::string bank_init_name(BankInit b) {
    switch (b) {
        case BankInit::saliency: return "saliency";
        case BankInit::blob: return "blob";
        case BankInit::none: return "none";
        case BankInit::external: return "external";
    }
    return "saliency";
}

BankInit bank_init_from_name(const std::string& s) {
    if (s == "saliency") return BankInit::saliency;
    if (s == "blob") return BankInit::blob;
    if (s == "none") return BankInit::none;
    if (s == "external") return BankInit::external;
    throw ParamError("--bank-init must be saliency|blob|none|external, got '" + s + "'");
}

} // namespace

void run_synth(const SynthArgs& args) {
    RunClock clock;
    if (args.out.empty()) throw ParamError("synth: --out is required");
    if (args.scene.count_max < args.scene.count_min) {
        throw ParamError("synth: inverted count range " + std::to_string(args.scene.count_min) +
                         ":" + std::to_string(args.scene.count_max));
    }
    const SyntheticDataset dataset = gen_dataset(args.seed, args.n, args.scene, args.train_frac,
                                                 args.val_frac, args.test_frac);
    const fs::path out(args.out);
    save_dataset(dataset, out, args.write_pgm);

    std::vector<fs::path> artifacts;
    for (const auto& e : fs::recursive_directory_iterator(out)) {
        if (e.is_regular_file() && e.path().filename() != "run_manifest.json") {
            artifacts.push_back(e.path());
        }
    }
    std::sort(artifacts.begin(), artifacts.end());
    json jargs = {
        {"n", args.n},
        {"size", args.scene.size},
        {"count_min", args.scene.count_min},
        {"count_max", args.scene.count_max},
        {"cluster_count", args.scene.cluster_count},
        {"cluster_spread", args.scene.cluster_spread},
        {"head_radius", args.scene.head_radius},
        {"background", args.scene.background},
        {"noise", args.scene.noise},
        {"render_sigma", args.scene.render_sigma},
        {"train_frac", args.train_frac},
        {"val_frac", args.val_frac},
        {"test_frac", args.test_frac},
        {"seed", args.seed},
        {"out", args.out},
        {"write_pgm", args.write_pgm},
    };
    write_run_manifest(out, "synth", std::move(jargs), artifacts, clock.seconds());
    std::cout << "synth: wrote " << dataset.train.size() << "/" << dataset.val.size() << "/"
              << dataset.test.size() << " train/val/test scenes to " << args.out << "\n";
}

namespace {

json train_args_to_json(const TrainArgs& args) {
    const TrainConfig& c = args.cfg;
    return {
        {"data", args.data},
        {"out", args.out},
        {"epochs", c.epochs},
        {"learning_rate", c.learning_rate},
        {"weight_decay", c.weight_decay},
        {"alpha", c.alpha},
        {"tau", c.tau},
        {"render_sigma", c.render_sigma},
        {"prior_blur_sigma", c.prior_blur_sigma},
        {"ctr_threshold", c.contrastive.threshold},
        {"ctr_patch", c.contrastive.patch},
        {"ctr_negatives", c.contrastive.negatives},
        {"ctr_batch_cap", c.contrastive.batch_cap},
        {"ctr_include_positive", c.contrastive.include_positive_in_denominator},
        {"use_contrastive", c.use_contrastive},
        {"use_bank", c.use_bank},
        {"sampler", sampler_name(c.sampler)},
        {"bank_init", bank_init_name(c.bank_init)},
        {"blob_radius", c.blob_radius},
        {"external_saliency_dir", c.external_saliency_dir},
        {"seed", c.seed},
        {"labeled_fraction", c.labeled_fraction},
        {"snapshot_every", c.snapshot_every},
    };
}

TrainArgs train_args_from_json(const json& j) {
    TrainArgs args;
    args.data = j.at("data").get<std::string>();
    args.out = j.at("out").get<std::string>();
    TrainConfig& c = args.cfg;
    c.epochs = j.at("epochs").get<int>();
    c.learning_rate = j.at("learning_rate").get<double>();
    c.weight_decay = j.at("weight_decay").get<double>();
    c.alpha = j.at("alpha").get<double>();
    c.tau = j.at("tau").get<double>();
    c.render_sigma = j.at("render_sigma").get<double>();
    c.prior_blur_sigma = j.at("prior_blur_sigma").get<double>();
    c.contrastive.threshold = j.at("ctr_threshold").get<double>();
    c.contrastive.patch = j.at("ctr_patch").get<int>();
    c.contrastive.negatives = j.at("ctr_negatives").get<int>();
    c.contrastive.batch_cap = j.at("ctr_batch_cap").get<int>();
    c.contrastive.include_positive_in_denominator = j.at("ctr_include_positive").get<bool>();
    c.use_contrastive = j.at("use_contrastive").get<bool>();
    c.use_bank = j.at("use_bank").get<bool>();
    c.sampler = sampler_from_name(j.at("sampler").get<std::string>());
    c.bank_init = bank_init_from_name(j.at("bank_init").get<std::string>());
    c.blob_radius = j.at("blob_radius").get<int>();
    c.external_saliency_dir = j.at("external_saliency_dir").get<std::string>();
    c.seed = j.at("seed").get<uint64_t>();
    c.labeled_fraction = j.at("labeled_fraction").get<double>();
    c.snapshot_every = j.at("snapshot_every").get<int>();
    return args;
}

} // namespace

TrainArgs train_args_from_manifest(const fs::path& manifest_path) {
    std::ifstream is(manifest_path);
    if (!is) throw FormatError("train: cannot open manifest " + manifest_path.string());
    json manifest;
    try {
        is >> manifest;
    } catch (const json::exception& e) {
        throw FormatError("train: bad manifest: " + std::string(e.what()));
    }
    if (manifest.value("command", "") != "train") {
        throw FormatError("train: manifest " + manifest_path.string() +
                          " is not from a train run");
    }
    return train_args_from_json(manifest.at("args"));
}

void run_train(const TrainArgs& args) {
    RunClock clock;
    if (args.data.empty() || args.out.empty()) {
        throw ParamError("train: --data and --out are required");
    }
    const SyntheticDataset dataset = load_dataset(args.data);
    const fs::path out(args.out);
    fs::create_directories(out);

    std::vector<fs::path> artifacts;
    SnapshotHook hook = [&](int epoch, const HistoricalMapBank& bank) {
        char name[32];
        std::snprintf(name, sizeof(name), "bank_epoch_%04d", epoch);
        const fs::path snap = out / name;
        save_bank(bank, snap);
        return snap.string();
    };

    const TrainResult result = train_run(dataset.train, dataset.val, args.cfg, hook);

    const fs::path ckpt = out / "checkpoint.c2dp";
    save_checkpoint(result.params, result.norm_mean, result.norm_std, ckpt);
    artifacts.push_back(ckpt);

    save_bank(result.bank, out / "bank");
    for (const auto& e : fs::directory_iterator(out / "bank")) artifacts.push_back(e.path());

    {
        std::ofstream os(out / "train_log.jsonl");
        if (!os) throw FormatError("train: cannot write train_log.jsonl");
        for (const EpochRecord& r : result.records) os << r.to_json() << "\n";
    }
    artifacts.push_back(out / "train_log.jsonl");

    std::sort(artifacts.begin(), artifacts.end());
    write_run_manifest(out, "train", train_args_to_json(args), artifacts, clock.seconds());

    if (!result.records.empty()) {
        const EpochRecord& last = result.records.back();
        std::cout << "train: " << result.records.size() << " epochs, final train MAE "
                  << last.train_mae << ", val MAE " << last.val_mae << "\n";
    }
    std::cout << "train: checkpoint at " << ckpt.string() << "\n";
}

namespace {

// Image stems in a directory: "x.image.c2dg" -> "x"; bare "x.c2dg" -> "x"
// (density/points files are not image inputs).
std::vector<std::pair<std::string, fs::path>> find_images(const fs::path& dir) {
    std::vector<std::pair<std::string, fs::path>> out;
    std::vector<std::pair<std::string, fs::path>> bare;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        const std::string name = e.path().filename().string();
        const std::string image_suffix = ".image.c2dg";
        if (name.size() > image_suffix.size() &&
            name.compare(name.size() - image_suffix.size(), image_suffix.size(), image_suffix) ==
                0) {
            out.emplace_back(name.substr(0, name.size() - image_suffix.size()), e.path());
        } else if (e.path().extension() == ".c2dg" &&
                   name.find(".density.") == std::string::npos) {
            bare.emplace_back(e.path().stem().string(), e.path());
        }
    }
    if (out.empty()) out = std::move(bare);
    std::sort(out.begin(), out.end());
    return out;
}

} // namespace

void run_predict(const PredictArgs& args) {
    RunClock clock;
    if (args.checkpoint.empty() || args.images.empty() || args.out.empty()) {
        throw ParamError("predict: --checkpoint, --images and --out are required");
    }
    const LoadedModel model = load_checkpoint(args.checkpoint);
    if (!fs::is_directory(args.images)) {
        throw FormatError("predict: --images is not a directory: " + args.images);
    }
    const auto images = find_images(args.images);
    if (images.empty()) throw FormatError("predict: no .c2dg images under " + args.images);

    const fs::path out(args.out);
    fs::create_directories(out);

    std::vector<double> counts(images.size());
    parallel_for(images.size(), thread_cap(), [&](size_t i) {
        const Grid2D image = load_c2dg(images[i].second);
        const Grid2D density =
            predict_density(image, model.params, model.norm_mean, model.norm_std);
        save_c2dg(density, out / (images[i].first + ".density.c2dg"));
        save_pgm16(density, out / (images[i].first + ".density.pgm"));
        counts[i] = integrate(density);
    });

    std::vector<fs::path> artifacts;
    {
        std::ofstream os(out / "counts.csv");
        if (!os) throw FormatError("predict: cannot write counts.csv");
        os << "path,count\n";
        for (size_t i = 0; i < images.size(); ++i) {
            os << images[i].first << "," << counts[i] << "\n";
        }
    }
    artifacts.push_back(out / "counts.csv");
    for (size_t i = 0; i < images.size(); ++i) {
        artifacts.push_back(out / (images[i].first + ".density.c2dg"));
        artifacts.push_back(out / (images[i].first + ".density.pgm"));
    }
    std::sort(artifacts.begin(), artifacts.end());
    json jargs = {{"checkpoint", args.checkpoint}, {"images", args.images}, {"out", args.out}};
    write_run_manifest(out, "predict", std::move(jargs), artifacts, clock.seconds());
    std::cout << "predict: wrote " << images.size() << " density maps to " << args.out << "\n";
}

void run_eval(const EvalArgs& args) {
    RunClock clock;
    if (args.pred.empty() || args.gt.empty()) {
        throw ParamError("eval: --pred and --gt are required");
    }
    if (args.tile < 1) throw ParamError("eval: --tile must be >= 1");

    // Ground-truth stems come from the gt densities; every one needs a
    // matching prediction and vice versa.
    std::map<std::string, fs::path> gt_density, pred_density;
    const std::string dsuffix = ".density.c2dg";
    auto collect = [&dsuffix](const fs::path& dir, std::map<std::string, fs::path>& into) {
        if (!fs::is_directory(dir)) throw FormatError("eval: not a directory: " + dir.string());
        for (const auto& e : fs::directory_iterator(dir)) {
            const std::string name = e.path().filename().string();
            if (name.size() > dsuffix.size() &&
                name.compare(name.size() - dsuffix.size(), dsuffix.size(), dsuffix) == 0) {
                into[name.substr(0, name.size() - dsuffix.size())] = e.path();
            }
        }
    };
    collect(args.gt, gt_density);
    collect(args.pred, pred_density);

    std::string unmatched;
    for (const auto& [stem, p] : gt_density) {
        if (pred_density.find(stem) == pred_density.end()) {
            unmatched += " missing-prediction:" + stem;
        }
    }
    for (const auto& [stem, p] : pred_density) {
        if (gt_density.find(stem) == gt_density.end()) unmatched += " missing-gt:" + stem;
    }
    if (!unmatched.empty()) throw IntegrityError("eval: unmatched filenames:" + unmatched);
    if (gt_density.empty()) throw IntegrityError("eval: no *.density.c2dg pairs found");

    struct PerImage {
        double pred_count, gt_count, ssim, psnr;
        std::vector<double> tile_pred, tile_gt;
        long matches, detections, gt_points;
    };
    std::vector<std::string> stems;
    for (const auto& [stem, p] : gt_density) stems.push_back(stem);
    std::vector<PerImage> per(stems.size());

    parallel_for(stems.size(), thread_cap(), [&](size_t i) {
        const Grid2D pred = load_c2dg(pred_density.at(stems[i]));
        const Grid2D gt = load_c2dg(gt_density.at(stems[i]));
        PerImage& r = per[i];
        r.pred_count = integrate(pred);
        r.gt_count = integrate(gt);
        r.ssim = ssim(pred, gt);
        r.psnr = psnr(pred, gt);
        for (int v0 = 0; v0 < pred.height; v0 += args.tile) {
            for (int u0 = 0; u0 < pred.width; u0 += args.tile) {
                Rect rect{u0, v0, std::min(args.tile, pred.width - u0),
                          std::min(args.tile, pred.height - v0)};
                r.tile_pred.push_back(subregion_count(pred, rect));
                r.tile_gt.push_back(subregion_count(gt, rect));
            }
        }
        const fs::path points_path = fs::path(args.gt) / (stems[i] + ".points.csv");
        if (!fs::exists(points_path)) {
            throw IntegrityError("eval: missing gt points file " + points_path.string());
        }
        const PointSet gt_points = load_points_csv(points_path);
        const PointSet detected =
            localize(pred, args.min_density_frac * pred.max_value(), args.nms_radius);
        const Prf prf = localization_prf(detected, gt_points, args.match_radius);
        // micro-average accumulators; matches recovered from recall*|gt|
        r.detections = static_cast<long>(detected.size());
        r.gt_points = static_cast<long>(gt_points.size());
        r.matches = std::lround(prf.recall * static_cast<double>(gt_points.size()));
    });

    EvalReport report;
    report.n_images = static_cast<int>(stems.size());
    std::vector<double> pred_counts, gt_counts, tile_pred, tile_gt;
    double ssim_sum = 0.0, psnr_sum = 0.0;
    long matches = 0, detections = 0, gt_total = 0;
    for (const PerImage& r : per) {
        pred_counts.push_back(r.pred_count);
        gt_counts.push_back(r.gt_count);
        ssim_sum += r.ssim;
        psnr_sum += r.psnr;
        tile_pred.insert(tile_pred.end(), r.tile_pred.begin(), r.tile_pred.end());
        tile_gt.insert(tile_gt.end(), r.tile_gt.begin(), r.tile_gt.end());
        matches += r.matches;
        detections += r.detections;
        gt_total += r.gt_points;
    }
    std::tie(report.mae, report.mse) = counting_errors(pred_counts, gt_counts);
    std::tie(report.subregion_mae, report.subregion_mse) = counting_errors(tile_pred, tile_gt);
    report.ssim = ssim_sum / report.n_images;
    report.psnr = psnr_sum / report.n_images;
    report.precision = detections > 0 ? static_cast<double>(matches) / detections : 0.0;
    report.recall = gt_total > 0 ? static_cast<double>(matches) / gt_total : 0.0;
    if (detections == 0 && gt_total == 0) {
        report.f1 = 1.0;
    } else {
        report.f1 = (report.precision + report.recall) > 0.0
                        ? 2.0 * report.precision * report.recall /
                              (report.precision + report.recall)
                        : 0.0;
    }

    std::cout << report.to_table();
    if (!args.out.empty()) {
        const fs::path out(args.out);
        fs::create_directories(out);
        write_file_atomic(out / "report.json", report.to_json() + "\n");
        write_file_atomic(out / "report.txt", report.to_table());
        json jargs = {
            {"pred", args.pred},           {"gt", args.gt},
            {"out", args.out},             {"tile", args.tile},
            {"match_radius", args.match_radius}, {"min_density_frac", args.min_density_frac},
            {"nms_radius", args.nms_radius},
        };
        write_run_manifest(out, "eval", std::move(jargs),
                           {out / "report.json", out / "report.txt"}, clock.seconds());
    }
}

void run_bank(const BankArgs& args) {
    RunClock clock;
    if (args.bank.empty()) throw ParamError("bank: --bank is required");
    const fs::path root(args.bank);

    // Either a single bank directory or a parent holding snapshot directories.
    std::vector<std::pair<std::string, fs::path>> snapshots;
    if (fs::exists(root / "bank.json")) {
        snapshots.emplace_back(root.filename().string(), root);
    } else if (fs::is_directory(root)) {
        for (const auto& e : fs::directory_iterator(root)) {
            if (e.is_directory() && fs::exists(e.path() / "bank.json")) {
                snapshots.emplace_back(e.path().filename().string(), e.path());
            }
        }
        std::sort(snapshots.begin(), snapshots.end());
    }
    if (snapshots.empty()) {
        throw IntegrityError("bank: no bank.json found under " + args.bank);
    }

    std::vector<fs::path> artifacts;
    if (!args.out.empty()) fs::create_directories(args.out);
    for (const auto& [label, dir] : snapshots) {
        const HistoricalMapBank bank = load_bank(dir);
        std::vector<int> entries = args.entries;
        if (entries.empty()) {
            for (int i = 0; i < std::min<int>(4, static_cast<int>(bank.entries.size())); ++i) {
                entries.push_back(i);
            }
        }
        for (int i : entries) {
            if (i < 0 || static_cast<size_t>(i) >= bank.entries.size()) {
                throw ParamError("bank: entry index " + std::to_string(i) +
                                 " out of range (n=" + std::to_string(bank.entries.size()) + ")");
            }
            const Grid2D& entry = bank.entries[i];
            long support = 0;
            for (float v : entry.values) support += v > 0.0f ? 1 : 0;
            std::printf("%s entry %d: mass %.6f, max %.6f, support %ld\n", label.c_str(), i,
                        integrate(entry), entry.max_value(), support);
            if (!args.out.empty()) {
                char name[64];
                std::snprintf(name, sizeof(name), "entry%06d_%s.pgm", i, label.c_str());
                const fs::path p = fs::path(args.out) / name;
                save_pgm16(entry, p);
                artifacts.push_back(p);
            }
        }
    }
    if (!args.out.empty()) {
        json jargs = {{"bank", args.bank}, {"out", args.out}, {"entries", args.entries}};
        write_run_manifest(fs::path(args.out), "bank", std::move(jargs), artifacts,
                           clock.seconds());
    }
}

} // namespace c2d::cli
