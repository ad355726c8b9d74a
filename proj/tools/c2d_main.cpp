#include <filesystem>
#include <functional>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "c2d/cli.hpp"
#include "c2d/errors.hpp"

namespace {

// Exit codes: 0 success, 1 usage, 2 data/integrity, 3 numeric failure.
int dispatch(const std::function<void()>& body) {
    try {
        body();
        return 0;
    } catch (const c2d::ParamError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const c2d::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

std::pair<int, int> parse_count_range(const std::string& s) {
    const size_t colon = s.find(':');
    if (colon == std::string::npos) {
        throw c2d::ParamError("--counts must be lo:hi, got '" + s + "'");
    }
    try {
        const int lo = std::stoi(s.substr(0, colon));
        const int hi = std::stoi(s.substr(colon + 1));
        return {lo, hi};
    } catch (const std::exception&) {
        throw c2d::ParamError("--counts must be lo:hi integers, got '" + s + "'");
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"count2density: density estimation from count-only annotations"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic scene dataset");
    c2d::cli::SynthArgs synth_args;
    std::string counts_flag = "5:50";
    std::string split_flag = "0.8:0.1:0.1";
    synth->add_option("--n", synth_args.n, "number of scenes");
    synth->add_option("--size", synth_args.scene.size, "scene side in pixels");
    synth->add_option("--counts", counts_flag, "count range lo:hi");
    synth->add_option("--clusters", synth_args.scene.cluster_count, "cluster centers per scene");
    synth->add_option("--spread", synth_args.scene.cluster_spread, "cluster spread sigma");
    synth->add_option("--head-radius", synth_args.scene.head_radius, "head disk radius");
    synth->add_option("--render-sigma", synth_args.scene.render_sigma, "gt density kernel sigma");
    synth->add_option("--split", split_flag, "train:val:test fractions");
    synth->add_option("--seed", synth_args.seed, "generation seed");
    synth->add_option("--out", synth_args.out, "output directory")->required();
    synth->add_flag("--pgm", synth_args.write_pgm, "also export images as PGM");

    // train
    auto* train = app.add_subcommand("train", "train the density predictor");
    c2d::cli::TrainArgs train_args;
    std::string sampler_flag = "weighted", bank_init_flag = "saliency", from_manifest;
    bool no_contrastive = false, no_bank = false, include_positive = false;
    train->add_option("--data", train_args.data, "dataset directory (from synth)");
    train->add_option("--out", train_args.out, "output directory");
    train->add_option("--epochs", train_args.cfg.epochs, "training epochs");
    train->add_option("--lr", train_args.cfg.learning_rate, "learning rate");
    train->add_option("--weight-decay", train_args.cfg.weight_decay, "weight decay");
    train->add_option("--alpha", train_args.cfg.alpha, "bank EMA coefficient");
    train->add_option("--tau", train_args.cfg.tau, "contrastive temperature");
    train->add_option("--render-sigma", train_args.cfg.render_sigma, "pseudo-map kernel sigma");
    train->add_option("--prior-blur-sigma", train_args.cfg.prior_blur_sigma,
                      "prior smoothing sigma");
    train->add_option("--sampler", sampler_flag, "weighted|topk");
    train->add_option("--bank-init", bank_init_flag, "saliency|blob|none|external");
    train->add_option("--blob-radius", train_args.cfg.blob_radius, "blob init radius");
    train->add_option("--bank-maps", train_args.cfg.external_saliency_dir,
                      "directory of external saliency maps (bank-init external)");
    train->add_option("--labeled-fraction", train_args.cfg.labeled_fraction,
                      "fraction of images trained on gt maps");
    train->add_option("--seed", train_args.cfg.seed, "training seed");
    train->add_option("--snapshot-every", train_args.cfg.snapshot_every,
                      "bank snapshot period in epochs (0 = off)");
    train->add_option("--ctr-threshold", train_args.cfg.contrastive.threshold,
                      "crowd threshold on the normalized density");
    train->add_option("--ctr-patch", train_args.cfg.contrastive.patch, "patch cell side");
    train->add_option("--ctr-negatives", train_args.cfg.contrastive.negatives,
                      "negatives per pair batch");
    train->add_option("--ctr-cap", train_args.cfg.contrastive.batch_cap,
                      "pair batches per image");
    train->add_flag("--ctr-include-positive", include_positive,
                    "include the positive in the loss denominator");
    train->add_flag("--no-contrastive", no_contrastive, "disable the contrastive regularizer");
    train->add_flag("--no-bank", no_bank,
                    "rebuild the prior from the current prediction each step");
    train->add_option("--from-manifest", from_manifest,
                      "reproduce a previous run from its run_manifest.json");

    // predict
    auto* predict = app.add_subcommand("predict", "predict density maps for images");
    c2d::cli::PredictArgs predict_args;
    predict->add_option("--checkpoint", predict_args.checkpoint, "checkpoint file")->required();
    predict->add_option("--images", predict_args.images, "image directory")->required();
    predict->add_option("--out", predict_args.out, "output directory")->required();

    // eval
    auto* eval = app.add_subcommand("eval", "evaluate predictions against ground truth");
    c2d::cli::EvalArgs eval_args;
    eval->add_option("--pred", eval_args.pred, "prediction directory")->required();
    eval->add_option("--gt", eval_args.gt, "ground-truth directory")->required();
    eval->add_option("--out", eval_args.out, "report output directory");
    eval->add_option("--tile", eval_args.tile, "subregion tile side");
    eval->add_option("--match-radius", eval_args.match_radius, "localization match radius");
    eval->add_option("--min-density", eval_args.min_density_frac,
                     "peak threshold as a fraction of the map max");
    eval->add_option("--nms-radius", eval_args.nms_radius, "peak suppression radius");

    // bank
    auto* bank = app.add_subcommand("bank", "inspect a historical map bank");
    c2d::cli::BankArgs bank_args;
    bank->add_option("--bank", bank_args.bank, "bank or snapshots directory")->required();
    bank->add_option("--out", bank_args.out, "PGM export directory");
    bank->add_option("--entries", bank_args.entries, "entry indices to inspect");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    if (synth->parsed()) {
        return dispatch([&] {
            std::tie(synth_args.scene.count_min, synth_args.scene.count_max) =
                parse_count_range(counts_flag);
            const size_t c1 = split_flag.find(':'), c2 = split_flag.rfind(':');
            if (c1 == std::string::npos || c2 == c1) {
                throw c2d::ParamError("--split must be train:val:test, got '" + split_flag + "'");
            }
            synth_args.train_frac = std::stod(split_flag.substr(0, c1));
            synth_args.val_frac = std::stod(split_flag.substr(c1 + 1, c2 - c1 - 1));
            synth_args.test_frac = std::stod(split_flag.substr(c2 + 1));
            c2d::cli::run_synth(synth_args);
        });
    }
    if (train->parsed()) {
        return dispatch([&] {
            if (!from_manifest.empty()) {
                c2d::cli::TrainArgs manifest_args = c2d::cli::train_args_from_manifest(from_manifest);
                if (!train_args.out.empty()) manifest_args.out = train_args.out;
                c2d::cli::run_train(manifest_args);
                return;
            }
            train_args.cfg.sampler = sampler_flag == "topk" ? c2d::SamplerKind::topk
                                                            : c2d::SamplerKind::weighted;
            if (sampler_flag != "topk" && sampler_flag != "weighted") {
                throw c2d::ParamError("--sampler must be weighted|topk, got '" + sampler_flag +
                                      "'");
            }
            if (bank_init_flag == "saliency") {
                train_args.cfg.bank_init = c2d::BankInit::saliency;
            } else if (bank_init_flag == "blob") {
                train_args.cfg.bank_init = c2d::BankInit::blob;
            } else if (bank_init_flag == "none") {
                train_args.cfg.bank_init = c2d::BankInit::none;
            } else if (bank_init_flag == "external") {
                train_args.cfg.bank_init = c2d::BankInit::external;
            } else {
                throw c2d::ParamError("--bank-init must be saliency|blob|none|external, got '" +
                                      bank_init_flag + "'");
            }
            train_args.cfg.use_contrastive = !no_contrastive;
            train_args.cfg.use_bank = !no_bank;
            train_args.cfg.contrastive.include_positive_in_denominator = include_positive;
            c2d::cli::run_train(train_args);
        });
    }
    if (predict->parsed()) return dispatch([&] { c2d::cli::run_predict(predict_args); });
    if (eval->parsed()) return dispatch([&] { c2d::cli::run_eval(eval_args); });
    if (bank->parsed()) return dispatch([&] { c2d::cli::run_bank(bank_args); });
    return 1;
}
