#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "json.hpp"

#include "c2d/cli.hpp"
#include "c2d/errors.hpp"

using namespace c2d;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const char* name) {
    auto dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

cli::SynthArgs tiny_synth(const std::string& out, uint64_t seed = 7) {
    cli::SynthArgs args;
    args.n = 6;
    args.scene.size = 32;
    args.scene.count_min = 3;
    args.scene.count_max = 10;
    args.train_frac = 0.5;
    args.val_frac = 0.25;
    args.test_frac = 0.25;
    args.seed = seed;
    args.out = out;
    return args;
}

cli::TrainArgs tiny_train(const std::string& data, const std::string& out) {
    cli::TrainArgs args;
    args.data = data;
    args.out = out;
    args.cfg.epochs = 2;
    args.cfg.learning_rate = 0.02;
    args.cfg.seed = 3;
    args.cfg.snapshot_every = 1;
    return args;
}

int run_binary(const std::string& args) {
    const std::string cmd = std::string(C2D_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

nlohmann::json read_json(const fs::path& p) {
    std::ifstream is(p);
    REQUIRE(is.good());
    nlohmann::json j;
    is >> j;
    return j;
}

} // namespace

TEST_CASE("synth writes a reproducible dataset") {
    const auto dir_a = fresh_dir("c2d_cli_synth_a");
    const auto dir_b = fresh_dir("c2d_cli_synth_b");
    cli::run_synth(tiny_synth(dir_a.string()));
    cli::run_synth(tiny_synth(dir_b.string()));

    const auto ma = read_json(dir_a / "run_manifest.json");
    const auto mb = read_json(dir_b / "run_manifest.json");
    CHECK(ma.at("command") == "synth");
    CHECK(ma.at("outputs") == mb.at("outputs")); // identical artifact checksums
    CHECK(!ma.at("outputs").empty());

    CHECK_THROWS_AS(cli::run_synth(tiny_synth("")), ParamError);
    cli::SynthArgs inverted = tiny_synth(fresh_dir("c2d_cli_synth_c").string());
    inverted.scene.count_min = 50;
    inverted.scene.count_max = 5;
    CHECK_THROWS_AS(cli::run_synth(inverted), ParamError);
}

TEST_CASE("train writes checkpoint, log, bank and manifest") {
    const auto data = fresh_dir("c2d_cli_train_data");
    cli::run_synth(tiny_synth(data.string()));
    const auto out = fresh_dir("c2d_cli_train_out");
    cli::run_train(tiny_train(data.string(), out.string()));

    CHECK(fs::exists(out / "checkpoint.c2dp"));
    CHECK(fs::exists(out / "bank" / "bank.json"));
    CHECK(fs::exists(out / "bank_epoch_0000" / "bank.json"));
    CHECK(fs::exists(out / "run_manifest.json"));

    std::ifstream log(out / "train_log.jsonl");
    int lines = 0;
    std::string line;
    while (std::getline(log, line)) {
        if (!line.empty()) ++lines;
    }
    CHECK(lines == 2); // one record per epoch
}

TEST_CASE("train rerun from manifest reproduces the checkpoint") {
    const auto data = fresh_dir("c2d_cli_manifest_data");
    cli::run_synth(tiny_synth(data.string(), 13));
    const auto out1 = fresh_dir("c2d_cli_manifest_out1");
    cli::run_train(tiny_train(data.string(), out1.string()));

    cli::TrainArgs replay = cli::train_args_from_manifest(out1 / "run_manifest.json");
    const auto out2 = fresh_dir("c2d_cli_manifest_out2");
    replay.out = out2.string();
    cli::run_train(replay);

    CHECK(cli::file_checksum(out1 / "checkpoint.c2dp") ==
          cli::file_checksum(out2 / "checkpoint.c2dp"));
}

TEST_CASE("predict emits densities and counts for every image") {
    const auto data = fresh_dir("c2d_cli_predict_data");
    cli::run_synth(tiny_synth(data.string(), 23));
    const auto out = fresh_dir("c2d_cli_predict_train");
    cli::run_train(tiny_train(data.string(), out.string()));

    cli::PredictArgs pargs;
    pargs.checkpoint = (out / "checkpoint.c2dp").string();
    pargs.images = (data / "val").string();
    pargs.out = fresh_dir("c2d_cli_predict_out").string();
    cli::run_predict(pargs);

    int maps = 0;
    for (const auto& e : fs::directory_iterator(pargs.out)) {
        if (e.path().extension() == ".c2dg") ++maps;
    }
    std::ifstream counts(fs::path(pargs.out) / "counts.csv");
    std::string line;
    int rows = -1; // header
    while (std::getline(counts, line)) {
        if (!line.empty()) ++rows;
    }
    CHECK(maps == rows);
    CHECK(rows >= 1);

    // deterministic rerun
    const std::string sum1 = cli::file_checksum(fs::path(pargs.out) / "counts.csv");
    cli::run_predict(pargs);
    CHECK(cli::file_checksum(fs::path(pargs.out) / "counts.csv") == sum1);
}

TEST_CASE("eval of predictions against themselves is perfect") {
    const auto data = fresh_dir("c2d_cli_eval_data");
    cli::run_synth(tiny_synth(data.string(), 29));

    // use the gt densities as "predictions"
    const auto pred = fresh_dir("c2d_cli_eval_pred");
    for (const auto& e : fs::directory_iterator(data / "test")) {
        const std::string name = e.path().filename().string();
        if (name.find(".density.c2dg") != std::string::npos) {
            fs::copy_file(e.path(), pred / name);
        }
    }
    cli::EvalArgs eargs;
    eargs.pred = pred.string();
    eargs.gt = (data / "test").string();
    eargs.out = fresh_dir("c2d_cli_eval_out").string();
    eargs.match_radius = 2.0;
    cli::run_eval(eargs);

    const auto report = read_json(fs::path(eargs.out) / "report.json");
    CHECK(report.at("mae").get<double>() == 0.0);
    CHECK(report.at("ssim").get<double>() == 1.0);
    CHECK(report.at("psnr") == "+inf");
    CHECK(report.at("subregion_mae").get<double>() == 0.0);
    CHECK(report.at("f1").get<double>() == doctest::Approx(1.0));
}

TEST_CASE("eval lists unmatched filenames") {
    const auto data = fresh_dir("c2d_cli_eval2_data");
    cli::run_synth(tiny_synth(data.string(), 31));
    const auto pred = fresh_dir("c2d_cli_eval2_pred");
    bool skipped_one = false;
    std::string skipped;
    for (const auto& e : fs::directory_iterator(data / "test")) {
        const std::string name = e.path().filename().string();
        if (name.find(".density.c2dg") == std::string::npos) continue;
        if (!skipped_one) {
            skipped_one = true;
            skipped = name.substr(0, name.size() - std::string(".density.c2dg").size());
            continue;
        }
        fs::copy_file(e.path(), pred / name);
    }
    cli::EvalArgs eargs;
    eargs.pred = pred.string();
    eargs.gt = (data / "test").string();
    CHECK_THROWS_WITH_AS(cli::run_eval(eargs), doctest::Contains(skipped.c_str()),
                         IntegrityError);
}

TEST_CASE("bank inspection prints stats and exports") {
    const auto data = fresh_dir("c2d_cli_bank_data");
    cli::run_synth(tiny_synth(data.string(), 37));
    const auto out = fresh_dir("c2d_cli_bank_train");
    cli::run_train(tiny_train(data.string(), out.string()));

    cli::BankArgs bargs;
    bargs.bank = (out / "bank").string();
    bargs.out = fresh_dir("c2d_cli_bank_out").string();
    bargs.entries = {0, 1};
    cli::run_bank(bargs);
    int pgms = 0;
    for (const auto& e : fs::directory_iterator(bargs.out)) {
        if (e.path().extension() == ".pgm") ++pgms;
    }
    CHECK(pgms == 2);

    bargs.entries = {999};
    CHECK_THROWS_AS(cli::run_bank(bargs), ParamError);

    cli::BankArgs snaps;
    snaps.bank = out.string(); // parent of bank_epoch_* directories
    snaps.out = fresh_dir("c2d_cli_bank_snaps").string();
    snaps.entries = {0};
    cli::run_bank(snaps);
    int snap_pgms = 0;
    for (const auto& e : fs::directory_iterator(snaps.out)) {
        if (e.path().extension() == ".pgm") ++snap_pgms;
    }
    CHECK(snap_pgms >= 2); // one per snapshot, plus the final bank
}

TEST_CASE("binary exit codes") {
    CHECK(run_binary("--help") == 0);
    CHECK(run_binary("") == 1);
    CHECK(run_binary("nonsense") == 1);
    const auto out = fresh_dir("c2d_cli_exit");
    CHECK(run_binary("synth --counts 50:5 --out " + (out / "d").string()) == 1);
    CHECK(run_binary("eval --pred /no/such/dir --gt /no/such/dir") == 2);
    CHECK(run_binary("predict --checkpoint /no/such.c2dp --images /tmp --out " +
                     (out / "p").string()) == 2);

    const auto data = fresh_dir("c2d_cli_exit_data");
    CHECK(run_binary("synth --n 6 --size 32 --counts 3:10 --split 0.5:0.25:0.25 --seed 7 --out " +
                     data.string()) == 0);
    CHECK(fs::exists(data / "run_manifest.json"));
}
