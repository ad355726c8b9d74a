#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "c2d/train.hpp"

namespace c2d::cli {

// FNV-1a 64-bit of the file bytes, as a fixed-width hex string.
std::string file_checksum(const std::filesystem::path& path);

// Number of worker threads for per-image parallel sections, from C2D_THREADS
// (default 1).
int thread_cap();

struct SynthArgs {
    int n = 200;
    SceneConfig scene;
    double train_frac = 0.8, val_frac = 0.1, test_frac = 0.1;
    uint64_t seed = 7;
    std::string out;
    bool write_pgm = false;
};
void run_synth(const SynthArgs& args);

struct TrainArgs {
    std::string data;
    std::string out;
    TrainConfig cfg;
};
void run_train(const TrainArgs& args);

// Rebuilds the full argument set from a previous run's manifest.
TrainArgs train_args_from_manifest(const std::filesystem::path& manifest_path);

struct PredictArgs {
    std::string checkpoint;
    std::string images; // directory of *.image.c2dg (or bare *.c2dg) files
    std::string out;
};
void run_predict(const PredictArgs& args);

struct EvalArgs {
    std::string pred; // directory of *.density.c2dg predictions
    std::string gt;   // dataset split directory with densities + points
    std::string out;  // optional; report.json/report.txt land here
    int tile = 8;
    double match_radius = 4.0;
    double min_density_frac = 0.2; // of the prediction's max
    int nms_radius = 2;
};
void run_eval(const EvalArgs& args);

struct BankArgs {
    std::string bank; // a bank directory or a parent of bank_epoch_* snapshots
    std::string out;  // optional PGM export directory
    std::vector<int> entries;
};
void run_bank(const BankArgs& args);

} // namespace c2d::cli
