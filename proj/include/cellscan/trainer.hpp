#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "cellscan/canny.hpp"
#include "cellscan/dataset.hpp"
#include "cellscan/model.hpp"

namespace cellscan {

struct TrainConfig {
    std::size_t epochs = 5;
    std::size_t batch_size = 32;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double test_fraction = 0.2;
    std::uint64_t seed = 42;
};

void validate(const TrainConfig& cfg);

struct EpochMetrics {
    std::size_t epoch = 0;       // 1-based
    double train_loss = 0.0;     // mean per-sample BCE over the epoch
    double train_accuracy = 0.0; // measured on the train-mode forward outputs
    double test_accuracy = 0.0;
    double wall_seconds = 0.0;   // training only; test evaluation excluded
};

struct ExperimentReport {
    InputMode mode = InputMode::raw;
    std::vector<EpochMetrics> epochs;
    double total_train_seconds = 0.0; // sum of per-epoch wall_seconds
    double final_test_accuracy = 0.0;
    std::uintmax_t corpus_bytes = 0;
    std::string system;
};

// Runs the full loop: per epoch, iterate the deterministic shuffle of
// train_index, forward/loss/backward/Adam per batch, then evaluate on
// test_index. Decoded images are cached in memory after the first epoch.
// on_epoch, when set, is called with each epoch's finished metrics.
std::vector<EpochMetrics> train(Model& model, const DatasetIndex& train_index,
                                const DatasetIndex& test_index, const TrainConfig& cfg,
                                const std::function<void(const EpochMetrics&)>& on_epoch = {});

// Eval-mode accuracy with the 0.5 threshold (ties count as infected).
double evaluate(Model& model, const DatasetIndex& index, ImageCache* cache = nullptr);

struct Prediction {
    double probability = 0.0;
    Label label = Label::uninfected;
};

// Applies the mode's preprocessing to one raw image file (canny mode runs
// the edge pipeline first) and classifies it.
Prediction predict_one(Model& model, const std::filesystem::path& image_path, InputMode mode,
                       const CannyParams& params = {});

// JSON report plus a sibling .csv with one row per epoch
// (epoch,train_loss,train_acc,test_acc,wall_seconds).
void write_report(const ExperimentReport& report, const std::filesystem::path& path);
ExperimentReport read_report(const std::filesystem::path& path);
std::filesystem::path csv_path_for(const std::filesystem::path& report_path);

// "<os> <arch>, N hardware threads" for the report's system field.
std::string system_descriptor();

} // namespace cellscan
