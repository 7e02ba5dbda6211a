#include "cellscan/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#ifdef __unix__
#include <sys/utsname.h>
#endif

#include "cellscan/error.hpp"
#include "cellscan/model_io.hpp"
#include "cellscan/png_io.hpp"
#include "cellscan/thread_pool.hpp"

using nlohmann::json;

namespace cellscan {
namespace {

using clock_type = std::chrono::steady_clock;

double seconds_since(clock_type::time_point t0) {
    return std::chrono::duration<double>(clock_type::now() - t0).count();
}

std::size_t count_correct(const Tensor& p, const Tensor& y) {
    std::size_t correct = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        real predicted = p[i] >= real(0.5) ? real{1} : real{0};
        if (predicted == y[i]) ++correct;
    }
    return correct;
}

} // namespace

void validate(const TrainConfig& cfg) {
    if (cfg.epochs < 1) throw ParamError("trainer", "epochs must be >= 1");
    if (cfg.batch_size < 1) throw ParamError("trainer", "batch_size must be >= 1");
    if (cfg.learning_rate < 0)
        throw ParamError("trainer", "learning_rate must be >= 0");
    if (!(cfg.test_fraction > 0 && cfg.test_fraction < 1))
        throw ParamError("trainer", "test_fraction must be in (0, 1)");
    if (!(cfg.beta1 > 0 && cfg.beta1 < 1) || !(cfg.beta2 > 0 && cfg.beta2 < 1))
        throw ParamError("trainer", "Adam betas must be in (0, 1)");
    if (!(cfg.epsilon > 0)) throw ParamError("trainer", "Adam epsilon must be > 0");
}

std::vector<EpochMetrics> train(Model& model, const DatasetIndex& train_index,
                                const DatasetIndex& test_index, const TrainConfig& cfg,
                                const std::function<void(const EpochMetrics&)>& on_epoch) {
    validate(cfg);
    if (train_index.size() == 0 || test_index.size() == 0)
        throw ParamError("trainer", "train/test indices must be non-empty");
    if (model.config.input_channels != train_index.channels())
        throw ConfigError("trainer", "model expects " +
                                         std::to_string(model.config.input_channels) +
                                         " channels but dataset mode '" +
                                         to_string(train_index.mode) + "' provides " +
                                         std::to_string(train_index.channels()));

    model.adam.alpha = cfg.learning_rate;
    model.adam.beta1 = cfg.beta1;
    model.adam.beta2 = cfg.beta2;
    model.adam.epsilon = cfg.epsilon;

    auto params = model.parameters();
    auto grads = model.gradients();
    Rng dropout_rng(mix_seed(cfg.seed, 0x64726f70ull)); // distinct stream per run

    ImageCache train_cache(train_index.size());
    ImageCache test_cache(test_index.size());

    std::vector<EpochMetrics> metrics;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        auto t0 = clock_type::now();
        double loss_sum = 0.0;
        std::size_t seen = 0, correct = 0, batch_no = 0;

        BatchStream stream = make_batches(train_index, cfg.batch_size, cfg.seed, epoch,
                                          &train_cache);
        while (auto batch = stream.next()) {
            ++batch_no;
            try {
                Tensor p = model.forward(batch->inputs, Phase::train, dropout_rng);
                auto [loss, grad_p] = bce_loss(p, batch->targets);
                model.backward(grad_p);
                adam_step(params, grads, model.adam);
                loss_sum += double(loss) * double(batch->size());
                correct += count_correct(p, batch->targets);
                seen += batch->size();
            } catch (const Error& e) {
                throw Error("trainer", "epoch " + std::to_string(epoch) + ", batch " +
                                           std::to_string(batch_no) + ": " + e.what());
            }
        }

        EpochMetrics em;
        em.epoch = epoch;
        em.train_loss = loss_sum / double(seen);
        em.train_accuracy = double(correct) / double(seen);
        em.wall_seconds = seconds_since(t0); // stop before test evaluation
        em.test_accuracy = evaluate(model, test_index, &test_cache);
        metrics.push_back(em);
        if (on_epoch) on_epoch(em);
    }
    return metrics;
}

double evaluate(Model& model, const DatasetIndex& index, ImageCache* cache) {
    if (index.size() == 0) throw ParamError("trainer", "cannot evaluate an empty index");
    if (model.config.input_channels != index.channels())
        throw ConfigError("trainer", "model/dataset channel mismatch in evaluate");

    constexpr std::size_t kEvalBatch = 64;
    BatchStream stream(index, kEvalBatch, 0, 0, /*shuffle=*/false, cache);
    std::size_t correct = 0, seen = 0;
    while (auto batch = stream.next()) {
        Tensor p = model.forward_eval(batch->inputs);
        correct += count_correct(p, batch->targets);
        seen += batch->size();
    }
    return double(correct) / double(seen);
}

Prediction predict_one(Model& model, const std::filesystem::path& image_path, InputMode mode,
                       const CannyParams& params) {
    RgbImage rgb = load_png(image_path);
    std::size_t ch = mode == InputMode::raw ? 3 : 1;
    if (model.config.input_channels != ch)
        throw ConfigError("trainer", "model expects " +
                                         std::to_string(model.config.input_channels) +
                                         " channels; mode '" + to_string(mode) + "' provides " +
                                         std::to_string(ch));

    std::size_t side = model.config.input_size;
    Tensor input = zeros({1, ch, side, side});
    const real scale = real(1.0 / 255.0);
    if (mode == InputMode::raw) {
        RgbImage resized = resize_bilinear(rgb, side, side);
        for (std::size_t i = 0; i < side * side; ++i)
            for (std::size_t c = 0; c < 3; ++c)
                input[c * side * side + i] = real(resized.pixels[i * 3 + c]) * scale;
    } else {
        GrayImage edges = resize_bilinear(canny_pipeline(rgb, params), side, side);
        for (std::size_t i = 0; i < side * side; ++i)
            input[i] = real(edges.pixels[i]) * scale;
    }

    Tensor p = model.forward_eval(input);
    Prediction out;
    out.probability = double(p[0]);
    out.label = out.probability >= 0.5 ? Label::infected : Label::uninfected;
    return out;
}

std::filesystem::path csv_path_for(const std::filesystem::path& report_path) {
    std::filesystem::path csv = report_path;
    csv.replace_extension(".csv");
    return csv;
}

void write_report(const ExperimentReport& report, const std::filesystem::path& path) {
    json j;
    j["mode"] = to_string(report.mode);
    j["system"] = report.system;
    j["corpus_bytes"] = report.corpus_bytes;
    j["final_test_accuracy"] = report.final_test_accuracy;
    j["totals"] = json{{"train_seconds", report.total_train_seconds}};
    json epochs = json::array();
    for (const auto& em : report.epochs)
        epochs.push_back(json{{"epoch", em.epoch},
                              {"train_loss", em.train_loss},
                              {"train_acc", em.train_accuracy},
                              {"test_acc", em.test_accuracy},
                              {"wall_seconds", em.wall_seconds}});
    j["epochs"] = epochs;

    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("trainer", "cannot open " + path.string() + " for writing");
    f << j.dump(2) << "\n";
    if (!f.good()) throw IoError("trainer", "write failed for " + path.string());

    std::ofstream csv(csv_path_for(path), std::ios::trunc);
    if (!csv) throw IoError("trainer", "cannot open " + csv_path_for(path).string());
    csv << "epoch,train_loss,train_acc,test_acc,wall_seconds\n";
    csv.precision(9);
    for (const auto& em : report.epochs)
        csv << em.epoch << "," << em.train_loss << "," << em.train_accuracy << ","
            << em.test_accuracy << "," << em.wall_seconds << "\n";
    if (!csv.good()) throw IoError("trainer", "write failed for " + csv_path_for(path).string());
}

ExperimentReport read_report(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw IoError("trainer", "cannot open " + path.string());
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw FormatError("trainer", path.string() + " is not valid JSON: " + e.what());
    }
    ExperimentReport report;
    try {
        report.mode = parse_input_mode(j.at("mode").get<std::string>());
        report.system = j.at("system").get<std::string>();
        report.corpus_bytes = j.at("corpus_bytes").get<std::uintmax_t>();
        report.final_test_accuracy = j.at("final_test_accuracy").get<double>();
        report.total_train_seconds = j.at("totals").at("train_seconds").get<double>();
        for (const auto& e : j.at("epochs")) {
            EpochMetrics em;
            em.epoch = e.at("epoch").get<std::size_t>();
            em.train_loss = e.at("train_loss").get<double>();
            em.train_accuracy = e.at("train_acc").get<double>();
            em.test_accuracy = e.at("test_acc").get<double>();
            em.wall_seconds = e.at("wall_seconds").get<double>();
            report.epochs.push_back(em);
        }
    } catch (const json::exception& e) {
        throw FormatError("trainer", path.string() + " is missing report fields: " + e.what());
    }
    return report;
}

std::string system_descriptor() {
    std::ostringstream out;
#ifdef __unix__
    utsname info{};
    if (uname(&info) == 0)
        out << info.sysname << " " << info.machine;
    else
        out << "unknown";
#else
    out << "unknown";
#endif
    out << ", " << thread_count() << " hardware threads";
    return out.str();
}

} // namespace cellscan
