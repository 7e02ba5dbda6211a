#include "cellscan/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>

#include <CLI11.hpp>

#include "cellscan/canny.hpp"
#include "cellscan/dataset.hpp"
#include "cellscan/error.hpp"
#include "cellscan/model_io.hpp"
#include "cellscan/png_io.hpp"
#include "cellscan/thread_pool.hpp"
#include "cellscan/trainer.hpp"

namespace fs = std::filesystem;

namespace cellscan {
namespace {

struct PreprocessArgs {
    std::string in_dir;
    std::string out_dir;
    double sigma = 1.4;
    int low = 50;
    int high = 100;
};

struct TrainArgs {
    std::string data_dir;
    std::string mode = "raw";
    std::size_t epochs = 5;
    std::size_t batch = 32;
    double lr = 1e-3;
    std::uint64_t seed = 42;
    double test_fraction = 0.2;
    std::size_t limit_per_class = 0;
    std::string model_out = "model.mcnn";
    std::string report_out = "report.json";
};

struct EvalArgs {
    std::string data_dir;
    std::string mode = "raw";
    std::string model_path;
};

struct PredictArgs {
    std::string image_path;
    std::string mode = "raw";
    std::string model_path;
};

void print_config(const std::vector<std::pair<std::string, std::string>>& kv) {
    std::cout << "configuration:\n";
    for (const auto& [k, v] : kv) std::cout << "  " << k << " = " << v << "\n";
    std::cout.flush();
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
}

int do_preprocess(const PreprocessArgs& a, std::size_t threads) {
    print_config({{"in", a.in_dir},
                  {"out", a.out_dir},
                  {"sigma", fmt(a.sigma)},
                  {"low", std::to_string(a.low)},
                  {"high", std::to_string(a.high)},
                  {"threads", std::to_string(threads == 0 ? thread_count() : threads)}});

    CannyParams params{float(a.sigma), float(a.low), float(a.high)};
    validate(params);

    DatasetIndex index = scan_dataset(a.in_dir);
    fs::path in_root(a.in_dir), out_root(a.out_dir);
    for (const char* cls : {"Parasitized", "Uninfected"})
        fs::create_directories(out_root / cls);

    std::atomic<std::uintmax_t> bytes_in{0}, bytes_out{0};
    std::atomic<std::size_t> done{0};
    parallel_for(index.size(), [&](std::size_t i0, std::size_t i1) {
        for (std::size_t i = i0; i < i1; ++i) {
            const auto& entry = index.entries[i];
            RgbImage rgb = load_png(entry.path);
            GrayImage edges = canny_pipeline(rgb, params);
            auto encoded = encode_png(edges);
            fs::path rel = fs::relative(entry.path, in_root);
            write_file(out_root / rel, encoded);
            bytes_in += fs::file_size(entry.path);
            bytes_out += encoded.size();
            std::size_t n = ++done;
            if (n % 5000 == 0)
                std::cout << "  processed " << n << "/" << index.size() << " images\n";
        }
    });

    double ratio = double(bytes_out.load()) / double(bytes_in.load());
    std::cout << "preprocessed " << index.size() << " images (" << index.infected_count
              << " Parasitized, " << index.uninfected_count << " Uninfected)\n"
              << "input bytes:  " << bytes_in.load() << "\n"
              << "output bytes: " << bytes_out.load() << "\n"
              << "size ratio:   " << fmt(ratio) << "\n";
    return 0;
}

int do_train(const TrainArgs& a, std::size_t threads) {
    print_config({{"data", a.data_dir},
                  {"mode", a.mode},
                  {"epochs", std::to_string(a.epochs)},
                  {"batch", std::to_string(a.batch)},
                  {"lr", fmt(a.lr)},
                  {"seed", std::to_string(a.seed)},
                  {"test-fraction", fmt(a.test_fraction)},
                  {"limit-per-class", std::to_string(a.limit_per_class)},
                  {"model-out", a.model_out},
                  {"report-out", a.report_out},
                  {"threads", std::to_string(threads == 0 ? thread_count() : threads)}});

    InputMode mode = parse_input_mode(a.mode);
    DatasetIndex index = scan_dataset(a.data_dir, mode);
    index = stratified_subset(index, a.limit_per_class, a.seed);
    auto [train_idx, test_idx] = stratified_split(index, a.test_fraction, a.seed);
    std::cout << "dataset: " << index.size() << " images (" << train_idx.size() << " train, "
              << test_idx.size() << " test)\n";

    ModelConfig mcfg;
    mcfg.input_channels = index.channels();
    mcfg.seed = a.seed;
    Model model = build_model(mcfg);

    TrainConfig tcfg;
    tcfg.epochs = a.epochs;
    tcfg.batch_size = a.batch;
    tcfg.learning_rate = a.lr;
    tcfg.seed = a.seed;
    tcfg.test_fraction = a.test_fraction;

    auto metrics = train(model, train_idx, test_idx, tcfg, [&](const EpochMetrics& em) {
        std::printf("epoch %zu/%zu: loss=%.4f train_acc=%.4f test_acc=%.4f (%.1fs)\n", em.epoch,
                    a.epochs, em.train_loss, em.train_accuracy, em.test_accuracy,
                    em.wall_seconds);
        std::fflush(stdout);
    });

    save_model(model, a.model_out);

    ExperimentReport report;
    report.mode = mode;
    report.epochs = metrics;
    for (const auto& em : metrics) report.total_train_seconds += em.wall_seconds;
    report.final_test_accuracy = metrics.back().test_accuracy;
    report.corpus_bytes = measure_corpus_bytes(a.data_dir);
    report.system = system_descriptor();
    write_report(report, a.report_out);

    std::printf("final test accuracy: %.4f\n", report.final_test_accuracy);
    std::printf("total training time: %.1fs\n", report.total_train_seconds);
    std::cout << "model written to " << a.model_out << ", report to " << a.report_out << "\n";
    return 0;
}

int do_eval(const EvalArgs& a, std::size_t threads) {
    print_config({{"data", a.data_dir},
                  {"mode", a.mode},
                  {"model", a.model_path},
                  {"threads", std::to_string(threads == 0 ? thread_count() : threads)}});
    InputMode mode = parse_input_mode(a.mode);
    DatasetIndex index = scan_dataset(a.data_dir, mode);
    Model model = load_model(a.model_path);
    double acc = evaluate(model, index);
    std::printf("accuracy: %.4f (%zu images)\n", acc, index.size());
    return 0;
}

int do_predict(const PredictArgs& a) {
    print_config({{"image", a.image_path}, {"mode", a.mode}, {"model", a.model_path}});
    InputMode mode = parse_input_mode(a.mode);
    Model model = load_model(a.model_path);
    Prediction pred = predict_one(model, a.image_path, mode);
    std::printf("probability: %.6f\n", pred.probability);
    std::printf("label: %s\n", pred.label == Label::infected ? "infected" : "uninfected");
    return 0;
}

int do_report(const std::vector<std::string>& inputs) {
    std::vector<ExperimentReport> reports;
    for (const auto& path : inputs) reports.push_back(read_report(path));

    // Table rows mirror the usual experiment summary: accuracy per run,
    // training seconds per run, corpus megabytes, epochs.
    std::map<std::string, std::vector<const ExperimentReport*>> by_mode;
    for (const auto& r : reports) by_mode[to_string(r.mode)].push_back(&r);

    std::size_t max_runs = 0;
    for (auto& [_, v] : by_mode) max_runs = std::max(max_runs, v.size());

    std::printf("%-28s", "metric");
    for (auto& [mode, _] : by_mode) std::printf("%14s", mode.c_str());
    std::printf("\n");
    for (std::size_t i = 0; i < max_runs; ++i) {
        std::printf("%-28s", ("accuracy (test " + std::to_string(i + 1) + ")").c_str());
        for (auto& [_, runs] : by_mode) {
            if (i < runs.size())
                std::printf("%13.2f%%", runs[i]->final_test_accuracy * 100.0);
            else
                std::printf("%14s", "-");
        }
        std::printf("\n");
    }
    for (std::size_t i = 0; i < max_runs; ++i) {
        std::printf("%-28s", ("training time s (test " + std::to_string(i + 1) + ")").c_str());
        for (auto& [_, runs] : by_mode) {
            if (i < runs.size())
                std::printf("%14.1f", runs[i]->total_train_seconds);
            else
                std::printf("%14s", "-");
        }
        std::printf("\n");
    }
    std::printf("%-28s", "corpus size (MB)");
    for (auto& [_, runs] : by_mode)
        std::printf("%14.1f", double(runs.front()->corpus_bytes) / 1e6);
    std::printf("\n%-28s", "epochs");
    for (auto& [_, runs] : by_mode)
        std::printf("%14zu", runs.front()->epochs.size());
    std::printf("\n");
    for (auto& [mode, runs] : by_mode)
        std::printf("system (%s): %s\n", mode.c_str(), runs.front()->system.c_str());
    return 0;
}

} // namespace

int run_cli(std::vector<std::string> args) {
    CLI::App app{"cellscan: malaria blood-cell classifier with optional Canny-edge "
                 "preprocessing"};
    app.require_subcommand(1);

    std::size_t threads = 0;
    app.add_option("--threads", threads, "worker thread cap (0 = hardware concurrency)")
        ->envname("CELLSCAN_THREADS");

    auto positive_fraction = CLI::Validator(
        [](std::string& s) -> std::string {
            double v = 0;
            try {
                v = std::stod(s);
            } catch (...) {
                return "not a number";
            }
            if (!(v > 0.0 && v < 1.0)) return "must be strictly between 0 and 1";
            return {};
        },
        "FRACTION", "fraction");

    PreprocessArgs pre;
    auto* sub_pre = app.add_subcommand(
        "preprocess", "run Canny edge detection over a corpus into a mirrored tree");
    sub_pre->add_option("--in", pre.in_dir, "source corpus root (Parasitized/ + Uninfected/)")
        ->required()
        ->check(CLI::ExistingDirectory);
    sub_pre->add_option("--out", pre.out_dir, "destination root for edge maps")->required();
    sub_pre->add_option("--sigma", pre.sigma, "Gaussian sigma in pixels")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    sub_pre->add_option("--low", pre.low, "low hysteresis threshold [0,255]")
        ->capture_default_str()
        ->check(CLI::Range(0, 255));
    sub_pre->add_option("--high", pre.high, "high hysteresis threshold [0,255]")
        ->capture_default_str()
        ->check(CLI::Range(0, 255));

    TrainArgs tr;
    auto* sub_train = app.add_subcommand("train", "train a model and write it plus a report");
    sub_train->add_option("--data", tr.data_dir, "corpus root")
        ->required()
        ->check(CLI::ExistingDirectory);
    sub_train->add_option("--mode", tr.mode, "input mode: raw (RGB) or canny (edge maps)")
        ->capture_default_str()
        ->check(CLI::IsMember({"raw", "canny"}));
    sub_train->add_option("--epochs", tr.epochs, "training epochs")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    sub_train->add_option("--batch", tr.batch, "mini-batch size")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    sub_train->add_option("--lr", tr.lr, "Adam learning rate")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    sub_train->add_option("--seed", tr.seed, "seed for init, split, shuffles, dropout")
        ->capture_default_str();
    sub_train->add_option("--test-fraction", tr.test_fraction, "held-out fraction per class")
        ->capture_default_str()
        ->check(positive_fraction);
    sub_train
        ->add_option("--limit-per-class", tr.limit_per_class,
                     "train on a seeded subset of N images per class (0 = all)")
        ->capture_default_str();
    sub_train->add_option("--model-out", tr.model_out, "output model file")
        ->capture_default_str();
    sub_train->add_option("--report-out", tr.report_out, "output report JSON (CSV sibling)")
        ->capture_default_str();

    EvalArgs ev;
    auto* sub_eval = app.add_subcommand("eval", "evaluate a saved model over a corpus");
    sub_eval->add_option("--data", ev.data_dir, "corpus root")
        ->required()
        ->check(CLI::ExistingDirectory);
    sub_eval->add_option("--mode", ev.mode, "input mode")
        ->capture_default_str()
        ->check(CLI::IsMember({"raw", "canny"}));
    sub_eval->add_option("--model", ev.model_path, "model file")
        ->required()
        ->check(CLI::ExistingFile);

    PredictArgs pd;
    auto* sub_predict = app.add_subcommand("predict", "classify one PNG image");
    sub_predict->add_option("--image", pd.image_path, "input image (raw, unpreprocessed)")
        ->required()
        ->check(CLI::ExistingFile);
    sub_predict->add_option("--mode", pd.mode, "input mode (canny applies edge detection)")
        ->capture_default_str()
        ->check(CLI::IsMember({"raw", "canny"}));
    sub_predict->add_option("--model", pd.model_path, "model file")
        ->required()
        ->check(CLI::ExistingFile);

    std::vector<std::string> report_inputs;
    auto* sub_report = app.add_subcommand("report", "merge run reports into a comparison table");
    sub_report->add_option("--in", report_inputs, "report JSON files")
        ->required()
        ->check(CLI::ExistingFile);

    try {
        std::reverse(args.begin(), args.end()); // CLI11 consumes back to front
        app.parse(std::move(args));
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e); // prints help, returns 0
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    if (*sub_pre && pre.low >= pre.high) {
        std::cerr << "--low must be strictly below --high\n";
        return 1;
    }

    set_thread_count(threads);
    try {
        if (*sub_pre) return do_preprocess(pre, threads);
        if (*sub_train) return do_train(tr, threads);
        if (*sub_eval) return do_eval(ev, threads);
        if (*sub_predict) return do_predict(pd);
        if (*sub_report) return do_report(report_inputs);
    } catch (const Error& e) {
        std::cerr << "error [" << e.module_name() << "]: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}

} // namespace cellscan
