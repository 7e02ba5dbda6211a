#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "cellscan/dataset.hpp"
#include "cellscan/error.hpp"
#include "cellscan/png_io.hpp"
#include "support/synthetic.hpp"

namespace fs = std::filesystem;
using namespace cellscan;

namespace {

// Fixture tree with per_class tiny PNGs in each class directory.
fs::path make_fixture(const std::string& tag, std::size_t per_class) {
    fs::path root = synth::scratch_dir(tag);
    Rng rng(17);
    fs::create_directories(root / "Parasitized");
    fs::create_directories(root / "Uninfected");
    char name[32];
    for (std::size_t i = 0; i < per_class; ++i) {
        std::snprintf(name, sizeof(name), "p_%03zu.png", i);
        write_file(root / "Parasitized" / name, encode_png(synth::noise_rgb(8, 8, rng)));
        std::snprintf(name, sizeof(name), "u_%03zu.png", i);
        write_file(root / "Uninfected" / name, encode_png(synth::noise_rgb(8, 8, rng)));
    }
    return root;
}

} // namespace

TEST_CASE("scan_dataset catalogs both classes in sorted order") {
    fs::path root = make_fixture("scan", 2);
    DatasetIndex index = scan_dataset(root);
    CHECK(index.size() == 4);
    CHECK(index.infected_count == 2);
    CHECK(index.uninfected_count == 2);
    CHECK(std::is_sorted(index.entries.begin(), index.entries.end(),
                         [](const DatasetEntry& a, const DatasetEntry& b) {
                             return a.path.generic_string() < b.path.generic_string();
                         }));
    fs::remove_all(root);
}

TEST_CASE("scan_dataset layout errors") {
    fs::path root = synth::scratch_dir("layout");
    fs::create_directories(root / "Parasitized");
    Rng rng(1);
    write_file(root / "Parasitized" / "a.png", encode_png(synth::noise_rgb(4, 4, rng)));
    // missing Uninfected/
    CHECK_THROWS_AS(scan_dataset(root), LayoutError);

    fs::create_directories(root / "Uninfected"); // exists but empty
    CHECK_THROWS_AS(scan_dataset(root), LayoutError);

    CHECK_THROWS_AS(scan_dataset(root / "nope"), LayoutError);
    fs::remove_all(root);
}

TEST_CASE("stratified_split honors fraction, balance, and determinism") {
    fs::path root = make_fixture("split", 100);
    DatasetIndex index = scan_dataset(root);

    auto [train, test] = stratified_split(index, 0.2, 42);
    CHECK(train.size() == 160);
    CHECK(test.size() == 40);
    CHECK(train.infected_count == 80);
    CHECK(train.uninfected_count == 80);
    CHECK(test.infected_count == 20);
    CHECK(test.uninfected_count == 20);

    // partition: disjoint and exhaustive
    std::set<std::string> seen;
    for (const auto& e : train.entries) seen.insert(e.path.string());
    for (const auto& e : test.entries) CHECK(seen.insert(e.path.string()).second);
    CHECK(seen.size() == index.size());

    auto [train2, test2] = stratified_split(index, 0.2, 42);
    for (std::size_t i = 0; i < test.size(); ++i)
        CHECK(test.entries[i].path == test2.entries[i].path);

    auto [train3, test3] = stratified_split(index, 0.2, 43);
    bool identical = test3.size() == test.size();
    if (identical)
        for (std::size_t i = 0; i < test.size(); ++i)
            identical = identical && test.entries[i].path == test3.entries[i].path;
    CHECK_FALSE(identical);

    CHECK_THROWS_AS(stratified_split(index, 1.0, 42), ParamError);
    CHECK_THROWS_AS(stratified_split(index, 0.0, 42), ParamError);
    fs::remove_all(root);
}

TEST_CASE("stratified_split keeps class balance within one") {
    fs::path root = make_fixture("balance", 17);
    DatasetIndex index = scan_dataset(root);
    for (double f : {0.1, 0.25, 0.33, 0.5}) {
        auto [train, test] = stratified_split(index, f, 7);
        CHECK(std::llabs(long(test.infected_count) - long(test.uninfected_count)) <= 1);
        CHECK(train.size() + test.size() == index.size());
    }
    fs::remove_all(root);
}

TEST_CASE("stratified_subset takes a deterministic per-class slice") {
    fs::path root = make_fixture("subset", 20);
    DatasetIndex index = scan_dataset(root);
    DatasetIndex sub = stratified_subset(index, 5, 42);
    CHECK(sub.size() == 10);
    CHECK(sub.infected_count == 5);
    CHECK(sub.uninfected_count == 5);
    DatasetIndex sub2 = stratified_subset(index, 5, 42);
    for (std::size_t i = 0; i < sub.size(); ++i)
        CHECK(sub.entries[i].path == sub2.entries[i].path);
    CHECK(stratified_subset(index, 0, 42).size() == index.size());
    CHECK(stratified_subset(index, 999, 42).size() == index.size());
    fs::remove_all(root);
}

TEST_CASE("make_batches shapes, scaling, and coverage") {
    fs::path root = make_fixture("batches", 5); // 10 entries total
    DatasetIndex index = scan_dataset(root);

    BatchStream stream = make_batches(index, 4, 1, 0);
    std::vector<std::size_t> sizes;
    std::size_t ones = 0, count = 0;
    while (auto b = stream.next()) {
        sizes.push_back(b->size());
        CHECK(b->inputs.shape() ==
              std::vector<std::size_t>{b->size(), 3, kInputSize, kInputSize});
        for (std::size_t i = 0; i < b->inputs.size(); ++i) {
            CHECK(b->inputs[i] >= real{0});
            CHECK(b->inputs[i] <= real{1});
        }
        for (std::size_t i = 0; i < b->targets.size(); ++i) {
            CHECK((b->targets[i] == real{0} || b->targets[i] == real{1}));
            if (b->targets[i] == real{1}) ++ones;
        }
        count += b->size();
    }
    CHECK(sizes == std::vector<std::size_t>{4, 4, 2});
    CHECK(count == 10);
    CHECK(ones == 5);
    fs::remove_all(root);
}

TEST_CASE("make_batches epoch shuffles are deterministic and epoch-dependent") {
    fs::path root = make_fixture("shuffle", 6);
    DatasetIndex index = scan_dataset(root);

    auto collect = [&](std::uint64_t seed, std::uint64_t epoch) {
        BatchStream s = make_batches(index, 3, seed, epoch);
        std::vector<real> order;
        while (auto b = s.next())
            for (std::size_t i = 0; i < b->targets.size(); ++i)
                order.push_back(b->inputs[i * 3 * kInputSize * kInputSize]);
        return order;
    };
    CHECK(collect(9, 1) == collect(9, 1));
    CHECK(collect(9, 1) != collect(9, 2));
    CHECK(collect(9, 1) != collect(10, 1));
    fs::remove_all(root);
}

TEST_CASE("make_batches folds a singleton tail into the previous batch") {
    fs::path root = make_fixture("tail", 3); // 6 entries
    DatasetIndex index = scan_dataset(root);
    BatchStream s = make_batches(index, 5, 0, 0);
    std::vector<std::size_t> sizes;
    while (auto b = s.next()) sizes.push_back(b->size());
    CHECK(sizes == std::vector<std::size_t>{6});
    fs::remove_all(root);
}

TEST_CASE("canny-mode batches carry one channel") {
    fs::path root = make_fixture("canny_mode", 2);
    DatasetIndex index = scan_dataset(root, InputMode::canny);
    CHECK(index.channels() == 1);
    BatchStream s = make_batches(index, 4, 0, 0);
    auto b = s.next();
    REQUIRE(b.has_value());
    CHECK(b->inputs.shape() == std::vector<std::size_t>{4, 1, kInputSize, kInputSize});
    fs::remove_all(root);
}

TEST_CASE("make_batches names the file on a load failure") {
    fs::path root = make_fixture("badfile", 2);
    // corrupt one file after scanning
    DatasetIndex index = scan_dataset(root);
    std::ofstream(index.entries[1].path, std::ios::trunc) << "not a png";
    BatchStream s = make_batches(index, 4, 0, 0);
    try {
        while (auto b = s.next()) (void)b;
        FAIL("expected LoadError");
    } catch (const LoadError& e) {
        CHECK(std::string(e.what()).find(index.entries[1].path.filename().string()) !=
              std::string::npos);
    }
    fs::remove_all(root);
}

TEST_CASE("image cache returns identical batches") {
    fs::path root = make_fixture("cache", 4);
    DatasetIndex index = scan_dataset(root);
    ImageCache cache(index.size());
    auto run = [&](ImageCache* c) {
        BatchStream s(index, 3, 5, 2, true, c);
        std::vector<real> all;
        while (auto b = s.next())
            for (std::size_t i = 0; i < b->inputs.size(); ++i) all.push_back(b->inputs[i]);
        return all;
    };
    auto cold = run(&cache); // fills the cache
    auto warm = run(&cache); // served from it
    auto none = run(nullptr);
    CHECK(cold == warm);
    CHECK(cold == none);
    fs::remove_all(root);
}

TEST_CASE("measure_corpus_bytes sums png sizes") {
    fs::path root = synth::scratch_dir("bytes");
    CHECK(measure_corpus_bytes(root) == 0);

    std::ofstream(root / "a.png", std::ios::binary) << std::string(100, 'x');
    std::ofstream(root / "b.png", std::ios::binary) << std::string(200, 'y');
    std::ofstream(root / "ignored.txt", std::ios::binary) << std::string(999, 'z');
    CHECK(measure_corpus_bytes(root) == 300);

    CHECK_THROWS_AS(measure_corpus_bytes(root / "missing"), IoError);
    fs::remove_all(root);
}
