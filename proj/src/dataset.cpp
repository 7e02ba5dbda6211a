#include "cellscan/dataset.hpp"

#include <algorithm>
#include <cmath>

#include "cellscan/error.hpp"
#include "cellscan/png_io.hpp"
#include "cellscan/rng.hpp"
#include "cellscan/thread_pool.hpp"

namespace fs = std::filesystem;

namespace cellscan {
namespace {

constexpr const char* kInfectedDir = "Parasitized";
constexpr const char* kUninfectedDir = "Uninfected";

bool is_png(const fs::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    return ext == ".png";
}

std::vector<DatasetEntry> scan_class(const fs::path& dir, Label label) {
    if (!fs::is_directory(dir))
        throw LayoutError("dataset", "missing class directory " + dir.string());
    std::vector<DatasetEntry> entries;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && is_png(e.path()))
            entries.push_back({e.path(), label});
    if (entries.empty())
        throw LayoutError("dataset", "no PNG files in " + dir.string());
    return entries;
}

void sort_entries(std::vector<DatasetEntry>& entries) {
    std::sort(entries.begin(), entries.end(),
              [](const DatasetEntry& a, const DatasetEntry& b) {
                  return a.path.generic_string() < b.path.generic_string();
              });
}

void count_labels(DatasetIndex& index) {
    index.infected_count = 0;
    index.uninfected_count = 0;
    for (const auto& e : index.entries)
        (e.label == Label::infected ? index.infected_count : index.uninfected_count)++;
}

void shuffle_fisher_yates(std::vector<DatasetEntry>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i)
        std::swap(v[i - 1], v[rng.next_below(i)]);
}

} // namespace

const char* to_string(InputMode mode) { return mode == InputMode::raw ? "raw" : "canny"; }

InputMode parse_input_mode(const std::string& s) {
    if (s == "raw") return InputMode::raw;
    if (s == "canny") return InputMode::canny;
    throw ParamError("dataset", "unknown mode '" + s + "' (expected raw or canny)");
}

DatasetIndex scan_dataset(const fs::path& root, InputMode mode) {
    if (!fs::is_directory(root))
        throw LayoutError("dataset", "dataset root " + root.string() + " is not a directory");
    DatasetIndex index;
    index.mode = mode;
    auto infected = scan_class(root / kInfectedDir, Label::infected);
    auto uninfected = scan_class(root / kUninfectedDir, Label::uninfected);
    index.entries.reserve(infected.size() + uninfected.size());
    index.entries.insert(index.entries.end(), infected.begin(), infected.end());
    index.entries.insert(index.entries.end(), uninfected.begin(), uninfected.end());
    sort_entries(index.entries);
    count_labels(index);
    return index;
}

std::pair<DatasetIndex, DatasetIndex> stratified_split(const DatasetIndex& index,
                                                       double test_fraction,
                                                       std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0))
        throw ParamError("dataset", "test_fraction must be in (0, 1), got " +
                                        std::to_string(test_fraction));

    DatasetIndex train, test;
    train.mode = test.mode = index.mode;

    Rng rng(seed);
    // Classes are processed in a fixed order (infected first) so the stream
    // consumption is reproducible.
    for (Label label : {Label::infected, Label::uninfected}) {
        std::vector<DatasetEntry> cls;
        for (const auto& e : index.entries)
            if (e.label == label) cls.push_back(e);
        shuffle_fisher_yates(cls, rng);
        auto test_n = static_cast<std::size_t>(
            std::llround(static_cast<double>(cls.size()) * test_fraction));
        for (std::size_t i = 0; i < cls.size(); ++i)
            (i < test_n ? test : train).entries.push_back(cls[i]);
    }
    sort_entries(train.entries);
    sort_entries(test.entries);
    count_labels(train);
    count_labels(test);
    return {std::move(train), std::move(test)};
}

DatasetIndex stratified_subset(const DatasetIndex& index, std::size_t per_class,
                               std::uint64_t seed) {
    if (per_class == 0) return index;
    DatasetIndex out;
    out.mode = index.mode;
    Rng rng(mix_seed(seed, 0x737562736574ull)); // "subset"
    for (Label label : {Label::infected, Label::uninfected}) {
        std::vector<DatasetEntry> cls;
        for (const auto& e : index.entries)
            if (e.label == label) cls.push_back(e);
        shuffle_fisher_yates(cls, rng);
        if (cls.size() > per_class) cls.resize(per_class);
        out.entries.insert(out.entries.end(), cls.begin(), cls.end());
    }
    sort_entries(out.entries);
    count_labels(out);
    return out;
}

std::vector<std::uint8_t> load_input_planes(const fs::path& path, InputMode mode) {
    RgbImage rgb = load_png(path);
    std::size_t n = kInputSize * kInputSize;
    std::vector<std::uint8_t> planes;
    if (mode == InputMode::raw) {
        RgbImage resized = resize_bilinear(rgb, kInputSize, kInputSize);
        planes.resize(3 * n);
        // interleaved RGB -> channel planes
        for (std::size_t i = 0; i < n; ++i) {
            planes[i] = resized.pixels[i * 3 + 0];
            planes[n + i] = resized.pixels[i * 3 + 1];
            planes[2 * n + i] = resized.pixels[i * 3 + 2];
        }
    } else {
        GrayImage gray = resize_bilinear(to_grayscale(rgb), kInputSize, kInputSize);
        planes.assign(gray.pixels.begin(), gray.pixels.end());
    }
    return planes;
}

BatchStream::BatchStream(const DatasetIndex& index, std::size_t batch_size, std::uint64_t seed,
                         std::uint64_t epoch, bool shuffle, ImageCache* cache)
    : index_(index), batch_size_(batch_size), cache_(cache) {
    if (batch_size_ == 0)
        throw ParamError("dataset", "batch_size must be >= 1");
    order_.resize(index.size());
    for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = std::uint32_t(i);
    if (shuffle) {
        Rng rng(mix_seed(seed, epoch));
        for (std::size_t i = order_.size(); i > 1; --i)
            std::swap(order_[i - 1], order_[rng.next_below(i)]);
    }
}

std::optional<Batch> BatchStream::next() {
    if (cursor_ >= order_.size()) return std::nullopt;
    std::size_t take = std::min(batch_size_, order_.size() - cursor_);
    // Fold a would-be singleton tail into this batch; batch norm in train
    // mode cannot normalize a single sample.
    if (batch_size_ >= 2 && order_.size() - cursor_ == batch_size_ + 1) take = batch_size_ + 1;

    std::size_t ch = index_.channels();
    std::size_t plane = kInputSize * kInputSize;
    Tensor inputs = zeros({take, ch, kInputSize, kInputSize});
    Tensor targets = zeros({take});

    const real scale = real(1.0 / 255.0);
    std::size_t base = cursor_;
    parallel_for(take, [&](std::size_t b0, std::size_t b1) {
        for (std::size_t b = b0; b < b1; ++b) {
            std::size_t entry_idx = order_[base + b];
            const DatasetEntry& entry = index_.entries[entry_idx];
            const std::vector<std::uint8_t>* planes = nullptr;
            std::vector<std::uint8_t> local;
            if (cache_ && cache_->has(entry_idx)) {
                planes = &cache_->get(entry_idx);
            } else {
                try {
                    local = load_input_planes(entry.path, index_.mode);
                } catch (const Error& e) {
                    throw LoadError("dataset", "failed to load " + entry.path.string() +
                                                   " (" + e.what() + ")");
                }
                if (cache_) {
                    cache_->put(entry_idx, local);
                    planes = &cache_->get(entry_idx);
                } else {
                    planes = &local;
                }
            }
            real* dst = inputs.data() + b * ch * plane;
            for (std::size_t i = 0; i < ch * plane; ++i)
                dst[i] = real((*planes)[i]) * scale;
            targets[b] = entry.label == Label::infected ? real{1} : real{0};
        }
    });

    cursor_ += take;
    return Batch{std::move(inputs), std::move(targets)};
}

BatchStream make_batches(const DatasetIndex& index, std::size_t batch_size,
                         std::uint64_t seed, std::uint64_t epoch, ImageCache* cache) {
    return BatchStream(index, batch_size, seed, epoch, /*shuffle=*/true, cache);
}

std::uintmax_t measure_corpus_bytes(const fs::path& root) {
    if (!fs::is_directory(root))
        throw IoError("dataset", "directory " + root.string() + " does not exist");
    std::uintmax_t total = 0;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file() && is_png(e.path())) total += e.file_size();
    return total;
}

} // namespace cellscan
