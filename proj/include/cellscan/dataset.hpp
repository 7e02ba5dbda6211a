#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "cellscan/tensor.hpp"

namespace cellscan {

enum class Label : std::uint8_t { uninfected = 0, infected = 1 };
enum class InputMode { raw, canny };

constexpr std::size_t kInputSize = 64; // network input is 64x64

const char* to_string(InputMode mode);
InputMode parse_input_mode(const std::string& s);

struct DatasetEntry {
    std::filesystem::path path;
    Label label;
};

// Labeled file catalog. Entries are kept in lexicographic path order so a
// scan of the same tree is identical on every platform.
struct DatasetIndex {
    std::vector<DatasetEntry> entries;
    std::size_t infected_count = 0;
    std::size_t uninfected_count = 0;
    InputMode mode = InputMode::raw;

    std::size_t size() const { return entries.size(); }
    std::size_t channels() const { return mode == InputMode::raw ? 3 : 1; }
};

// One training/eval unit: inputs [batch, channels, 64, 64] scaled into
// [0,1], targets [batch] with infected = 1.
struct Batch {
    Tensor inputs;
    Tensor targets;

    std::size_t size() const { return targets.size(); }
};

// Walks <root>/Parasitized/*.png and <root>/Uninfected/*.png. Parasitized
// maps to the infected label.
DatasetIndex scan_dataset(const std::filesystem::path& root, InputMode mode = InputMode::raw);

// Per-class deterministic shuffle, then round(class_count * test_fraction)
// entries per class go to the test side. Both halves are re-sorted into
// lexicographic order.
std::pair<DatasetIndex, DatasetIndex> stratified_split(const DatasetIndex& index,
                                                       double test_fraction,
                                                       std::uint64_t seed);

// Seeded per-class subsample of up to per_class entries each (0 = keep all),
// for desk-scale runs on a slice of the full corpus.
DatasetIndex stratified_subset(const DatasetIndex& index, std::size_t per_class,
                               std::uint64_t seed);

// Decoded-and-resized pixel cache so multi-epoch runs hit the PNG codec
// only once per file. Slots are filled on first use; thread-safe for the
// batch loader's access pattern (each slot written by one worker).
class ImageCache {
public:
    explicit ImageCache(std::size_t entry_count) : slots_(entry_count), filled_(entry_count, 0) {}

    bool has(std::size_t i) const { return filled_[i] != 0; }
    const std::vector<std::uint8_t>& get(std::size_t i) const { return slots_[i]; }
    void put(std::size_t i, std::vector<std::uint8_t> pixels) {
        slots_[i] = std::move(pixels);
        filled_[i] = 1;
    }

private:
    std::vector<std::vector<std::uint8_t>> slots_;
    std::vector<std::uint8_t> filled_;
};

// Emits the epoch's batches in a deterministic shuffled order derived from
// (seed, epoch). Images are resized to 64x64 and scaled by 1/255; the final
// short batch is kept. When the shuffled order would leave a single image
// in the last batch it is folded into the previous one, keeping batch
// normalization viable in train mode.
class BatchStream {
public:
    BatchStream(const DatasetIndex& index, std::size_t batch_size, std::uint64_t seed,
                std::uint64_t epoch, bool shuffle = true, ImageCache* cache = nullptr);

    std::optional<Batch> next();

private:
    const DatasetIndex& index_;
    std::size_t batch_size_;
    std::vector<std::uint32_t> order_;
    std::size_t cursor_ = 0;
    ImageCache* cache_;
};

BatchStream make_batches(const DatasetIndex& index, std::size_t batch_size,
                         std::uint64_t seed, std::uint64_t epoch,
                         ImageCache* cache = nullptr);

// Loads one image in the given mode as a [channels, 64, 64] plane stack of
// 8-bit values (the batch loader's per-image step, exposed for predict).
std::vector<std::uint8_t> load_input_planes(const std::filesystem::path& path, InputMode mode);

// Sum of the sizes of all .png files under root (recursive).
std::uintmax_t measure_corpus_bytes(const std::filesystem::path& root);

} // namespace cellscan
