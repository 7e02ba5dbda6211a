#pragma once

#include <filesystem>

#include "cellscan/model.hpp"

namespace cellscan {

// Model file layout:
//   bytes 0..3   magic "MCNN"
//   bytes 4..7   little-endian u32 version (currently 1)
//   bytes 8..15  little-endian u64 JSON header length
//   header       UTF-8 JSON: architecture config, per-layer kinds and
//                hyperparameters, Adam hyperparameters and step count, and
//                the ordered tensor directory (name + shape)
//   payload      each tensor's values as raw little-endian 32-bit floats,
//                in directory order: parameters, running statistics, Adam
//                m, Adam v, and the step counter as a one-element tensor
// Values are stored as 32-bit floats regardless of the build's real type.
// A save -> load -> save round trip is byte-identical.
void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

} // namespace cellscan
