#pragma once

#include <filesystem>

#include "convemo/training.hpp"

namespace convemo::checkpoint {

// On-disk model format: a single JSON document carrying the model and graph
// configuration, provenance, the epoch trace, and every parameter matrix
// (row-major) under its collect_params name. Values round-trip losslessly:
// each float widens exactly to double and the writer emits enough digits to
// reconstruct that double bit-for-bit.
inline constexpr const char* kFormatTag = "convemo-checkpoint-v1";

void save(const training::TrainedModel& model,
          const std::filesystem::path& path);

// Rejects unknown format tags and any layout drift (missing/renamed
// parameters, shape mismatches, hash mismatch) rather than guessing.
training::TrainedModel load(const std::filesystem::path& path);

}  // namespace convemo::checkpoint
