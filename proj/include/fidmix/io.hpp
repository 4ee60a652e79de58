#pragma once

#include <filesystem>
#include <string>

#include "fidmix/model.hpp"

namespace fidmix {

// Model documents are JSON objects in one of three shapes:
//   {"design": "MI-3"}
//   {"builder": "one_way" | "nested" | "crossed", ...builder counts...}
//   {"X": [[...], ...], "effects": [{"levels": L, "assignments": [...]}, ...],
//    "names": [...]}
// Explicit assignments are 1-based levels, one per observation; an optional
// "coefficients" array gives a loading per observation (default 1). The last
// effect must be the identity error design.
ModelSpec parse_model_json(const std::string& text);
ModelSpec load_model(const std::filesystem::path& path);
std::string model_json(const ModelSpec& model);

// CSV with header `lower,upper`, one row per observation in order.
IntervalDataset load_data(const std::filesystem::path& path);
void save_data(const IntervalDataset& data, const std::filesystem::path& path);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace fidmix
