#pragma once

#include "chaincal/model.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>

namespace chaincal {

inline constexpr int kModelFormatVersion = 1;

nlohmann::json model_to_json(const RobotModel& model);

/// `source` names the document in error messages (usually the file path).
RobotModel model_from_json(const nlohmann::json& doc, const std::string& source = "<model>");

RobotModel load_model(const std::filesystem::path& path);
void save_model(const RobotModel& model, const std::filesystem::path& path);

/// Stable 64-bit FNV-1a digest of the canonical JSON form, as 16 hex digits.
std::string model_hash(const RobotModel& model);

/// FNV-1a over arbitrary bytes; shared by the dataset and experiment fingerprints.
std::uint64_t fnv1a64(std::string_view bytes);

/// Location of the bundled default model file.
std::filesystem::path default_model_path();

}  // namespace chaincal
