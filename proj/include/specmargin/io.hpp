#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "specmargin/network.hpp"

namespace specmargin::io {

inline constexpr int kWeightFormatVersion = 1;

/// Weight file:  {"format_version": 1, "layers": [{"rows": R, "cols": C, "data": [...]}, ...]}
/// Dataset file: {"inputs": [[...], ...], "labels": [...], "num_classes": k}
///
/// Parsers throw InvalidInput with a "line L, column C" diagnostic for malformed
/// JSON and a field path (e.g. "layers[1].data") for schema violations.
ReluNetwork parse_weights(std::string_view text);
LabeledDataset parse_dataset(std::string_view text);

std::string serialize_weights(const ReluNetwork& net);
std::string serialize_dataset(const LabeledDataset& data);

ReluNetwork load_weights(const std::filesystem::path& path);
LabeledDataset load_dataset(const std::filesystem::path& path);
void save_weights(const std::filesystem::path& path, const ReluNetwork& net);
void save_dataset(const std::filesystem::path& path, const LabeledDataset& data);

std::string read_file(const std::filesystem::path& path);
/// Writes via a temporary sibling and rename.
void write_file(const std::filesystem::path& path, std::string_view contents);

/// Hex SHA-256 of a byte string.
std::string sha256_hex(std::string_view bytes);

}  // namespace specmargin::io
