#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

namespace ideaeval::io {

using Json = nlohmann::json;

std::string read_file(const std::filesystem::path& path);

/// Parses a JSON document; errors name the file.
Json read_json(const std::filesystem::path& path);

/// Writes via a sibling temp file and rename, so readers never see a partial file.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

/// Pretty, key-sorted serialization used for every persisted artifact.
std::string canonical_dump(const Json& doc);

void write_json(const std::filesystem::path& path, const Json& doc);

/// Every artifact carries "schema": 1; anything else is rejected.
void require_schema(const Json& doc, const std::filesystem::path& origin);

inline constexpr int kSchemaVersion = 1;

}  // namespace ideaeval::io
