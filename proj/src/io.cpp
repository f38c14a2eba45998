#include "ideaeval/io.hpp"

#include <atomic>
#include <fstream>
#include <sstream>

#include "ideaeval/error.hpp"

namespace ideaeval::io {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Json read_json(const std::filesystem::path& path) {
  const auto raw = read_file(path);
  try {
    return Json::parse(raw);
  } catch (const Json::parse_error& e) {
    throw ValidationError("malformed document " + path.string() + ": " + e.what());
  }
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  static std::atomic<unsigned> counter{0};
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp" + std::to_string(counter.fetch_add(1));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw std::runtime_error("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string canonical_dump(const Json& doc) { return doc.dump(2) + "\n"; }

void write_json(const std::filesystem::path& path, const Json& doc) {
  write_file_atomic(path, canonical_dump(doc));
}

void require_schema(const Json& doc, const std::filesystem::path& origin) {
  if (!doc.is_object() || !doc.contains("schema") || doc["schema"] != kSchemaVersion) {
    throw ValidationError("malformed document " + origin.string() + ": expected \"schema\": 1");
  }
}

}  // namespace ideaeval::io
