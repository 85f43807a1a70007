#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

#include <json.hpp>

#include "relsum/common.hpp"

namespace relsum {

using json = nlohmann::ordered_json;

// Every JSONL artifact starts with a header record carrying provenance:
// {"kind": ..., "format_version": ..., "root_seed": ..., "config_hash": ...}.
struct FileMeta {
  std::string kind;
  int format_version = kFormatVersion;
  uint64_t root_seed = 0;
  uint64_t config_hash = 0;
  json extra = json::object();

  json to_json() const {
    json j{{"kind", kind},
           {"format_version", format_version},
           {"root_seed", root_seed},
           {"config_hash", config_hash}};
    for (auto& [k, v] : extra.items()) j[k] = v;
    return j;
  }

  static FileMeta from_json(const json& j) {
    FileMeta m;
    m.kind = j.at("kind").get<std::string>();
    m.format_version = j.at("format_version").get<int>();
    m.root_seed = j.at("root_seed").get<uint64_t>();
    m.config_hash = j.at("config_hash").get<uint64_t>();
    for (auto& [k, v] : j.items())
      if (k != "kind" && k != "format_version" && k != "root_seed" && k != "config_hash") m.extra[k] = v;
    return m;
  }
};

class JsonlWriter {
 public:
  JsonlWriter(const std::filesystem::path& path, const FileMeta& meta) : path_(path.string()), os_(path) {
    if (!os_) fail(Errc::io_error, "cannot open for writing: " + path_);
    write(meta.to_json());
  }

  void write(const json& record) {
    os_ << record.dump() << '\n';
    if (!os_) fail(Errc::io_error, "write failed: " + path_);
  }

 private:
  std::string path_;
  std::ofstream os_;
};

class JsonlReader {
 public:
  explicit JsonlReader(const std::filesystem::path& path, const std::string& expected_kind = "")
      : path_(path.string()), is_(path) {
    if (!is_) fail(Errc::missing_artifact, "cannot open: " + path_);
    auto first = next();
    if (!first) fail(Errc::parse_error, path_ + ": missing header record");
    meta_ = FileMeta::from_json(*first);
    if (meta_.format_version != kFormatVersion)
      fail(Errc::parse_error, path_ + ": unsupported format_version " + std::to_string(meta_.format_version));
    if (!expected_kind.empty() && meta_.kind != expected_kind)
      fail(Errc::parse_error, path_ + ": expected kind '" + expected_kind + "', found '" + meta_.kind + "'");
  }

  const FileMeta& meta() const { return meta_; }
  int line_no() const { return line_no_; }

  std::optional<json> next() {
    std::string line;
    if (!std::getline(is_, line)) return std::nullopt;
    ++line_no_;
    try {
      return json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      fail(Errc::parse_error, path_ + ":" + std::to_string(line_no_) + ": malformed record: " + e.what());
    }
  }

 private:
  std::string path_;
  std::ifstream is_;
  FileMeta meta_;
  int line_no_ = 0;
};

inline void write_json_file(const std::filesystem::path& path, const json& j) {
  std::ofstream os(path);
  if (!os) fail(Errc::io_error, "cannot open for writing: " + path.string());
  os << j.dump(2) << '\n';
  if (!os) fail(Errc::io_error, "write failed: " + path.string());
}

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) fail(Errc::missing_artifact, "cannot open: " + path.string());
  try {
    return json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::parse_error, path.string() + ": " + e.what());
  }
}

}  // namespace relsum
