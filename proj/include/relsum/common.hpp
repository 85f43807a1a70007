#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace relsum {

inline constexpr int kFormatVersion = 1;

enum class Errc {
  bad_argument,
  shape_mismatch,
  non_finite,
  io_error,
  parse_error,
  missing_artifact,
  frozen_violation,
  config_mismatch,
  overwrite_refused,
  training_failed,
  degenerate_input,
};

inline const char* errc_name(Errc c) {
  switch (c) {
    case Errc::bad_argument: return "bad_argument";
    case Errc::shape_mismatch: return "shape_mismatch";
    case Errc::non_finite: return "non_finite";
    case Errc::io_error: return "io_error";
    case Errc::parse_error: return "parse_error";
    case Errc::missing_artifact: return "missing_artifact";
    case Errc::frozen_violation: return "frozen_violation";
    case Errc::config_mismatch: return "config_mismatch";
    case Errc::overwrite_refused: return "overwrite_refused";
    case Errc::training_failed: return "training_failed";
    case Errc::degenerate_input: return "degenerate_input";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& msg)
      : std::runtime_error(std::string(errc_name(code)) + ": " + msg), code_(code) {}
  Errc code() const { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& msg) { throw Error(code, msg); }

inline std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

// FNV-1a, used for config hashes and parameter fingerprints.
inline uint64_t fnv1a(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline uint64_t fnv1a(std::string_view s, uint64_t h = 0xcbf29ce484222325ull) {
  return fnv1a(s.data(), s.size(), h);
}

}  // namespace relsum
