#ifndef NTC_COMMON_HPP
#define NTC_COMMON_HPP

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>

namespace ntc {

struct DimensionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DomainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// FNV-1a, used for content manifests and model identification.
inline uint64_t fnv1a64(std::span<const uint8_t> bytes, uint64_t h = 0xcbf29ce484222325ull) {
  for (uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline uint64_t fnv1a64(const std::string& s) {
  return fnv1a64(std::span<const uint8_t>(reinterpret_cast<const uint8_t*>(s.data()), s.size()));
}

inline const char* version_string() {
#ifdef NTC_VERSION_STRING
  return NTC_VERSION_STRING;
#else
  return "untracked";
#endif
}

constexpr double kLog2E = 1.4426950408889634074;  // 1/ln(2)
constexpr double kLn2 = 0.6931471805599453094;

}  // namespace ntc

#endif
