#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace foodpipe {

enum class ErrorKind {
  InvalidArgument,
  Io,
  Parse,
  Validation,
  Runtime,
};

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, std::string message)
      : std::runtime_error(std::move(message)), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

private:
  ErrorKind kind_;
};

namespace detail {
inline void append_to(std::ostringstream&) {}
template <typename T, typename... Rest>
void append_to(std::ostringstream& os, const T& first, const Rest&... rest) {
  os << first;
  append_to(os, rest...);
}
}  // namespace detail

template <typename... Args>
std::string concat(const Args&... args) {
  std::ostringstream os;
  detail::append_to(os, args...);
  return os.str();
}

template <typename... Args>
[[noreturn]] void raise(ErrorKind kind, const Args&... args) {
  throw Error(kind, concat(args...));
}

// SplitMix64 step; used to derive independent seeds from one master seed.
inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Deterministic RNG with hand-rolled distributions. std::*_distribution is
// implementation-defined, so all sampling goes through these helpers to keep
// outputs reproducible across standard libraries.
class Rng {
public:
  explicit Rng(uint64_t seed) : state_(splitmix64(seed ^ 0x5bf0595ce59eULL)) {}

  uint64_t next_u64() {
    // xorshift64*
    uint64_t x = state_;
    x ^= x >> 12;
    x ^= x << 25;
    x ^= x >> 27;
    state_ = x;
    return x * 0x2545f4914f6cdd1dULL;
  }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [lo, hi], inclusive.
  int64_t uniform_int(int64_t lo, int64_t hi) {
    if (hi < lo) raise(ErrorKind::InvalidArgument, "uniform_int: hi < lo");
    uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    return lo + static_cast<int64_t>(next_u64() % span);
  }

  // Standard normal via Box-Muller.
  double normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(theta);
    have_cached_ = true;
    return r * std::cos(theta);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(uniform_int(0, static_cast<int64_t>(i) - 1));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Child RNG with an independent stream.
  Rng fork(uint64_t tag) const { return Rng(splitmix64(state_ ^ splitmix64(tag))); }

private:
  uint64_t state_;
  bool have_cached_ = false;
  double cached_ = 0.0;
};

// FNV-1a 64-bit, used for config hashes in run logs and reports.
inline uint64_t fnv1a64(const std::string& s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string to_hex(uint64_t v);

}  // namespace foodpipe
