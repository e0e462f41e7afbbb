#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>

namespace chartmark {

// 64-bit FNV-1a. Used wherever a hash must be stable across platforms and
// standard library implementations (config hashes, per-chart seeds).
constexpr std::uint64_t fnv1a(std::string_view s,
                              std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Combines a run seed with a string key and a salt into a sub-seed.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::string_view key,
                                    std::uint64_t salt = 0) {
  return splitmix64(seed ^ splitmix64(fnv1a(key) + salt));
}

// Thin wrapper over mt19937_64. The std distributions are implementation
// defined, so all draws are computed from raw engine output here to keep
// generated corpora byte-identical across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    std::uint64_t v;
    do {
      v = engine_();
    } while (v >= limit);
    return lo + static_cast<std::int64_t>(v % span);
  }

  bool bernoulli(double p) { return uniform() < p; }

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

// Round half away from zero to a number of decimals.
double round_decimals(double value, int decimals);

// Shortest decimal text that round-trips ("123.4", "100", "0.05").
std::string format_number(double value);

// Fixed-point text with the given number of decimals ("12.50").
std::string format_fixed(double value, int decimals);

// Number of UTF-8 code points.
std::size_t utf8_length(std::string_view s);

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);

// Reads a whole file; throws IoError.
std::string read_file(const std::string& path);
// Writes via a temporary sibling and rename so readers never see partial files.
void write_file_atomic(const std::string& path, std::string_view contents);

}  // namespace chartmark
