#pragma once

#include <cstdint>
#include <random>

namespace dptr {

/// Identifies which consumer a random stream belongs to.
enum class StreamKind : std::uint64_t {
  dgp = 1,
  grid = 2,
  residual = 3,
  continuity = 4,
  linearity = 5,
  nonparametric = 6,
  limit = 7,
  mc = 8,
};

/// Key of a counter-based stream. Every replicate draws from the stream keyed by
/// (master seed, scheme, grid point, replicate), so its outcome does not depend on
/// which worker runs it or in what order.
struct StreamKey {
  std::uint64_t master = 0;
  StreamKind kind = StreamKind::dgp;
  std::uint64_t point = 0;
  std::uint64_t replicate = 0;
};

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t stream_seed(const StreamKey& key) noexcept {
  std::uint64_t h = splitmix64(key.master);
  h = splitmix64(h ^ static_cast<std::uint64_t>(key.kind));
  h = splitmix64(h ^ key.point);
  h = splitmix64(h ^ key.replicate);
  return h;
}

inline std::mt19937_64 make_stream(const StreamKey& key) {
  std::seed_seq seq{static_cast<std::uint32_t>(stream_seed(key)),
                    static_cast<std::uint32_t>(stream_seed(key) >> 32)};
  return std::mt19937_64(seq);
}

/// Derives a fresh master seed for a sub-task (e.g. one Monte Carlo replicate).
constexpr std::uint64_t derive_seed(std::uint64_t master, StreamKind kind,
                                    std::uint64_t index) noexcept {
  return stream_seed(StreamKey{master, kind, 0, index});
}

}  // namespace dptr
