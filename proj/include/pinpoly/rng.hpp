#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace pinpoly {

// Philox4x32-10 counter-based generator.
inline std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr, std::array<std::uint32_t, 2> key) {
  constexpr std::uint32_t M0 = 0xD2511F53u, M1 = 0xCD9E8D57u;
  constexpr std::uint32_t W0 = 0x9E3779B9u, W1 = 0xBB67AE85u;
  for (int r = 0; r < 10; ++r) {
    const std::uint64_t p0 = std::uint64_t{M0} * ctr[0];
    const std::uint64_t p1 = std::uint64_t{M1} * ctr[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32), lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32), lo1 = static_cast<std::uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += W0;
    key[1] += W1;
  }
  return ctr;
}

// Reproducible stream keyed by (seed, stream id); the block counter is the
// draw index, so streams with different ids never overlap.
class Stream {
 public:
  Stream(std::uint64_t seed, std::uint64_t id)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)}, id_(id) {}

  std::uint64_t next_u64() {
    if (pos_ == 2) refill();
    return buf_[pos_++];
  }

  // Uniform on (0, 1), 53-bit resolution.
  double uniform() { return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53; }

  double exponential(double rate) { return -std::log(uniform()) / rate; }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v;
    do v = next_u64();
    while (v >= limit);
    return v % n;
  }

  std::uint64_t blocks_used() const { return block_; }

 private:
  void refill() {
    auto r = philox4x32({static_cast<std::uint32_t>(id_), static_cast<std::uint32_t>(id_ >> 32),
                         static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32)},
                        key_);
    ++block_;
    buf_[0] = (std::uint64_t{r[0]} << 32) | r[1];
    buf_[1] = (std::uint64_t{r[2]} << 32) | r[3];
    pos_ = 0;
  }

  std::array<std::uint32_t, 2> key_;
  std::uint64_t id_;
  std::uint64_t block_ = 0;
  std::array<std::uint64_t, 2> buf_{};
  int pos_ = 2;
};

}  // namespace pinpoly
