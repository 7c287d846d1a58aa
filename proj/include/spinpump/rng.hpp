#pragma once

// Philox4x32-10 counter-based generator (Salmon et al., SC'11). Every
// trajectory owns the counter (index, stream, block, 0) under a key derived
// from the run seed, so draws never depend on scheduling.

#include <array>
#include <cstdint>

namespace spinpump {

class Philox4x32 {
public:
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static Counter round10(Counter c, Key k) {
        for (int r = 0; r < 10; ++r) {
            if (r > 0) {
                k[0] += kW0;
                k[1] += kW1;
            }
            const std::uint64_t p0 = std::uint64_t{kM0} * c[0];
            const std::uint64_t p1 = std::uint64_t{kM1} * c[2];
            const auto hi0 = static_cast<std::uint32_t>(p0 >> 32), lo0 = static_cast<std::uint32_t>(p0);
            const auto hi1 = static_cast<std::uint32_t>(p1 >> 32), lo1 = static_cast<std::uint32_t>(p1);
            c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
        }
        return c;
    }

private:
    static constexpr std::uint32_t kM0 = 0xD2511F53u, kM1 = 0xCD9E8D57u;
    static constexpr std::uint32_t kW0 = 0x9E3779B9u, kW1 = 0xBB67AE85u;
};

/// Draws uniform doubles for one (index, stream) pair; successive blocks
/// advance the third counter word.
class TrajectoryRng {
public:
    TrajectoryRng(std::uint64_t seed, std::uint64_t index, std::uint32_t stream)
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
          ctr_{static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32), 0u, stream} {}

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() {
        if (used_ >= 2) refill();
        const std::uint64_t hi = buf_[2 * used_], lo = buf_[2 * used_ + 1];
        ++used_;
        return static_cast<double>(((hi << 32) | lo) >> 11) * 0x1.0p-53;
    }

    /// Uniform in (lo, hi].
    double uniform_open_closed(double lo, double hi) { return hi - (hi - lo) * uniform(); }

private:
    void refill() {
        buf_ = Philox4x32::round10(ctr_, key_);
        ++ctr_[2];
        used_ = 0;
    }

    Philox4x32::Key key_;
    Philox4x32::Counter ctr_;
    Philox4x32::Counter buf_{};
    int used_ = 2;
};

}  // namespace spinpump
