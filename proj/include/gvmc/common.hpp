// Shared basics: error types, deterministic RNG, spin configurations.
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace gvmc {

// All library errors derive from Error so callers can catch one type.
struct Error : std::runtime_error {
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

struct NonCommensurate : Error { using Error::Error; };
struct SiteCountMismatch : Error { using Error::Error; };
struct PatternIncompatible : Error { using Error::Error; };
struct UnknownPreset : Error { using Error::Error; };
struct LengthMismatch : Error { using Error::Error; };
struct SectorTooLarge : Error { using Error::Error; };
struct ShapeMismatch : Error { using Error::Error; };
struct PolarizedState : Error { using Error::Error; };
struct TooFewSamples : Error { using Error::Error; };
struct DegenerateOverlap : Error { using Error::Error; };
struct Diverged : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };

inline void check(bool cond, const std::string& msg) {
    if (!cond) throw Error(msg);
}

// splitmix64, used to derive independent stream seeds from one master seed.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// xoshiro256** by Blackman/Vigna. Self-contained so that streams are
// bit-reproducible across standard libraries, and trivially serializable.
class Rng {
  public:
    explicit Rng(std::uint64_t seed = 0) { reseed(seed); }

    void reseed(std::uint64_t seed) {
        std::uint64_t sm = seed;
        for (auto& word : s_) word = splitmix64(sm);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // uniform in [0,1), 53-bit resolution
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // uniform integer in [0, n), n >= 1 (Lemire multiply-shift; bias < 2^-64)
    std::uint64_t below(std::uint64_t n) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    double normal() {
        // Marsaglia polar, deterministic given the stream
        for (;;) {
            double u = 2.0 * uniform() - 1.0;
            double v = 2.0 * uniform() - 1.0;
            double q = u * u + v * v;
            if (q > 0.0 && q < 1.0) return u * std::sqrt(-2.0 * std::log(q) / q);
        }
    }

    const std::array<std::uint64_t, 4>& state() const { return s_; }
    void set_state(const std::array<std::uint64_t, 4>& s) { s_ = s; }

  private:
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }
    std::array<std::uint64_t, 4> s_{};
};

// Spin-1/2 configuration in the sigma^z product basis, entries +1 / -1.
struct SpinConfiguration {
    std::vector<std::int8_t> spins;

    SpinConfiguration() = default;
    explicit SpinConfiguration(std::size_t n, std::int8_t fill = 1) : spins(n, fill) {}

    std::size_t size() const { return spins.size(); }
    std::int8_t operator[](std::size_t i) const { return spins[i]; }
    std::int8_t& operator[](std::size_t i) { return spins[i]; }
    bool operator==(const SpinConfiguration& o) const { return spins == o.spins; }

    int magnetization() const {
        int m = 0;
        for (auto s : spins) m += s;
        return m;
    }

    // bit i set  <=>  spin i up; canonical sector ordering = integer value
    std::uint64_t pack() const {
        check(spins.size() <= 64, "pack: more than 64 sites");
        std::uint64_t bits = 0;
        for (std::size_t i = 0; i < spins.size(); ++i)
            if (spins[i] > 0) bits |= (1ULL << i);
        return bits;
    }

    static SpinConfiguration unpack(std::size_t n, std::uint64_t bits) {
        SpinConfiguration c(n, -1);
        for (std::size_t i = 0; i < n; ++i)
            if (bits & (1ULL << i)) c.spins[i] = 1;
        return c;
    }
};

} // namespace gvmc
