// Zero-magnetization sector basis: all N-bit patterns with N/2 bits set,
// ordered by integer value of the packed bits.
#pragma once

#include <bit>
#include <cstdint>
#include <vector>

#include "gvmc/common.hpp"

namespace gvmc {

class SectorBasis {
  public:
    explicit SectorBasis(int n_sites, std::size_t cap = kDefaultCap) {
        check(n_sites > 0 && n_sites % 2 == 0, "sector basis needs an even site count");
        check(n_sites <= 64, "sector basis limited to 64 sites");
        n_ = n_sites;
        const std::size_t dim = binomial(n_sites, n_sites / 2);
        if (dim > cap) throw SectorTooLarge("sector dimension " + std::to_string(dim) +
                                            " exceeds cap " + std::to_string(cap));
        states_.reserve(dim);
        // Gosper's hack walks the k-subsets in increasing integer order
        std::uint64_t v = (1ULL << (n_sites / 2)) - 1;
        const std::uint64_t limit = (n_sites == 64) ? ~0ULL : (1ULL << n_sites);
        while (n_sites == 64 || v < limit) {
            states_.push_back(v);
            std::uint64_t t = v | (v - 1);
            std::uint64_t next = (t + 1) | (((~t & (t + 1)) - 1) >> (std::countr_zero(v) + 1));
            if (next <= v) break;  // wrapped
            v = next;
            if (states_.size() == dim) break;
        }
        check(states_.size() == dim, "sector enumeration incomplete");
    }

    int n_sites() const { return n_; }
    std::size_t dimension() const { return states_.size(); }
    std::uint64_t state(std::size_t idx) const { return states_[idx]; }

    SpinConfiguration configuration(std::size_t idx) const {
        return SpinConfiguration::unpack(static_cast<std::size_t>(n_), states_[idx]);
    }

    // index of a packed configuration; throws if outside the sector
    std::size_t index_of(std::uint64_t bits) const {
        auto it = std::lower_bound(states_.begin(), states_.end(), bits);
        if (it == states_.end() || *it != bits)
            throw Error("configuration is not in the zero-magnetization sector");
        return static_cast<std::size_t>(it - states_.begin());
    }

    static std::size_t binomial(int n, int k) {
        if (k < 0 || k > n) return 0;
        std::size_t r = 1;
        for (int i = 1; i <= k; ++i) r = r * static_cast<std::size_t>(n - k + i) / i;
        return r;
    }

    // C(20, 10); larger sectors must be requested explicitly via cap
    static constexpr std::size_t kDefaultCap = 184756;

  private:
    int n_ = 0;
    std::vector<std::uint64_t> states_;
};

} // namespace gvmc
