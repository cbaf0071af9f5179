// Metropolis sampling of |psi|^2 in the fixed-magnetization sector.
//
// Proposals exchange one uniformly chosen up spin with one uniformly chosen
// down spin, which conserves total Sz and is symmetric because the up and
// down counts never change. All chains advance together so each Metropolis
// step costs one batched network evaluation.
#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "gvmc/common.hpp"
#include "gvmc/network.hpp"

namespace gvmc {

struct ChainState {
    SpinConfiguration config;
    AmplitudePair amp;          // cached value at config
    Rng rng;
    std::uint64_t steps_taken = 0;
};

struct SamplerConfig {
    int n_chains = 32;
    int thin_steps = 0;         // steps between kept samples; 0 means one sweep
    int burn_in_sweeps = 10;    // one sweep is n_sites steps
    std::uint64_t seed = 1;
};

struct SamplerDiagnostics {
    std::uint64_t proposed = 0;
    std::uint64_t accepted = 0;
    std::uint64_t nan_rejected = 0;

    double acceptance_rate() const {
        return proposed == 0 ? 0.0 : static_cast<double>(accepted) / static_cast<double>(proposed);
    }
};

// Samples drawn round by round: configs[r * n_chains + c] is chain c's state
// after round r, so chain membership stays recoverable for error estimates.
struct SampleSet {
    std::vector<SpinConfiguration> configs;
    std::vector<AmplitudePair> amps;
    int n_chains = 0;

    std::size_t size() const { return configs.size(); }
};

class Sampler {
  public:
    Sampler(const ParameterSet& params, const EvalContext& ctx, const SamplerConfig& cfg)
        : params_(&params), ctx_(&ctx), cfg_(cfg) {
        check(cfg_.n_chains > 0, "sampler needs at least one chain");
        if (cfg_.thin_steps <= 0) cfg_.thin_steps = ctx.n_sites;
        chains_.resize(cfg_.n_chains);
        for (int c = 0; c < cfg_.n_chains; ++c) {
            std::uint64_t s = cfg_.seed + 0x9e3779b97f4a7c15ull * static_cast<std::uint64_t>(c + 1);
            chains_[c].rng = Rng(splitmix64(s));
            chains_[c].config = balanced_configuration(ctx.n_sites, chains_[c].rng);
        }
        refresh();
    }

    // Re-evaluates the cached amplitudes; call after every parameter update.
    void refresh() {
        scratch_configs_.clear();
        for (const ChainState& ch : chains_) scratch_configs_.push_back(ch.config);
        amps_.resize(chains_.size());
        evaluate_into(*params_, *ctx_, scratch_configs_.data(), scratch_configs_.size(),
                      amps_.data(), work_);
        for (std::size_t c = 0; c < chains_.size(); ++c) chains_[c].amp = amps_[c];
    }

    // One Metropolis step on every chain.
    void step() {
        const int n = static_cast<int>(chains_.size());
        scratch_configs_.resize(n);
        swaps_.resize(n);
        for (int c = 0; c < n; ++c) {
            ChainState& ch = chains_[c];
            swaps_[c] = propose_swap(ch.config, ch.rng);
            scratch_configs_[c] = ch.config;
            scratch_configs_[c].spins[swaps_[c].first] *= -1;
            scratch_configs_[c].spins[swaps_[c].second] *= -1;
        }
        amps_.resize(n);
        evaluate_into(*params_, *ctx_, scratch_configs_.data(), n, amps_.data(), work_);
        for (int c = 0; c < n; ++c) {
            ChainState& ch = chains_[c];
            const double delta = amps_[c].logamp - ch.amp.logamp;
            ++diag_.proposed;
            ++ch.steps_taken;
            if (std::isnan(delta)) {
                ++diag_.nan_rejected;
                continue;
            }
            // accept with min(1, exp(2 delta)); delta of -inf never accepts
            const bool accept = delta >= 0.0 || std::log(ch.rng.uniform()) < 2.0 * delta;
            if (accept) {
                ch.config = scratch_configs_[c];
                ch.amp = amps_[c];
                ++diag_.accepted;
            }
        }
    }

    void sweep() {
        for (int s = 0; s < ctx_->n_sites; ++s) step();
    }

    void burn_in() {
        for (int s = 0; s < cfg_.burn_in_sweeps; ++s) sweep();
    }

    // Draws `rounds` samples per chain with thinning between rounds.
    SampleSet draw(int rounds) {
        SampleSet out;
        out.n_chains = static_cast<int>(chains_.size());
        out.configs.reserve(static_cast<std::size_t>(rounds) * chains_.size());
        out.amps.reserve(static_cast<std::size_t>(rounds) * chains_.size());
        for (int r = 0; r < rounds; ++r) {
            for (int s = 0; s < cfg_.thin_steps; ++s) step();
            for (const ChainState& ch : chains_) {
                out.configs.push_back(ch.config);
                out.amps.push_back(ch.amp);
            }
        }
        return out;
    }

    const SamplerConfig& config() const { return cfg_; }
    const SamplerDiagnostics& diagnostics() const { return diag_; }
    void reset_diagnostics() { diag_ = {}; }
    const std::vector<ChainState>& chains() const { return chains_; }

    // Restores checkpointed chains; amplitudes are re-evaluated, not trusted.
    void set_chains(std::vector<ChainState> chains) {
        check(!chains.empty(), "sampler needs at least one chain");
        for (const ChainState& ch : chains)
            if (static_cast<int>(ch.config.spins.size()) != ctx_->n_sites)
                throw LengthMismatch("chain configuration does not match the cluster");
        chains_ = std::move(chains);
        cfg_.n_chains = static_cast<int>(chains_.size());
        refresh();
    }

    static SpinConfiguration balanced_configuration(int n_sites, Rng& rng) {
        SpinConfiguration c;
        c.spins.assign(n_sites, -1);
        for (int i = 0; i < (n_sites + 1) / 2; ++i) c.spins[i] = 1;
        // Fisher-Yates on the spin labels
        for (int i = n_sites - 1; i > 0; --i) {
            const int j = static_cast<int>(rng.below(static_cast<std::uint64_t>(i) + 1));
            std::swap(c.spins[i], c.spins[j]);
        }
        return c;
    }

    static std::pair<int, int> propose_swap(const SpinConfiguration& config, Rng& rng) {
        int n_up = 0;
        for (std::int8_t s : config.spins) n_up += s > 0 ? 1 : 0;
        const int n_down = static_cast<int>(config.spins.size()) - n_up;
        if (n_up == 0 || n_down == 0)
            throw PolarizedState("spin-exchange proposals need both spin species");
        int up_pick = static_cast<int>(rng.below(n_up));
        int down_pick = static_cast<int>(rng.below(n_down));
        int up_site = -1, down_site = -1;
        for (int i = 0; i < static_cast<int>(config.spins.size()); ++i) {
            if (config.spins[i] > 0) {
                if (up_pick-- == 0) up_site = i;
            } else {
                if (down_pick-- == 0) down_site = i;
            }
        }
        return {up_site, down_site};
    }

  private:
    const ParameterSet* params_;
    const EvalContext* ctx_;
    SamplerConfig cfg_;
    std::vector<ChainState> chains_;
    SamplerDiagnostics diag_;
    NetWork work_;
    std::vector<SpinConfiguration> scratch_configs_;
    std::vector<std::pair<int, int>> swaps_;
    std::vector<AmplitudePair> amps_;
};

} // namespace gvmc
