// Training loops: IT-SWO (outer target refresh + inner Adam loop) and direct
// energy-gradient descent, with learning-rate decay, metrics and checkpoints.
// Test mode swaps MCMC sampling for full-sector enumeration on N <= 16 so runs
// are deterministic; when the ansatz is exactly invariant under the
// code-preserving torus translations the sector sums are folded onto orbit
// representatives, which is what makes enumerated training affordable.
#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gvmc/common.hpp"
#include "gvmc/estimators.hpp"
#include "gvmc/exact.hpp"
#include "gvmc/hamiltonian.hpp"
#include "gvmc/network.hpp"
#include "gvmc/params.hpp"
#include "gvmc/sampler.hpp"

namespace gvmc {

struct AdamState {
    Eigen::VectorXd first_moment;
    Eigen::VectorXd second_moment;
    std::int64_t step_count = 0;
    double b1 = 0.9;
    double b2 = 0.99;
    double epsilon = 1e-8;
};

// Standard bias-corrected Adam step, applied in place. Empty moment vectors
// are initialized to zero on first use.
inline void adam_update(ParameterSet& params, const Eigen::VectorXd& grad, AdamState& state,
                        double lr) {
    const auto n = static_cast<Eigen::Index>(params.total_count());
    if (state.first_moment.size() == 0) {
        state.first_moment = Eigen::VectorXd::Zero(n);
        state.second_moment = Eigen::VectorXd::Zero(n);
    }
    if (grad.size() != n || state.first_moment.size() != n || state.second_moment.size() != n)
        throw ShapeMismatch("adam_update: gradient and moments must match the parameter count");
    ++state.step_count;
    state.first_moment = state.b1 * state.first_moment + (1.0 - state.b1) * grad;
    state.second_moment =
        state.b2 * state.second_moment + (1.0 - state.b2) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(state.b1, static_cast<double>(state.step_count));
    const double c2 = 1.0 - std::pow(state.b2, static_cast<double>(state.step_count));
    Eigen::Map<Eigen::VectorXd> w(params.data(), n);
    w.array() -= lr * (state.first_moment / c1).array() /
                 ((state.second_moment / c2).array().sqrt() + state.epsilon);
}

enum class TrainMethod { Itswo, EnergyGradient };

struct TrainConfig {
    TrainMethod method = TrainMethod::Itswo;
    double time_step = 0.05;        // imaginary-time step beta
    int inner_steps = 30;           // updates per frozen target
    double lr0 = 7e-4;
    double decay_rate = 0.1;
    double decay_horizon = 8e5;     // updates per decay decade
    std::int64_t total_updates = 0;
    int samples_per_update = 1024;  // rounded up to whole sampler rounds
    int eval_every = 100;
    bool test_mode = false;         // full-sector expectations instead of MCMC
    bool oracle_metrics = true;     // exact overlap/symmetry when the sector fits
};

inline double lr_at(std::int64_t update_index, const TrainConfig& cfg) {
    check(update_index >= 0, "learning-rate index must be non-negative");
    return cfg.lr0 * std::pow(cfg.decay_rate, static_cast<double>(update_index) / cfg.decay_horizon);
}

struct Metrics {
    std::int64_t update = 0;
    std::int64_t outer_iter = 0;
    double energy_mean = 0.0;
    double energy_stderr = 0.0;
    double acceptance = 1.0;
    double lr = 0.0;
    std::optional<double> overlap_exact;
    std::optional<double> symmetric_fraction;
};

// Everything needed to stop a run and later resume it mid-stream.
struct TrainState {
    ParameterSet params;             // w, the live weights
    ParameterSet frozen;             // r, the inner-loop target
    AdamState adam;
    std::int64_t update = 0;         // completed updates
    std::vector<ChainState> chains;  // empty in test mode
};

struct TrainHooks {
    std::function<void(const Metrics&)> on_metrics;
    std::function<void(const TrainState&)> on_checkpoint;
};

struct TrainResult {
    std::int64_t updates = 0;
    double first_energy = 0.0;  // energy at the first eval point of this call
    double final_energy = 0.0;  // energy at the last eval point
    std::int64_t degenerate_events = 0;  // skipped updates with a vanishing target overlap
};

namespace detail {

inline void check_train_config(const TrainConfig& cfg) {
    if (cfg.method == TrainMethod::Itswo && !(cfg.time_step > 0.0))
        throw ConfigError("time_step must be positive for IT-SWO");
    if (!(cfg.lr0 > 0.0)) throw ConfigError("lr0 must be positive");
    if (!(cfg.decay_rate > 0.0 && cfg.decay_horizon > 0.0))
        throw ConfigError("decay_rate and decay_horizon must be positive");
    if (cfg.inner_steps < 1) throw ConfigError("inner_steps must be at least 1");
    if (cfg.total_updates < 0) throw ConfigError("total_updates must be non-negative");
    if (cfg.samples_per_update < 1) throw ConfigError("samples_per_update must be at least 1");
    if (cfg.eval_every < 1) throw ConfigError("eval_every must be at least 1");
}

// Full-sector machinery behind test mode and the exact metrics: the sector
// basis, the sparse Hamiltonian, the oracle ground state, and the orbit
// reduction under code-preserving translations.
struct SectorEngine {
    const HeisenbergModel* model;
    const EvalContext* ctx;
    SectorBasis basis;
    SparseHamiltonian sparse;
    std::vector<SpinConfiguration> configs;  // the whole sector
    std::optional<ExactState> gs;

    std::vector<std::uint32_t> rep;  // orbit representatives (sector indices)
    std::vector<double> rep_mult;    // orbit sizes
    std::vector<SpinConfiguration> rep_configs;
    bool allow_orbits = true;
    bool decided = false;

    Eigen::VectorXd la, ph;  // last full evaluation
    std::vector<AmplitudePair> amp_buf;
    std::vector<AmplitudePair> amps_r_rep;  // frozen target at the representatives
    std::vector<std::complex<double>> eloc_r_rep;
    NetWork work;

    SectorEngine(const HeisenbergModel& m, const EvalContext& c, bool want_oracle,
                 bool orbits = true)
        : model(&m), ctx(&c), basis(c.n_sites), sparse(build_sparse(m, basis)),
          allow_orbits(orbits) {
        const std::size_t dim = basis.dimension();
        configs.reserve(dim);
        for (std::size_t k = 0; k < dim; ++k) configs.push_back(basis.configuration(k));
        if (want_oracle)
            gs = dim <= 3432 ? dense_ground_state(m, basis) : lanczos_ground_state(sparse);
    }

    void full_forward(const ParameterSet& params) {
        const std::size_t dim = configs.size();
        amp_buf.resize(dim);
        evaluate_into(params, *ctx, configs.data(), dim, amp_buf.data(), work);
        la.resize(static_cast<Eigen::Index>(dim));
        ph.resize(static_cast<Eigen::Index>(dim));
        for (std::size_t k = 0; k < dim; ++k) {
            la[static_cast<Eigen::Index>(k)] = amp_buf[k].logamp;
            ph[static_cast<Eigen::Index>(k)] = amp_buf[k].phase;
        }
        if (!decided) decide_orbits();
    }

    // Local energies of the current tabulated state at the representatives,
    // through one sparse application of H to the full sector vector.
    void rep_locals(std::vector<AmplitudePair>& amps_rep,
                    std::vector<std::complex<double>>& eloc_rep) const {
        const Eigen::VectorXcd psi = sector_vector(la, ph);
        const Eigen::VectorXcd hpsi = sparse.apply(psi);
        const std::size_t nr = rep.size();
        amps_rep.resize(nr);
        eloc_rep.resize(nr);
        for (std::size_t j = 0; j < nr; ++j) {
            const auto k = static_cast<Eigen::Index>(rep[j]);
            amps_rep[j] = {la[k], ph[k]};
            const std::complex<double> p = psi[k];
            eloc_rep[j] = p == 0.0 ? 0.0 : hpsi[k] / p;
        }
    }

    void refresh_target(const ParameterSet& frozen) {
        full_forward(frozen);
        rep_locals(amps_r_rep, eloc_r_rep);
    }

    // Sector weights at the representatives: orbit size times |psi|^2.
    void rep_weights(const std::vector<AmplitudePair>& amps_w, Eigen::VectorXd& w) const {
        const std::size_t n = amps_w.size();
        w.resize(static_cast<Eigen::Index>(n));
        double mx = amps_w.empty() ? 0.0 : amps_w[0].logamp;
        for (const AmplitudePair& a : amps_w) mx = std::max(mx, a.logamp);
        for (std::size_t j = 0; j < n; ++j)
            w[static_cast<Eigen::Index>(j)] =
                rep_mult[j] * std::exp(2.0 * (amps_w[j].logamp - mx));
    }

    double energy_now() const { return exact_energy(sparse, la, ph); }
    double overlap_now() const { return exact_overlap(*gs, la, ph); }
    double symfrac_now() const { return symmetric_fraction(ctx->cluster, basis, la, ph); }

  private:
    // The reduction is adopted only after the freshly evaluated wave-function
    // is confirmed constant on every orbit; the ResNet reads sites in raw
    // order and is skipped outright.
    void decide_orbits() {
        decided = true;
        identity_orbits();
        if (!allow_orbits || ctx->arch.variant == Variant::ResNet) return;
        SectorOrbits orb = sector_orbits(ctx->cluster, ctx->node_class, basis);
        if (orb.representative.size() == configs.size()) return;
        for (const auto& map : orb.maps)
            for (std::size_t k = 0; k < map.size(); ++k) {
                const auto a = static_cast<Eigen::Index>(k);
                const auto b = static_cast<Eigen::Index>(map[k]);
                if (std::abs(la[a] - la[b]) > 1e-8 || std::abs(ph[a] - ph[b]) > 1e-8) return;
            }
        rep = std::move(orb.representative);
        rep_mult = std::move(orb.multiplicity);
        rep_configs.clear();
        rep_configs.reserve(rep.size());
        for (std::uint32_t k : rep) rep_configs.push_back(configs[k]);
    }

    void identity_orbits() {
        const std::size_t dim = configs.size();
        rep.resize(dim);
        for (std::size_t k = 0; k < dim; ++k) rep[k] = static_cast<std::uint32_t>(k);
        rep_mult.assign(dim, 1.0);
        rep_configs = configs;
    }
};

inline TrainResult run_training(const HeisenbergModel& model, const EvalContext& ctx,
                                ParameterSet& params, Sampler* sampler, const TrainConfig& cfg,
                                const TrainHooks& hooks, const TrainState* resume) {
    check_train_config(cfg);
    const bool itswo = cfg.method == TrainMethod::Itswo;
    if (cfg.test_mode) {
        if (ctx.n_sites > 16)
            throw ConfigError("test mode enumerates the sector and is limited to 16 sites");
    } else if (sampler == nullptr) {
        throw ConfigError("sampling mode needs a sampler");
    }
    const bool use_sampler = !cfg.test_mode;

    const auto n_params = static_cast<Eigen::Index>(params.total_count());
    AdamState adam;
    ParameterSet frozen = params;
    std::int64_t update = 0;

    if (resume != nullptr) {
        if (resume->params.total_count() != params.total_count())
            throw ShapeMismatch("resume state does not match the parameter layout");
        params = resume->params;
        frozen = resume->frozen;
        adam = resume->adam;
        update = resume->update;
        if (use_sampler) {
            if (!resume->chains.empty())
                sampler->set_chains(resume->chains);
            else
                sampler->refresh();
            sampler->reset_diagnostics();
        }
    } else if (use_sampler) {
        sampler->refresh();
        sampler->burn_in();
        sampler->reset_diagnostics();
    }

    const bool want_oracle = cfg.oracle_metrics && ctx.n_sites <= 16;
    std::unique_ptr<SectorEngine> engine;
    if (cfg.test_mode || want_oracle)
        engine = std::make_unique<SectorEngine>(model, ctx, want_oracle);

    TrainState last_good;
    auto snapshot = [&]() {
        TrainState s;
        s.params = params;
        s.frozen = frozen;
        s.adam = adam;
        s.update = update;
        if (use_sampler) s.chains = sampler->chains();
        return s;
    };
    auto abort_diverged = [&](const std::string& why) {
        params = last_good.params;
        if (hooks.on_checkpoint) hooks.on_checkpoint(last_good);
        throw Diverged(why + " at update " + std::to_string(update) +
                       "; parameters rolled back to update " + std::to_string(last_good.update));
    };

    TrainResult result;
    NetWork grad_work, target_work;
    Eigen::VectorXd grad(n_params), weights;
    std::vector<AmplitudePair> amps_w_rep, amps_r_samp;
    std::vector<std::complex<double>> eloc_rep;
    bool have_first = false;

    auto evaluate_metrics = [&](Metrics& m) {
        m.update = update;
        m.outer_iter = itswo ? update / cfg.inner_steps : update;
        m.lr = lr_at(update, cfg);
        if (cfg.test_mode) {
            engine->full_forward(params);
            if (!engine->la.allFinite() || !engine->ph.allFinite()) {
                m.energy_mean = std::numeric_limits<double>::quiet_NaN();
                return;
            }
            m.energy_mean = engine->energy_now();
            m.energy_stderr = 0.0;
            m.acceptance = 1.0;
        } else {
            const int nch = static_cast<int>(sampler->chains().size());
            const int rounds = (cfg.samples_per_update + nch - 1) / nch;
            SampleSet s = sampler->draw(rounds);
            const auto eloc = local_energies(params, ctx, model, s.configs.data(), s.amps.data(),
                                             s.configs.size(), grad_work);
            const EnergyEstimate est = energy(eloc, s.n_chains);
            m.energy_mean = est.mean.real();
            m.energy_stderr = est.std_error;
            m.acceptance = sampler->diagnostics().acceptance_rate();
            sampler->reset_diagnostics();
            if (engine) {
                engine->full_forward(params);
                if (!engine->la.allFinite() || !engine->ph.allFinite()) return;
            }
        }
        if (engine && engine->gs) {
            m.overlap_exact = engine->overlap_now();
            m.symmetric_fraction = engine->symfrac_now();
        }
    };
    auto emit_eval = [&]() {
        Metrics m;
        evaluate_metrics(m);
        if (!std::isfinite(m.energy_mean)) abort_diverged("non-finite energy");
        if (!have_first) {
            result.first_energy = m.energy_mean;
            have_first = true;
        }
        result.final_energy = m.energy_mean;
        if (hooks.on_metrics) hooks.on_metrics(m);
        last_good = snapshot();
        if (hooks.on_checkpoint) hooks.on_checkpoint(last_good);
    };

    last_good = snapshot();
    if (resume == nullptr) emit_eval();

    bool target_fresh = false;
    int degenerate_streak = 0;
    while (update < cfg.total_updates) {
        if (itswo && update % cfg.inner_steps == 0) {
            frozen = params;  // outer refresh: r <- w
            target_fresh = false;
        }
        bool degenerate = false;
        if (cfg.test_mode) {
            if (itswo) {
                if (!target_fresh) {
                    engine->refresh_target(frozen);
                    target_fresh = true;
                }
                const auto& rc = engine->rep_configs;
                amps_w_rep.resize(rc.size());
                evaluate_into(params, ctx, rc.data(), rc.size(), amps_w_rep.data(), grad_work);
                engine->rep_weights(amps_w_rep, weights);
                const auto ratios =
                    itswo_ratios(amps_w_rep, engine->amps_r_rep, engine->eloc_r_rep, cfg.time_step);
                try {
                    grad = itswo_gradient(params, ctx, rc.data(), rc.size(), weights, ratios,
                                          grad_work)
                               .grad;
                } catch (const DegenerateOverlap&) {
                    degenerate = true;
                }
            } else {
                engine->full_forward(params);
                if (!engine->la.allFinite()) abort_diverged("non-finite amplitudes");
                engine->rep_locals(amps_w_rep, eloc_rep);
                engine->rep_weights(amps_w_rep, weights);
                grad = energy_gradient(params, ctx, engine->rep_configs.data(),
                                       engine->rep_configs.size(), weights, eloc_rep, grad_work);
            }
        } else {
            const int nch = static_cast<int>(sampler->chains().size());
            const int rounds = (cfg.samples_per_update + nch - 1) / nch;
            SampleSet s = sampler->draw(rounds);
            const std::size_t n = s.configs.size();
            if (itswo) {
                amps_r_samp.resize(n);
                evaluate_into(frozen, ctx, s.configs.data(), n, amps_r_samp.data(), target_work);
                const auto eloc_r = local_energies(frozen, ctx, model, s.configs.data(),
                                                   amps_r_samp.data(), n, target_work);
                const auto ratios = itswo_ratios(s.amps, amps_r_samp, eloc_r, cfg.time_step);
                weights = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(n));
                try {
                    grad = itswo_gradient(params, ctx, s.configs.data(), n, weights, ratios,
                                          grad_work)
                               .grad;
                } catch (const DegenerateOverlap&) {
                    degenerate = true;
                }
            } else {
                grad = energy_gradient(params, ctx, model, s, grad_work);
            }
        }
        if (degenerate) {
            // The schedule still advances; the step itself is skipped.
            ++result.degenerate_events;
            if (++degenerate_streak >= 2) abort_diverged("degenerate IT-SWO overlap twice in a row");
        } else {
            degenerate_streak = 0;
            adam_update(params, grad, adam, lr_at(update, cfg));
            if (!Eigen::Map<const Eigen::VectorXd>(params.data(), n_params).allFinite())
                abort_diverged("non-finite parameters");
            if (use_sampler) sampler->refresh();
        }
        ++update;
        if (update % cfg.eval_every == 0 || update == cfg.total_updates) emit_eval();
    }
    result.updates = update;
    return result;
}

}  // namespace detail

// Imaginary-time supervised wave-function optimization: freeze r <- w, run
// inner_steps Adam updates of w toward (1 - time_step H) psi_r, repeat.
// Pass a null sampler in test mode. On divergence the parameters are rolled
// back to the last checkpointed state, which is also handed to on_checkpoint.
inline TrainResult run_itswo(const HeisenbergModel& model, const EvalContext& ctx,
                             ParameterSet& params, Sampler* sampler, const TrainConfig& cfg,
                             const TrainHooks& hooks = {}, const TrainState* resume = nullptr) {
    TrainConfig c = cfg;
    c.method = TrainMethod::Itswo;
    return detail::run_training(model, ctx, params, sampler, c, hooks, resume);
}

// Plain stochastic gradient descent on <E>, same plumbing as run_itswo.
inline TrainResult run_energy_gradient(const HeisenbergModel& model, const EvalContext& ctx,
                                       ParameterSet& params, Sampler* sampler,
                                       const TrainConfig& cfg, const TrainHooks& hooks = {},
                                       const TrainState* resume = nullptr) {
    TrainConfig c = cfg;
    c.method = TrainMethod::EnergyGradient;
    return detail::run_training(model, ctx, params, sampler, c, hooks, resume);
}

}  // namespace gvmc
