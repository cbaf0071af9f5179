// Estimators over samples or enumerated sectors: local energies, energy with
// between-chain error bars, the energy gradient, two-state overlap, and the
// IT-SWO log-overlap gradient.
//
// Every expectation here is self-normalizing (weights need not sum to one),
// and all wave-function ratios are formed as exp of log-amplitude and phase
// differences so raw amplitudes never overflow. Weighted variants take the
// full sector with |psi|^2 weights and reproduce exact linear-algebra values;
// sampled variants use uniform weights over Markov-chain draws.
#pragma once

#include <cmath>
#include <complex>
#include <unordered_map>
#include <vector>

#include "gvmc/common.hpp"
#include "gvmc/hamiltonian.hpp"
#include "gvmc/network.hpp"
#include "gvmc/sampler.hpp"
#include "gvmc/sector.hpp"

namespace gvmc {

using Complex = std::complex<double>;

struct EnergyEstimate {
    Complex mean{0.0, 0.0};
    double std_error = 0.0;
    std::size_t n_samples = 0;
};

inline Complex ratio_from_amps(const AmplitudePair& num, const AmplitudePair& den) {
    return std::exp(Complex(num.logamp - den.logamp, num.phase - den.phase));
}

// Local energies for a batch of configurations whose own amplitudes are
// already known. Connected configurations are evaluated in one batched call,
// deduplicated across the batch when the sites fit a 64-bit key.
inline std::vector<Complex> local_energies(const ParameterSet& params, const EvalContext& ctx,
                                           const HeisenbergModel& model,
                                           const SpinConfiguration* configs,
                                           const AmplitudePair* amps, std::size_t count,
                                           NetWork& work) {
    struct Term {
        std::size_t sample;
        std::size_t slot;
        double element;
    };
    std::vector<Complex> eloc(count);
    std::vector<Term> terms;
    std::vector<SpinConfiguration> unique;
    std::unordered_map<std::uint64_t, std::size_t> slot_of;
    const bool packable = ctx.n_sites <= 64;

    for (std::size_t i = 0; i < count; ++i) {
        const ConnectedRow row = connected_row(model, configs[i]);
        eloc[i] = Complex(row.diagonal, 0.0);
        for (const auto& o : row.off) {
            SpinConfiguration flipped = exchanged(configs[i], o.i, o.j);
            std::size_t slot;
            if (packable) {
                const std::uint64_t key = flipped.pack();
                auto [it, inserted] = slot_of.try_emplace(key, unique.size());
                slot = it->second;
                if (inserted) unique.push_back(std::move(flipped));
            } else {
                slot = unique.size();
                unique.push_back(std::move(flipped));
            }
            terms.push_back({i, slot, o.element});
        }
    }

    std::vector<AmplitudePair> flipped_amps(unique.size());
    evaluate_into(params, ctx, unique.data(), unique.size(), flipped_amps.data(), work);
    for (const Term& t : terms)
        eloc[t.sample] += t.element * ratio_from_amps(flipped_amps[t.slot], amps[t.sample]);
    return eloc;
}

inline std::vector<Complex> local_energies(const ParameterSet& params, const EvalContext& ctx,
                                           const HeisenbergModel& model,
                                           const std::vector<SpinConfiguration>& configs,
                                           const std::vector<AmplitudePair>& amps,
                                           NetWork& work) {
    if (configs.size() != amps.size())
        throw LengthMismatch("amplitude list does not match the configuration list");
    return local_energies(params, ctx, model, configs.data(), amps.data(), configs.size(), work);
}

inline Complex local_energy(const ParameterSet& params, const EvalContext& ctx,
                            const HeisenbergModel& model, const SpinConfiguration& config) {
    NetWork work;
    const AmplitudePair amp = evaluate_one(params, ctx, config);
    return local_energies(params, ctx, model, &config, &amp, 1, work)[0];
}

// Local energies of an explicit sector vector; used where the state is an
// exact eigenvector rather than a network.
inline std::vector<Complex> local_energies_of_vector(const HeisenbergModel& model,
                                                     const SectorBasis& basis,
                                                     const Eigen::VectorXcd& state,
                                                     const std::vector<SpinConfiguration>& configs) {
    check(state.size() == static_cast<Eigen::Index>(basis.dimension()),
          "state vector does not match the sector");
    std::vector<Complex> eloc(configs.size());
    for (std::size_t i = 0; i < configs.size(); ++i) {
        const ConnectedRow row = connected_row(model, configs[i]);
        const Complex psi = state(static_cast<Eigen::Index>(basis.index_of(configs[i].pack())));
        Complex acc(row.diagonal, 0.0);
        for (const auto& o : row.off) {
            std::uint64_t bits = configs[i].pack();
            bits ^= (1ULL << o.i) | (1ULL << o.j);
            acc += o.element * state(static_cast<Eigen::Index>(basis.index_of(bits))) / psi;
        }
        eloc[i] = acc;
    }
    return eloc;
}

// Mean local energy with the error bar from the between-chain variance of
// per-chain means; samples are round-major as produced by Sampler::draw.
inline EnergyEstimate energy(const std::vector<Complex>& eloc, int n_chains) {
    if (n_chains < 2 || eloc.size() < 2 || eloc.size() % static_cast<std::size_t>(n_chains) != 0)
        throw TooFewSamples("energy error bars need at least two full chains");
    const std::size_t rounds = eloc.size() / static_cast<std::size_t>(n_chains);
    EnergyEstimate est;
    est.n_samples = eloc.size();
    std::vector<double> chain_mean(n_chains, 0.0);
    Complex total(0.0, 0.0);
    for (std::size_t r = 0; r < rounds; ++r)
        for (int c = 0; c < n_chains; ++c) {
            const Complex e = eloc[r * n_chains + c];
            total += e;
            chain_mean[c] += e.real();
        }
    est.mean = total / static_cast<double>(eloc.size());
    double grand = 0.0;
    for (double& m : chain_mean) {
        m /= static_cast<double>(rounds);
        grand += m;
    }
    grand /= n_chains;
    double var = 0.0;
    for (double m : chain_mean) var += (m - grand) * (m - grand);
    var /= n_chains - 1;
    est.std_error = std::sqrt(var / n_chains);
    return est;
}

inline EnergyEstimate energy(const ParameterSet& params, const EvalContext& ctx,
                             const HeisenbergModel& model, const SampleSet& samples,
                             NetWork& work) {
    if (samples.size() < 2) throw TooFewSamples("energy needs at least two samples");
    const std::vector<Complex> eloc = local_energies(
        params, ctx, model, samples.configs.data(), samples.amps.data(), samples.size(), work);
    return energy(eloc, samples.n_chains);
}

// Full sector with |psi|^2 weights, for deterministic small systems.
struct EnumeratedState {
    std::vector<SpinConfiguration> configs;
    std::vector<AmplitudePair> amps;
    Eigen::VectorXd weight;  // proportional to |psi|^2, scaled to max 1
};

inline EnumeratedState enumerate_state(const ParameterSet& params, const EvalContext& ctx,
                                       const SectorBasis& basis, NetWork& work) {
    EnumeratedState st;
    st.configs.reserve(basis.dimension());
    for (std::size_t i = 0; i < basis.dimension(); ++i)
        st.configs.push_back(basis.configuration(i));
    st.amps.resize(st.configs.size());
    evaluate_into(params, ctx, st.configs.data(), st.configs.size(), st.amps.data(), work);
    double amax = -std::numeric_limits<double>::infinity();
    for (const AmplitudePair& a : st.amps) amax = std::max(amax, a.logamp);
    check(std::isfinite(amax), "wave function vanishes on the whole sector");
    st.weight.resize(static_cast<Eigen::Index>(st.amps.size()));
    for (std::size_t i = 0; i < st.amps.size(); ++i)
        st.weight(static_cast<Eigen::Index>(i)) = std::exp(2.0 * (st.amps[i].logamp - amax));
    return st;
}

inline EnergyEstimate energy_enumerated(const ParameterSet& params, const EvalContext& ctx,
                                        const HeisenbergModel& model, const SectorBasis& basis,
                                        NetWork& work) {
    const EnumeratedState st = enumerate_state(params, ctx, basis, work);
    const std::vector<Complex> eloc = local_energies(
        params, ctx, model, st.configs.data(), st.amps.data(), st.configs.size(), work);
    Complex acc(0.0, 0.0);
    double s = 0.0;
    for (std::size_t i = 0; i < eloc.size(); ++i) {
        const double w = st.weight(static_cast<Eigen::Index>(i));
        if (w == 0.0) continue;
        acc += w * eloc[i];
        s += w;
    }
    check(s > 0.0, "wave function vanishes on the whole sector");
    return {acc / s, 0.0, basis.dimension()};
}

// Gradient of <E>: 2 E[Re(Eloc) grad_alpha + Im(Eloc) grad_beta]
//               - 2 Re(E[Eloc]) E[grad_alpha], fused into one weighted sweep.
inline Eigen::VectorXd energy_gradient(const ParameterSet& params, const EvalContext& ctx,
                                       const SpinConfiguration* configs, std::size_t count,
                                       const Eigen::VectorXd& weights,
                                       const std::vector<Complex>& eloc, NetWork& work) {
    if (count == 0) throw TooFewSamples("energy gradient needs samples");
    if (eloc.size() != count || static_cast<std::size_t>(weights.size()) != count)
        throw LengthMismatch("weights and local energies must match the configurations");
    double s = 0.0;
    Complex mean(0.0, 0.0);
    for (std::size_t i = 0; i < count; ++i) {
        const double w = weights(static_cast<Eigen::Index>(i));
        if (w == 0.0) continue;
        s += w;
        mean += w * eloc[i];
    }
    if (s <= 0.0) throw TooFewSamples("energy gradient needs positive total weight");
    mean /= s;
    Eigen::VectorXd a(count), b(count);
    for (std::size_t i = 0; i < count; ++i) {
        const double w = weights(static_cast<Eigen::Index>(i)) / s;
        a(static_cast<Eigen::Index>(i)) = 2.0 * w * (eloc[i].real() - mean.real());
        b(static_cast<Eigen::Index>(i)) = 2.0 * w * eloc[i].imag();
    }
    Eigen::VectorXd g;
    weighted_gradient_sum_into(params, ctx, configs, count, a, b, g, work);
    return g;
}

inline Eigen::VectorXd energy_gradient(const ParameterSet& params, const EvalContext& ctx,
                                       const HeisenbergModel& model, const SampleSet& samples,
                                       NetWork& work) {
    if (samples.size() == 0) throw TooFewSamples("energy gradient needs samples");
    const std::vector<Complex> eloc = local_energies(
        params, ctx, model, samples.configs.data(), samples.amps.data(), samples.size(), work);
    const Eigen::VectorXd w = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(samples.size()));
    return energy_gradient(params, ctx, samples.configs.data(), samples.size(), w, eloc, work);
}

// Overlap |<phi|psi>| / (|phi| |psi|) from two independent weighted averages:
// the magnitude of sqrt(E_phi[psi/phi]) * sqrt(E_psi[phi/psi]).
inline double overlap_weighted(const std::vector<AmplitudePair>& psi_at_phi,
                               const std::vector<AmplitudePair>& phi_at_phi,
                               const Eigen::VectorXd& w_phi,
                               const std::vector<AmplitudePair>& phi_at_psi,
                               const std::vector<AmplitudePair>& psi_at_psi,
                               const Eigen::VectorXd& w_psi) {
    if (psi_at_phi.empty() || phi_at_psi.empty())
        throw TooFewSamples("overlap needs samples from both states");
    if (psi_at_phi.size() != phi_at_phi.size() ||
        psi_at_phi.size() != static_cast<std::size_t>(w_phi.size()) ||
        phi_at_psi.size() != psi_at_psi.size() ||
        phi_at_psi.size() != static_cast<std::size_t>(w_psi.size()))
        throw LengthMismatch("overlap sample arrays must pair up");
    auto mean_ratio = [](const std::vector<AmplitudePair>& num,
                         const std::vector<AmplitudePair>& den, const Eigen::VectorXd& w) {
        Complex acc(0.0, 0.0);
        double s = 0.0;
        for (std::size_t i = 0; i < num.size(); ++i) {
            const double wi = w(static_cast<Eigen::Index>(i));
            if (wi == 0.0) continue;
            acc += wi * ratio_from_amps(num[i], den[i]);
            s += wi;
        }
        if (s <= 0.0) throw TooFewSamples("overlap needs positive total weight");
        return acc / s;
    };
    const Complex m1 = mean_ratio(psi_at_phi, phi_at_phi, w_phi);
    const Complex m2 = mean_ratio(phi_at_psi, psi_at_psi, w_psi);
    return std::abs(std::sqrt(m1) * std::sqrt(m2));
}

inline double overlap(const ParameterSet& params_psi, const EvalContext& ctx_psi,
                      const ParameterSet& params_phi, const EvalContext& ctx_phi,
                      const SampleSet& samples_psi, const SampleSet& samples_phi,
                      NetWork& work) {
    if (samples_psi.size() == 0 || samples_phi.size() == 0)
        throw TooFewSamples("overlap needs samples from both states");
    std::vector<AmplitudePair> psi_at_phi(samples_phi.size()), phi_at_psi(samples_psi.size());
    evaluate_into(params_psi, ctx_psi, samples_phi.configs.data(), samples_phi.size(),
                  psi_at_phi.data(), work);
    evaluate_into(params_phi, ctx_phi, samples_psi.configs.data(), samples_psi.size(),
                  phi_at_psi.data(), work);
    const Eigen::VectorXd w_phi = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(samples_phi.size()));
    const Eigen::VectorXd w_psi = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(samples_psi.size()));
    return overlap_weighted(psi_at_phi, samples_phi.amps, w_phi, phi_at_psi, samples_psi.amps,
                            w_psi);
}

inline double overlap_enumerated(const ParameterSet& params_a, const EvalContext& ctx_a,
                                 const ParameterSet& params_b, const EvalContext& ctx_b,
                                 const SectorBasis& basis, NetWork& work) {
    EnumeratedState a = enumerate_state(params_a, ctx_a, basis, work);
    EnumeratedState b = enumerate_state(params_b, ctx_b, basis, work);
    return overlap_weighted(a.amps, b.amps, b.weight, b.amps, a.amps, a.weight);
}

// Target-over-state ratios phi(c)/psi_w(c) for the IT-SWO inner loop, formed
// in the log domain: phi = (1 - timeStep*H) psi_r, so the ratio is
// exp(log psi_r - log psi_w) * (1 - timeStep * Eloc_r).
inline std::vector<Complex> itswo_ratios(const std::vector<AmplitudePair>& amps_w,
                                         const std::vector<AmplitudePair>& amps_r,
                                         const std::vector<Complex>& eloc_r, double time_step) {
    if (amps_w.size() != amps_r.size() || amps_w.size() != eloc_r.size())
        throw LengthMismatch("ratio inputs must pair up");
    std::vector<Complex> ratios(amps_w.size());
    for (std::size_t i = 0; i < amps_w.size(); ++i)
        ratios[i] = ratio_from_amps(amps_r[i], amps_w[i]) * (1.0 - time_step * eloc_r[i]);
    return ratios;
}

struct ItswoResult {
    Eigen::VectorXd grad;
    double r_re = 0.0;
    double r_im = 0.0;
};

// Gradient of -2 log O(psi_w, phi) with O the normalized overlap; ratios are
// phi/psi at the sampled (or enumerated) configurations. At w = r with
// timeStep = 0 every ratio is exactly 1 and the gradient is exactly zero.
inline ItswoResult itswo_gradient(const ParameterSet& params, const EvalContext& ctx,
                                  const SpinConfiguration* configs, std::size_t count,
                                  const Eigen::VectorXd& weights,
                                  const std::vector<Complex>& ratios, NetWork& work) {
    if (count == 0) throw TooFewSamples("itswo gradient needs samples");
    if (ratios.size() != count || static_cast<std::size_t>(weights.size()) != count)
        throw LengthMismatch("weights and ratios must match the configurations");
    double s = 0.0, sum_re = 0.0, sum_im = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
        const double w = weights(static_cast<Eigen::Index>(i));
        if (w == 0.0) continue;
        s += w;
        sum_re += w * ratios[i].real();
        sum_im += w * ratios[i].imag();
    }
    if (s <= 0.0) throw TooFewSamples("itswo gradient needs positive total weight");
    ItswoResult out;
    out.r_re = sum_re / s;
    out.r_im = sum_im / s;
    const double r2 = out.r_re * out.r_re + out.r_im * out.r_im;
    if (r2 < 1e-24)
        throw DegenerateOverlap("target overlap magnitude vanished (r^2 = " +
                                std::to_string(r2) + ")");
    Eigen::VectorXd a(count), b(count);
    for (std::size_t i = 0; i < count; ++i) {
        const double w = weights(static_cast<Eigen::Index>(i)) / s;
        if (w == 0.0) {
            a(static_cast<Eigen::Index>(i)) = 0.0;
            b(static_cast<Eigen::Index>(i)) = 0.0;
            continue;
        }
        const double re = ratios[i].real(), im = ratios[i].imag();
        a(static_cast<Eigen::Index>(i)) = 2.0 * w * (1.0 - (out.r_re * re + out.r_im * im) / r2);
        b(static_cast<Eigen::Index>(i)) = -2.0 * w * (out.r_re * im - out.r_im * re) / r2;
    }
    weighted_gradient_sum_into(params, ctx, configs, count, a, b, out.grad, work);
    return out;
}

} // namespace gvmc
