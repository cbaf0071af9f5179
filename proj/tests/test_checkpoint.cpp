#include <gtest/gtest.h>

#include <bit>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "gvmc/checkpoint.hpp"
#include "gvmc/estimators.hpp"
#include "gvmc/lattice.hpp"
#include "gvmc/optimizer.hpp"
#include "gvmc/sampler.hpp"

namespace gvmc {
namespace {

ArchConfig tiny_arch(std::uint64_t seed) {
    ArchConfig a;
    a.embed_dim = 8;
    a.hidden_width = 8;
    a.hidden_layers = 2;
    a.mp_steps = 2;
    a.seed = seed;
    return a;
}

std::string temp_path(const std::string& name) { return testing::TempDir() + name; }

std::string slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

bool same_params(const ParameterSet& a, const ParameterSet& b) {
    if (a.total_count() != b.total_count()) return false;
    for (std::size_t i = 0; i < a.total_count(); ++i)
        if (std::bit_cast<std::uint64_t>(a.data()[i]) != std::bit_cast<std::uint64_t>(b.data()[i]))
            return false;
    return true;
}

// A genuinely mid-training checkpoint: chains displaced, Adam warm, frozen
// target distinct from the live weights.
Checkpoint trained_checkpoint(std::vector<std::vector<double>>* tail_energies = nullptr) {
    Cluster cl = make_preset("chain8");
    SublatticeEncoding enc = assign_sublattice(cl, SublatticePattern::Neel);
    HeisenbergModel model{cl, 0.0};
    ArchConfig arch = tiny_arch(11);
    EvalContext ctx = make_context(cl, enc, arch, 0.0);
    ParameterSet params = init_params(arch, enc.n_classes, cl.n_sites);
    SamplerConfig scfg;
    scfg.n_chains = 6;
    scfg.seed = 21;
    Sampler sampler(params, ctx, scfg);

    TrainConfig cfg;
    cfg.inner_steps = 15;
    cfg.eval_every = 5;
    cfg.total_updates = 50;
    cfg.samples_per_update = 24;
    cfg.lr0 = 3e-3;
    cfg.oracle_metrics = false;

    Checkpoint c;
    c.meta.arch = arch;
    c.meta.cluster = "chain8";
    c.meta.kind = cl.spec.kind;
    c.meta.n_sites = cl.n_sites;
    c.meta.j2 = 0.0;
    c.meta.pattern = SublatticePattern::Neel;
    c.meta.code_width = enc.n_classes;

    TrainHooks hooks;
    hooks.on_checkpoint = [&](const TrainState& s) {
        if (s.update == 25) c.state = s;
    };
    hooks.on_metrics = [&](const Metrics& m) {
        if (tail_energies != nullptr && m.update > 25)
            tail_energies->push_back({static_cast<double>(m.update), m.energy_mean});
        if (m.update == 25) c.meta.final_energy = m.energy_mean;
    };
    run_itswo(model, ctx, params, &sampler, cfg, hooks);
    c.meta.step = 25;
    return c;
}

TEST(Checkpoint, RoundTripPreservesTrainState) {
    const Checkpoint before = trained_checkpoint();
    const std::string path = temp_path("roundtrip.bin");
    save_checkpoint(path, before);
    const Checkpoint after = load_checkpoint(path);

    EXPECT_EQ(after.meta.arch, before.meta.arch);
    EXPECT_EQ(after.meta.cluster, "chain8");
    EXPECT_EQ(after.meta.kind, LatticeKind::Chain);
    EXPECT_EQ(after.meta.n_sites, 8);
    EXPECT_EQ(after.meta.pattern, SublatticePattern::Neel);
    EXPECT_EQ(after.meta.code_width, 2);
    EXPECT_EQ(after.meta.step, 25);
    ASSERT_TRUE(after.meta.final_energy.has_value());
    EXPECT_EQ(std::bit_cast<std::uint64_t>(*after.meta.final_energy),
              std::bit_cast<std::uint64_t>(*before.meta.final_energy));

    EXPECT_TRUE(same_params(after.state.params, before.state.params));
    EXPECT_TRUE(same_params(after.state.frozen, before.state.frozen));
    EXPECT_FALSE(same_params(after.state.params, after.state.frozen));
    EXPECT_EQ(after.state.update, 25);
    EXPECT_EQ(after.state.adam.step_count, before.state.adam.step_count);
    ASSERT_EQ(after.state.adam.first_moment.size(), before.state.adam.first_moment.size());
    for (Eigen::Index i = 0; i < after.state.adam.first_moment.size(); ++i) {
        EXPECT_EQ(std::bit_cast<std::uint64_t>(after.state.adam.first_moment[i]),
                  std::bit_cast<std::uint64_t>(before.state.adam.first_moment[i]));
        EXPECT_EQ(std::bit_cast<std::uint64_t>(after.state.adam.second_moment[i]),
                  std::bit_cast<std::uint64_t>(before.state.adam.second_moment[i]));
    }

    ASSERT_EQ(after.state.chains.size(), before.state.chains.size());
    for (std::size_t ci = 0; ci < after.state.chains.size(); ++ci) {
        EXPECT_EQ(after.state.chains[ci].config.spins, before.state.chains[ci].config.spins);
        EXPECT_EQ(after.state.chains[ci].rng.state(), before.state.chains[ci].rng.state());
        EXPECT_EQ(after.state.chains[ci].steps_taken, before.state.chains[ci].steps_taken);
    }
}

TEST(Checkpoint, LoadedStateResumesTheSameMetricStream) {
    std::vector<std::vector<double>> expected_tail;
    const Checkpoint saved = trained_checkpoint(&expected_tail);
    const std::string path = temp_path("resume.bin");
    save_checkpoint(path, saved);
    const Checkpoint loaded = load_checkpoint(path);

    Cluster cl = make_preset(loaded.meta.cluster);
    SublatticeEncoding enc = assign_sublattice(cl, loaded.meta.pattern);
    HeisenbergModel model{cl, loaded.meta.j2};
    EvalContext ctx = make_context(cl, enc, loaded.meta.arch, loaded.meta.j2);
    ParameterSet params = loaded.state.params;
    SamplerConfig scfg;
    scfg.n_chains = 6;
    scfg.seed = 21;
    Sampler sampler(params, ctx, scfg);

    TrainConfig cfg;
    cfg.inner_steps = 15;
    cfg.eval_every = 5;
    cfg.total_updates = 50;
    cfg.samples_per_update = 24;
    cfg.lr0 = 3e-3;
    cfg.oracle_metrics = false;

    std::vector<std::vector<double>> tail;
    TrainHooks hooks;
    hooks.on_metrics = [&](const Metrics& m) {
        tail.push_back({static_cast<double>(m.update), m.energy_mean});
    };
    run_itswo(model, ctx, params, &sampler, cfg, hooks, &loaded.state);

    ASSERT_EQ(tail.size(), expected_tail.size());
    for (std::size_t i = 0; i < tail.size(); ++i) {
        EXPECT_EQ(tail[i][0], expected_tail[i][0]);
        EXPECT_EQ(std::bit_cast<std::uint64_t>(tail[i][1]),
                  std::bit_cast<std::uint64_t>(expected_tail[i][1]))
            << "eval " << i;
    }
}

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
    const Checkpoint c = trained_checkpoint();
    const std::string first = temp_path("bytes-a.bin");
    const std::string second = temp_path("bytes-b.bin");
    save_checkpoint(first, c);
    save_checkpoint(second, load_checkpoint(first));
    const std::string a = slurp(first);
    const std::string b = slurp(second);
    ASSERT_FALSE(a.empty());
    EXPECT_EQ(a, b);
}

TEST(Checkpoint, FreshStateWithoutChainsRoundTrips) {
    Checkpoint c;
    c.meta.arch = tiny_arch(3);
    c.meta.cluster = "chain4";
    c.meta.kind = LatticeKind::Chain;
    c.meta.n_sites = 4;
    c.meta.pattern = SublatticePattern::None;
    c.meta.code_width = 0;
    c.state.params = init_params(c.meta.arch, 0, 4);
    c.state.frozen = c.state.params;

    const std::string path = temp_path("fresh.bin");
    save_checkpoint(path, c);
    const Checkpoint back = load_checkpoint(path);
    EXPECT_TRUE(same_params(back.state.params, c.state.params));
    EXPECT_EQ(back.state.adam.first_moment.size(), 0);
    EXPECT_EQ(back.state.adam.step_count, 0);
    EXPECT_TRUE(back.state.chains.empty());
    EXPECT_FALSE(back.meta.final_energy.has_value());
}

TEST(Checkpoint, RejectsCorruptFiles) {
    const Checkpoint c = trained_checkpoint();
    const std::string path = temp_path("corrupt.bin");
    save_checkpoint(path, c);
    const std::string good = slurp(path);

    const std::string bad_magic = temp_path("bad-magic.bin");
    {
        std::string copy = good;
        copy[0] = 'X';
        std::ofstream os(bad_magic, std::ios::binary);
        os << copy;
    }
    EXPECT_THROW(load_checkpoint(bad_magic), IoError);

    const std::string truncated = temp_path("truncated.bin");
    {
        std::ofstream os(truncated, std::ios::binary);
        os << good.substr(0, good.size() / 2);
    }
    EXPECT_THROW(load_checkpoint(truncated), IoError);

    EXPECT_THROW(load_checkpoint(temp_path("does-not-exist.bin")), IoError);
}

TEST(Checkpoint, MetadataStepMustMatchState) {
    Checkpoint c = trained_checkpoint();
    c.meta.step = 7;
    EXPECT_THROW(save_checkpoint(temp_path("mismatch.bin"), c), ShapeMismatch);
}

}  // namespace
}  // namespace gvmc
