// gvmc command-line front end: training runs, checkpoint evaluation, size
// transfer, sublattice-encoding ablations, exact diagonalization, and metric
// export. Configuration comes from a JSON file with flag overrides; every
// run writes the fully resolved configuration next to its outputs.
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "CLI11.hpp"
#include "gvmc/checkpoint.hpp"
#include "gvmc/estimators.hpp"
#include "gvmc/exact.hpp"
#include "gvmc/lattice.hpp"
#include "gvmc/optimizer.hpp"
#include "gvmc/sampler.hpp"

namespace {

using nlohmann::json;
namespace fs = std::filesystem;
using namespace gvmc;

constexpr int kMetricsSchema = 1;

// ---------------------------------------------------------------------------
// run configuration

struct RunConfig {
    std::string cluster = "square16";
    double j2 = 0.0;
    std::string pattern = "auto";  // resolved against the regime table
    ArchConfig arch;
    SamplerConfig sampler;
    TrainConfig train;
    std::string out = "run";
    std::uint64_t seed = 1;
    bool arch_seed_given = false;
    bool sampler_seed_given = false;
};

TrainMethod method_from_string(const std::string& s) {
    if (s == "itswo") return TrainMethod::Itswo;
    if (s == "energy-gradient") return TrainMethod::EnergyGradient;
    throw ConfigError("unknown training method: " + s + " (itswo, energy-gradient)");
}

std::string to_string(TrainMethod m) {
    return m == TrainMethod::Itswo ? "itswo" : "energy-gradient";
}

void reject_unknown_keys(const json& j, std::initializer_list<const char*> known,
                         const std::string& where) {
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (std::find_if(known.begin(), known.end(),
                         [&](const char* k) { return key == k; }) == known.end())
            throw ConfigError("unknown config key " + where + key);
    }
}

void apply_config_json(const json& j, RunConfig& rc) {
    reject_unknown_keys(j, {"cluster", "j2", "pattern", "arch", "sampler", "train", "out", "seed"},
                        "");
    if (j.contains("cluster")) rc.cluster = j.at("cluster").get<std::string>();
    if (j.contains("j2")) rc.j2 = j.at("j2").get<double>();
    if (j.contains("pattern")) rc.pattern = j.at("pattern").get<std::string>();
    if (j.contains("out")) rc.out = j.at("out").get<std::string>();
    if (j.contains("seed")) rc.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("arch")) {
        const json& a = j.at("arch");
        reject_unknown_keys(a,
                            {"variant", "embed_dim", "hidden_width", "hidden_layers", "mp_steps",
                             "coupling_edge_feature", "seed"},
                            "arch.");
        if (a.contains("variant")) rc.arch.variant = variant_from_string(a.at("variant"));
        if (a.contains("embed_dim")) rc.arch.embed_dim = a.at("embed_dim").get<int>();
        if (a.contains("hidden_width")) rc.arch.hidden_width = a.at("hidden_width").get<int>();
        if (a.contains("hidden_layers")) rc.arch.hidden_layers = a.at("hidden_layers").get<int>();
        if (a.contains("mp_steps")) rc.arch.mp_steps = a.at("mp_steps").get<int>();
        if (a.contains("coupling_edge_feature"))
            rc.arch.coupling_edge_feature = a.at("coupling_edge_feature").get<bool>();
        if (a.contains("seed")) {
            rc.arch.seed = a.at("seed").get<std::uint64_t>();
            rc.arch_seed_given = true;
        }
    }
    if (j.contains("sampler")) {
        const json& s = j.at("sampler");
        reject_unknown_keys(s, {"n_chains", "thin_steps", "burn_in_sweeps", "seed"}, "sampler.");
        if (s.contains("n_chains")) rc.sampler.n_chains = s.at("n_chains").get<int>();
        if (s.contains("thin_steps")) rc.sampler.thin_steps = s.at("thin_steps").get<int>();
        if (s.contains("burn_in_sweeps"))
            rc.sampler.burn_in_sweeps = s.at("burn_in_sweeps").get<int>();
        if (s.contains("seed")) {
            rc.sampler.seed = s.at("seed").get<std::uint64_t>();
            rc.sampler_seed_given = true;
        }
    }
    if (j.contains("train")) {
        const json& t = j.at("train");
        reject_unknown_keys(t,
                            {"method", "time_step", "inner_steps", "lr0", "decay_rate",
                             "decay_horizon", "total_updates", "samples_per_update", "eval_every",
                             "test_mode", "oracle_metrics"},
                            "train.");
        if (t.contains("method")) rc.train.method = method_from_string(t.at("method"));
        if (t.contains("time_step")) rc.train.time_step = t.at("time_step").get<double>();
        if (t.contains("inner_steps")) rc.train.inner_steps = t.at("inner_steps").get<int>();
        if (t.contains("lr0")) rc.train.lr0 = t.at("lr0").get<double>();
        if (t.contains("decay_rate")) rc.train.decay_rate = t.at("decay_rate").get<double>();
        if (t.contains("decay_horizon"))
            rc.train.decay_horizon = t.at("decay_horizon").get<double>();
        if (t.contains("total_updates"))
            rc.train.total_updates = t.at("total_updates").get<std::int64_t>();
        if (t.contains("samples_per_update"))
            rc.train.samples_per_update = t.at("samples_per_update").get<int>();
        if (t.contains("eval_every")) rc.train.eval_every = t.at("eval_every").get<int>();
        if (t.contains("test_mode")) rc.train.test_mode = t.at("test_mode").get<bool>();
        if (t.contains("oracle_metrics"))
            rc.train.oracle_metrics = t.at("oracle_metrics").get<bool>();
    }
}

Cluster load_cluster(const std::string& name) {
    if (name.size() > 5 && name.substr(name.size() - 5) == ".json") {
        std::ifstream is(name);
        if (!is) throw IoError("cannot open cluster file: " + name);
        json j;
        try {
            j = json::parse(is);
        } catch (const json::exception& e) {
            throw ConfigError("cluster file is not valid JSON: " + std::string(e.what()));
        }
        reject_unknown_keys(j, {"kind", "a1", "a2", "b1", "b2", "basis", "expected_sites"},
                            "cluster.");
        ClusterSpec s;
        s.kind = lattice_kind_from_string(j.at("kind").get<std::string>());
        auto vec2 = [](const json& v) { return Vec2{v.at(0).get<double>(), v.at(1).get<double>()}; };
        s.a1 = vec2(j.at("a1"));
        s.a2 = vec2(j.at("a2"));
        s.b1 = vec2(j.at("b1"));
        s.b2 = vec2(j.at("b2"));
        if (j.contains("basis"))
            for (const json& b : j.at("basis")) s.basis.push_back(vec2(b));
        if (j.contains("expected_sites")) s.expected_sites = j.at("expected_sites").get<int>();
        return build_cluster(s);
    }
    return make_preset(name);
}

SublatticePattern resolve_pattern(const RunConfig& rc, const Cluster& cl) {
    const SublatticePattern regime = default_pattern(cl.spec.kind, rc.j2);
    if (rc.pattern == "auto") return regime;
    const SublatticePattern p = pattern_from_string(rc.pattern);
    if (p != regime)
        std::cerr << "warning: pattern " << rc.pattern << " differs from the regime default "
                  << gvmc::to_string(regime) << " for " << gvmc::to_string(cl.spec.kind)
                  << " at j2=" << rc.j2 << "\n";
    return p;
}

json resolved_config_json(const RunConfig& rc, SublatticePattern pattern) {
    return json{
        {"cluster", rc.cluster},
        {"j2", rc.j2},
        {"pattern", gvmc::to_string(pattern)},
        {"arch",
         {{"variant", gvmc::to_string(rc.arch.variant)},
          {"embed_dim", rc.arch.embed_dim},
          {"hidden_width", rc.arch.hidden_width},
          {"hidden_layers", rc.arch.hidden_layers},
          {"mp_steps", rc.arch.mp_steps},
          {"coupling_edge_feature", rc.arch.coupling_edge_feature},
          {"seed", rc.arch.seed}}},
        {"sampler",
         {{"n_chains", rc.sampler.n_chains},
          {"thin_steps", rc.sampler.thin_steps},
          {"burn_in_sweeps", rc.sampler.burn_in_sweeps},
          {"seed", rc.sampler.seed}}},
        {"train",
         {{"method", to_string(rc.train.method)},
          {"time_step", rc.train.time_step},
          {"inner_steps", rc.train.inner_steps},
          {"lr0", rc.train.lr0},
          {"decay_rate", rc.train.decay_rate},
          {"decay_horizon", rc.train.decay_horizon},
          {"total_updates", rc.train.total_updates},
          {"samples_per_update", rc.train.samples_per_update},
          {"eval_every", rc.train.eval_every},
          {"test_mode", rc.train.test_mode},
          {"oracle_metrics", rc.train.oracle_metrics}}},
        {"out", rc.out},
        {"seed", rc.seed},
    };
}

json metrics_row(const Metrics& m) {
    json row = {
        {"schema", kMetricsSchema},
        {"update", m.update},
        {"outer_iter", m.outer_iter},
        {"energy_mean", m.energy_mean},
        {"energy_stderr", m.energy_stderr},
        {"acceptance", m.acceptance},
        {"lr", m.lr},
    };
    if (m.overlap_exact) row["overlap_exact"] = *m.overlap_exact;
    if (m.symmetric_fraction) row["symmetric_fraction"] = *m.symmetric_fraction;
    return row;
}

// ---------------------------------------------------------------------------
// shared run machinery

struct RunOutput {
    fs::path dir;
    std::ofstream metrics;
};

void open_run_output(RunOutput& out, const fs::path& dir, const json& resolved,
                     bool append_metrics = false) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
    {
        std::ofstream os(dir / "resolved-config.json", std::ios::trunc);
        if (!os) throw IoError("output directory is not writable: " + dir.string());
        os << resolved.dump(2) << "\n";
        if (!os.flush()) throw IoError("cannot write " + (dir / "resolved-config.json").string());
    }
    out.dir = dir;
    out.metrics.open(dir / "metrics.jsonl", append_metrics ? std::ios::app : std::ios::trunc);
    if (!out.metrics) throw IoError("cannot write " + (dir / "metrics.jsonl").string());
}

struct TrainedRun {
    TrainResult result;
    std::optional<Metrics> last_metrics;
};

// Runs one training and writes metrics.jsonl plus rolling checkpoint.bin and
// checkpoint.meta.json into `out`. Throws Diverged after recording the
// rolled-back checkpoint.
TrainedRun run_training_to_dir(const RunConfig& rc, SublatticePattern pattern, RunOutput& out,
                               const TrainState* resume) {
    const Cluster cl = load_cluster(rc.cluster);
    const SublatticeEncoding enc = assign_sublattice(cl, pattern);
    const HeisenbergModel model{cl, rc.j2};
    const EvalContext ctx = make_context(cl, enc, rc.arch, rc.j2);
    ParameterSet params = init_params(rc.arch, enc.n_classes, cl.n_sites);

    std::optional<Sampler> sampler;
    if (!rc.train.test_mode) sampler.emplace(params, ctx, rc.sampler);

    TrainedRun run;
    TrainHooks hooks;
    hooks.on_metrics = [&](const Metrics& m) {
        out.metrics << metrics_row(m).dump() << "\n";
        out.metrics.flush();
        run.last_metrics = m;
        std::cout << "update " << m.update << "  E " << m.energy_mean;
        if (m.energy_stderr > 0.0) std::cout << " +- " << m.energy_stderr;
        if (m.overlap_exact) std::cout << "  overlap " << *m.overlap_exact;
        std::cout << "  lr " << m.lr << std::endl;
    };
    hooks.on_checkpoint = [&](const TrainState& s) {
        Checkpoint c;
        c.meta.arch = rc.arch;
        c.meta.cluster = rc.cluster;
        c.meta.kind = cl.spec.kind;
        c.meta.n_sites = cl.n_sites;
        c.meta.j2 = rc.j2;
        c.meta.pattern = pattern;
        c.meta.code_width = enc.n_classes;
        c.meta.step = s.update;
        if (run.last_metrics && run.last_metrics->update == s.update) {
            c.meta.final_energy = run.last_metrics->energy_mean;
            c.meta.final_energy_stderr = run.last_metrics->energy_stderr;
        }
        c.state = s;
        save_checkpoint((out.dir / "checkpoint.bin").string(), c);
        std::ofstream meta(out.dir / "checkpoint.meta.json", std::ios::trunc);
        meta << checkpoint_metadata(c) << "\n";
    };

    Sampler* sp = sampler ? &*sampler : nullptr;
    run.result = rc.train.method == TrainMethod::Itswo
                     ? run_itswo(model, ctx, params, sp, rc.train, hooks, resume)
                     : run_energy_gradient(model, ctx, params, sp, rc.train, hooks, resume);
    return run;
}

// ---------------------------------------------------------------------------
// checkpoint evaluation shared by eval and transfer

struct EvalReport {
    int n_sites = 0;
    std::size_t n_samples = 0;
    double energy = 0.0;
    double std_error = 0.0;
    double acceptance = 0.0;
    std::optional<double> exact_energy;      // oracle E0 for the whole cluster
    std::optional<double> overlap;
    std::optional<double> reference_per_site;  // literature value
};

EvalReport evaluate_checkpoint(const Checkpoint& ckpt, const Cluster& cl,
                               const SublatticeEncoding& enc, std::size_t n_samples,
                               int n_chains, std::uint64_t seed) {
    if (enc.n_classes != ckpt.meta.code_width)
        throw ConfigError("sublattice code width differs: checkpoint has " +
                          std::to_string(ckpt.meta.code_width) + ", cluster pattern needs " +
                          std::to_string(enc.n_classes));
    const EvalContext ctx = make_context(cl, enc, ckpt.meta.arch, ckpt.meta.j2);
    const ParameterSet& params = ckpt.state.params;
    const HeisenbergModel model{cl, ckpt.meta.j2};

    SamplerConfig scfg;
    scfg.n_chains = n_chains;
    scfg.seed = seed;
    Sampler sampler(params, ctx, scfg);
    sampler.burn_in();
    sampler.reset_diagnostics();
    const int rounds =
        static_cast<int>((n_samples + static_cast<std::size_t>(n_chains) - 1) / n_chains);
    SampleSet s = sampler.draw(rounds);
    NetWork work;
    const auto eloc =
        local_energies(params, ctx, model, s.configs.data(), s.amps.data(), s.size(), work);
    const EnergyEstimate est = energy(eloc, s.n_chains);

    EvalReport rep;
    rep.n_sites = cl.n_sites;
    rep.n_samples = s.size();
    rep.energy = est.mean.real();
    rep.std_error = est.std_error;
    rep.acceptance = sampler.diagnostics().acceptance_rate();

    if (cl.n_sites <= 16) {
        const SectorBasis basis(cl.n_sites);
        const SparseHamiltonian sparse = build_sparse(model, basis);
        const ExactState gs =
            basis.dimension() <= 3432 ? dense_ground_state(model, basis) : lanczos_ground_state(sparse);
        rep.exact_energy = gs.energy;

        std::vector<SpinConfiguration> configs;
        configs.reserve(basis.dimension());
        for (std::size_t k = 0; k < basis.dimension(); ++k)
            configs.push_back(basis.configuration(k));
        std::vector<AmplitudePair> amps(configs.size());
        evaluate_into(params, ctx, configs.data(), configs.size(), amps.data(), work);
        Eigen::VectorXd la(static_cast<Eigen::Index>(amps.size()));
        Eigen::VectorXd ph(static_cast<Eigen::Index>(amps.size()));
        for (std::size_t k = 0; k < amps.size(); ++k) {
            la[static_cast<Eigen::Index>(k)] = amps[k].logamp;
            ph[static_cast<Eigen::Index>(k)] = amps[k].phase;
        }
        rep.overlap = exact_overlap(gs, la, ph);
    } else if (auto ref = reference_energy(cl.spec.kind, ckpt.meta.j2, cl.n_sites)) {
        rep.reference_per_site = *ref;
    }
    return rep;
}

void print_report(const EvalReport& rep) {
    std::cout << "sites        " << rep.n_sites << "\n";
    std::cout << "samples      " << rep.n_samples << "\n";
    std::cout << "energy       " << rep.energy << " +- " << rep.std_error << "\n";
    std::cout << "energy/site  " << rep.energy / rep.n_sites << " +- "
              << rep.std_error / rep.n_sites << "\n";
    std::cout << "acceptance   " << rep.acceptance << "\n";
    if (rep.exact_energy) {
        std::cout << "exact E0     " << *rep.exact_energy << "\n";
        std::cout << "rel error    " << (rep.energy - *rep.exact_energy) / *rep.exact_energy
                  << "\n";
    }
    if (rep.overlap) std::cout << "overlap      " << *rep.overlap << "\n";
    if (rep.reference_per_site) {
        const double ref = *rep.reference_per_site * rep.n_sites;
        std::cout << "reference E0 " << ref << " (literature)\n";
        std::cout << "rel error    " << (rep.energy - ref) / ref << " (vs literature)\n";
    }
}

json report_json(const EvalReport& rep) {
    json j = {
        {"n_sites", rep.n_sites},       {"n_samples", rep.n_samples},
        {"energy", rep.energy},         {"energy_stderr", rep.std_error},
        {"energy_per_site", rep.energy / rep.n_sites},
        {"acceptance", rep.acceptance},
    };
    if (rep.exact_energy) {
        j["exact_energy"] = *rep.exact_energy;
        j["rel_error"] = (rep.energy - *rep.exact_energy) / *rep.exact_energy;
    }
    if (rep.overlap) j["overlap"] = *rep.overlap;
    if (rep.reference_per_site) j["reference_energy_per_site"] = *rep.reference_per_site;
    return j;
}

void maybe_write_json(const std::string& path, const json& j) {
    if (path.empty()) return;
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot write " + path);
    os << j.dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// subcommands

int cmd_train(const RunConfig& rc, const std::string& resume_path) {
    const Cluster cl = load_cluster(rc.cluster);
    const SublatticePattern pattern = resolve_pattern(rc, cl);

    std::optional<Checkpoint> resume;
    if (!resume_path.empty()) {
        resume = load_checkpoint(resume_path);
        if (resume->meta.arch != rc.arch)
            throw ConfigError("resume checkpoint was trained with a different architecture");
    }

    RunOutput out;
    // a resumed run appends, so the file carries the uninterrupted stream
    open_run_output(out, rc.out, resolved_config_json(rc, pattern), resume.has_value());
    const TrainedRun run =
        run_training_to_dir(rc, pattern, out, resume ? &resume->state : nullptr);
    std::cout << "done: " << run.result.updates << " updates, final energy "
              << run.result.final_energy << ", degenerate overlaps "
              << run.result.degenerate_events << "\n";
    return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& cluster_name,
             std::size_t n_samples, int n_chains, std::uint64_t seed,
             const std::string& json_out) {
    const Checkpoint ckpt = load_checkpoint(ckpt_path);
    const Cluster cl = load_cluster(cluster_name.empty() ? ckpt.meta.cluster : cluster_name);
    const SublatticeEncoding enc = assign_sublattice(cl, ckpt.meta.pattern);
    const EvalReport rep = evaluate_checkpoint(ckpt, cl, enc, n_samples, n_chains, seed);
    print_report(rep);
    maybe_write_json(json_out, report_json(rep));
    return 0;
}

int cmd_transfer(const std::string& ckpt_path, const std::string& cluster_name,
                 std::size_t n_samples, int n_chains, std::uint64_t seed,
                 const std::string& json_out) {
    const Checkpoint ckpt = load_checkpoint(ckpt_path);
    const Cluster target = load_cluster(cluster_name);
    if (target.spec.kind != ckpt.meta.kind)
        throw ConfigError("lattice kind mismatch: checkpoint is " +
                          gvmc::to_string(ckpt.meta.kind) + ", target is " +
                          gvmc::to_string(target.spec.kind));
    const SublatticeEncoding enc = assign_sublattice(target, ckpt.meta.pattern);
    const EvalReport rep = evaluate_checkpoint(ckpt, target, enc, n_samples, n_chains, seed);

    std::cout << "transfer " << ckpt.meta.cluster << " -> " << cluster_name << "\n";
    print_report(rep);
    json j = report_json(rep);
    if (ckpt.meta.final_energy && ckpt.meta.n_sites > 0) {
        const double source_per_site = *ckpt.meta.final_energy / ckpt.meta.n_sites;
        const double target_per_site = rep.energy / rep.n_sites;
        const double drift = std::abs(target_per_site / source_per_site - 1.0);
        std::cout << "source energy/site " << source_per_site << "\n";
        std::cout << "per-site drift     " << drift << "\n";
        j["source_energy_per_site"] = source_per_site;
        j["per_site_drift"] = drift;
    }
    maybe_write_json(json_out, j);
    return 0;
}

int cmd_ablate(RunConfig rc) {
    const Cluster cl = load_cluster(rc.cluster);
    if (cl.n_sites > 16)
        throw ConfigError("ablation needs the exact oracle; cluster must have at most 16 sites");
    const SublatticePattern pattern = resolve_pattern(rc, cl);
    if (pattern == SublatticePattern::None)
        throw ConfigError("ablation compares against sublattice codes; pattern resolves to none");
    rc.train.oracle_metrics = true;

    const fs::path base = rc.out;
    struct Arm {
        const char* name;
        SublatticePattern pattern;
    };
    std::optional<double> overlap_with, overlap_without;
    for (const Arm& arm : {Arm{"with-codes", pattern}, Arm{"without-codes", SublatticePattern::None}}) {
        RunConfig arm_rc = rc;
        arm_rc.out = (base / arm.name).string();
        RunOutput out;
        open_run_output(out, arm_rc.out, resolved_config_json(arm_rc, arm.pattern));
        std::cout << "== " << arm.name << " ==\n";
        const TrainedRun run = run_training_to_dir(arm_rc, arm.pattern, out, nullptr);
        if (run.last_metrics && run.last_metrics->overlap_exact) {
            (arm.pattern == SublatticePattern::None ? overlap_without : overlap_with) =
                *run.last_metrics->overlap_exact;
            std::cout << arm.name << " final overlap " << *run.last_metrics->overlap_exact;
            if (run.last_metrics->symmetric_fraction)
                std::cout << ", symmetric fraction " << *run.last_metrics->symmetric_fraction;
            std::cout << "\n";
        }
    }
    if (overlap_with && overlap_without)
        std::cout << "overlap advantage with codes: " << *overlap_with - *overlap_without << "\n";
    return 0;
}

int cmd_ed(const std::string& cluster_name, double j2, const std::string& dump_path,
           const std::string& json_out) {
    const Cluster cl = load_cluster(cluster_name);
    const HeisenbergModel model{cl, j2};
    const SectorBasis basis(cl.n_sites);
    // The iterative solver reaches the same 1e-10 agreement as the dense one
    // but stays fast and small for the big sectors, so prefer it early.
    EdOptions opt;
    opt.dense_cap = 3432;
    const ExactState gs = ground_state(model, basis, opt);
    std::cout << "cluster     " << cluster_name << "\n";
    std::cout << "sector dim  " << basis.dimension() << "\n";
    std::cout << "E0          " << gs.energy << "\n";
    std::cout << "E0/site     " << gs.energy / cl.n_sites << "\n";
    if (!dump_path.empty()) {
        std::ofstream os(dump_path, std::ios::trunc);
        if (!os) throw IoError("cannot write " + dump_path);
        os.precision(17);
        for (Eigen::Index i = 0; i < gs.vector.size(); ++i) os << gs.vector[i] << "\n";
    }
    maybe_write_json(json_out, json{{"cluster", cluster_name},
                                    {"j2", j2},
                                    {"dim", basis.dimension()},
                                    {"e0", gs.energy},
                                    {"e0_per_site", gs.energy / cl.n_sites}});
    return 0;
}

int cmd_export_csv(const std::string& metrics_path, const std::string& csv_path) {
    std::ifstream is(metrics_path);
    if (!is) throw IoError("cannot open " + metrics_path);
    std::ofstream os(csv_path, std::ios::trunc);
    if (!os) throw IoError("cannot write " + csv_path);

    const std::vector<std::string> columns = {
        "schema",     "update", "outer_iter",    "energy_mean",        "energy_stderr",
        "acceptance", "lr",     "overlap_exact", "symmetric_fraction",
    };
    for (std::size_t i = 0; i < columns.size(); ++i)
        os << columns[i] << (i + 1 < columns.size() ? "," : "\n");

    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        json row;
        try {
            row = json::parse(line);
        } catch (const json::exception& e) {
            throw IoError(metrics_path + ":" + std::to_string(line_no) +
                          " is not valid JSON: " + e.what());
        }
        for (std::size_t i = 0; i < columns.size(); ++i) {
            if (row.contains(columns[i])) os << row.at(columns[i]).dump();
            os << (i + 1 < columns.size() ? "," : "\n");
        }
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    if (const char* threads = std::getenv("GVMC_THREADS"))
        Eigen::setNbThreads(std::max(1, std::atoi(threads)));

    CLI::App app{"Variational Monte Carlo for J1-J2 Heisenberg clusters"};
    app.require_subcommand(1);

    RunConfig rc;
    std::string config_path, resume_path;

    // train
    CLI::App* train = app.add_subcommand("train", "optimize a wave-function");
    std::string t_variant;
    std::uint64_t t_arch_seed = 0, t_sampler_seed = 0;
    train->add_option("--config", config_path, "JSON run configuration");
    train->add_option("--cluster", rc.cluster, "lattice preset or cluster .json file");
    train->add_option("--j2", rc.j2, "next-nearest-neighbour coupling");
    train->add_option("--pattern", rc.pattern, "sublattice pattern (auto resolves by regime)");
    train->add_option("--out", rc.out, "output directory");
    train->add_option("--seed", rc.seed, "master seed (derives arch and sampler seeds)");
    train->add_option("--variant", t_variant, "ansatz variant: gnn, gnn2, resnet");
    auto* t_as = train->add_option("--arch-seed", t_arch_seed, "weight initialization seed");
    auto* t_ss = train->add_option("--sampler-seed", t_sampler_seed, "Markov-chain seed");
    train->add_option("--embed-dim", rc.arch.embed_dim, "embedding width");
    train->add_option("--hidden-width", rc.arch.hidden_width, "MLP hidden width");
    train->add_option("--hidden-layers", rc.arch.hidden_layers, "MLP hidden layers");
    train->add_option("--mp-steps", rc.arch.mp_steps, "message-passing steps");
    train->add_option("--n-chains", rc.sampler.n_chains, "Markov chains");
    std::string t_method;
    train->add_option("--method", t_method, "itswo or energy-gradient");
    train->add_option("--total-updates", rc.train.total_updates, "parameter updates");
    train->add_option("--eval-every", rc.train.eval_every, "updates between metric rows");
    train->add_option("--inner-steps", rc.train.inner_steps, "updates per frozen target");
    train->add_option("--time-step", rc.train.time_step, "imaginary-time step");
    train->add_option("--lr0", rc.train.lr0, "initial learning rate");
    train->add_option("--samples-per-update", rc.train.samples_per_update, "samples per update");
    CLI::Option* t_test = train->add_flag("--test-mode", "full-sector expectations, no MCMC");
    train->add_option("--resume", resume_path, "checkpoint to resume from");

    // eval / transfer
    std::string e_ckpt, e_cluster, e_json;
    std::size_t e_samples = 20000;
    int e_chains = 32;
    std::uint64_t e_seed = 1;
    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    eval->add_option("--checkpoint", e_ckpt, "checkpoint file")->required();
    eval->add_option("--cluster", e_cluster, "cluster (default: the training cluster)");
    eval->add_option("--n-samples", e_samples, "MCMC samples");
    eval->add_option("--n-chains", e_chains, "Markov chains");
    eval->add_option("--seed", e_seed, "sampler seed");
    eval->add_option("--json", e_json, "also write the report as JSON");

    CLI::App* transfer = app.add_subcommand("transfer", "evaluate on a larger cluster");
    transfer->add_option("--checkpoint", e_ckpt, "checkpoint file")->required();
    transfer->add_option("--cluster", e_cluster, "target cluster preset or file")->required();
    transfer->add_option("--n-samples", e_samples, "MCMC samples");
    transfer->add_option("--n-chains", e_chains, "Markov chains");
    transfer->add_option("--seed", e_seed, "sampler seed");
    transfer->add_option("--json", e_json, "also write the report as JSON");

    // ablate
    CLI::App* ablate = app.add_subcommand("ablate", "paired runs with and without codes");
    ablate->add_option("--config", config_path, "JSON run configuration");
    ablate->add_option("--cluster", rc.cluster, "lattice preset or cluster .json file");
    ablate->add_option("--j2", rc.j2, "next-nearest-neighbour coupling");
    ablate->add_option("--pattern", rc.pattern, "sublattice pattern for the with-codes arm");
    ablate->add_option("--out", rc.out, "output directory (two subdirectories)");
    ablate->add_option("--seed", rc.seed, "master seed shared by both arms");
    ablate->add_option("--total-updates", rc.train.total_updates, "parameter updates");
    ablate->add_option("--eval-every", rc.train.eval_every, "updates between metric rows");
    CLI::Option* a_test = ablate->add_flag("--test-mode", "full-sector expectations, no MCMC");

    // ed
    std::string d_cluster, d_dump, d_json;
    double d_j2 = 0.0;
    CLI::App* ed = app.add_subcommand("ed", "exact diagonalization oracle");
    ed->add_option("--cluster", d_cluster, "cluster preset or file")->required();
    ed->add_option("--j2", d_j2, "next-nearest-neighbour coupling");
    ed->add_option("--dump-vector", d_dump, "write the ground-state vector as text");
    ed->add_option("--json", d_json, "also write the report as JSON");

    // export-csv
    std::string x_metrics, x_csv;
    CLI::App* export_csv = app.add_subcommand("export-csv", "flatten metrics.jsonl to CSV");
    export_csv->add_option("--metrics", x_metrics, "metrics.jsonl path")->required();
    export_csv->add_option("--out", x_csv, "CSV output path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*train || *ablate) {
            // precedence: defaults, then the config file, then explicit flags;
            // reparsing the flags after the file load keeps that order
            if (!config_path.empty()) {
                std::ifstream is(config_path);
                if (!is) throw IoError("cannot open config: " + config_path);
                json j;
                try {
                    j = json::parse(is);
                } catch (const json::exception& e) {
                    throw ConfigError("config is not valid JSON: " + std::string(e.what()));
                }
                RunConfig file_rc;
                apply_config_json(j, file_rc);
                const RunConfig flag_rc = rc;
                CLI::App* active = *train ? train : ablate;
                rc = file_rc;
                // CLI11 already wrote flag values into the bound variables, so
                // flags that were actually given override the file values
                auto given = [&](const std::string& name) {
                    const CLI::Option* o = active->get_option_no_throw(name);
                    return o != nullptr && o->count() > 0;
                };
                if (given("--cluster")) rc.cluster = flag_rc.cluster;
                if (given("--j2")) rc.j2 = flag_rc.j2;
                if (given("--pattern")) rc.pattern = flag_rc.pattern;
                if (given("--out")) rc.out = flag_rc.out;
                if (given("--seed")) rc.seed = flag_rc.seed;
                if (given("--embed-dim")) rc.arch.embed_dim = flag_rc.arch.embed_dim;
                if (given("--hidden-width")) rc.arch.hidden_width = flag_rc.arch.hidden_width;
                if (given("--hidden-layers")) rc.arch.hidden_layers = flag_rc.arch.hidden_layers;
                if (given("--mp-steps")) rc.arch.mp_steps = flag_rc.arch.mp_steps;
                if (given("--n-chains")) rc.sampler.n_chains = flag_rc.sampler.n_chains;
                if (given("--total-updates")) rc.train.total_updates = flag_rc.train.total_updates;
                if (given("--eval-every")) rc.train.eval_every = flag_rc.train.eval_every;
                if (given("--inner-steps")) rc.train.inner_steps = flag_rc.train.inner_steps;
                if (given("--time-step")) rc.train.time_step = flag_rc.train.time_step;
                if (given("--lr0")) rc.train.lr0 = flag_rc.train.lr0;
                if (given("--samples-per-update"))
                    rc.train.samples_per_update = flag_rc.train.samples_per_update;
            }
            if (!t_variant.empty()) rc.arch.variant = variant_from_string(t_variant);
            if (!t_method.empty()) rc.train.method = method_from_string(t_method);
            if (*train && t_test->count() > 0) rc.train.test_mode = true;
            if (*ablate && a_test->count() > 0) rc.train.test_mode = true;
            if (t_as->count() > 0) {
                rc.arch.seed = t_arch_seed;
                rc.arch_seed_given = true;
            }
            if (t_ss->count() > 0) {
                rc.sampler.seed = t_sampler_seed;
                rc.sampler_seed_given = true;
            }
            // master seed derives the component seeds unless given explicitly
            if (!rc.arch_seed_given) rc.arch.seed = rc.seed;
            if (!rc.sampler_seed_given) rc.sampler.seed = rc.seed + 1;
            return *train ? cmd_train(rc, resume_path) : cmd_ablate(rc);
        }
        if (*eval) return cmd_eval(e_ckpt, e_cluster, e_samples, e_chains, e_seed, e_json);
        if (*transfer)
            return cmd_transfer(e_ckpt, e_cluster, e_samples, e_chains, e_seed, e_json);
        if (*ed) return cmd_ed(d_cluster, d_j2, d_dump, d_json);
        if (*export_csv) return cmd_export_csv(x_metrics, x_csv);
    } catch (const Diverged& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
