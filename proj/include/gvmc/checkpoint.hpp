// Versioned checkpoint container: a JSON metadata header followed by named
// little-endian float64 arrays, carrying a full TrainState so interrupted
// runs resume mid-stream. Loading rebuilds the parameter layout from the
// recorded architecture, so a checkpoint can be evaluated on any cluster
// with the same code width.
#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gvmc/lattice.hpp"
#include "gvmc/optimizer.hpp"
#include "gvmc/params.hpp"

namespace gvmc {

struct CheckpointMeta {
    ArchConfig arch;
    std::string cluster;  // preset name or custom-file path
    LatticeKind kind = LatticeKind::Chain;
    int n_sites = 0;
    double j2 = 0.0;
    SublatticePattern pattern = SublatticePattern::None;
    int code_width = 0;
    std::int64_t step = 0;
    std::optional<double> final_energy;         // last training eval, if any
    std::optional<double> final_energy_stderr;
};

struct Checkpoint {
    CheckpointMeta meta;
    TrainState state;
};

namespace detail {

inline constexpr char kCheckpointMagic[4] = {'G', 'V', 'M', 'C'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline void write_bytes(std::ostream& os, const void* p, std::size_t n) {
    if (n == 0) return;
    os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

inline void write_u32(std::ostream& os, std::uint32_t v) { write_bytes(os, &v, 4); }
inline void write_u64(std::ostream& os, std::uint64_t v) { write_bytes(os, &v, 8); }

inline void write_array(std::ostream& os, const std::string& name, const double* data,
                        std::size_t count) {
    write_u64(os, name.size());
    write_bytes(os, name.data(), name.size());
    write_u64(os, count);
    write_bytes(os, data, count * sizeof(double));
}

inline void read_bytes(std::istream& is, void* p, std::size_t n, const std::string& what) {
    if (n == 0) return;
    is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is.gcount()) != n)
        throw IoError("checkpoint truncated while reading " + what);
}

inline std::uint32_t read_u32(std::istream& is, const std::string& what) {
    std::uint32_t v = 0;
    read_bytes(is, &v, 4, what);
    return v;
}

inline std::uint64_t read_u64(std::istream& is, const std::string& what) {
    std::uint64_t v = 0;
    read_bytes(is, &v, 8, what);
    return v;
}

inline std::vector<double> read_array(std::istream& is, const std::string& expected) {
    const std::uint64_t name_len = read_u64(is, "array name length");
    std::string name(name_len, '\0');
    read_bytes(is, name.data(), name_len, "array name");
    if (name != expected)
        throw IoError("checkpoint array order: expected " + expected + ", found " + name);
    const std::uint64_t count = read_u64(is, "array length of " + expected);
    std::vector<double> out(count);
    read_bytes(is, out.data(), count * sizeof(double), "array " + expected);
    return out;
}

inline nlohmann::json checkpoint_meta_json(const Checkpoint& c) {
    nlohmann::json arch = {
        {"variant", to_string(c.meta.arch.variant)},
        {"embed_dim", c.meta.arch.embed_dim},
        {"hidden_width", c.meta.arch.hidden_width},
        {"hidden_layers", c.meta.arch.hidden_layers},
        {"mp_steps", c.meta.arch.mp_steps},
        {"coupling_edge_feature", c.meta.arch.coupling_edge_feature},
        {"seed", c.meta.arch.seed},
    };
    nlohmann::json chains = nlohmann::json::array();
    for (const ChainState& ch : c.state.chains) {
        const auto& s = ch.rng.state();
        chains.push_back({{"rng", {s[0], s[1], s[2], s[3]}}, {"steps", ch.steps_taken}});
    }
    nlohmann::json j = {
        {"format", kCheckpointVersion},
        {"arch", arch},
        {"cluster", c.meta.cluster},
        {"kind", to_string(c.meta.kind)},
        {"n_sites", c.meta.n_sites},
        {"j2", c.meta.j2},
        {"pattern", to_string(c.meta.pattern)},
        {"code_width", c.meta.code_width},
        {"step", c.meta.step},
        {"adam",
         {{"step_count", c.state.adam.step_count},
          {"b1", c.state.adam.b1},
          {"b2", c.state.adam.b2},
          {"epsilon", c.state.adam.epsilon}}},
        {"chains", chains},
    };
    j["final_energy"] =
        c.meta.final_energy ? nlohmann::json(*c.meta.final_energy) : nlohmann::json();
    j["final_energy_stderr"] = c.meta.final_energy_stderr
                                   ? nlohmann::json(*c.meta.final_energy_stderr)
                                   : nlohmann::json();
    return j;
}

}  // namespace detail

// The metadata header exactly as the file stores it.
inline std::string checkpoint_metadata(const Checkpoint& c) {
    return detail::checkpoint_meta_json(c).dump(2);
}

inline void save_checkpoint(const std::string& path, const Checkpoint& c) {
    if (c.meta.step != c.state.update)
        throw ShapeMismatch("checkpoint metadata step disagrees with the training state");
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open checkpoint for writing: " + path);

    const std::string meta = checkpoint_metadata(c);
    detail::write_bytes(os, detail::kCheckpointMagic, 4);
    detail::write_u32(os, detail::kCheckpointVersion);
    detail::write_u64(os, meta.size());
    detail::write_bytes(os, meta.data(), meta.size());

    std::vector<double> spins;
    for (const ChainState& ch : c.state.chains)
        for (std::int8_t s : ch.config.spins) spins.push_back(static_cast<double>(s));

    detail::write_u64(os, 5);
    detail::write_array(os, "params", c.state.params.data(), c.state.params.total_count());
    detail::write_array(os, "frozen", c.state.frozen.data(), c.state.frozen.total_count());
    detail::write_array(os, "adam_m", c.state.adam.first_moment.data(),
                        static_cast<std::size_t>(c.state.adam.first_moment.size()));
    detail::write_array(os, "adam_v", c.state.adam.second_moment.data(),
                        static_cast<std::size_t>(c.state.adam.second_moment.size()));
    detail::write_array(os, "chain_spins", spins.data(), spins.size());
    if (!os) throw IoError("short write while saving checkpoint: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint: " + path);

    char magic[4];
    detail::read_bytes(is, magic, 4, "magic");
    if (std::memcmp(magic, detail::kCheckpointMagic, 4) != 0)
        throw IoError("not a checkpoint file: " + path);
    const std::uint32_t version = detail::read_u32(is, "version");
    if (version != detail::kCheckpointVersion)
        throw IoError("unsupported checkpoint version " + std::to_string(version));

    const std::uint64_t meta_len = detail::read_u64(is, "metadata length");
    std::string meta_text(meta_len, '\0');
    detail::read_bytes(is, meta_text.data(), meta_len, "metadata");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(meta_text);
    } catch (const nlohmann::json::exception& e) {
        throw IoError("checkpoint metadata is not valid JSON: " + std::string(e.what()));
    }

    Checkpoint c;
    try {
        const nlohmann::json& a = j.at("arch");
        c.meta.arch.variant = variant_from_string(a.at("variant").get<std::string>());
        c.meta.arch.embed_dim = a.at("embed_dim").get<int>();
        c.meta.arch.hidden_width = a.at("hidden_width").get<int>();
        c.meta.arch.hidden_layers = a.at("hidden_layers").get<int>();
        c.meta.arch.mp_steps = a.at("mp_steps").get<int>();
        c.meta.arch.coupling_edge_feature = a.at("coupling_edge_feature").get<bool>();
        c.meta.arch.seed = a.at("seed").get<std::uint64_t>();
        c.meta.cluster = j.at("cluster").get<std::string>();
        c.meta.kind = lattice_kind_from_string(j.at("kind").get<std::string>());
        c.meta.n_sites = j.at("n_sites").get<int>();
        c.meta.j2 = j.at("j2").get<double>();
        c.meta.pattern = pattern_from_string(j.at("pattern").get<std::string>());
        c.meta.code_width = j.at("code_width").get<int>();
        c.meta.step = j.at("step").get<std::int64_t>();
        if (!j.at("final_energy").is_null())
            c.meta.final_energy = j.at("final_energy").get<double>();
        if (!j.at("final_energy_stderr").is_null())
            c.meta.final_energy_stderr = j.at("final_energy_stderr").get<double>();
        c.state.adam.step_count = j.at("adam").at("step_count").get<std::int64_t>();
        c.state.adam.b1 = j.at("adam").at("b1").get<double>();
        c.state.adam.b2 = j.at("adam").at("b2").get<double>();
        c.state.adam.epsilon = j.at("adam").at("epsilon").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw IoError("checkpoint metadata is missing fields: " + std::string(e.what()));
    }
    c.state.update = c.meta.step;

    const std::uint64_t n_arrays = detail::read_u64(is, "array count");
    if (n_arrays != 5)
        throw IoError("checkpoint holds " + std::to_string(n_arrays) + " arrays, expected 5");
    const std::vector<double> params = detail::read_array(is, "params");
    const std::vector<double> frozen = detail::read_array(is, "frozen");
    const std::vector<double> adam_m = detail::read_array(is, "adam_m");
    const std::vector<double> adam_v = detail::read_array(is, "adam_v");
    const std::vector<double> spins = detail::read_array(is, "chain_spins");

    c.state.params = init_params(c.meta.arch, c.meta.code_width, c.meta.n_sites);
    if (params.size() != c.state.params.total_count() || frozen.size() != params.size())
        throw ShapeMismatch("checkpoint parameter arrays do not match the recorded architecture");
    std::memcpy(c.state.params.data(), params.data(), params.size() * sizeof(double));
    c.state.frozen = c.state.params;
    std::memcpy(c.state.frozen.data(), frozen.data(), frozen.size() * sizeof(double));

    if (adam_m.size() != adam_v.size() ||
        (!adam_m.empty() && adam_m.size() != params.size()))
        throw ShapeMismatch("checkpoint Adam moments do not match the parameter count");
    if (!adam_m.empty()) {
        c.state.adam.first_moment = Eigen::Map<const Eigen::VectorXd>(
            adam_m.data(), static_cast<Eigen::Index>(adam_m.size()));
        c.state.adam.second_moment = Eigen::Map<const Eigen::VectorXd>(
            adam_v.data(), static_cast<Eigen::Index>(adam_v.size()));
    }

    const nlohmann::json& chains = j.at("chains");
    if (spins.size() != chains.size() * static_cast<std::size_t>(c.meta.n_sites))
        throw ShapeMismatch("checkpoint chain spins do not match the chain list");
    c.state.chains.resize(chains.size());
    for (std::size_t ci = 0; ci < chains.size(); ++ci) {
        ChainState& ch = c.state.chains[ci];
        std::array<std::uint64_t, 4> s{};
        for (int k = 0; k < 4; ++k) s[k] = chains[ci].at("rng").at(k).get<std::uint64_t>();
        ch.rng.set_state(s);
        ch.steps_taken = chains[ci].at("steps").get<std::uint64_t>();
        ch.config.spins.resize(c.meta.n_sites);
        for (int i = 0; i < c.meta.n_sites; ++i) {
            const double v = spins[ci * c.meta.n_sites + i];
            if (v != 1.0 && v != -1.0) throw IoError("checkpoint chain spins must be +-1");
            ch.config.spins[i] = static_cast<std::int8_t>(v);
        }
    }
    return c;
}

}  // namespace gvmc
