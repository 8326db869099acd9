#pragma once

#include <yaml-cpp/yaml.h>

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "critwave/evolution.hpp"
#include "critwave/experiments.hpp"
#include "critwave/spectral.hpp"

namespace critwave {

using ojson = nlohmann::ordered_json;
namespace fs = std::filesystem;

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kTrajectorySchema = "# critwave.trajectory v1";
inline constexpr const char* kQuadrantSchema = "# critwave.quadrant v1";
inline constexpr const char* kRefinementSchema = "# critwave.refinement v1";

class ConfigError : public InputError {
public:
    using InputError::InputError;
};

// missing or unreadable run artifacts
class CorruptRun : public Error {
public:
    CorruptRun(std::string kind, std::string file, std::size_t line, const std::string& msg)
        : Error(msg), kind(std::move(kind)), file(std::move(file)), line(line)
    {
    }
    std::string kind;
    std::string file;
    std::size_t line;

    ojson to_json() const
    {
        ojson j;
        j["schema_version"] = kSchemaVersion;
        j["status"] = "error";
        j["error"] = {{"kind", kind}, {"file", file}, {"line", line}, {"message", what()}};
        return j;
    }
};

// ------------------------------------------------------------ config

struct BumpConfig {
    double center = 2.0;
    double width = 1.0;
    double norm = 0.0;   // ||grad f|| for u, ||g|| for udot; 0 disables
};

struct SeedConfig {
    double a = 0.0;
    double b = 0.0;
    bool b_in_k_units = false;   // b given as a multiple of k
    double nu = 1.0;
    double amplitude_bound = NAN;
    BumpConfig f, g;
};

struct SweepSettings {
    double amplitude = 0.02;
    bool probes = true;
    double probe_ratio = 0.1;
    double bump_ratio = 0.05;
    int blowup_sign = 1;
    std::size_t random_seeds = 50;
    double random_a_min = 0.002;
    double random_a_max = 0.02;
};

struct IdentitySettings {
    double C1 = 13.0;
    double C2 = 24.0;
    double grad_cap = 1.1;   // rows with ||grad u|| above grad_cap ||grad W|| end the series
};

struct DistanceOverrides {
    std::optional<double> delta_E, C_E, delta_H, delta_M, delta_star, eps_star, eps_v_ratio;
};

struct RunConfig {
    int dimension = 3;
    std::size_t n = 2048;
    double r_max = 0.0;   // 0 selects the dimension default
    SpectralOptions spectral;
    std::vector<std::size_t> refinement{512, 1024, 2048, 4096};
    DistanceOverrides distance;
    EvolveConfig evolve;
    SeedConfig seed;
    SweepSettings sweep;
    IdentitySettings identity;
    std::string out = "run";
    std::uint64_t random_seed = 1;
    unsigned threads = 1;
    std::string source;   // config text, verbatim

    double grid_r_max() const { return r_max > 0.0 ? r_max : default_r_max(dimension); }

    DistanceParams distance_params(double grad_norm_W) const
    {
        DistanceParams p = DistanceParams::defaults(grad_norm_W);
        if (distance.delta_E) p.delta_E = *distance.delta_E;
        if (distance.C_E) p.C_E = *distance.C_E;
        if (distance.delta_H) p.delta_H = *distance.delta_H;
        if (distance.delta_M) p.delta_M = *distance.delta_M;
        if (distance.delta_star) p.delta_star = *distance.delta_star;
        if (distance.eps_star) p.eps_star = *distance.eps_star;
        if (distance.eps_v_ratio) p.eps_v_ratio = *distance.eps_v_ratio;
        p.validate(grad_norm_W);
        return p;
    }

    void validate() const
    {
        if (dimension != 3 && dimension != 5) throw ConfigError("config: dimension must be 3 or 5");
        if (n < 16) throw ConfigError("config: grid.n must be at least 16");
        if (r_max < 0.0 || !std::isfinite(r_max)) throw ConfigError("config: grid.r_max must be positive");
        for (std::size_t m : refinement)
            if (m < 16) throw ConfigError("config: spectral.refinement entries must be at least 16");
        if (spectral.max_iter < 1) throw ConfigError("config: spectral.max_iter must be positive");
        evolve.validate();
        if (!(seed.nu > 0.0)) throw ConfigError("config: seed.nu must be positive");
        if (!(sweep.amplitude > 0.0)) throw ConfigError("config: sweep.amplitude must be positive");
        if (sweep.blowup_sign != 1 && sweep.blowup_sign != -1) throw ConfigError("config: sweep.blowup_sign must be 1 or -1");
        if (!(sweep.random_a_min > 0.0 && sweep.random_a_min <= sweep.random_a_max))
            throw ConfigError("config: need 0 < sweep.random_a_min <= sweep.random_a_max");
        if (!(identity.C1 > 0.0 && identity.C2 > 0.0 && identity.grad_cap > 1.0))
            throw ConfigError("config: identity constants must be positive and grad_cap above 1");
        if (out.empty()) throw ConfigError("config: out must not be empty");
        // distance ladder is checked against ||grad W|| of the actual dimension
        distance_params(std::sqrt(ground_grad_sq_exact(dimension)));
    }
};

namespace detail {

inline void check_keys(const YAML::Node& node, const std::string& where, const std::set<std::string>& allowed)
{
    if (!node.IsMap()) throw ConfigError("config: " + where + " must be a map");
    for (const auto& kv : node) {
        const std::string key = kv.first.as<std::string>();
        if (!allowed.count(key)) throw ConfigError("config: unknown key '" + key + "' in " + where);
    }
}

template <class T>
void read(const YAML::Node& node, const char* key, T& out, const std::string& where)
{
    if (!node[key]) return;
    try {
        out = node[key].as<T>();
    } catch (const YAML::Exception&) {
        throw ConfigError("config: bad value for " + where + "." + key);
    }
}

inline void read_opt(const YAML::Node& node, const char* key, std::optional<double>& out, const std::string& where)
{
    if (!node[key]) return;
    double v = 0.0;
    read(node, key, v, where);
    out = v;
}

inline void read_bump(const YAML::Node& node, BumpConfig& b, const std::string& where)
{
    check_keys(node, where, {"center", "width", "norm"});
    read(node, "center", b.center, where);
    read(node, "width", b.width, where);
    read(node, "norm", b.norm, where);
    if (!(b.width > 0.0) || b.norm < 0.0) throw ConfigError("config: " + where + " needs width > 0 and norm >= 0");
}

}  // namespace detail

inline RunConfig parse_config(const std::string& text)
{
    RunConfig c;
    c.source = text;
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::Exception& e) {
        throw ConfigError(std::string("config: parse error: ") + e.what());
    }
    if (root.IsNull()) {
        c.validate();
        return c;
    }
    using detail::read;
    detail::check_keys(root, "top level",
                       {"dimension", "grid", "spectral", "distance", "evolve", "seed", "sweep", "identity", "out",
                        "random_seed", "threads"});
    read(root, "dimension", c.dimension, "top");
    read(root, "out", c.out, "top");
    read(root, "random_seed", c.random_seed, "top");
    read(root, "threads", c.threads, "top");
    if (auto g = root["grid"]) {
        detail::check_keys(g, "grid", {"n", "r_max"});
        read(g, "n", c.n, "grid");
        read(g, "r_max", c.r_max, "grid");
    }
    if (auto s = root["spectral"]) {
        detail::check_keys(s, "spectral", {"max_iter", "rayleigh_tol", "residual_tol", "refinement"});
        read(s, "max_iter", c.spectral.max_iter, "spectral");
        read(s, "rayleigh_tol", c.spectral.rayleigh_tol, "spectral");
        read(s, "residual_tol", c.spectral.residual_tol, "spectral");
        read(s, "refinement", c.refinement, "spectral");
    }
    if (auto d = root["distance"]) {
        detail::check_keys(d, "distance", {"delta_E", "C_E", "delta_H", "delta_M", "delta_star", "eps_star", "eps_v_ratio"});
        detail::read_opt(d, "delta_E", c.distance.delta_E, "distance");
        detail::read_opt(d, "C_E", c.distance.C_E, "distance");
        detail::read_opt(d, "delta_H", c.distance.delta_H, "distance");
        detail::read_opt(d, "delta_M", c.distance.delta_M, "distance");
        detail::read_opt(d, "delta_star", c.distance.delta_star, "distance");
        detail::read_opt(d, "eps_star", c.distance.eps_star, "distance");
        detail::read_opt(d, "eps_v_ratio", c.distance.eps_v_ratio, "distance");
    }
    if (auto e = root["evolve"]) {
        detail::check_keys(e, "evolve",
                           {"cfl", "T", "record_every", "blowup_factor", "blowup_scale_cells", "scatter_window",
                            "scatter_fraction", "virial_radius", "modulation"});
        read(e, "cfl", c.evolve.cfl, "evolve");
        read(e, "T", c.evolve.T, "evolve");
        read(e, "record_every", c.evolve.record_every, "evolve");
        read(e, "blowup_factor", c.evolve.blowup_factor, "evolve");
        read(e, "blowup_scale_cells", c.evolve.blowup_scale_cells, "evolve");
        read(e, "scatter_window", c.evolve.scatter_window, "evolve");
        read(e, "scatter_fraction", c.evolve.scatter_fraction, "evolve");
        read(e, "virial_radius", c.evolve.virial_radius, "evolve");
        read(e, "modulation", c.evolve.modulation, "evolve");
    }
    if (auto s = root["seed"]) {
        detail::check_keys(s, "seed", {"a", "b", "b_in_k_units", "nu", "amplitude_bound", "f", "g"});
        read(s, "a", c.seed.a, "seed");
        read(s, "b", c.seed.b, "seed");
        read(s, "b_in_k_units", c.seed.b_in_k_units, "seed");
        read(s, "nu", c.seed.nu, "seed");
        read(s, "amplitude_bound", c.seed.amplitude_bound, "seed");
        if (s["f"]) detail::read_bump(s["f"], c.seed.f, "seed.f");
        if (s["g"]) detail::read_bump(s["g"], c.seed.g, "seed.g");
    }
    if (auto s = root["sweep"]) {
        detail::check_keys(s, "sweep",
                           {"amplitude", "probes", "probe_ratio", "bump_ratio", "blowup_sign", "random_seeds",
                            "random_a_min", "random_a_max"});
        read(s, "amplitude", c.sweep.amplitude, "sweep");
        read(s, "probes", c.sweep.probes, "sweep");
        read(s, "probe_ratio", c.sweep.probe_ratio, "sweep");
        read(s, "bump_ratio", c.sweep.bump_ratio, "sweep");
        read(s, "blowup_sign", c.sweep.blowup_sign, "sweep");
        read(s, "random_seeds", c.sweep.random_seeds, "sweep");
        read(s, "random_a_min", c.sweep.random_a_min, "sweep");
        read(s, "random_a_max", c.sweep.random_a_max, "sweep");
    }
    if (auto s = root["identity"]) {
        detail::check_keys(s, "identity", {"C1", "C2", "grad_cap"});
        read(s, "C1", c.identity.C1, "identity");
        read(s, "C2", c.identity.C2, "identity");
        read(s, "grad_cap", c.identity.grad_cap, "identity");
    }
    c.validate();
    return c;
}

inline RunConfig load_config(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("config: cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

inline ojson json_number(double x)
{
    if (std::isfinite(x)) return x;
    return nullptr;
}

inline ojson distance_json(const DistanceParams& p)
{
    return {{"delta_E", p.delta_E}, {"C_E", p.C_E},           {"delta_H", p.delta_H},
            {"delta_M", p.delta_M}, {"delta_star", p.delta_star}, {"eps_star", p.eps_star},
            {"eps_v_ratio", p.eps_v_ratio}};
}

// resolved configuration, stable key order
inline ojson config_json(const RunConfig& c)
{
    ojson j;
    j["dimension"] = c.dimension;
    j["grid"] = {{"n", c.n}, {"r_max", c.grid_r_max()}};
    j["spectral"] = {{"max_iter", c.spectral.max_iter},
                     {"rayleigh_tol", c.spectral.rayleigh_tol},
                     {"residual_tol", c.spectral.residual_tol},
                     {"refinement", c.refinement}};
    j["distance"] = distance_json(c.distance_params(std::sqrt(ground_grad_sq_exact(c.dimension))));
    const EvolveConfig& e = c.evolve;
    j["evolve"] = {{"cfl", e.cfl},
                   {"T", e.T},
                   {"record_every", e.record_every},
                   {"blowup_factor", e.blowup_factor},
                   {"blowup_scale_cells", e.blowup_scale_cells},
                   {"scatter_window", e.scatter_window},
                   {"scatter_fraction", e.scatter_fraction},
                   {"virial_radius", e.virial_radius},
                   {"modulation", e.modulation}};
    auto bump_j = [](const BumpConfig& b) { return ojson{{"center", b.center}, {"width", b.width}, {"norm", b.norm}}; };
    j["seed"] = {{"a", c.seed.a},   {"b", c.seed.b},   {"b_in_k_units", c.seed.b_in_k_units},
                 {"nu", c.seed.nu}, {"amplitude_bound", json_number(c.seed.amplitude_bound)},
                 {"f", bump_j(c.seed.f)}, {"g", bump_j(c.seed.g)}};
    j["sweep"] = {{"amplitude", c.sweep.amplitude},       {"probes", c.sweep.probes},
                  {"probe_ratio", c.sweep.probe_ratio},   {"bump_ratio", c.sweep.bump_ratio},
                  {"blowup_sign", c.sweep.blowup_sign},   {"random_seeds", c.sweep.random_seeds},
                  {"random_a_min", c.sweep.random_a_min}, {"random_a_max", c.sweep.random_a_max}};
    j["identity"] = {{"C1", c.identity.C1}, {"C2", c.identity.C2}, {"grad_cap", c.identity.grad_cap}};
    j["random_seed"] = c.random_seed;
    j["threads"] = c.threads;
    return j;
}

// ------------------------------------------------------------- CSV

inline std::string fmt_double(double x)
{
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s, const std::string& file, std::size_t line)
{
    double x = 0.0;
    const char* b = s.data();
    const char* e = b + s.size();
    const auto res = std::from_chars(b, e, x);
    if (res.ec != std::errc() || res.ptr != e)
        throw CorruptRun("corrupt_csv", file, line, "unparsable number '" + s + "'");
    return x;
}

inline std::vector<std::string> split_csv(const std::string& line)
{
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

inline const std::vector<std::string>& trajectory_columns()
{
    static const std::vector<std::string> cols{"t",      "E",         "K",     "grad_norm", "udot_norm", "crit_norm",
                                               "d0",     "d_S",       "lambda", "mu_S",     "Sigma",     "side",
                                               "status", "E_ext_cone", "E_ext_w", "V",      "Y"};
    return cols;
}

inline void write_trajectory_csv(const fs::path& path, const std::vector<DiagnosticRow>& rows)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << kTrajectorySchema << '\n';
    const auto& cols = trajectory_columns();
    for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
    out << '\n';
    for (const auto& r : rows) {
        out << fmt_double(r.t) << ',' << fmt_double(r.E) << ',' << fmt_double(r.K) << ',' << fmt_double(r.grad_norm)
            << ',' << fmt_double(r.udot_norm) << ',' << fmt_double(r.crit_norm) << ',' << fmt_double(r.d0) << ','
            << fmt_double(r.d_S) << ',' << fmt_double(r.lambda) << ',' << fmt_double(r.mu_S) << ',' << r.Sigma << ','
            << r.side << ',' << (r.modulation_ok ? "ok" : "modulation undefined") << ',' << fmt_double(r.E_ext_cone)
            << ',' << fmt_double(r.E_ext_w) << ',' << fmt_double(r.V) << ',' << fmt_double(r.Y) << '\n';
    }
    if (!out) throw Error("write failed: " + path.string());
}

inline std::vector<DiagnosticRow> read_trajectory_csv(const fs::path& path)
{
    const std::string file = path.string();
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CorruptRun("missing_file", file, 0, "cannot open trajectory file");
    std::string line;
    if (!std::getline(in, line) || line != kTrajectorySchema)
        throw CorruptRun("schema_mismatch", file, 1, "expected schema line '" + std::string(kTrajectorySchema) + "'");
    const auto& cols = trajectory_columns();
    if (!std::getline(in, line) || split_csv(line) != cols)
        throw CorruptRun("header_mismatch", file, 2, "unexpected header row");
    std::vector<DiagnosticRow> rows;
    std::size_t ln = 2;
    auto to_int = [&](const std::string& s) {
        const double x = parse_double(s, file, ln);
        if (x != std::floor(x) || std::abs(x) > 1) throw CorruptRun("corrupt_csv", file, ln, "bad sign field '" + s + "'");
        return static_cast<int>(x);
    };
    while (std::getline(in, line)) {
        ++ln;
        if (line.empty()) continue;
        const auto f = split_csv(line);
        if (f.size() != cols.size())
            throw CorruptRun("corrupt_csv", file, ln,
                             "expected " + std::to_string(cols.size()) + " fields, got " + std::to_string(f.size()));
        DiagnosticRow r;
        r.t = parse_double(f[0], file, ln);
        r.E = parse_double(f[1], file, ln);
        r.K = parse_double(f[2], file, ln);
        r.grad_norm = parse_double(f[3], file, ln);
        r.udot_norm = parse_double(f[4], file, ln);
        r.crit_norm = parse_double(f[5], file, ln);
        r.d0 = parse_double(f[6], file, ln);
        r.d_S = parse_double(f[7], file, ln);
        r.lambda = parse_double(f[8], file, ln);
        r.mu_S = parse_double(f[9], file, ln);
        r.Sigma = to_int(f[10]);
        r.side = to_int(f[11]);
        if (f[12] == "ok") r.modulation_ok = true;
        else if (f[12] != "modulation undefined") throw CorruptRun("corrupt_csv", file, ln, "bad status '" + f[12] + "'");
        r.E_ext_cone = parse_double(f[13], file, ln);
        r.E_ext_w = parse_double(f[14], file, ln);
        r.V = parse_double(f[15], file, ln);
        r.Y = parse_double(f[16], file, ln);
        if (!rows.empty() && !(r.t > rows.back().t))
            throw CorruptRun("corrupt_csv", file, ln, "times not strictly increasing");
        rows.push_back(r);
    }
    if (rows.empty()) throw CorruptRun("corrupt_csv", file, ln, "no data rows");
    return rows;
}

class CsvTable {
public:
    CsvTable(const fs::path& path, const char* schema, const std::vector<std::string>& header)
        : out_(path, std::ios::binary), path_(path.string()), width_(header.size())
    {
        if (!out_) throw Error("cannot write " + path_);
        out_ << schema << '\n';
        row(header);
    }
    void row(const std::vector<std::string>& fields)
    {
        if (fields.size() != width_) throw Error("csv row width mismatch in " + path_);
        for (std::size_t i = 0; i < fields.size(); ++i) out_ << (i ? "," : "") << fields[i];
        out_ << '\n';
    }

private:
    std::ofstream out_;
    std::string path_;
    std::size_t width_;
};

inline void write_json(const fs::path& path, const ojson& j)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

inline ojson read_json(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CorruptRun("missing_file", path.string(), 0, "cannot open JSON file");
    try {
        return ojson::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw CorruptRun("corrupt_json", path.string(), 0, e.what());
    }
}

// ------------------------------------------------------------ summaries

inline ojson eigenpair_json(const Background& bg, const ojson& config)
{
    const Grid& g = *bg.grid();
    const Eigenpair& e = bg.mode.pair();
    ojson j;
    j["schema_version"] = kSchemaVersion;
    j["kind"] = "eigenpair";
    j["dimension"] = g.dim();
    j["grid"] = {{"n", g.size()}, {"r_max", g.r_max()}, {"h", g.h()}};
    j["k"] = e.k;
    j["k2"] = e.k2();
    j["residual"] = e.residual;
    j["negative_count"] = e.negative_count;
    j["iterations"] = e.iterations;
    j["rho_dot_LambdaW"] = inner(bg.mode.rho(), bg.ground.LambdaW);
    j["nondegeneracy"] = bg.mode.nondegeneracy();
    j["static_residual"] = static_residual(bg.ground);
    j["grad_sq_W"] = bg.ground.grad_sq;
    j["grad_sq_W_exact"] = ground_grad_sq_exact(g.dim());
    j["J_W"] = bg.J_W();
    j["r"] = g.nodes();
    j["rho"] = e.rho.vec();
    j["config"] = config;
    return j;
}

inline ojson record_json(const TrajectoryRecord& rec, bool forward)
{
    double drift = 0.0;
    for (const auto& r : rec.rows) drift = std::max(drift, std::abs(r.E - rec.E0));
    return {{"outcome", outcome_name(rec.outcome, forward)},
            {"outcome_time", json_number(rec.outcome_time)},
            {"cause", rec.cause},
            {"rows", rec.rows.size()},
            {"steps", rec.steps},
            {"dt", rec.dt},
            {"E0", rec.E0},
            {"energy_drift_rel", rec.E0 != 0.0 ? drift / std::abs(rec.E0) : drift},
            {"virial_radius", rec.virial_radius}};
}

inline ojson audit_json(const OnePassAudit& a)
{
    return {{"sign_changes", a.sign_changes},   {"tube_entries", a.tube_entries}, {"tube_exits", a.tube_exits},
            {"rows_with_sigma", a.rows_with_sigma}, {"change_times", a.change_times}, {"entry_times", a.entry_times},
            {"exit_times", a.exit_times},       {"pass", a.pass()}};
}

// ------------------------------------------------------------- audit

/*
 * Recomputes the one-pass audit and the virial / equipartition residual
 * bound from the CSVs listed in summary.json.  No simulation.
 */
inline ojson audit_run(const fs::path& dir)
{
    if (!fs::is_directory(dir)) throw CorruptRun("missing_run", dir.string(), 0, "run directory does not exist");
    const fs::path sp = dir / "summary.json";
    const ojson summary = read_json(sp);
    auto need = [&](const ojson& j, const char* key) -> const ojson& {
        if (!j.is_object() || !j.contains(key)) throw CorruptRun("corrupt_json", sp.string(), 0, std::string("missing key '") + key + "'");
        return j.at(key);
    };
    if (need(summary, "schema_version") != kSchemaVersion)
        throw CorruptRun("schema_mismatch", sp.string(), 0, "unsupported schema_version");
    double delta_star = 0.0, h = 0.0, gradW = 0.0, C1 = 0.0, C2 = 0.0, cap = 0.0;
    try {
        delta_star = need(need(summary, "distance"), "delta_star").get<double>();
        h = need(need(summary, "grid"), "h").get<double>();
        gradW = std::sqrt(need(summary, "grad_sq_W").get<double>());
        const ojson& id = need(summary, "identity");
        C1 = need(id, "C1").get<double>();
        C2 = need(id, "C2").get<double>();
        cap = need(id, "grad_cap").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw CorruptRun("corrupt_json", sp.string(), 0, e.what());
    }

    ojson out;
    out["schema_version"] = kSchemaVersion;
    out["kind"] = "audit";
    out["run"] = dir.string();
    ojson list = ojson::array();
    std::size_t one_pass_fail = 0, identity_fail = 0;
    for (const ojson& t : need(summary, "trajectories")) {
        const std::string id = need(t, "id").get<std::string>();
        std::vector<DiagnosticRow> fwd = read_trajectory_csv(dir / need(t, "forward").get<std::string>());
        std::vector<DiagnosticRow> bwd;
        if (t.contains("backward") && !t.at("backward").is_null())
            bwd = read_trajectory_csv(dir / t.at("backward").get<std::string>());
        TrajectoryRecord rf, rb;
        rf.rows = fwd;
        rb.rows = bwd;
        const OnePassAudit a = one_pass_audit(join_trajectory(rb, rf), delta_star);
        double worst = 0.0, worst_t = 0.0;
        for (const auto* rows : {&fwd, &bwd}) {
            if (rows->size() < 3) continue;
            const IdentityBound b = check_identity_bound(identity_residuals(*rows, cap * gradW), C1, C2, h);
            if (b.worst_ratio > worst) {
                worst = b.worst_ratio;
                worst_t = b.worst_t;
            }
        }
        ojson e;
        e["id"] = id;
        e["one_pass"] = audit_json(a);
        e["identity"] = {{"worst_ratio", worst}, {"worst_t", worst_t}, {"pass", worst <= 1.0}};
        if (!a.pass()) ++one_pass_fail;
        if (worst > 1.0) ++identity_fail;
        list.push_back(e);
    }
    out["trajectories"] = list;
    out["one_pass_failures"] = one_pass_fail;
    out["identity_failures"] = identity_fail;
    out["status"] = one_pass_fail == 0 && identity_fail == 0 ? "pass" : "fail";
    return out;
}

}  // namespace critwave
