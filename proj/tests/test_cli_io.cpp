#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>

#include "critwave/io.hpp"

using namespace critwave;

#ifndef CRITWAVE_CLI
#define CRITWAVE_CLI "critwave"
#endif
#ifndef CRITWAVE_CONFIGS
#define CRITWAVE_CONFIGS "configs"
#endif

namespace {

fs::path scratch_root() { return fs::temp_directory_path() / ("critwave_test_" + std::to_string(::getpid())); }

class ScratchCleanup : public ::testing::Environment {
public:
    void TearDown() override { fs::remove_all(scratch_root()); }
};

const auto* const kCleanup = ::testing::AddGlobalTestEnvironment(new ScratchCleanup);

fs::path scratch(const std::string& name)
{
    const fs::path p = scratch_root() / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void spit(const fs::path& p, const std::string& text)
{
    std::ofstream out(p, std::ios::binary);
    out << text;
}

struct RunResult {
    int code = -1;
    std::string out;
};

RunResult cli(const std::string& args, const fs::path& dir)
{
    const fs::path log = dir / "stdout.txt";
    const std::string cmd = std::string("\"") + CRITWAVE_CLI + "\" " + args + " > \"" + log.string() + "\" 2>&1";
    const int status = std::system(cmd.c_str());
    RunResult r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(log);
    return r;
}

DiagnosticRow sample_row(double t, std::mt19937_64& rng)
{
    std::normal_distribution<double> N(0.0, 1.0);
    DiagnosticRow r;
    r.t = t;
    r.E = N(rng);
    r.K = N(rng);
    r.grad_norm = std::abs(N(rng));
    r.udot_norm = std::abs(N(rng));
    r.crit_norm = std::abs(N(rng));
    r.d0 = std::abs(N(rng)) * 1e-3;
    r.d_S = std::abs(N(rng)) * 1e-5;
    r.lambda = 1.0 + 0.01 * N(rng);
    r.mu_S = 1e-7 * N(rng);
    r.Sigma = t < 1.0 ? 1 : -1;
    r.side = -1;
    r.modulation_ok = true;
    r.E_ext_cone = 1e-9 * std::abs(N(rng));
    r.E_ext_w = 1e-12 * std::abs(N(rng));
    r.V = N(rng);
    r.Y = N(rng);
    return r;
}

bool same(double a, double b) { return (std::isnan(a) && std::isnan(b)) || a == b; }

const char* kSmallSpectrum = R"(dimension: 3
grid:
  n: 256
  r_max: 32
spectral:
  refinement: [128, 256]
)";

}  // namespace

// ------------------------------------------------------------- config

TEST(Config, EmptyTextGivesValidDefaults)
{
    const RunConfig c = parse_config("");
    EXPECT_EQ(c.dimension, 3);
    EXPECT_EQ(c.n, 2048u);
    EXPECT_EQ(c.grid_r_max(), default_r_max(3));
    EXPECT_NO_THROW(c.validate());
}

TEST(Config, NestedSectionsAreRead)
{
    const RunConfig c = parse_config(R"(dimension: 5
grid:
  n: 512
  r_max: 40
evolve:
  cfl: 0.25
  T: 7
  modulation: false
seed:
  a: 0.01
  b: -0.5
  b_in_k_units: true
  f: {center: 1.5, width: 0.5, norm: 0.001}
distance:
  delta_M: 2.0e-3
identity:
  C1: 5
random_seed: 99
threads: 3
)");
    EXPECT_EQ(c.dimension, 5);
    EXPECT_EQ(c.n, 512u);
    EXPECT_EQ(c.r_max, 40.0);
    EXPECT_EQ(c.evolve.cfl, 0.25);
    EXPECT_EQ(c.evolve.T, 7.0);
    EXPECT_FALSE(c.evolve.modulation);
    EXPECT_TRUE(c.seed.b_in_k_units);
    EXPECT_EQ(c.seed.f.center, 1.5);
    EXPECT_EQ(c.seed.f.norm, 0.001);
    EXPECT_EQ(c.distance.delta_M.value(), 2e-3);
    EXPECT_FALSE(c.distance.delta_E.has_value());
    EXPECT_EQ(c.identity.C1, 5.0);
    EXPECT_EQ(c.random_seed, 99u);
    EXPECT_EQ(c.threads, 3u);
    EXPECT_EQ(c.distance_params(1.0).delta_M, 2e-3);
}

TEST(Config, RejectsInvalidInput)
{
    EXPECT_THROW(parse_config("grid:\n  n: 8\n"), ConfigError);
    EXPECT_THROW(parse_config("dimension: 4\n"), ConfigError);
    EXPECT_THROW(parse_config("bogus: 1\n"), ConfigError);
    EXPECT_THROW(parse_config("evolve:\n  dt: 0.1\n"), ConfigError);
    EXPECT_THROW(parse_config("evolve:\n  T: abc\n"), ConfigError);
    EXPECT_THROW(parse_config("grid: [1, 2]\n"), ConfigError);
    EXPECT_THROW(parse_config("grid: {n: 64\n"), ConfigError);
    EXPECT_THROW(parse_config("sweep:\n  blowup_sign: 0\n"), ConfigError);
    EXPECT_THROW(parse_config("seed:\n  f: {width: 0}\n"), ConfigError);
    EXPECT_THROW(parse_config("evolve:\n  cfl: 1.2\n"), InputError);
    EXPECT_THROW(parse_config("spectral:\n  refinement: [8, 64]\n"), ConfigError);
    EXPECT_THROW(load_config("/nonexistent/critwave.yaml"), ConfigError);
}

TEST(Config, ShippedConfigsParse)
{
    for (const auto& e : fs::directory_iterator(CRITWAVE_CONFIGS))
        if (e.path().extension() == ".yaml") {
            EXPECT_NO_THROW(load_config(e.path().string())) << e.path();
        }
}

TEST(Config, JsonKeyOrderIsStable)
{
    const ojson j = config_json(parse_config("threads: 2\ndimension: 3\n"));
    std::vector<std::string> keys;
    for (auto it = j.begin(); it != j.end(); ++it) keys.push_back(it.key());
    const std::vector<std::string> expect{"dimension", "grid",     "spectral",    "distance", "evolve",
                                          "seed",      "sweep",    "identity",    "random_seed", "threads"};
    EXPECT_EQ(keys, expect);
    EXPECT_TRUE(j["seed"]["amplitude_bound"].is_null());
    EXPECT_EQ(j.dump(), config_json(parse_config("dimension: 3\nthreads: 2\n")).dump());
}

// ---------------------------------------------------------------- CSV

TEST(Csv, DoublesRoundTripExactly)
{
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> U(-30.0, 30.0);
    for (int i = 0; i < 1000; ++i) {
        const double x = std::ldexp(U(rng), static_cast<int>(U(rng)));
        EXPECT_EQ(parse_double(fmt_double(x), "f", 1), x);
    }
    EXPECT_TRUE(std::isnan(parse_double(fmt_double(NAN), "f", 1)));
    EXPECT_EQ(parse_double(fmt_double(-INFINITY), "f", 1), -INFINITY);
    EXPECT_THROW(parse_double("1.5x", "f", 3), CorruptRun);
    EXPECT_THROW(parse_double("", "f", 3), CorruptRun);
}

TEST(Csv, SplitKeepsEmptyFields)
{
    EXPECT_EQ(split_csv("a,,b\r"), (std::vector<std::string>{"a", "", "b"}));
    EXPECT_EQ(split_csv(""), (std::vector<std::string>{""}));
}

TEST(Csv, TrajectoryRoundTrip)
{
    const fs::path dir = scratch("roundtrip");
    std::mt19937_64 rng(9);
    std::vector<DiagnosticRow> rows;
    for (int i = 0; i < 20; ++i) rows.push_back(sample_row(0.125 * i, rng));
    rows[3].d_S = NAN;
    rows[3].lambda = NAN;
    rows[3].mu_S = NAN;
    rows[3].Sigma = 0;
    rows[3].side = 0;
    rows[3].modulation_ok = false;
    write_trajectory_csv(dir / "t.csv", rows);

    const std::string text = slurp(dir / "t.csv");
    EXPECT_EQ(text.rfind(kTrajectorySchema, 0), 0u);
    const auto back = read_trajectory_csv(dir / "t.csv");
    ASSERT_EQ(back.size(), rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const DiagnosticRow &a = rows[i], &b = back[i];
        for (auto m : {&DiagnosticRow::t, &DiagnosticRow::E, &DiagnosticRow::K, &DiagnosticRow::grad_norm,
                       &DiagnosticRow::udot_norm, &DiagnosticRow::crit_norm, &DiagnosticRow::d0, &DiagnosticRow::d_S,
                       &DiagnosticRow::lambda, &DiagnosticRow::mu_S, &DiagnosticRow::E_ext_cone, &DiagnosticRow::E_ext_w,
                       &DiagnosticRow::V, &DiagnosticRow::Y})
            EXPECT_TRUE(same(a.*m, b.*m)) << i;
        EXPECT_EQ(a.Sigma, b.Sigma);
        EXPECT_EQ(a.side, b.side);
        EXPECT_EQ(a.modulation_ok, b.modulation_ok);
    }
    write_trajectory_csv(dir / "u.csv", back);
    EXPECT_EQ(slurp(dir / "u.csv"), text);
}

TEST(Csv, CorruptFilesGiveStructuredErrors)
{
    const fs::path dir = scratch("corrupt");
    std::mt19937_64 rng(2);
    std::vector<DiagnosticRow> rows;
    for (int i = 0; i < 4; ++i) rows.push_back(sample_row(i, rng));
    write_trajectory_csv(dir / "good.csv", rows);
    const std::string good = slurp(dir / "good.csv");
    const std::size_t l1 = good.find('\n'), l2 = good.find('\n', l1 + 1), l3 = good.find('\n', l2 + 1);
    const std::string schema = good.substr(0, l1 + 1), header = good.substr(l1 + 1, l2 - l1),
                      first = good.substr(l2 + 1, l3 - l2), rest = good.substr(l3 + 1);

    auto kind_of = [&](const std::string& text, std::size_t* line = nullptr) {
        spit(dir / "bad.csv", text);
        try {
            read_trajectory_csv(dir / "bad.csv");
        } catch (const CorruptRun& e) {
            if (line) *line = e.line;
            return e.kind;
        }
        return std::string("none");
    };
    std::size_t line = 0;
    EXPECT_EQ(kind_of("# other v9\n" + header + first + rest), "schema_mismatch");
    EXPECT_EQ(kind_of(schema + "t,E\n" + first + rest), "header_mismatch");
    EXPECT_EQ(kind_of(schema + header + "1,2,3\n" + rest, &line), "corrupt_csv");
    EXPECT_EQ(line, 3u);
    EXPECT_EQ(kind_of(schema + header + first + first), "corrupt_csv");   // time repeats
    std::string bad_num = first;
    bad_num.replace(0, bad_num.find(','), "zero");
    EXPECT_EQ(kind_of(schema + header + bad_num), "corrupt_csv");
    EXPECT_EQ(kind_of(schema + header), "corrupt_csv");
    std::string bad_status = first;
    bad_status.replace(bad_status.find(",ok,"), 4, ",maybe,");
    EXPECT_EQ(kind_of(schema + header + bad_status), "corrupt_csv");
    EXPECT_THROW(read_trajectory_csv(dir / "absent.csv"), CorruptRun);
    EXPECT_EQ(kind_of(good), "none");
}

TEST(Csv, TableRejectsWidthMismatch)
{
    const fs::path dir = scratch("table");
    {
        CsvTable t(dir / "x.csv", kQuadrantSchema, {"a", "b"});
        t.row({"1", "2"});
        EXPECT_THROW(t.row({"1"}), Error);
    }
    EXPECT_EQ(slurp(dir / "x.csv"), std::string(kQuadrantSchema) + "\na,b\n1,2\n");
}

// --------------------------------------------------------------- JSON

TEST(Json, CorruptRunPayload)
{
    const CorruptRun e("corrupt_csv", "x.csv", 7, "bad");
    const ojson j = e.to_json();
    EXPECT_EQ(j.begin().key(), "schema_version");
    EXPECT_EQ(j["schema_version"], kSchemaVersion);
    EXPECT_EQ(j["status"], "error");
    EXPECT_EQ(j["error"]["kind"], "corrupt_csv");
    EXPECT_EQ(j["error"]["line"], 7);
}

TEST(Json, ReadErrors)
{
    const fs::path dir = scratch("json");
    spit(dir / "bad.json", "{\"a\": ");
    try {
        read_json(dir / "bad.json");
        FAIL();
    } catch (const CorruptRun& e) {
        EXPECT_EQ(e.kind, "corrupt_json");
    }
    try {
        audit_run(dir / "nope");
        FAIL();
    } catch (const CorruptRun& e) {
        EXPECT_EQ(e.kind, "missing_run");
    }
    try {
        audit_run(dir);
        FAIL();
    } catch (const CorruptRun& e) {
        EXPECT_EQ(e.kind, "missing_file");
    }
    spit(dir / "summary.json", "{\"schema_version\": 99}");
    try {
        audit_run(dir);
        FAIL();
    } catch (const CorruptRun& e) {
        EXPECT_EQ(e.kind, "schema_mismatch");
    }
}

// ---------------------------------------------------------------- CLI

TEST(Cli, SpectrumIsByteIdenticalOnRerun)
{
    const fs::path dir = scratch("spectrum");
    spit(dir / "c.yaml", kSmallSpectrum);
    const auto r1 = cli("spectrum --config \"" + (dir / "c.yaml").string() + "\" --out \"" + (dir / "a").string() + "\"", dir);
    ASSERT_EQ(r1.code, 0) << r1.out;
    const auto r2 = cli("spectrum --config \"" + (dir / "c.yaml").string() + "\" --out \"" + (dir / "b").string() +
                            "\" --threads 4",
                        dir);
    ASSERT_EQ(r2.code, 0) << r2.out;
    const std::string a = slurp(dir / "a" / "eigenpair.json");
    EXPECT_FALSE(a.empty());
    const ojson j = ojson::parse(a);
    EXPECT_EQ(j.begin().key(), "schema_version");
    EXPECT_EQ(j["kind"], "eigenpair");
    EXPECT_EQ(j["negative_count"], 1);
    // threads only reaches the config echo
    ojson ja = j, jb = ojson::parse(slurp(dir / "b" / "eigenpair.json"));
    ja["config"].erase("threads");
    jb["config"].erase("threads");
    EXPECT_EQ(ja.dump(), jb.dump());
    EXPECT_EQ(slurp(dir / "a" / "refinement.csv"), slurp(dir / "b" / "refinement.csv"));
    const auto r3 = cli("spectrum --config \"" + (dir / "c.yaml").string() + "\" --out \"" + (dir / "a").string() + "\"", dir);
    ASSERT_EQ(r3.code, 0);
    EXPECT_EQ(slurp(dir / "a" / "eigenpair.json"), a);
}

TEST(Cli, InvalidConfigExitsWithCode2)
{
    const fs::path dir = scratch("badconfig");
    spit(dir / "c.yaml", "grid:\n  n: 8\n");
    const auto r = cli("spectrum --config \"" + (dir / "c.yaml").string() + "\" --out \"" + (dir / "o").string() + "\"", dir);
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.out.find("grid.n"), std::string::npos);
    EXPECT_NE(cli("", dir).code, 0);
    EXPECT_NE(cli("transmogrify", dir).code, 0);
}

TEST(Cli, EvolveThenAuditThenCorrupt)
{
    const fs::path dir = scratch("evolve");
    spit(dir / "c.yaml", "grid:\n  n: 512\nevolve:\n  T: 10\n  record_every: 4\nseed:\n  a: -0.01\n");
    const fs::path run = dir / "run";
    const auto r = cli("evolve --config \"" + (dir / "c.yaml").string() + "\" --out \"" + run.string() + "\"", dir);
    ASSERT_EQ(r.code, 0) << r.out;
    const ojson s = ojson::parse(slurp(run / "summary.json"));
    EXPECT_EQ(s["schema_version"], kSchemaVersion);
    EXPECT_EQ(s["kind"], "evolve");
    EXPECT_LT(s["seed"]["mu_plus"].get<double>(), 0.0);

    const auto a = cli("audit \"" + run.string() + "\"", dir);
    EXPECT_EQ(a.code, 0) << a.out;
    const ojson aj = ojson::parse(slurp(run / "audit.json"));
    EXPECT_EQ(aj["status"], "pass");
    EXPECT_EQ(aj["trajectories"].size(), 1u);

    std::string csv = slurp(run / "trajectory.csv");
    csv.insert(csv.rfind('\n', csv.size() - 2) + 1, "1,2,oops\n");
    spit(run / "trajectory.csv", csv);
    const auto c = cli("audit \"" + run.string() + "\"", dir);
    EXPECT_EQ(c.code, 2);
    const ojson err = ojson::parse(c.out);
    EXPECT_EQ(err["status"], "error");
    EXPECT_EQ(err["error"]["kind"], "corrupt_csv");
    EXPECT_GT(err["error"]["line"].get<std::size_t>(), 2u);

    const auto m = cli("audit \"" + (dir / "missing").string() + "\"", dir);
    EXPECT_EQ(m.code, 2);
    EXPECT_EQ(ojson::parse(m.out)["error"]["kind"], "missing_run");
}

TEST(Cli, SmallSweepAudits)
{
    const fs::path dir = scratch("sweep");
    const fs::path run = dir / "run";
    const auto r = cli("sweep --config \"" + std::string(CRITWAVE_CONFIGS) + "/sweep_small.yaml\" --out \"" + run.string() +
                           "\" --threads 4 --seed 3",
                       dir);
    ASSERT_EQ(r.code, 0) << r.out;
    const ojson s = ojson::parse(slurp(run / "summary.json"));
    EXPECT_EQ(s["quadrant"]["distinct_pairs"], 4);
    EXPECT_TRUE(s["quadrant"]["all_consistent"].get<bool>());
    EXPECT_EQ(s["trajectories"].size(), 8u);
    const std::string matrix = slurp(run / "quadrant_matrix.csv");
    EXPECT_EQ(matrix.rfind(kQuadrantSchema, 0), 0u);
    const auto a = cli("audit \"" + run.string() + "\"", dir);
    EXPECT_EQ(a.code, 0) << a.out;
}
