#include "esci/cli.hpp"

#include "esci/errors.hpp"
#include "esci/scenario.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <optional>
#include <sstream>

namespace esci::cli {

namespace fs = std::filesystem;
using nlohmann::json;

std::string format_double(double v)
{
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

std::string sha256_hex(std::string_view data)
{
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw Error("sha256: digest failed");
    }
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 0xf];
    }
    return out;
}

namespace {

std::string read_file(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot read " + path.string());
    }
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

}  // namespace

std::string sha256_file(const fs::path& path) { return sha256_hex(read_file(path)); }

fs::path default_output_dir(std::string_view command)
{
    const char* env = std::getenv("ESCI_OUTPUT_DIR");
    const fs::path base = env && *env ? fs::path(env) : fs::path("out");
    return base / std::string(command);
}

DemoInputs default_demo_inputs()
{
    auto m2 = [](double a, double b, double c) {
        Matrix m(2, 2);
        m << a, b, b, c;
        return SpdMatrix::psd(m);
    };
    DemoInputs in;
    in.p1 = {m2(1, -2, 5), m2(9, -1, 1)};
    in.p_ind = {m2(2, 0, 9), m2(9, 3, 2)};
    in.q = m2(2, 2, 2);
    return in;
}

namespace {

Matrix matrix_from_json(const json& j, const std::string& field)
{
    if (!j.is_array() || j.empty() || !j[0].is_array()) {
        throw ConfigError(field + ": expected a matrix (array of rows)");
    }
    const std::size_t rows = j.size();
    const std::size_t cols = j[0].size();
    Matrix m(static_cast<Index>(rows), static_cast<Index>(cols));
    for (std::size_t r = 0; r < rows; ++r) {
        if (!j[r].is_array() || j[r].size() != cols) {
            throw ConfigError(field + ": rows have different lengths");
        }
        for (std::size_t c = 0; c < cols; ++c) {
            if (!j[r][c].is_number()) {
                throw ConfigError(field + "[" + std::to_string(r) + "][" + std::to_string(c) + "]: expected a number");
            }
            m(Index(r), Index(c)) = j[r][c].get<double>();
        }
    }
    return m;
}

SpdMatrix psd_field(const json& j, const std::string& field)
{
    try {
        return SpdMatrix::psd(matrix_from_json(j, field));
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(field + ": " + e.what());
    }
}

json matrix_to_json(const Matrix& m)
{
    json rows = json::array();
    for (Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Index c = 0; c < m.cols(); ++c) {
            row.push_back(m(r, c));
        }
        rows.push_back(row);
    }
    return rows;
}

std::string demo_canonical(const DemoInputs& in, int grid)
{
    json j;
    j["p1"] = json::array();
    j["p_ind"] = json::array();
    for (std::size_t i = 0; i < in.p1.size(); ++i) {
        j["p1"].push_back(matrix_to_json(in.p1[i].matrix()));
        j["p_ind"].push_back(matrix_to_json(in.p_ind[i].matrix()));
    }
    j["q"] = matrix_to_json(in.q.matrix());
    j["omega_grid"] = grid;
    return j.dump(2);
}

}  // namespace

DemoInputs parse_demo_inputs(std::string_view json_text)
{
    json root;
    try {
        root = json::parse(json_text.begin(), json_text.end());
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("demo config: syntax error: ") + e.what());
    }
    if (!root.is_object()) {
        throw ConfigError("demo config: top level must be an object");
    }
    for (const auto& [key, value] : root.items()) {
        if (key != "p1" && key != "p_ind" && key != "q") {
            throw ConfigError(key + ": unknown key");
        }
    }
    DemoInputs in = default_demo_inputs();
    for (const char* key : {"p1", "p_ind"}) {
        if (!root.contains(key)) {
            continue;
        }
        const json& list = root[key];
        if (!list.is_array() || list.size() != 2) {
            throw ConfigError(std::string(key) + ": expected two matrices");
        }
        auto& target = std::string(key) == "p1" ? in.p1 : in.p_ind;
        for (std::size_t i = 0; i < 2; ++i) {
            target[i] = psd_field(list[i], std::string(key) + "[" + std::to_string(i) + "]");
        }
    }
    if (root.contains("q")) {
        in.q = psd_field(root["q"], "q");
    }
    const Index d = in.q.dim();
    for (std::size_t i = 0; i < 2; ++i) {
        if (in.p1[i].dim() != d || in.p_ind[i].dim() != d) {
            throw ConfigError("demo config: every matrix must be " + std::to_string(d) + "x" + std::to_string(d));
        }
    }
    return in;
}

DemoProblems demo_problems(const DemoInputs& in)
{
    const Index d = in.q.dim();
    const Vector zero = Vector::Zero(d);
    CiProblem ci;
    SciProblem sci;
    EsciCommonNoiseProblem esci;
    esci.q = in.q;
    for (std::size_t i = 0; i < in.p1.size(); ++i) {
        const Matrix& p1 = in.p1[i].matrix();
        const Matrix& pind = in.p_ind[i].matrix();
        ci.estimates.push_back({zero, SpdMatrix::spd(p1 + pind + in.q.matrix())});
        sci.estimates.push_back({zero, SpdMatrix::psd(p1 + in.q.matrix()), in.p_ind[i]});
        esci.estimates.push_back({zero, in.p1[i], in.p_ind[i], Matrix(Matrix::Identity(d, d))});
    }
    return {ci, sci, esci};
}

std::vector<DemoRow> demo_rows(const DemoInputs& inputs, int grid, const OmegaConfig& config)
{
    if (grid < 2) {
        throw ConfigError("--omega-grid: at least 2 grid points are required");
    }
    const DemoProblems problems = demo_problems(inputs);
    const std::pair<const char*, const FusionProblem*> methods[] = {
        {"CI", &problems.ci}, {"SCI", &problems.sci}, {"ESCI", &problems.esci}};
    std::vector<DemoRow> rows;
    for (const auto& [name, problem] : methods) {
        for (int k = 0; k < grid; ++k) {
            const double w = double(k) / double(grid - 1);
            const std::vector<double> omega{w, 1.0 - w};
            const FusionOutput f = fuse(*problem, omega);
            rows.push_back({name, "grid", omega, f.bound.matrix(), f.bound.trace()});
        }
        const OmegaResult best = optimize_omega(*problem, config);
        const FusionOutput f = fuse(*problem, best.omega);
        rows.push_back({name, "optimal", best.omega, f.bound.matrix(), f.bound.trace()});
    }
    return rows;
}

namespace {

struct Failure {
    json detail;
};

/// Output directory with provenance: every written file is checksummed into
/// manifest.json, which also pins the config hash.
class OutputDir {
public:
    OutputDir(fs::path dir, std::string config_hash, bool force)
        : dir_(std::move(dir)), hash_(std::move(config_hash))
    {
        std::error_code ec;
        fs::create_directories(dir_, ec);
        if (ec) {
            throw IoError("cannot create output directory " + dir_.string() + ": " + ec.message());
        }
        const fs::path manifest = dir_ / "manifest.json";
        if (fs::exists(manifest) && !force) {
            std::string previous;
            try {
                previous = json::parse(read_file(manifest)).value("config_hash", "");
            } catch (const json::exception&) {
                previous = "";
            }
            if (previous != hash_) {
                throw IoError(dir_.string() + " holds outputs of a different configuration; use --force to overwrite");
            }
        }
        fs::remove(dir_ / "failures.json", ec);
    }

    void write(const std::string& name, const std::string& content)
    {
        const fs::path path = dir_ / name;
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw IoError("cannot write " + path.string());
        }
        out << content;
        out.close();
        if (!out) {
            throw IoError("error while writing " + path.string());
        }
        artifacts_[name] = sha256_hex(content);
    }

    /// Writes failures.json when there are failures, then manifest.json.
    void finish(const std::string& command, const std::optional<std::string>& config_path, std::uint64_t seed,
                const std::vector<Failure>& failures)
    {
        if (!failures.empty()) {
            json list = json::array();
            for (const auto& f : failures) {
                list.push_back(f.detail);
            }
            write("failures.json", json{{"failures", list}}.dump(2) + "\n");
        }
        json m;
        m["command"] = command;
        m["config_path"] = config_path ? json(*config_path) : json(nullptr);
        m["seed"] = seed;
        m["output_dir"] = dir_.string();
        m["config_hash"] = hash_;
        m["artifacts"] = artifacts_;
        const fs::path path = dir_ / "manifest.json";
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out << m.dump(2) << "\n";
        if (!out) {
            throw IoError("cannot write " + path.string());
        }
    }

    const fs::path& path() const { return dir_; }

private:
    fs::path dir_;
    std::string hash_;
    std::map<std::string, std::string> artifacts_;
};

std::string csv_row(std::initializer_list<std::string> fields)
{
    std::string line;
    bool first = true;
    for (const auto& f : fields) {
        if (!first) {
            line += ',';
        }
        first = false;
        if (f.find_first_of(",\"\r\n") != std::string::npos) {
            line += '"';
            for (char c : f) {
                line += c;
                if (c == '"') {
                    line += '"';
                }
            }
            line += '"';
        } else {
            line += f;
        }
    }
    line += "\r\n";
    return line;
}

std::string fmt(double v) { return format_double(v); }
std::string fmt(std::size_t v) { return std::to_string(v); }

constexpr int kEllipsePoints = 72;

void ellipse_rows(std::string& csv, const std::string& method, const std::string& kind, std::size_t index,
                  const Matrix& cov)
{
    const Matrix l = Eigen::LLT<Matrix>(cov).matrixL();
    for (int p = 0; p <= kEllipsePoints; ++p) {
        const double t = 2.0 * std::numbers::pi * double(p) / kEllipsePoints;
        Vector u(2);
        u << std::cos(t), std::sin(t);
        const Vector x = l * u;
        csv += csv_row({method, kind, fmt(index), std::to_string(p), fmt(x(0)), fmt(x(1))});
    }
}

struct Common {
    std::string out;
    bool force = false;
};

fs::path out_dir(const Common& c, std::string_view command)
{
    return c.out.empty() ? default_output_dir(command) : fs::path(c.out);
}

int cmd_fusion_demo(const Common& common, int grid, const std::string& config_path, std::ostream& out)
{
    const DemoInputs inputs =
        config_path.empty() ? default_demo_inputs() : parse_demo_inputs(read_file(config_path));
    if (inputs.q.dim() != 2) {
        // Ellipses are drawn in the plane.
        throw ConfigError("fusion-demo: matrices must be 2x2");
    }
    const auto rows = demo_rows(inputs, grid);
    OutputDir dir(out_dir(common, "fusion-demo"), sha256_hex(demo_canonical(inputs, grid)), common.force);

    std::string bounds = csv_row({"method", "kind", "index", "omega_1", "omega_2", "b11", "b12", "b22", "trace"});
    std::string ellipses = csv_row({"method", "kind", "index", "point", "x", "y"});
    for (std::size_t i = 0; i < 2; ++i) {
        const Matrix full = inputs.p1[i].matrix() + inputs.p_ind[i].matrix() + inputs.q.matrix();
        ellipse_rows(ellipses, "input", "estimate", i + 1, full);
    }
    std::map<std::string, std::size_t> counters;
    std::map<std::string, const DemoRow*> optimal;
    for (const auto& r : rows) {
        const std::size_t index = counters[r.method]++;
        bounds += csv_row({r.method, r.kind, fmt(index), fmt(r.omega[0]), fmt(r.omega[1]), fmt(r.bound(0, 0)),
                           fmt(r.bound(0, 1)), fmt(r.bound(1, 1)), fmt(r.trace)});
        ellipse_rows(ellipses, r.method, r.kind, index, r.bound);
        if (r.kind == "optimal") {
            optimal[r.method] = &r;
        }
    }

    const double t_ci = optimal["CI"]->trace;
    const double t_sci = optimal["SCI"]->trace;
    const double t_esci = optimal["ESCI"]->trace;
    std::vector<Failure> failures;
    if (!(t_esci <= t_sci && t_sci <= t_ci)) {
        failures.push_back({{{"check", "trace_ordering"}, {"ci", t_ci}, {"sci", t_sci}, {"esci", t_esci}}});
    }

    std::ostringstream summary;
    summary << "trace-optimal bounds\n";
    for (const char* m : {"CI", "SCI", "ESCI"}) {
        const DemoRow& r = *optimal[m];
        summary << "  " << m << ": trace " << fmt(r.trace) << " at omega (" << fmt(r.omega[0]) << ", "
                << fmt(r.omega[1]) << ")\n";
    }
    summary << "ordering trace(ESCI) <= trace(SCI) <= trace(CI): " << (failures.empty() ? "holds" : "VIOLATED")
            << "\n";
    summary << "gap SCI-ESCI: " << fmt(100.0 * (t_sci - t_esci) / t_ci) << " % of trace(CI)\n";
    summary << "gap CI-SCI: " << fmt(100.0 * (t_ci - t_sci) / t_ci) << " % of trace(CI)\n";

    dir.write("bounds.csv", bounds);
    dir.write("ellipses.csv", ellipses);
    dir.write("summary.txt", summary.str());
    dir.finish("fusion-demo", config_path.empty() ? std::nullopt : std::optional<std::string>(config_path), 0,
               failures);
    out << summary.str() << "outputs in " << dir.path().string() << "\n";
    return failures.empty() ? kExitOk : kExitAssertion;
}

SarConfig load_or_default(const std::string& path)
{
    return path.empty() ? default_sar_config() : load_sar_config(path);
}

int cmd_simulate(const Common& common, const std::string& config_path, std::optional<std::size_t> runs,
                 std::ostream& out)
{
    SarConfig cfg = load_or_default(config_path);
    if (runs) {
        cfg.runs = *runs;
    }
    validate(cfg);
    const SarModel model = build_sar_agents(cfg);
    OutputDir dir(out_dir(common, "simulate"), sha256_hex("simulate\n" + canonical_json(cfg)), common.force);

    std::string csv = csv_row({"run", "iter", "agent", "component", "mean", "bound_diag", "truth"});
    std::vector<std::vector<std::vector<double>>> schedule;
    for (std::size_t r = 0; r < cfg.runs; ++r) {
        const Trajectory t = simulate_run(cfg, model, r, r == 0 || cfg.centralized() ? nullptr : &schedule);
        if (r == 0) {
            for (const auto& log : t.logs) {
                schedule.push_back(log.omegas);
            }
        }
        for (std::size_t k = 0; k < cfg.horizon; ++k) {
            for (std::size_t a = 0; a < t.states[k].size(); ++a) {
                const AgentState& s = t.states[k][a];
                for (Index c = 0; c < s.mean.size(); ++c) {
                    csv += csv_row({fmt(r), fmt(k + 1), fmt(a), std::to_string(c), fmt(s.mean(c)),
                                    fmt(s.bound.matrix()(c, c)), fmt(t.truth[k + 1](c))});
                }
            }
        }
    }
    dir.write("states.csv", csv);
    dir.finish("simulate", config_path.empty() ? std::nullopt : std::optional<std::string>(config_path), cfg.seed,
               {});
    out << "simulated " << cfg.runs << " run(s) of " << cfg.horizon << " rounds (" << to_string(cfg.level) << ", "
        << method_name(cfg) << "); outputs in " << dir.path().string() << "\n";
    return kExitOk;
}

int cmd_montecarlo(const Common& common, const std::string& config_path, std::optional<std::size_t> runs,
                   unsigned threads, const std::string& compare, std::ostream& out)
{
    SarConfig cfg = load_or_default(config_path);
    if (runs) {
        cfg.runs = *runs;
    }
    validate(cfg);
    std::optional<SarConfig> ref;
    if (!compare.empty()) {
        if (compare == "CENTRALIZED") {
            throw ConfigError("--compare: the reference must be a distributed method");
        }
        ref = cfg;
        ref->method = parse_method(compare);
        validate(*ref);
        check_comparable(*ref, cfg);
    }
    const std::string hash = sha256_hex("montecarlo\n" + canonical_json(cfg) + "\ncompare " + compare);
    OutputDir dir(out_dir(common, "montecarlo"), hash, common.force);

    McResult mc = monte_carlo(cfg, threads);
    mc.config_hash = hash;

    std::vector<Failure> failures;
    std::string curves = csv_row({"agent", "iter", "component", "bound", "mse", "mc_stderr"});
    for (std::size_t a = 0; a < mc.n_agents; ++a) {
        for (std::size_t k = 0; k < mc.horizon; ++k) {
            for (std::size_t c = 0; c < mc.dim; ++c) {
                const std::size_t i = mc.index(a, k, c);
                curves += csv_row({fmt(a), fmt(k + 1), fmt(c), fmt(mc.bound[i]), fmt(mc.mse[i]), fmt(mc.mse_stderr[i])});
                if (mc.mse[i] > mc.bound[i] + 3.0 * mc.mse_stderr[i]) {
                    failures.push_back({{{"check", "mse_within_bound"},
                                         {"agent", a},
                                         {"iter", k + 1},
                                         {"component", c},
                                         {"bound", mc.bound[i]},
                                         {"mse", mc.mse[i]},
                                         {"mc_stderr", mc.mse_stderr[i]}}});
                }
            }
        }
    }
    dir.write("curves.csv", curves);

    if (!cfg.centralized()) {
        SarConfig cent_cfg = cfg;
        cent_cfg.method.reset();
        const McResult cent = bound_curves(cent_cfg);
        for (std::size_t a = 0; a < mc.n_agents; ++a) {
            for (std::size_t k = 0; k < mc.horizon; ++k) {
                double t_agent = 0.0;
                double t_cent = 0.0;
                for (std::size_t c = 0; c < mc.dim; ++c) {
                    t_agent += mc.bound[mc.index(a, k, c)];
                    t_cent += cent.bound[cent.index(0, k, c)];
                }
                // Equal up to rounding when every agent sees every measurement.
                if (t_cent > t_agent * (1.0 + 1e-9)) {
                    failures.push_back({{{"check", "centralized_dominance"},
                                         {"agent", a},
                                         {"iter", k + 1},
                                         {"trace_agent", t_agent},
                                         {"trace_centralized", t_cent}}});
                }
            }
        }
    }

    std::ostringstream summary;
    summary << "level " << to_string(cfg.level) << ", method " << method_name(cfg) << ", " << cfg.runs
            << " runs, horizon " << cfg.horizon << ", seed " << cfg.seed << "\n";
    summary << "final-iteration bound / mse per agent (E, N, U, bias):\n";
    const std::size_t last = mc.horizon - 1;
    for (std::size_t a = 0; a < mc.n_agents; ++a) {
        summary << "  agent " << a << ":";
        for (std::size_t c = 0; c < mc.dim; ++c) {
            const std::size_t i = mc.index(a, last, c);
            summary << " " << fmt(mc.bound[i]) << " / " << fmt(mc.mse[i]) << ";";
        }
        summary << "\n";
    }
    if (ref) {
        const auto table = reduction_table(bound_curves(*ref), mc);
        std::string csv = csv_row({"agent", "component", "ref_method", "new_method", "bound_ref", "bound_new",
                                   "reduction_percent"});
        summary << "bound reduction of " << method_name(cfg) << " relative to " << compare << " (percent):\n";
        for (const auto& row : table) {
            csv += csv_row({fmt(row.agent), fmt(row.component), compare, method_name(cfg), fmt(row.bound_ref),
                            fmt(row.bound_new), fmt(row.percent)});
            if (row.component == 0) {
                summary << "  agent " << row.agent << ":";
            }
            summary << " " << fmt(row.percent);
            if (row.component + 1 == mc.dim) {
                summary << "\n";
            }
        }
        dir.write("reduction.csv", csv);
    }
    summary << "checks: " << (failures.empty() ? "all passed" : std::to_string(failures.size()) + " failed") << "\n";
    dir.write("summary.txt", summary.str());
    dir.finish("montecarlo", config_path.empty() ? std::nullopt : std::optional<std::string>(config_path), cfg.seed,
               failures);
    out << summary.str() << "outputs in " << dir.path().string() << "\n";
    return failures.empty() ? kExitOk : kExitAssertion;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Conservative fusion (CI, SCI, ESCI) and distributed estimation experiments", "esci"};
    app.require_subcommand(1);

    Common common;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--out", common.out, "Output directory (default: $ESCI_OUTPUT_DIR/<command> or out/<command>)");
        sub->add_flag("--force", common.force, "Overwrite outputs of a different configuration");
    };

    int grid = 6;
    std::string demo_config;
    auto* demo = app.add_subcommand("fusion-demo", "Compare CI, SCI and ESCI bounds on two estimates");
    demo->add_option("--omega-grid", grid, "Number of grid weights per method (>= 2)")->check(CLI::Range(2, 1000000));
    demo->add_option("--config", demo_config, "JSON with p1, p_ind and q overriding the built-in matrices");
    add_common(demo);

    std::string config_path;
    std::optional<std::size_t> runs;
    auto* sim = app.add_subcommand("simulate", "Run the SAR scenario and write per-round states");
    sim->add_option("--config", config_path, "Scenario config (JSON); default: built-in SAR scenario");
    sim->add_option("--runs", runs, "Number of runs (overrides the config)")->check(CLI::PositiveNumber);
    add_common(sim);

    unsigned threads = 0;
    std::string compare;
    auto* mc = app.add_subcommand("montecarlo", "Monte-Carlo bound and MSE curves");
    mc->add_option("--config", config_path, "Scenario config (JSON); default: built-in SAR scenario");
    mc->add_option("--runs", runs, "Number of runs (overrides the config)")->check(CLI::PositiveNumber);
    mc->add_option("--threads", threads, "Worker threads (0: hardware concurrency)");
    mc->add_option("--compare", compare, "Reference method for the bound reduction table (CI, SCI or ESCI)");
    add_common(mc);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitError;
    }

    try {
        if (*demo) {
            return cmd_fusion_demo(common, grid, demo_config, out);
        }
        if (*sim) {
            return cmd_simulate(common, config_path, runs, out);
        }
        return cmd_montecarlo(common, config_path, runs, threads, compare, out);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kExitError;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return kExitError;
    }
}

}  // namespace esci::cli
