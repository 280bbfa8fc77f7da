#include "esci/scenario.hpp"

#include "esci/errors.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <exception>
#include <numbers>
#include <thread>

namespace esci {

namespace {

constexpr std::size_t kSarDim = 4;

std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Symmetric square root that tolerates a singular (PSD) argument.
Matrix psd_sqrt(const Matrix& a)
{
    Eigen::SelfAdjointEigenSolver<Matrix> eig(a);
    const Vector root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return eig.eigenvectors() * root.asDiagonal() * eig.eigenvectors().transpose();
}

Vector standard_normal(Index n, std::mt19937_64& rng)
{
    std::normal_distribution<double> normal(0.0, 1.0);
    Vector v(n);
    for (Index i = 0; i < n; ++i) {
        v(i) = normal(rng);
    }
    return v;
}

double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }

void fill_bounds(const Trajectory& t, McResult& r)
{
    for (std::size_t k = 0; k < r.horizon; ++k) {
        for (std::size_t a = 0; a < r.n_agents; ++a) {
            const Matrix& b = t.states[k][a].bound.matrix();
            for (std::size_t c = 0; c < r.dim; ++c) {
                r.bound[r.index(a, k, c)] = b(Index(c), Index(c));
            }
        }
    }
}

std::vector<double> squared_errors(const Trajectory& t, const McResult& shape)
{
    std::vector<double> out(shape.bound.size());
    for (std::size_t k = 0; k < shape.horizon; ++k) {
        const Vector& truth = t.truth[k + 1];
        for (std::size_t a = 0; a < shape.n_agents; ++a) {
            const Vector err = t.states[k][a].mean - truth;
            for (std::size_t c = 0; c < shape.dim; ++c) {
                out[shape.index(a, k, c)] = err(Index(c)) * err(Index(c));
            }
        }
    }
    return out;
}

bool bounds_identical(const Trajectory& t, const McResult& ref)
{
    for (std::size_t k = 0; k < ref.horizon; ++k) {
        for (std::size_t a = 0; a < ref.n_agents; ++a) {
            const Matrix& b = t.states[k][a].bound.matrix();
            for (std::size_t c = 0; c < ref.dim; ++c) {
                const double v = b(Index(c), Index(c));
                if (std::bit_cast<std::uint64_t>(v) != std::bit_cast<std::uint64_t>(ref.bound[ref.index(a, k, c)])) {
                    return false;
                }
            }
        }
    }
    return true;
}

McResult empty_result(const SarConfig& cfg, const SarModel& model)
{
    McResult r;
    r.n_agents = cfg.centralized() ? 1 : model.agents.size();
    r.horizon = cfg.horizon;
    r.dim = std::size_t(model.sys.dim());
    r.runs = cfg.runs;
    r.seed = cfg.seed;
    const std::size_t cells = r.n_agents * r.horizon * r.dim;
    r.bound.assign(cells, 0.0);
    r.mse.assign(cells, 0.0);
    r.mse_stderr.assign(cells, 0.0);
    return r;
}

}  // namespace

OmegaPolicy SarConfig::omega_policy() const
{
    return optimize_omega ? OmegaPolicy::optimized(omega) : OmegaPolicy::uniform();
}

std::string method_name(const SarConfig& cfg)
{
    return cfg.method ? std::string(to_string(*cfg.method)) : std::string("CENTRALIZED");
}

SarConfig default_sar_config()
{
    SarConfig cfg;
    // Sky plot positions (azimuth, elevation) of satellites 1..9.
    cfg.satellites = {{90, 75}, {330, 75}, {210, 75}, {120, 45}, {60, 45},
                      {0, 45},  {300, 45}, {240, 45}, {180, 45}};
    cfg.edges = {{0, 1}, {0, 2}, {1, 2}, {0, 3}, {0, 4}, {3, 4}, {4, 5}, {1, 5},
                 {5, 6}, {1, 6}, {6, 7}, {2, 7}, {7, 8}, {3, 8}, {2, 8}};
    return cfg;
}

void validate(const SarConfig& cfg)
{
    if (cfg.satellites.empty()) {
        throw ConfigError("satellites: at least one satellite is required");
    }
    for (std::size_t i = 0; i < cfg.satellites.size(); ++i) {
        const double el = cfg.satellites[i].elevation_deg;
        if (!(el > 0.0 && el <= 90.0)) {
            throw ConfigError("satellites[" + std::to_string(i) + "].elevation_deg: must be in (0, 90]");
        }
        if (!std::isfinite(cfg.satellites[i].azimuth_deg)) {
            throw ConfigError("satellites[" + std::to_string(i) + "].azimuth_deg: must be finite");
        }
    }
    for (std::size_t e = 0; e < cfg.edges.size(); ++e) {
        const auto [a, b] = cfg.edges[e];
        if (a == b || a >= cfg.satellites.size() || b >= cfg.satellites.size()) {
            throw ConfigError("edges[" + std::to_string(e) + "]: must join two distinct satellites in [0, " +
                              std::to_string(cfg.satellites.size()) + ")");
        }
    }
    if (!(cfg.sigma_w > 0.0) || !std::isfinite(cfg.sigma_w)) {
        throw ConfigError("sigma_w: must be positive");
    }
    if (!(cfg.sigma_m > 0.0) || !std::isfinite(cfg.sigma_m)) {
        throw ConfigError("sigma_m: must be positive");
    }
    if (!(cfg.p0_scale > 0.0) || !std::isfinite(cfg.p0_scale)) {
        throw ConfigError("p0_scale: must be positive");
    }
    if (cfg.horizon < 1) {
        throw ConfigError("horizon: must be at least 1");
    }
    if (cfg.runs < 1) {
        throw ConfigError("runs: must be at least 1");
    }
    if (cfg.omega.grid_resolution < 2) {
        throw ConfigError("omega.grid_resolution: must be at least 2");
    }
    if (cfg.omega.max_refine_iters < 0) {
        throw ConfigError("omega.max_refine_iters: must be non-negative");
    }
    if (!(cfg.omega.tol > 0.0)) {
        throw ConfigError("omega.tol: must be positive");
    }
    if (cfg.method) {
        try {
            validate_level_method(cfg.level, *cfg.method);
        } catch (const ConfigError& e) {
            throw ConfigError(std::string("method: ") + e.what());
        }
    }
}

Vector line_of_sight(const Satellite& sat)
{
    if (!(sat.elevation_deg > 0.0 && sat.elevation_deg <= 90.0)) {
        throw InvalidGeometry("elevation " + std::to_string(sat.elevation_deg) + " deg is outside (0, 90]");
    }
    const double az = deg2rad(sat.azimuth_deg);
    const double el = deg2rad(sat.elevation_deg);
    Vector u(3);
    u << -std::cos(el) * std::sin(az), -std::cos(el) * std::cos(az), -std::sin(el);
    return u;
}

SarModel build_sar_agents(const SarConfig& cfg)
{
    SarModel m;
    const Index d = kSarDim;
    m.sys.f = Matrix::Identity(d, d);
    m.sys.q = SpdMatrix::diagonal(Vector::Constant(d, cfg.sigma_w * cfg.sigma_w));
    m.sys.p0 = SpdMatrix::diagonal(Vector::Constant(d, cfg.p0_scale));
    m.sys.x0 = Vector::Zero(d);

    m.topology = Topology::from_edges(cfg.satellites.size(), cfg.edges);
    m.agents.resize(cfg.satellites.size());
    for (std::size_t i = 0; i < cfg.satellites.size(); ++i) {
        AgentModel& a = m.agents[i];
        a.h = Matrix(1, d);
        a.h.leftCols(3) = line_of_sight(cfg.satellites[i]).transpose();
        a.h(0, 3) = 1.0;
        a.r = SpdMatrix::diagonal(Vector::Constant(1, cfg.sigma_m * cfg.sigma_m));
    }
    attach_topology(m.agents, m.topology);
    return m;
}

std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t run, std::uint64_t stream)
{
    const std::uint64_t key = splitmix64(splitmix64(splitmix64(seed) ^ run) ^ (stream * 0xd1b54a32d192ed03ULL));
    return std::mt19937_64(key);
}

std::vector<Vector> simulate_truth(const SystemModel& sys, std::size_t horizon, std::mt19937_64& rng)
{
    const Index d = sys.dim();
    const Matrix p0_root = psd_sqrt(sys.p0.matrix());
    const Matrix q_root = psd_sqrt(sys.q.matrix());
    std::vector<Vector> x;
    x.reserve(horizon + 1);
    x.push_back(sys.x0 + p0_root * standard_normal(d, rng));
    for (std::size_t k = 1; k <= horizon; ++k) {
        x.push_back(sys.f * x.back() + q_root * standard_normal(d, rng));
    }
    return x;
}

std::vector<std::vector<Vector>> generate_measurements(const std::vector<Vector>& trajectory,
                                                       std::span<const AgentModel> agents,
                                                       std::span<std::mt19937_64> rngs)
{
    if (rngs.size() != agents.size()) {
        throw DimensionMismatch("generate_measurements: one generator per agent is required");
    }
    std::vector<Matrix> r_roots;
    for (const auto& a : agents) {
        r_roots.push_back(psd_sqrt(a.r.matrix()));
    }
    std::vector<std::vector<Vector>> table;
    for (std::size_t k = 1; k < trajectory.size(); ++k) {
        std::vector<Vector> row;
        row.reserve(agents.size());
        for (std::size_t i = 0; i < agents.size(); ++i) {
            const Index m = agents[i].h.rows();
            row.push_back(agents[i].h * trajectory[k] + r_roots[i] * standard_normal(m, rngs[i]));
        }
        table.push_back(std::move(row));
    }
    return table;
}

Trajectory simulate_run(const SarConfig& cfg, const SarModel& model, std::uint64_t run,
                        const std::vector<std::vector<std::vector<double>>>* schedule)
{
    Trajectory out;
    std::mt19937_64 truth_rng = stream_rng(cfg.seed, run, 0);
    out.truth = simulate_truth(model.sys, cfg.horizon, truth_rng);
    std::vector<std::mt19937_64> rngs;
    for (std::size_t i = 0; i < model.agents.size(); ++i) {
        rngs.push_back(stream_rng(cfg.seed, run, i + 1));
    }
    const auto z = generate_measurements(out.truth, model.agents, rngs);

    const AgentState initial{model.sys.x0, model.sys.p0};
    const OmegaPolicy policy = cfg.omega_policy();
    std::vector<AgentState> states(cfg.centralized() ? 1 : model.agents.size(), initial);
    for (std::size_t k = 0; k < cfg.horizon; ++k) {
        try {
            if (cfg.centralized()) {
                states[0] = centralized_kf_step(states[0], model.sys, model.agents, z[k]);
            } else {
                const auto* replay = schedule ? &(*schedule)[k] : nullptr;
                RoundResult rr = run_round(model.topology, model.agents, states, model.sys, cfg.level, *cfg.method,
                                           z[k], policy, k + 1, replay);
                states = std::move(rr.states);
                out.logs.push_back(std::move(rr.log));
            }
        } catch (const Error& e) {
            throw Error("run " + std::to_string(run) + ", round " + std::to_string(k + 1) + ": " + e.what());
        }
        out.states.push_back(states);
    }
    return out;
}

McResult bound_curves(const SarConfig& cfg)
{
    validate(cfg);
    const SarModel model = build_sar_agents(cfg);
    McResult r = empty_result(cfg, model);
    r.runs = 1;
    fill_bounds(simulate_run(cfg, model, 0), r);
    return r;
}

McResult monte_carlo(const SarConfig& cfg, unsigned threads)
{
    validate(cfg);
    const SarModel model = build_sar_agents(cfg);
    McResult result = empty_result(cfg, model);

    // Replicate 0 optimizes omega; the rest replay its schedule, so bounds
    // are computed once and only the means vary.
    const Trajectory first = simulate_run(cfg, model, 0);
    fill_bounds(first, result);
    std::vector<std::vector<std::vector<double>>> schedule;
    for (const auto& log : first.logs) {
        schedule.push_back(log.omegas);
    }
    const auto* replay = cfg.centralized() ? nullptr : &schedule;

    std::vector<std::vector<double>> sq(cfg.runs);
    std::vector<std::exception_ptr> failures(cfg.runs);
    sq[0] = squared_errors(first, result);

    std::atomic<std::size_t> next{1};
    auto worker = [&] {
        for (std::size_t r = next++; r < cfg.runs; r = next++) {
            try {
                const Trajectory t = simulate_run(cfg, model, r, replay);
                if (!bounds_identical(t, result)) {
                    throw Error("run " + std::to_string(r) + ": bounds differ from run 0");
                }
                sq[r] = squared_errors(t, result);
            } catch (...) {
                failures[r] = std::current_exception();
            }
        }
    };
    if (threads == 0) {
        threads = std::max(1u, std::thread::hardware_concurrency());
    }
    threads = unsigned(std::min<std::size_t>(threads, cfg.runs));
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned t = 0; t < threads; ++t) {
            pool.emplace_back(worker);
        }
    }
    for (const auto& f : failures) {
        if (f) {
            std::rethrow_exception(f);
        }
    }

    // Sequential reduction in run order: independent of scheduling.
    const double n = double(cfg.runs);
    for (std::size_t c = 0; c < result.mse.size(); ++c) {
        double sum = 0.0;
        for (std::size_t r = 0; r < cfg.runs; ++r) {
            sum += sq[r][c];
        }
        const double mean = sum / n;
        double ss = 0.0;
        for (std::size_t r = 0; r < cfg.runs; ++r) {
            const double dev = sq[r][c] - mean;
            ss += dev * dev;
        }
        result.mse[c] = mean;
        result.mse_stderr[c] = cfg.runs > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
    }
    return result;
}

std::vector<Reduction> reduction_table(const McResult& ref, const McResult& next)
{
    if (ref.n_agents != next.n_agents || ref.horizon != next.horizon || ref.dim != next.dim) {
        throw ConfigMismatch("reduction_table: results have different shapes");
    }
    std::vector<Reduction> out;
    const std::size_t k = ref.horizon - 1;
    for (std::size_t a = 0; a < ref.n_agents; ++a) {
        for (std::size_t c = 0; c < ref.dim; ++c) {
            Reduction row;
            row.agent = a;
            row.component = c;
            row.bound_ref = ref.bound[ref.index(a, k, c)];
            row.bound_new = next.bound[next.index(a, k, c)];
            row.percent = 100.0 * (1.0 - row.bound_new / row.bound_ref);
            out.push_back(row);
        }
    }
    return out;
}

void check_comparable(const SarConfig& ref, const SarConfig& next)
{
    if (ref.centralized() || next.centralized()) {
        throw ConfigMismatch("compare: both configs must use a distributed method");
    }
    if (ref.level != next.level) {
        throw ConfigMismatch("compare: levels differ (" + std::string(to_string(ref.level)) + " vs " +
                             std::string(to_string(next.level)) + ")");
    }
    SarConfig aligned = next;
    aligned.method = ref.method;
    if (canonical_json(aligned) != canonical_json(ref)) {
        throw ConfigMismatch("compare: configs differ in more than the method");
    }
}

std::vector<Reduction> compare_methods(const SarConfig& ref, const SarConfig& next)
{
    check_comparable(ref, next);
    return reduction_table(bound_curves(ref), bound_curves(next));
}

}  // namespace esci
