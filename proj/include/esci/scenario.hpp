#pragma once

// The SAR positioning experiment: nine satellites estimate an emitter's
// position (East, North, Up) and a shared clock bias from pseudo-ranges.

#include "esci/netsim.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace esci {

struct Satellite {
    double azimuth_deg = 0.0;
    double elevation_deg = 90.0;
};

struct SarConfig {
    std::vector<Satellite> satellites;
    std::vector<Topology::Edge> edges;  // 0-based agent ids
    // The defaults for sigma_m and p0_scale (R = 10 m^2, P0 = 1e4 I m^2)
    // reproduce the published bound curves exactly.
    double sigma_w = 5.0;                  // process noise std, m
    double sigma_m = 3.1622776601683795;   // measurement noise std, m
    double p0_scale = 1e4;                 // P0 = p0_scale * I, m^2
    std::size_t horizon = 20;
    std::size_t runs = 1000;
    std::uint64_t seed = 20240917;
    Level level = Level::L2;
    std::optional<Method> method = Method::ESCI;  // nullopt: centralized Kalman filter
    bool optimize_omega = true;                   // false: uniform omega
    OmegaConfig omega;

    bool centralized() const { return !method.has_value(); }
    OmegaPolicy omega_policy() const;
};

/// Nine satellites and the edge set of the reference sky plot.
SarConfig default_sar_config();

/// Throws ConfigError naming the offending field.
void validate(const SarConfig& cfg);

/// JSON with the schema documented in docs/config.md. Missing keys take the
/// defaults; unknown keys are rejected. Throws ConfigError with the line and
/// column for syntax errors and the field path for semantic ones.
SarConfig parse_sar_config(std::string_view json_text);
SarConfig load_sar_config(const std::filesystem::path& path);

/// Canonical JSON (sorted keys, every field present). Equal configs give
/// equal text.
std::string canonical_json(const SarConfig& cfg);

std::string method_name(const SarConfig& cfg);  // CI, SCI, ESCI or CENTRALIZED

/// Unit vector from a satellite to an emitter at the origin, in ENU.
Vector line_of_sight(const Satellite& sat);

struct SarModel {
    SystemModel sys;
    std::vector<AgentModel> agents;
    Topology topology;
};

/// F = I4, Q = sigma_w^2 I4, H_i = [u_i' 1], R_i = sigma_m^2. Throws
/// InvalidGeometry for elevations outside (0, 90].
SarModel build_sar_agents(const SarConfig& cfg);

/// Independent generator for one (run, stream) pair.
std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t run, std::uint64_t stream);

/// horizon + 1 states: x(0) ~ N(x0, P0), x(k) = F x(k-1) + w(k).
std::vector<Vector> simulate_truth(const SystemModel& sys, std::size_t horizon, std::mt19937_64& rng);

/// table[k-1][i] = H_i x(k) + v_i(k) for k = 1..horizon. Agent i draws its
/// noise from rngs[i].
std::vector<std::vector<Vector>> generate_measurements(const std::vector<Vector>& trajectory,
                                                       std::span<const AgentModel> agents,
                                                       std::span<std::mt19937_64> rngs);

/// One replicate: estimates after every round.
struct Trajectory {
    std::vector<Vector> truth;                    // horizon + 1 states
    std::vector<std::vector<AgentState>> states;  // [iteration 0..horizon-1][agent]
    std::vector<RoundLog> logs;                   // empty for the centralized filter
};

/// Runs replicate `run`. When `schedule` is given, round k replays
/// (*schedule)[k] instead of optimizing omega.
Trajectory simulate_run(const SarConfig& cfg, const SarModel& model, std::uint64_t run,
                        const std::vector<std::vector<std::vector<double>>>* schedule = nullptr);

struct McResult {
    std::size_t n_agents = 0;  // 1 for the centralized filter
    std::size_t horizon = 0;
    std::size_t dim = 0;
    std::size_t runs = 0;
    std::uint64_t seed = 0;
    std::string config_hash;  // filled in by callers that hash configs
    std::vector<double> bound;
    std::vector<double> mse;
    std::vector<double> mse_stderr;

    std::size_t index(std::size_t agent, std::size_t iter, std::size_t comp) const
    {
        return (agent * horizon + iter) * dim + comp;
    }
};

/// Bounds come from the first replicate, whose omega schedule the others
/// replay; every replicate's bounds must match bit for bit. threads = 0 uses
/// the hardware concurrency. The result does not depend on the thread count.
McResult monte_carlo(const SarConfig& cfg, unsigned threads = 0);

/// Bound curves only (one replicate).
McResult bound_curves(const SarConfig& cfg);

struct Reduction {
    std::size_t agent = 0;
    std::size_t component = 0;
    double bound_ref = 0.0;
    double bound_new = 0.0;
    double percent = 0.0;  // 100 (1 - new / ref)
};

/// Final-iteration reductions of `next` relative to `ref`.
std::vector<Reduction> reduction_table(const McResult& ref, const McResult& next);

/// Throws ConfigMismatch unless the configs differ at most in method, and
/// both are distributed.
void check_comparable(const SarConfig& ref, const SarConfig& next);

/// Bound reductions of `next` relative to `ref` at the final iteration.
std::vector<Reduction> compare_methods(const SarConfig& ref, const SarConfig& next);

}  // namespace esci
