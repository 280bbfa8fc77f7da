#pragma once

// Command-line front end: fusion-demo, simulate, montecarlo.

#include "esci/omega.hpp"

#include <filesystem>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace esci::cli {

/// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitAssertion = 1;  // outputs written, failures.json lists what failed
inline constexpr int kExitError = 2;      // usage, config or I/O error

/// Entry point; argv[0] is the program name.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// %.17g-style text (round-trips every double). Locale independent.
std::string format_double(double v);

std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& path);

/// Directory used when --out is not given: $ESCI_OUTPUT_DIR/<command>, or
/// out/<command>.
std::filesystem::path default_output_dir(std::string_view command);

/// Two estimates with split errors x1 + x_ind + M w; M is the identity.
struct DemoInputs {
    std::vector<SpdMatrix> p1;
    std::vector<SpdMatrix> p_ind;
    SpdMatrix q;
};

/// The built-in two-estimate example.
DemoInputs default_demo_inputs();

/// JSON object with keys "p1", "p_ind" (arrays of two matrices) and "q".
DemoInputs parse_demo_inputs(std::string_view json_text);

/// The same inputs posed as CI, SCI and ESCI problems. CI sees the full
/// covariance, SCI puts the shared noise in the correlated part, ESCI uses
/// the shared noise explicitly.
struct DemoProblems {
    FusionProblem ci;
    FusionProblem sci;
    FusionProblem esci;
};

DemoProblems demo_problems(const DemoInputs& inputs);

struct DemoRow {
    std::string method;
    std::string kind;  // "grid" or "optimal"
    std::vector<double> omega;
    Matrix bound;
    double trace = 0.0;
};

/// For each method, `grid` rows with omega = (k/(grid-1), 1 - k/(grid-1)),
/// k = 0..grid-1, then the trace-optimal row. grid >= 2.
std::vector<DemoRow> demo_rows(const DemoInputs& inputs, int grid, const OmegaConfig& config = {});

}  // namespace esci::cli
