#include "esci/omega.hpp"

#include "esci/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace esci {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void compositions(std::size_t n, int remaining, std::vector<int>& current,
                  std::vector<std::vector<int>>& out)
{
    if (current.size() + 1 == n) {
        current.push_back(remaining);
        out.push_back(current);
        current.pop_back();
        return;
    }
    for (int c = 0; c <= remaining; ++c) {
        current.push_back(c);
        compositions(n, remaining - c, current, out);
        current.pop_back();
    }
}

/// Softmax coordinates around a reference index whose logit is pinned at 0.
class SoftmaxChart {
public:
    SoftmaxChart(std::size_t n, std::size_t reference) : n_(n), ref_(reference) {}

    std::vector<double> to_omega(const std::vector<double>& y) const
    {
        std::vector<double> z(n_, 0.0);
        for (std::size_t i = 0, k = 0; i < n_; ++i) {
            if (i != ref_) {
                z[i] = y[k++];
            }
        }
        const double zmax = *std::max_element(z.begin(), z.end());
        double sum = 0.0;
        for (double& v : z) {
            v = std::exp(v - zmax);
            sum += v;
        }
        for (double& v : z) {
            v /= sum;
        }
        return z;
    }

    std::vector<double> from_omega(const std::vector<double>& omega) const
    {
        std::vector<double> y;
        y.reserve(n_ - 1);
        for (std::size_t i = 0; i < n_; ++i) {
            if (i != ref_) {
                y.push_back(std::log(std::max(omega[i], 1e-12) / omega[ref_]));
            }
        }
        return y;
    }

private:
    std::size_t n_;
    std::size_t ref_;
};

struct Vertex {
    std::vector<double> y;
    double f;
};

}  // namespace

std::size_t input_count(const FusionProblem& problem)
{
    return std::visit(Overloaded{
                          [](const CiProblem& p) { return p.estimates.size(); },
                          [](const SciProblem& p) { return p.estimates.size(); },
                          [](const EsciGeneralProblem& p) { return p.split.size(); },
                          [](const EsciCommonNoiseProblem& p) { return p.estimates.size(); },
                          [](const EsciAdditiveProblem& p) { return p.estimates.size(); },
                      },
                      problem);
}

FusionOutput fuse(const FusionProblem& problem, std::span<const double> omega)
{
    return std::visit(Overloaded{
                          [&](const CiProblem& p) { return ci_fuse(p.estimates, omega); },
                          [&](const SciProblem& p) { return sci_fuse(p.estimates, omega); },
                          [&](const EsciGeneralProblem& p) { return esci_fuse_general(p.split, omega); },
                          [&](const EsciCommonNoiseProblem& p) {
                              return esci_fuse_common_noise(p.estimates, p.q, omega);
                          },
                          [&](const EsciAdditiveProblem& p) {
                              return esci_fuse_additive_noise(p.estimates, p.q, omega);
                          },
                      },
                      problem);
}

double trace_objective(const FusionProblem& problem, std::span<const double> omega)
{
    return fuse(problem, omega).bound.trace();
}

std::vector<std::vector<double>> simplex_grid(std::size_t n, int resolution)
{
    if (n == 0) {
        return {};
    }
    if (resolution < 2) {
        throw std::invalid_argument("simplex_grid: resolution must be >= 2");
    }
    const int steps = resolution - 1;
    std::vector<std::vector<int>> counts;
    std::vector<int> current;
    compositions(n, steps, current, counts);
    std::vector<std::vector<double>> grid;
    grid.reserve(counts.size());
    for (const auto& c : counts) {
        std::vector<double> w(n);
        for (std::size_t i = 0; i < n; ++i) {
            w[i] = static_cast<double>(c[i]) / steps;
        }
        grid.push_back(std::move(w));
    }
    return grid;
}

OmegaResult optimize_omega(const FusionProblem& problem, const OmegaConfig& config)
{
    if (config.grid_resolution < 2 || config.max_refine_iters < 0 || !(config.tol > 0.0)) {
        throw std::invalid_argument("optimize_omega: invalid OmegaConfig");
    }
    const std::size_t n = input_count(problem);
    if (n == 0) {
        throw std::invalid_argument("optimize_omega: no inputs");
    }
    if (n == 1) {
        std::vector<double> one{1.0};
        return {one, trace_objective(problem, one)};
    }

    auto evaluate = [&](const std::vector<double>& w) {
        try {
            const double f = trace_objective(problem, w);
            return std::isfinite(f) ? f : std::numeric_limits<double>::infinity();
        } catch (const Error&) {
            return std::numeric_limits<double>::infinity();
        }
    };

    // Coarse grid; strict comparison keeps the lexicographically first minimum.
    OmegaResult best{{}, std::numeric_limits<double>::infinity()};
    for (auto& w : simplex_grid(n, config.grid_resolution)) {
        const double f = evaluate(w);
        if (f < best.objective) {
            best = {std::move(w), f};
        }
    }
    if (!std::isfinite(best.objective)) {
        throw OptimizationFailed("optimize_omega: every grid point failed to fuse");
    }

    // Nelder-Mead refinement on softmax coordinates.
    const auto ref = static_cast<std::size_t>(
        std::distance(best.omega.begin(), std::max_element(best.omega.begin(), best.omega.end())));
    const SoftmaxChart chart(n, ref);
    const std::size_t dim = n - 1;
    auto f_of = [&](const std::vector<double>& y) { return evaluate(chart.to_omega(y)); };

    std::vector<Vertex> simplex;
    simplex.reserve(dim + 1);
    const auto y0 = chart.from_omega(best.omega);
    simplex.push_back({y0, f_of(y0)});
    for (std::size_t k = 0; k < dim; ++k) {
        auto y = y0;
        y[k] += 0.5;
        simplex.push_back({y, f_of(y)});
    }

    auto combine = [](const std::vector<double>& a, const std::vector<double>& b, double t) {
        // a + t (b - a)
        std::vector<double> out(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            out[i] = a[i] + t * (b[i] - a[i]);
        }
        return out;
    };

    for (int iter = 0; iter < config.max_refine_iters; ++iter) {
        std::stable_sort(simplex.begin(), simplex.end(),
                         [](const Vertex& a, const Vertex& b) { return a.f < b.f; });
        const double f_best = simplex.front().f;
        const double f_worst = simplex.back().f;
        if (std::isfinite(f_worst) &&
            f_worst - f_best <= config.tol * std::max(std::abs(f_best), 1e-300)) {
            break;
        }
        std::vector<double> centroid(dim, 0.0);
        for (std::size_t v = 0; v < dim; ++v) {
            for (std::size_t i = 0; i < dim; ++i) {
                centroid[i] += simplex[v].y[i] / static_cast<double>(dim);
            }
        }
        Vertex& worst = simplex.back();
        const auto reflected = combine(centroid, worst.y, -1.0);
        const double f_r = f_of(reflected);
        if (f_r < simplex.front().f) {
            const auto expanded = combine(centroid, worst.y, -2.0);
            const double f_e = f_of(expanded);
            worst = f_e < f_r ? Vertex{expanded, f_e} : Vertex{reflected, f_r};
            continue;
        }
        if (f_r < simplex[dim - 1].f) {
            worst = {reflected, f_r};
            continue;
        }
        const bool outside = f_r < worst.f;
        const auto contracted = outside ? combine(centroid, reflected, 0.5) : combine(centroid, worst.y, 0.5);
        const double f_c = f_of(contracted);
        if (f_c < std::min(f_r, worst.f)) {
            worst = {contracted, f_c};
            continue;
        }
        for (std::size_t v = 1; v <= dim; ++v) {
            simplex[v].y = combine(simplex.front().y, simplex[v].y, 0.5);
            simplex[v].f = f_of(simplex[v].y);
        }
    }

    const auto it = std::min_element(simplex.begin(), simplex.end(),
                                     [](const Vertex& a, const Vertex& b) { return a.f < b.f; });
    if (it->f < best.objective) {
        auto w = chart.to_omega(it->y);
        // Re-evaluate so the reported objective is exactly that of the returned weights.
        const double f = evaluate(w);
        if (f < best.objective) {
            return {std::move(w), f};
        }
    }
    return best;
}

OmegaPolicy OmegaPolicy::optimized(OmegaConfig config)
{
    OmegaPolicy p;
    p.optimize_ = true;
    p.config_ = config;
    return p;
}

OmegaPolicy OmegaPolicy::uniform()
{
    OmegaPolicy p;
    p.optimize_ = false;
    return p;
}

std::vector<double> OmegaPolicy::choose(const FusionProblem& problem) const
{
    const std::size_t n = input_count(problem);
    if (optimize_) {
        return optimize_omega(problem, config_).omega;
    }
    return std::vector<double>(n, 1.0 / static_cast<double>(n));
}

}  // namespace esci
