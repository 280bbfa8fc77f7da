#include "esci/dfilter.hpp"
#include "esci/errors.hpp"
#include "esci/netsim.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace esci;
using namespace esci::test;

namespace {

SystemModel scalar_system(double f, double q, double p0 = 1.0)
{
    return {scalar(f), SpdMatrix::psd(scalar(q)), SpdMatrix::spd(scalar(p0)), vec1(0)};
}

AgentState scalar_state(double x, double p) { return {vec1(x), SpdMatrix::spd(scalar(p))}; }

AgentModel scalar_agent(std::size_t id, double h, double r)
{
    return {id, scalar(h), SpdMatrix::spd(scalar(r)), {}};
}

OmegaChooser fixed(std::vector<double> w)
{
    return [w](const FusionProblem&) { return w; };
}

}  // namespace

TEST(Predict, Examples)
{
    const AgentState s = scalar_state(3, 1);
    const AgentState same = predict(s, scalar_system(1, 0));
    EXPECT_EQ(same.mean(0), 3.0);
    EXPECT_EQ(same.bound(0, 0), 1.0);

    const AgentState grown = predict(scalar_state(1, 1), scalar_system(2, 3));
    EXPECT_DOUBLE_EQ(grown.mean(0), 2.0);
    EXPECT_DOUBLE_EQ(grown.bound(0, 0), 7.0);

    const SystemModel sar{Matrix::Identity(4, 4), SpdMatrix::diagonal(Vector::Constant(4, 25.0)),
                          SpdMatrix::identity(4), Vector::Zero(4)};
    const AgentState p = predict({Vector::Zero(4), SpdMatrix::identity(4)}, sar);
    EXPECT_TRUE(p.bound.matrix().isApprox(26.0 * Matrix::Identity(4, 4)));
}

TEST(MeasurementUpdate, Examples)
{
    const AgentState s = scalar_state(0.5, 1);
    const AgentState none = measurement_update(s, Matrix(0, 1), SpdMatrix{}, Vector(0));
    EXPECT_EQ(none.mean, s.mean);
    EXPECT_EQ(none.bound.matrix(), s.bound.matrix());

    const AgentState consistent = measurement_update(s, scalar(1), SpdMatrix::spd(scalar(1)), vec1(0.5));
    EXPECT_DOUBLE_EQ(consistent.mean(0), 0.5);
    EXPECT_DOUBLE_EQ(consistent.bound(0, 0), 0.5);

    const AgentState moved = measurement_update(scalar_state(0, 1), scalar(1), SpdMatrix::spd(scalar(1)), vec1(2));
    EXPECT_DOUBLE_EQ(moved.mean(0), 1.0);
    EXPECT_DOUBLE_EQ(moved.bound(0, 0), 0.5);
}

TEST(BuildMessage, FieldsPerLevel)
{
    const AgentModel agent{2, Matrix::Zero(1, 2), SpdMatrix::spd(scalar(1)), {}};
    StepQuantities q;
    q.prediction = {Vector::Zero(2), SpdMatrix::identity(2)};
    q.autonomous = q.prediction;
    q.own_terms = information_terms(agent.h, agent.r, vec1(0));

    const Message l1 = build_message(Level::L1, agent, q);
    EXPECT_EQ(l1.field_names().size(), 2u);
    EXPECT_EQ(l1.sender, 2u);
    const Message l2 = build_message(Level::L2, agent, q);
    EXPECT_TRUE(std::get<L2Payload>(l2.payload).info_matrix.matrix().isZero(0.0));
    const Message l3 = build_message(Level::L3, agent, q);
    EXPECT_EQ(l3.field_names(), std::vector<std::string>({"x_pred", "P_pred", "HtRinvz", "HtRinvH"}));

    q.autonomous.reset();
    EXPECT_THROW(build_message(Level::L2, agent, q), MissingQuantity);
    EXPECT_NO_THROW(build_message(Level::L3, agent, q));
}

TEST(FuseL1, Examples)
{
    const AgentState own = scalar_state(0, 1);
    const auto alone = fuse_L1(own, {}, fixed({}));
    EXPECT_EQ(alone.state.mean, own.mean);
    EXPECT_TRUE(alone.omega.empty());

    const std::vector<Message> twin{{1, L1Payload{own.mean, own.bound}}};
    const auto dup = fuse_L1(own, twin, fixed({0.5, 0.5}));
    EXPECT_NEAR(dup.state.bound(0, 0), 1.0, 1e-15);
    EXPECT_NEAR(dup.state.mean(0), 0.0, 1e-15);

    const std::vector<Message> other{{1, L1Payload{vec1(2), SpdMatrix::spd(scalar(1))}}};
    const auto pair = fuse_L1(own, other, fixed({0.5, 0.5}));
    EXPECT_NEAR(pair.state.mean(0), 1.0, 1e-15);
    EXPECT_NEAR(pair.state.bound(0, 0), 1.0, 1e-15);
}

TEST(FuseL2, ZeroProcessNoiseMakesEsciEqualSci)
{
    std::mt19937_64 rng(1);
    SystemModel sys{Matrix::Identity(2, 2), SpdMatrix::zero(2), SpdMatrix::identity(2), Vector::Zero(2)};
    const AgentState own{random_vector(2, rng), random_spd(2, rng)};
    std::vector<Message> inbox;
    for (std::size_t j = 1; j <= 2; ++j) {
        const AgentState prior{random_vector(2, rng), random_spd(2, rng)};
        const Matrix h = random_matrix(1, 2, rng);
        const SpdMatrix r = SpdMatrix::spd(scalar(0.7));
        const AgentState a = measurement_update(prior, h, r, random_vector(1, rng));
        inbox.push_back({j, L2Payload{a.mean, a.bound, SpdMatrix::psd(h.transpose() * spd_inverse(r).matrix() * h)}});
    }
    const auto w = fixed({0.2, 0.5, 0.3});
    const auto sci = fuse_L2(own, inbox, Method::SCI, sys, w);
    const auto esci = fuse_L2(own, inbox, Method::ESCI, sys, w);
    EXPECT_LT((sci.state.bound.matrix() - esci.state.bound.matrix()).norm(), 1e-8);
    EXPECT_LT((sci.state.mean - esci.state.mean).norm(), 1e-8);
}

TEST(FuseL2, NoNeighborsKeepsOwn)
{
    const AgentState own = scalar_state(1, 2);
    const auto out = fuse_L2(own, {}, Method::ESCI, scalar_system(1, 1), fixed({}));
    EXPECT_EQ(out.state.mean, own.mean);
    EXPECT_EQ(out.state.bound.matrix(), own.bound.matrix());
}

TEST(FuseL2, InconsistentPayloadIsUnrecoverable)
{
    // P_a^-1 - H'R^-1H = 1 - 2 < 0
    const std::vector<Message> inbox{{1, L2Payload{vec1(0), SpdMatrix::spd(scalar(1)), SpdMatrix::spd(scalar(2))}}};
    EXPECT_THROW(fuse_L2(scalar_state(0, 1), inbox, Method::SCI, scalar_system(1, 0.5), fixed({0.5, 0.5})),
                 UnrecoverablePrior);
}

TEST(FuseL3, Examples)
{
    const SystemModel sys = scalar_system(1, 2);
    const AgentState own = scalar_state(1, 3);
    EXPECT_EQ(fuse_L3(own, {}, Method::ESCI, sys, fixed({})).state.bound(0, 0), 3.0);

    const std::vector<Message> twin{{1, L3Payload{own.mean, own.bound, vec1(0), SpdMatrix::zero(1)}}};
    const auto dup = fuse_L3(own, twin, Method::ESCI, sys, fixed({0.5, 0.5}));
    // pre-noise parts 1 and 1, CI gives 1, plus Q = 2
    EXPECT_NEAR(dup.state.bound(0, 0), 3.0, 1e-14);
    EXPECT_NEAR(dup.state.mean(0), 1.0, 1e-14);
    EXPECT_THROW(fuse_L3(own, twin, Method::SCI, sys, fixed({0.5, 0.5})), ConfigError);
}

TEST(FuseL3, EqualsCiOnPreNoisePartsPlusNoise)
{
    std::mt19937_64 rng(2);
    for (int t = 0; t < 100; ++t) {
        const Index d = 1 + t % 4;
        const Matrix f = random_matrix(d, d, rng);
        const SystemModel sys{f, random_spd(d, rng), SpdMatrix::identity(d), Vector::Zero(d)};
        auto make = [&] {
            const AgentState prior{random_vector(d, rng), random_spd(d, rng)};
            return predict(prior, sys);
        };
        const AgentState own = make();
        std::vector<Message> inbox;
        std::vector<PlainEstimate> pre{{own.mean, SpdMatrix::psd(own.bound.matrix() - sys.q.matrix())}};
        const std::size_t n = 1 + t % 3;
        for (std::size_t j = 0; j < n; ++j) {
            const AgentState p = make();
            inbox.push_back({j + 1, L3Payload{p.mean, p.bound, Vector::Zero(d), SpdMatrix::zero(d)}});
            pre.push_back({p.mean, SpdMatrix::psd(p.bound.matrix() - sys.q.matrix())});
        }
        std::vector<double> w(n + 1, 1.0 / double(n + 1));
        const auto fused = fuse_L3(own, inbox, Method::ESCI, sys, fixed(w));
        const auto ci = ci_fuse(pre, w);
        const Matrix expected = ci.bound.matrix() + sys.q.matrix();
        EXPECT_LT((fused.state.bound.matrix() - expected).norm() / expected.norm(), 1e-10);
        EXPECT_LT((fused.state.mean - ci.mean).norm() / (1.0 + ci.mean.norm()), 1e-10);
    }
}

TEST(PostFusionUpdate, Examples)
{
    const InformationTerms unit{scalar(1), vec1(0)};
    const AgentState fused = scalar_state(0, 1);
    const std::vector<InformationTerms> neighbors{unit};
    EXPECT_NEAR(post_fusion_update(fused, Level::L3, unit, neighbors).bound(0, 0), 1.0 / 3.0, 1e-15);
    EXPECT_NEAR(post_fusion_update(fused, Level::L3, unit, {}).bound(0, 0), 0.5, 1e-15);
    // L1/L2 ignore the neighbors' terms.
    EXPECT_NEAR(post_fusion_update(fused, Level::L2, unit, neighbors).bound(0, 0), 0.5, 1e-15);

    const InformationTerms moved = information_terms(scalar(1), SpdMatrix::spd(scalar(1)), vec1(2));
    const AgentState l1 = post_fusion_update(fused, Level::L1, moved, {});
    const AgentState ref = measurement_update(fused, scalar(1), SpdMatrix::spd(scalar(1)), vec1(2));
    EXPECT_EQ(l1.mean, ref.mean);
    EXPECT_EQ(l1.bound.matrix(), ref.bound.matrix());
}

TEST(CentralizedKf, ReducesToSingleFilter)
{
    const SystemModel sys = scalar_system(0.9, 0.4);
    const AgentState s = scalar_state(1, 2);
    const std::vector<AgentModel> one{scalar_agent(0, 2, 0.5)};
    const std::vector<Vector> z{vec1(1.3)};
    const AgentState kf = centralized_kf_step(s, sys, one, z);
    const AgentState ref = measurement_update(predict(s, sys), scalar(2), SpdMatrix::spd(scalar(0.5)), vec1(1.3));
    EXPECT_NEAR(kf.mean(0), ref.mean(0), 1e-15);
    EXPECT_NEAR(kf.bound(0, 0), ref.bound(0, 0), 1e-15);

    const AgentState none = centralized_kf_step(s, sys, {}, {});
    EXPECT_EQ(none.bound.matrix(), predict(s, sys).bound.matrix());
}

TEST(CentralizedKf, MatchesBatchLeastSquares)
{
    // Unknowns x0..x3; prior on x0, dynamics x_k = f x_{k-1} + w, two sensors per step.
    const double f = 1.1, q = 0.3, p0 = 2.0, m0 = 0.5;
    const double h[] = {1.0, -0.5};
    const double r[] = {0.8, 0.2};
    const double z[3][2] = {{0.7, -0.2}, {1.1, -0.6}, {0.9, -0.4}};
    const SystemModel sys = scalar_system(f, q, p0);
    const std::vector<AgentModel> agents{scalar_agent(0, h[0], r[0]), scalar_agent(1, h[1], r[1])};

    AgentState s = scalar_state(m0, p0);
    for (int k = 0; k < 3; ++k) {
        const std::vector<Vector> zk{vec1(z[k][0]), vec1(z[k][1])};
        s = centralized_kf_step(s, sys, agents, zk);
    }

    Matrix j = Matrix::Zero(4, 4);
    Vector b = Vector::Zero(4);
    j(0, 0) += 1.0 / p0;
    b(0) += m0 / p0;
    for (int k = 1; k <= 3; ++k) {
        // (x_k - f x_{k-1})^2 / q
        j(k, k) += 1.0 / q;
        j(k - 1, k - 1) += f * f / q;
        j(k, k - 1) -= f / q;
        j(k - 1, k) -= f / q;
        for (int i = 0; i < 2; ++i) {
            j(k, k) += h[i] * h[i] / r[i];
            b(k) += h[i] * z[k - 1][i] / r[i];
        }
    }
    const Matrix cov = j.inverse();
    const Vector est = cov * b;
    EXPECT_NEAR(s.bound(0, 0), cov(3, 3), 1e-9);
    EXPECT_NEAR(s.mean(0), est(3), 1e-9);
}

TEST(L2Step, TwoAgentScalarScript)
{
    // Independent scalar evaluation of one full L2 round for agent 0.
    const double f = 1.0, q = 2.0;
    const double prior_x[] = {0.3, -0.4};
    const double prior_p[] = {4.0, 6.0};
    const double h[] = {1.0, 0.8};
    const double r[] = {1.5, 0.5};
    const double z[] = {0.9, -0.1};
    const double w0 = 0.35, w1 = 0.65;

    const double pp[] = {f * f * prior_p[0] + q, f * f * prior_p[1] + q};
    const double xp[] = {f * prior_x[0], f * prior_x[1]};
    const double pa1 = 1.0 / (1.0 / pp[1] + h[1] * h[1] / r[1]);
    const double xa1 = pa1 * (xp[1] / pp[1] + h[1] * z[1] / r[1]);
    const double gain1 = pa1 / pp[1];                       // weight on the prior
    const double noise1 = pa1 * pa1 * h[1] * h[1] / r[1];   // measurement-noise part

    // SCI: own (P_pred, 0), neighbor (A^2 P_pred, noise).
    const double s_own = pp[0];
    const double s_nb = gain1 * gain1 * pp[1] + w1 * noise1;
    const double sci_info = w0 / s_own + w1 / s_nb;
    const double sci_b = 1.0 / sci_info;
    const double sci_x = sci_b * (w0 * xp[0] / s_own + w1 * xa1 / s_nb);

    // ESCI: errors x1_i + x_ind_i + m_i w with m_own = -1, m_nb = -gain1.
    const double m[] = {-1.0, -gain1};
    const double p1[] = {pp[0] - q, gain1 * gain1 * (pp[1] - q)};
    const double pind[] = {0.0, noise1};
    const double b11 = p1[0] / w0 + pind[0] + m[0] * q * m[0];
    const double b22 = p1[1] / w1 + pind[1] + m[1] * q * m[1];
    const double b12 = m[0] * q * m[1];
    const double det = b11 * b22 - b12 * b12;
    const double inv11 = b22 / det, inv22 = b11 / det, inv12 = -b12 / det;
    const double esci_b = 1.0 / (inv11 + inv22 + 2.0 * inv12);
    const double k0 = esci_b * (inv11 + inv12), k1 = esci_b * (inv12 + inv22);
    const double esci_x = k0 * xp[0] + k1 * xa1;

    auto finish = [&](double b, double x) {
        const double p = 1.0 / (1.0 / b + h[0] * h[0] / r[0]);
        return std::pair{p * (x / b + h[0] * z[0] / r[0]), p};
    };

    const SystemModel sys = scalar_system(f, q);
    std::vector<AgentModel> agents{scalar_agent(0, h[0], r[0]), scalar_agent(1, h[1], r[1])};
    const Topology topo = Topology::complete(2);
    attach_topology(agents, topo);
    const std::vector<AgentState> states{scalar_state(prior_x[0], prior_p[0]), scalar_state(prior_x[1], prior_p[1])};
    const std::vector<Vector> zs{vec1(z[0]), vec1(z[1])};
    const std::vector<std::vector<double>> replay{{w0, w1}, {0.5, 0.5}};

    for (Method method : {Method::SCI, Method::ESCI}) {
        const auto round = run_round(topo, agents, states, sys, Level::L2, method, zs, OmegaPolicy::uniform(), 0, &replay);
        const auto [x, p] = method == Method::SCI ? finish(sci_b, sci_x) : finish(esci_b, esci_x);
        EXPECT_NEAR(round.states[0].bound(0, 0), p, 1e-12) << to_string(method);
        EXPECT_NEAR(round.states[0].mean(0), x, 1e-12) << to_string(method);
    }
}

TEST(Levels, BoundTraceOrdering)
{
    // Fixed 3-agent scalar network; bounds do not depend on measurements.
    const SystemModel sys = scalar_system(1.0, 1.0, 50.0);
    std::vector<AgentModel> agents{scalar_agent(0, 1.0, 4.0), scalar_agent(1, 0.7, 1.0), scalar_agent(2, 1.3, 9.0)};
    const Topology topo = Topology::ring(3);
    attach_topology(agents, topo);
    const std::vector<Vector> zs(3, vec1(0));

    auto steady = [&](Level level, Method method) {
        std::vector<AgentState> states(3, scalar_state(0, 50.0));
        for (std::size_t k = 0; k < 40; ++k) {
            states = run_round(topo, agents, states, sys, level, method, zs, OmegaPolicy::optimized(), k).states;
        }
        double total = 0.0;
        for (const auto& s : states) {
            total += s.bound.trace();
        }
        return total;
    };
    const double ci_l1 = steady(Level::L1, Method::CI);
    const double sci_l2 = steady(Level::L2, Method::SCI);
    const double esci_l2 = steady(Level::L2, Method::ESCI);
    EXPECT_LE(esci_l2, sci_l2);
    EXPECT_LE(sci_l2, ci_l1);
}

TEST(ValidateLevelMethod, RejectsUnsupportedPairs)
{
    EXPECT_THROW(validate_level_method(Level::L1, Method::SCI), ConfigError);
    EXPECT_THROW(validate_level_method(Level::L1, Method::ESCI), ConfigError);
    EXPECT_THROW(validate_level_method(Level::L3, Method::SCI), ConfigError);
    EXPECT_NO_THROW(validate_level_method(Level::L2, Method::CI));
    EXPECT_NO_THROW(validate_level_method(Level::L3, Method::ESCI));
}

TEST(PreNoisePart, FloorsDriftAndRejectsViolations)
{
    const SpdMatrix q = SpdMatrix::spd(scalar(2));
    EXPECT_NEAR(pre_noise_part(SpdMatrix::spd(scalar(2.0 - 1e-12)), q)(0, 0), 0.0, 1e-15);
    EXPECT_THROW(pre_noise_part(SpdMatrix::spd(scalar(1.0)), q), NotPositiveDefinite);
}
