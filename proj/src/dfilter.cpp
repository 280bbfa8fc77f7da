#include "esci/dfilter.hpp"

#include "esci/errors.hpp"

#include <string>

namespace esci {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

AgentState autonomous_of(const Message& msg)
{
    return std::visit(Overloaded{
                          [](const L1Payload& p) { return AgentState{p.x_a, p.p_a}; },
                          [](const L2Payload& p) { return AgentState{p.x_a, p.p_a}; },
                          [&](const L3Payload&) -> AgentState {
                              throw MissingQuantity("message from agent " + std::to_string(msg.sender) +
                                                    " carries no autonomous estimate");
                          },
                      },
                      msg.payload);
}

const L2Payload& l2_of(const Message& msg)
{
    if (const auto* p = std::get_if<L2Payload>(&msg.payload)) {
        return *p;
    }
    throw MissingQuantity("message from agent " + std::to_string(msg.sender) + " is not an L2 message");
}

const L3Payload& l3_of(const Message& msg)
{
    if (const auto* p = std::get_if<L3Payload>(&msg.payload)) {
        return *p;
    }
    throw MissingQuantity("message from agent " + std::to_string(msg.sender) + " is not an L3 message");
}

/// Splits a neighbor's L2 autonomous estimate. The prior bound is recovered
/// from the payload as P_prior^-1 = P_a^-1 - H'R^-1H.
struct RecoveredL2 {
    Matrix gain;       // A = P_a P_prior^-1, maps the prior error into x_a's error
    SpdMatrix prior;   // P_prior
    SpdMatrix noise;   // P_a H'R^-1H P_a, covariance of the measurement-noise part
};

RecoveredL2 recover_l2(const Message& msg)
{
    const L2Payload& p = l2_of(msg);
    const Matrix& pa = p.p_a.matrix();
    const Matrix prior_inv = symmetrize(spd_inverse(pa) - p.info_matrix.matrix());
    Matrix prior;
    try {
        prior = CholeskyFactor(prior_inv).inverse();
    } catch (const NotPositiveDefinite& e) {
        throw UnrecoverablePrior("agent " + std::to_string(msg.sender) +
                                 ": P_a^-1 - H'R^-1H is not positive definite (" + e.what() + ")");
    }
    return {pa * prior_inv, SpdMatrix::trusted(prior),
            SpdMatrix::trusted(pa * p.info_matrix.matrix() * pa)};
}

FusedState run_fusion(const FusionProblem& problem, const OmegaChooser& choose)
{
    // Report the chooser's omega unchanged so that replaying it reproduces
    // the fusion bit for bit.
    auto omega = choose(problem);
    FusionOutput out = fuse(problem, omega);
    return {{std::move(out.mean), std::move(out.bound)}, std::move(omega)};
}

}  // namespace

AgentState predict(const AgentState& state, const SystemModel& sys)
{
    if (sys.f.rows() != state.mean.size() || sys.f.cols() != state.mean.size() ||
        state.bound.dim() != state.mean.size() || sys.q.dim() != state.mean.size()) {
        throw DimensionMismatch("predict: F, Q and the state disagree on dimension");
    }
    return {sys.f * state.mean,
            SpdMatrix::trusted(sys.f * state.bound.matrix() * sys.f.transpose() + sys.q.matrix())};
}

AgentState information_update(const AgentState& state, std::span<const InformationTerms> terms)
{
    const Index d = state.mean.size();
    const CholeskyFactor prior(state.bound.matrix());
    Matrix info = prior.inverse();
    Vector info_mean = prior.solve(state.mean);
    for (const auto& t : terms) {
        if (t.matrix.rows() != d || t.vector.size() != d) {
            throw DimensionMismatch("information_update: information terms have the wrong dimension");
        }
        info += t.matrix;
        info_mean += t.vector;
    }
    const CholeskyFactor posterior(symmetrize(info));
    const Matrix bound = posterior.inverse();
    return {bound * info_mean, SpdMatrix::trusted(bound)};
}

AgentState measurement_update(const AgentState& state, const Matrix& h, const SpdMatrix& r, const Vector& z)
{
    if (h.rows() == 0) {
        return state;
    }
    if (h.cols() != state.mean.size()) {
        throw DimensionMismatch("measurement_update: H has the wrong number of columns");
    }
    const InformationTerms t = information_terms(h, r, z);
    return information_update(state, std::span<const InformationTerms>(&t, 1));
}

Message build_message(Level level, const AgentModel& agent, const StepQuantities& q)
{
    Message msg;
    msg.sender = agent.id;
    switch (level) {
    case Level::L1:
        if (!q.autonomous) {
            throw MissingQuantity("L1 message needs the autonomous update");
        }
        msg.payload = L1Payload{q.autonomous->mean, q.autonomous->bound};
        break;
    case Level::L2:
        if (!q.autonomous) {
            throw MissingQuantity("L2 message needs the autonomous update");
        }
        msg.payload = L2Payload{q.autonomous->mean, q.autonomous->bound, SpdMatrix::trusted(q.own_terms.matrix)};
        break;
    case Level::L3:
        msg.payload = L3Payload{q.prediction.mean, q.prediction.bound, q.own_terms.vector,
                                SpdMatrix::trusted(q.own_terms.matrix)};
        break;
    }
    return msg;
}

OmegaChooser chooser_for(const OmegaPolicy& policy)
{
    return [policy](const FusionProblem& problem) { return policy.choose(problem); };
}

SpdMatrix pre_noise_part(const SpdMatrix& prediction, const SpdMatrix& q)
{
    const double slack = 1e-9 * std::abs(prediction.trace());
    return SpdMatrix::trusted(clamp_psd(prediction.matrix() - q.matrix(), slack));
}

FusedState fuse_L1(const AgentState& own_prediction, std::span<const Message> inbox, const OmegaChooser& choose)
{
    if (inbox.empty()) {
        return {own_prediction, {}};
    }
    CiProblem problem;
    problem.estimates.push_back({own_prediction.mean, own_prediction.bound});
    for (const auto& msg : inbox) {
        const AgentState a = autonomous_of(msg);
        problem.estimates.push_back({a.mean, a.bound});
    }
    return run_fusion(problem, choose);
}

FusionProblem l2_problem(const AgentState& own_prediction, std::span<const Message> inbox, Method method,
                         const SystemModel& sys)
{
    const Index d = own_prediction.mean.size();
    switch (method) {
    case Method::CI: {
        CiProblem problem;
        problem.estimates.push_back({own_prediction.mean, own_prediction.bound});
        for (const auto& msg : inbox) {
            const AgentState a = autonomous_of(msg);
            problem.estimates.push_back({a.mean, a.bound});
        }
        return problem;
    }
    case Method::SCI: {
        // x1 = A x_prior (unknown correlation), x2 = P_a H'R^-1 v (independent).
        SciProblem problem;
        problem.estimates.push_back({own_prediction.mean, own_prediction.bound, SpdMatrix::zero(d)});
        for (const auto& msg : inbox) {
            const RecoveredL2 r = recover_l2(msg);
            const Matrix p1 = r.gain * r.prior.matrix() * r.gain.transpose();
            problem.estimates.push_back({l2_of(msg).x_a, SpdMatrix::trusted(p1), r.noise});
        }
        return problem;
    }
    case Method::ESCI: {
        // x_prior = F x_prev - w, so x_a's error is A F x_prev + P_a H'R^-1 v - A w.
        EsciCommonNoiseProblem problem;
        problem.q = sys.q;
        problem.estimates.push_back({own_prediction.mean, pre_noise_part(own_prediction.bound, sys.q),
                                     SpdMatrix::zero(d), Matrix(-Matrix::Identity(d, d))});
        for (const auto& msg : inbox) {
            const RecoveredL2 r = recover_l2(msg);
            const Matrix p1 = r.gain * pre_noise_part(r.prior, sys.q).matrix() * r.gain.transpose();
            problem.estimates.push_back({l2_of(msg).x_a, SpdMatrix::trusted(p1), r.noise, Matrix(-r.gain)});
        }
        return problem;
    }
    }
    throw ConfigError("l2_problem: unsupported method");
}

FusedState fuse_L2(const AgentState& own_prediction, std::span<const Message> inbox, Method method,
                   const SystemModel& sys, const OmegaChooser& choose)
{
    if (inbox.empty()) {
        return {own_prediction, {}};
    }
    return run_fusion(l2_problem(own_prediction, inbox, method, sys), choose);
}

FusionProblem l3_problem(const AgentState& own_prediction, std::span<const Message> inbox, Method method,
                         const SystemModel& sys)
{
    switch (method) {
    case Method::CI: {
        CiProblem problem;
        problem.estimates.push_back({own_prediction.mean, own_prediction.bound});
        for (const auto& msg : inbox) {
            const L3Payload& p = l3_of(msg);
            problem.estimates.push_back({p.x_pred, p.p_pred});
        }
        return problem;
    }
    case Method::ESCI: {
        // Every prediction carries the same -w(k): fuse the pre-noise parts, then add Q.
        const Index d = own_prediction.mean.size();
        EsciAdditiveProblem problem;
        problem.q = sys.q;
        problem.estimates.push_back(
            {own_prediction.mean, pre_noise_part(own_prediction.bound, sys.q), SpdMatrix::zero(d), std::nullopt});
        for (const auto& msg : inbox) {
            const L3Payload& p = l3_of(msg);
            problem.estimates.push_back({p.x_pred, pre_noise_part(p.p_pred, sys.q), SpdMatrix::zero(d), std::nullopt});
        }
        return problem;
    }
    case Method::SCI:
        break;
    }
    throw ConfigError("L3 predictions carry no independent component; use CI or ESCI");
}

FusedState fuse_L3(const AgentState& own_prediction, std::span<const Message> inbox, Method method,
                   const SystemModel& sys, const OmegaChooser& choose)
{
    if (inbox.empty()) {
        return {own_prediction, {}};
    }
    return run_fusion(l3_problem(own_prediction, inbox, method, sys), choose);
}

AgentState post_fusion_update(const AgentState& fused, Level level, const InformationTerms& own_terms,
                              std::span<const InformationTerms> neighbor_terms)
{
    std::vector<InformationTerms> terms{own_terms};
    if (level == Level::L3) {
        terms.insert(terms.end(), neighbor_terms.begin(), neighbor_terms.end());
    }
    return information_update(fused, terms);
}

AgentState centralized_kf_step(const AgentState& state, const SystemModel& sys, std::span<const AgentModel> agents,
                               std::span<const Vector> measurements)
{
    if (agents.size() != measurements.size()) {
        throw DimensionMismatch("centralized_kf_step: one measurement per agent is required");
    }
    const AgentState predicted = predict(state, sys);
    std::vector<InformationTerms> terms;
    terms.reserve(agents.size());
    for (std::size_t i = 0; i < agents.size(); ++i) {
        if (agents[i].h.rows() == 0) {
            continue;
        }
        terms.push_back(information_terms(agents[i].h, agents[i].r, measurements[i]));
    }
    if (terms.empty()) {
        return predicted;
    }
    return information_update(predicted, terms);
}

void validate_level_method(Level level, Method method)
{
    if (level == Level::L1 && method != Method::CI) {
        throw ConfigError("level L1 transmits only (x_a, P_a); only CI can fuse it");
    }
    if (level == Level::L3 && method == Method::SCI) {
        throw ConfigError("level L3 fuses predictions, which have no independent component; use CI or ESCI");
    }
}

}  // namespace esci
