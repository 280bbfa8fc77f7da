#pragma once

// One agent's step of the distributed filter, and a centralized Kalman
// filter baseline.
//
// Per round, agent i:
//   1. predicts its estimate with (F, Q);
//   2. (L1/L2) updates the prediction with its own measurement, giving the
//      autonomous estimate (x_a, P_a) it transmits;
//   3. fuses its prediction with the neighbors' messages;
//   4. updates the fused estimate with its own measurement (L1/L2) or with
//      the measurement information of its whole neighborhood (L3).

#include "esci/message.hpp"
#include "esci/model.hpp"
#include "esci/omega.hpp"

#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace esci {

AgentState predict(const AgentState& state, const SystemModel& sys);

/// Information-form update: P+^-1 = P^-1 + H'R^-1H, x+ = P+ (P^-1 x + H'R^-1 z).
/// An H with zero rows leaves the state unchanged.
AgentState measurement_update(const AgentState& state, const Matrix& h, const SpdMatrix& r, const Vector& z);

/// Same update from precomputed information terms, summed.
AgentState information_update(const AgentState& state, std::span<const InformationTerms> terms);

/// What an agent has computed before the exchange.
struct StepQuantities {
    AgentState prediction;
    std::optional<AgentState> autonomous;
    InformationTerms own_terms;
};

Message build_message(Level level, const AgentModel& agent, const StepQuantities& quantities);

/// Picks omega for a fusion problem.
using OmegaChooser = std::function<std::vector<double>(const FusionProblem&)>;

OmegaChooser chooser_for(const OmegaPolicy& policy);

struct FusedState {
    AgentState state;
    std::vector<double> omega;  // empty when nothing was fused
};

/// Prediction minus the process noise, with eigenvalue flooring for drift
/// of at most 1e-9 * trace(prediction).
SpdMatrix pre_noise_part(const SpdMatrix& prediction, const SpdMatrix& q);

/// CI of the own prediction with the neighbors' autonomous estimates
/// (L1 or L2 messages).
FusedState fuse_L1(const AgentState& own_prediction, std::span<const Message> inbox, const OmegaChooser& choose);

/// Fusion problem built from L2 messages: SCI with the measurement-noise
/// split, or ESCI with the shared process noise made explicit.
FusionProblem l2_problem(const AgentState& own_prediction, std::span<const Message> inbox, Method method,
                         const SystemModel& sys);

/// SCI or ESCI fusion of the own prediction with L2 messages.
FusedState fuse_L2(const AgentState& own_prediction, std::span<const Message> inbox, Method method,
                   const SystemModel& sys, const OmegaChooser& choose);

/// Fusion problem built from L3 messages (predictions).
FusionProblem l3_problem(const AgentState& own_prediction, std::span<const Message> inbox, Method method,
                         const SystemModel& sys);

/// CI or ESCI (additive common noise) fusion of predictions.
FusedState fuse_L3(const AgentState& own_prediction, std::span<const Message> inbox, Method method,
                   const SystemModel& sys, const OmegaChooser& choose);

/// Final update. L1/L2 use the agent's own terms only; L3 adds the terms of
/// every neighbor as well.
AgentState post_fusion_update(const AgentState& fused, Level level, const InformationTerms& own_terms,
                              std::span<const InformationTerms> neighbor_terms);

/// Predict, then update with every agent's measurement.
AgentState centralized_kf_step(const AgentState& state, const SystemModel& sys,
                               std::span<const AgentModel> agents, std::span<const Vector> measurements);

/// Throws ConfigError for level/method pairs the messages cannot support.
void validate_level_method(Level level, Method method);

}  // namespace esci
