#pragma once

// Synchronous rounds over a fixed topology. Each round is two phases with a
// barrier between them: every agent prepares (predicts, updates, builds its
// message), then every agent fuses its inbox and applies the final update.
// Messages are copied into inboxes; agents share no mutable state.

#include "esci/dfilter.hpp"

#include <set>
#include <span>
#include <utility>
#include <vector>

namespace esci {

class Topology {
public:
    using Edge = std::pair<std::size_t, std::size_t>;

    Topology() = default;

    static Topology ring(std::size_t n);
    static Topology complete(std::size_t n);
    /// Throws InvalidEdge on self-loops or out-of-range ids. Duplicates merge.
    static Topology from_edges(std::size_t n, std::span<const Edge> edges);

    std::size_t n_agents() const { return n_; }
    /// Edges stored as (min, max).
    const std::set<Edge>& edges() const { return edges_; }
    /// Sorted neighbor ids.
    std::vector<std::size_t> neighbors(std::size_t agent) const;

private:
    std::size_t n_ = 0;
    std::set<Edge> edges_;
};

/// Copies the topology's neighbor lists into the agent models.
void attach_topology(std::vector<AgentModel>& agents, const Topology& topology);

struct PreparedStep {
    StepQuantities quantities;
    Message message;
};

/// Phase 1: predict, (L1/L2) autonomous update, build the outgoing message.
PreparedStep prepare_step(const AgentModel& agent, const AgentState& prior, const SystemModel& sys, Level level,
                          const Vector& z);

/// Phase 2: fuse with the inbox and apply the final update. Depends only on
/// the prepared step, the inbox, and the omega chooser.
FusedState finish_step(const PreparedStep& prepared, std::span<const Message> inbox, const SystemModel& sys,
                       Level level, Method method, const OmegaChooser& choose);

struct RoundLog {
    std::size_t iteration = 0;
    std::vector<AgentState> snapshots;
    std::size_t messages_exchanged = 0;
    std::vector<std::vector<double>> omegas;  // per agent; empty when it fused nothing
};

struct RoundResult {
    std::vector<AgentState> states;
    RoundLog log;
    std::vector<Message> outbox;  // message sent by each agent
};

/// One synchronous round. With `replay`, agent i uses (*replay)[i] as omega
/// instead of consulting the policy.
RoundResult run_round(const Topology& topology, std::span<const AgentModel> agents,
                      std::span<const AgentState> states, const SystemModel& sys, Level level, Method method,
                      std::span<const Vector> measurements, const OmegaPolicy& policy, std::size_t iteration,
                      const std::vector<std::vector<double>>* replay = nullptr);

/// Messages addressed to `agent` in a round, in ascending sender order.
std::vector<Message> inbox_for(const Topology& topology, std::size_t agent, std::span<const Message> outbox);

}  // namespace esci
