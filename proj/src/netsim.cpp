#include "esci/netsim.hpp"

#include "esci/errors.hpp"

#include <algorithm>
#include <string>

namespace esci {

Topology Topology::ring(std::size_t n)
{
    if (n == 0) {
        throw InvalidEdge("ring: at least one agent is required");
    }
    std::vector<Edge> edges;
    if (n == 2) {
        edges.push_back({0, 1});
    } else if (n > 2) {
        for (std::size_t i = 0; i < n; ++i) {
            edges.push_back({i, (i + 1) % n});
        }
    }
    return from_edges(n, edges);
}

Topology Topology::complete(std::size_t n)
{
    if (n == 0) {
        throw InvalidEdge("complete: at least one agent is required");
    }
    std::vector<Edge> edges;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            edges.push_back({i, j});
        }
    }
    return from_edges(n, edges);
}

Topology Topology::from_edges(std::size_t n, std::span<const Edge> edges)
{
    if (n == 0) {
        throw InvalidEdge("topology: at least one agent is required");
    }
    Topology t;
    t.n_ = n;
    for (const auto& [a, b] : edges) {
        if (a == b) {
            throw InvalidEdge("topology: self-loop on agent " + std::to_string(a));
        }
        if (a >= n || b >= n) {
            throw InvalidEdge("topology: edge (" + std::to_string(a) + ", " + std::to_string(b) +
                              ") references an agent outside [0, " + std::to_string(n) + ")");
        }
        t.edges_.insert({std::min(a, b), std::max(a, b)});
    }
    return t;
}

std::vector<std::size_t> Topology::neighbors(std::size_t agent) const
{
    std::vector<std::size_t> out;
    for (const auto& [a, b] : edges_) {
        if (a == agent) {
            out.push_back(b);
        } else if (b == agent) {
            out.push_back(a);
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

void attach_topology(std::vector<AgentModel>& agents, const Topology& topology)
{
    if (agents.size() != topology.n_agents()) {
        throw DimensionMismatch("attach_topology: agent count differs from the topology size");
    }
    for (std::size_t i = 0; i < agents.size(); ++i) {
        agents[i].id = i;
        agents[i].neighbors = topology.neighbors(i);
    }
}

PreparedStep prepare_step(const AgentModel& agent, const AgentState& prior, const SystemModel& sys, Level level,
                          const Vector& z)
{
    StepQuantities q;
    q.prediction = predict(prior, sys);
    q.own_terms = information_terms(agent.h, agent.r, z);
    if (level != Level::L3) {
        q.autonomous = information_update(q.prediction, std::span<const InformationTerms>(&q.own_terms, 1));
    }
    Message msg = build_message(level, agent, q);
    return {std::move(q), std::move(msg)};
}

FusedState finish_step(const PreparedStep& prepared, std::span<const Message> inbox, const SystemModel& sys,
                       Level level, Method method, const OmegaChooser& choose)
{
    const AgentState& own = prepared.quantities.prediction;
    FusedState fused;
    switch (level) {
    case Level::L1:
        fused = fuse_L1(own, inbox, choose);
        break;
    case Level::L2:
        fused = method == Method::CI ? fuse_L1(own, inbox, choose) : fuse_L2(own, inbox, method, sys, choose);
        break;
    case Level::L3:
        fused = fuse_L3(own, inbox, method, sys, choose);
        break;
    }
    std::vector<InformationTerms> neighbor_terms;
    if (level == Level::L3) {
        for (const auto& msg : inbox) {
            const auto& p = std::get<L3Payload>(msg.payload);
            neighbor_terms.push_back({p.info_matrix.matrix(), p.info_vector});
        }
    }
    fused.state = post_fusion_update(fused.state, level, prepared.quantities.own_terms, neighbor_terms);
    return fused;
}

std::vector<Message> inbox_for(const Topology& topology, std::size_t agent, std::span<const Message> outbox)
{
    std::vector<Message> inbox;
    for (std::size_t j : topology.neighbors(agent)) {
        inbox.push_back(outbox[j]);
    }
    return inbox;
}

RoundResult run_round(const Topology& topology, std::span<const AgentModel> agents,
                      std::span<const AgentState> states, const SystemModel& sys, Level level, Method method,
                      std::span<const Vector> measurements, const OmegaPolicy& policy, std::size_t iteration,
                      const std::vector<std::vector<double>>* replay)
{
    const std::size_t n = topology.n_agents();
    if (agents.size() != n || states.size() != n || measurements.size() != n) {
        throw DimensionMismatch("run_round: agents, states and measurements must match the topology size");
    }
    if (replay && replay->size() != n) {
        throw DimensionMismatch("run_round: replayed omegas must have one entry per agent");
    }
    validate_level_method(level, method);

    std::vector<PreparedStep> prepared;
    prepared.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        try {
            prepared.push_back(prepare_step(agents[i], states[i], sys, level, measurements[i]));
        } catch (const Error& e) {
            throw AgentError(i, e.what());
        }
    }

    RoundResult result;
    result.outbox.reserve(n);
    for (auto& p : prepared) {
        result.outbox.push_back(p.message);
    }

    // Barrier: every message exists before anyone fuses.
    const OmegaChooser policy_chooser = chooser_for(policy);
    result.states.reserve(n);
    result.log.iteration = iteration;
    result.log.omegas.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto inbox = inbox_for(topology, i, result.outbox);
        result.log.messages_exchanged += inbox.size();
        OmegaChooser choose = policy_chooser;
        if (replay) {
            choose = [w = (*replay)[i]](const FusionProblem&) { return w; };
        }
        try {
            FusedState fused = finish_step(prepared[i], inbox, sys, level, method, choose);
            result.states.push_back(std::move(fused.state));
            result.log.omegas[i] = std::move(fused.omega);
        } catch (const Error& e) {
            throw AgentError(i, e.what());
        }
    }
    result.log.snapshots = result.states;
    return result;
}

}  // namespace esci
