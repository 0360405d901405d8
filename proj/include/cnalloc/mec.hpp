#pragma once

// Edge-computing offloading model. Each slot every server receives a task; the
// part that does not fit its per-slot compute budget (overflow) goes either to
// the core or to one neighbouring server. Latency is evaluated per server and
// the slot metric is the maximum over servers.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cnalloc/random.hpp"

namespace cnalloc::mec {

enum class ServerType { enb, gnb };

struct EdgeServer {
    double capacity = 1000.0;  // C_i, cycles per time unit
    char area = 'A';
    ServerType type = ServerType::enb;
};

struct EdgeTopology {
    std::vector<EdgeServer> servers;
    std::vector<std::vector<std::size_t>> neighbors;  // sorted ascending, 0-based
    std::vector<std::vector<double>> link_rate;       // R_{i,j}; 0 where not adjacent
    double core_rate = 150.0;                         // R_c
    double tau = 0.1;                                 // per-slot compute bound
    double cycles_per_bit = 10.0;                     // v

    std::size_t size() const noexcept { return servers.size(); }
    /// tau * C_i / v: the largest task server i finishes within tau.
    double local_capacity(std::size_t i) const;
    bool adjacent(std::size_t i, std::size_t j) const;
    double min_link_rate() const;
    void validate() const;

    /// Builds a symmetric topology from an undirected edge list with one rate per edge.
    static EdgeTopology from_edges(std::vector<EdgeServer> servers,
                                   const std::vector<std::pair<std::size_t, std::size_t>>& edges, double link_rate,
                                   double core_rate, double tau, double cycles_per_bit);
    /// Seven servers, areas A/B, eNB/gNB types as in the reference table;
    /// same-area complete graph plus the 3<->5 bridge (1-based numbering).
    static EdgeTopology table2_default();
};

struct TaskArrival {
    std::vector<double> sizes;  // S_i for one slot
};

struct SplitResult {
    double local = 0.0;     // processed on the receiving server
    double overflow = 0.0;  // must leave the server
};

SplitResult split_task(double size, double capacity, double tau, double cycles_per_bit);
double latency_local(double size, double capacity, double cycles_per_bit);
double latency_core(double overflow, double tau, double core_rate);
double latency_offload(double overflow, double tau, double link_rate, double target_capacity, double cycles_per_bit);

struct OffloadChoice {
    enum class Kind { noop, core, neighbor };
    Kind kind = Kind::noop;
    std::size_t target = 0;  // meaningful for Kind::neighbor

    static OffloadChoice noop() { return {Kind::noop, 0}; }
    static OffloadChoice core() { return {Kind::core, 0}; }
    static OffloadChoice neighbor(std::size_t j) { return {Kind::neighbor, j}; }

    /// -2 no-op, -1 core, otherwise the 0-based neighbour index.
    long long code() const;
    static OffloadChoice from_code(long long code);

    bool operator==(const OffloadChoice&) const = default;
};

using JointAction = std::vector<OffloadChoice>;

struct OffloadRequest {
    std::size_t source = 0;
    std::size_t target = 0;
    double overflow = 0.0;
};

struct ContentionResult {
    std::vector<std::optional<std::size_t>> accepted;  // per target: accepted source
    std::vector<std::size_t> rejected;                 // sources sent to the core instead
};

/// Each target accepts at most one request per slot, only if it has no
/// overflow itself, and only a request whose overflow fits its spare capacity
/// (v * S_bar <= tau * C_j - v * S_j). Among those it takes the largest
/// overflow; ties go to the lowest source index.
ContentionResult contention_resolve(std::span<const OffloadRequest> requests, const EdgeTopology& topology,
                                    const TaskArrival& arrivals);

enum class Route { local, core, neighbor };

struct ServerOutcome {
    Route route = Route::local;
    std::size_t target = 0;   // accepting neighbour when route == neighbor
    double overflow = 0.0;
    double latency = 0.0;
    bool rerouted = false;    // asked for a neighbour, ended at the core
};

struct SlotOutcome {
    std::vector<ServerOutcome> servers;
    std::vector<double> latency;
    double max_latency = 0.0;
    std::vector<std::size_t> accepted_per_target;
};

/// Pure latency evaluation of one joint action; throws std::invalid_argument
/// for choices that are not valid under these arrivals.
SlotOutcome evaluate_slot(const EdgeTopology& topology, const TaskArrival& arrivals, const JointAction& action);

/// Thrown when the joint action set would exceed the configured ceiling.
class ActionSpaceTooLarge : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

inline constexpr std::size_t kDefaultActionCeiling = 1'000'000;

std::size_t count_actions(const EdgeTopology& topology, const TaskArrival& arrivals);

/// Cartesian product over servers of {core} + neighbours for overflowing
/// servers and {no-op} otherwise, lexicographic with server 0 most significant
/// and core before neighbours.
std::vector<JointAction> enumerate_actions(const EdgeTopology& topology, const TaskArrival& arrivals,
                                           std::size_t ceiling = kDefaultActionCeiling);

struct OptimalAction {
    JointAction action;
    double max_latency = 0.0;
    std::size_t index = 0;  // position in enumerate_actions order
};

OptimalAction brute_force_optimal(const EdgeTopology& topology, const TaskArrival& arrivals,
                                  std::size_t ceiling = kDefaultActionCeiling);

/// Uniform choice over {core} + neighbours for each overflowing server.
JointAction rra(const EdgeTopology& topology, const TaskArrival& arrivals, Rng& rng);

/// Fixed joint-action index space for the Q-network. Servers that can ever
/// overflow get a digit over {core} + neighbours; the rest get a single slot.
/// A digit is ignored (realized as no-op) in slots where its server fits.
class JointActionSpace {
public:
    JointActionSpace(const EdgeTopology& topology, std::vector<bool> may_overflow);

    std::size_t size() const noexcept { return size_; }
    std::vector<std::size_t> digits(std::size_t index) const;
    JointAction realize(std::size_t index, const EdgeTopology& topology, const TaskArrival& arrivals) const;
    /// Inverse of realize for a valid joint action (no-op maps to digit 0).
    std::size_t encode(const JointAction& action, const EdgeTopology& topology) const;

private:
    std::vector<std::size_t> radix_;
    std::size_t size_ = 1;
};

struct ArrivalModel {
    enum class Mode { fixed, uniform };
    Mode mode = Mode::uniform;
    std::vector<double> fixed_sizes;        // fixed mode
    std::vector<double> low, high;          // uniform mode, per server
    bool hold = false;                      // uniform mode: draw once per episode, then repeat

    double max_size(std::size_t i) const;
    TaskArrival draw(Rng& rng) const;
};

struct MecConfig {
    EdgeTopology topology;
    ArrivalModel arrivals;
    double latency_ref = 0.0;  // 0 -> 2 tau + max S / min R
    std::size_t action_ceiling = kDefaultActionCeiling;

    double effective_latency_ref() const;
    std::vector<bool> may_overflow() const;
    void validate() const;

    /// Reference seven-server layout; area A arrivals U[8, 30], area B U[2, 10].
    static MecConfig table2_default();
    /// Four servers with fixed arrivals and 64 joint actions.
    static MecConfig small_fixed_default();
};

void to_json(nlohmann::json& j, const MecConfig& c);
void from_json(const nlohmann::json& j, MecConfig& c);

/// Per server: previous latency / L_ref (clipped to [0, 1]) and the previous
/// choice one-hot over {core} + neighbours + {no-op}.
struct MecObservation {
    std::vector<double> latency;
    std::vector<std::vector<double>> last_choice;

    std::vector<double> flatten() const;
};

struct MecStep {
    std::uint64_t slot = 0;
    TaskArrival arrivals;
    JointAction action;
    SlotOutcome outcome;
    MecObservation observation;
};

class MecEnv {
public:
    MecEnv(MecConfig config, std::uint64_t seed);

    const MecConfig& config() const noexcept { return config_; }
    const EdgeTopology& topology() const noexcept { return config_.topology; }
    std::size_t observation_size() const;
    std::uint64_t slots_taken() const noexcept { return slot_; }

    MecObservation reset();
    const TaskArrival& current_arrivals() const;
    MecStep step(const JointAction& action);

private:
    MecObservation observe(const SlotOutcome* outcome, const JointAction* action) const;

    MecConfig config_;
    std::uint64_t seed_;
    Rng rng_;
    TaskArrival current_;
    std::uint64_t slot_ = 0;
    bool ready_ = false;
};

}  // namespace cnalloc::mec
