#include "cnalloc/mec.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace cnalloc::mec {

namespace {

void require(bool ok, const std::string& message) {
    if (!ok) {
        throw std::invalid_argument("mec: " + message);
    }
}

std::string type_name(ServerType t) { return t == ServerType::gnb ? "gNB" : "eNB"; }

ServerType type_from_name(const std::string& s) {
    if (s == "gNB" || s == "gnb") return ServerType::gnb;
    if (s == "eNB" || s == "enb") return ServerType::enb;
    throw std::invalid_argument("mec: unknown server type '" + s + "'");
}

void check_arrivals(const EdgeTopology& topology, const TaskArrival& arrivals) {
    require(arrivals.sizes.size() == topology.size(), "arrivals need one size per server");
    for (double s : arrivals.sizes) {
        require(std::isfinite(s) && s >= 0.0, "task sizes must be finite and non-negative");
    }
}

double overflow_of(const EdgeTopology& t, const TaskArrival& a, std::size_t i) {
    return split_task(a.sizes[i], t.servers[i].capacity, t.tau, t.cycles_per_bit).overflow;
}

}  // namespace

double EdgeTopology::local_capacity(std::size_t i) const { return tau * servers.at(i).capacity / cycles_per_bit; }

bool EdgeTopology::adjacent(std::size_t i, std::size_t j) const {
    const auto& n = neighbors.at(i);
    return std::binary_search(n.begin(), n.end(), j);
}

double EdgeTopology::min_link_rate() const {
    double r = core_rate;
    for (std::size_t i = 0; i < size(); ++i) {
        for (std::size_t j : neighbors[i]) r = std::min(r, link_rate[i][j]);
    }
    return r;
}

void EdgeTopology::validate() const {
    const std::size_t n = size();
    require(n >= 1, "topology needs at least one server");
    require(neighbors.size() == n && link_rate.size() == n, "neighbor and link tables must cover every server");
    require(core_rate > 0.0 && tau > 0.0 && cycles_per_bit > 0.0, "R_c, tau and v must be positive");
    for (std::size_t i = 0; i < n; ++i) {
        require(servers[i].capacity > 0.0, "server capacities must be positive");
        require(link_rate[i].size() == n, "link-rate matrix must be square");
        require(std::is_sorted(neighbors[i].begin(), neighbors[i].end()) &&
                    std::adjacent_find(neighbors[i].begin(), neighbors[i].end()) == neighbors[i].end(),
                "neighbor lists must be sorted and unique");
        for (std::size_t j : neighbors[i]) {
            require(j < n && j != i, "neighbor index out of range or self-loop");
            require(adjacent(j, i), "neighbor relation must be symmetric");
            require(link_rate[i][j] > 0.0, "neighbor links need a positive rate");
        }
    }
}

EdgeTopology EdgeTopology::from_edges(std::vector<EdgeServer> servers,
                                      const std::vector<std::pair<std::size_t, std::size_t>>& edges, double link_rate,
                                      double core_rate, double tau, double cycles_per_bit) {
    EdgeTopology t;
    const std::size_t n = servers.size();
    t.servers = std::move(servers);
    t.neighbors.assign(n, {});
    t.link_rate.assign(n, std::vector<double>(n, 0.0));
    for (auto [a, b] : edges) {
        require(a < n && b < n && a != b, "edge endpoints out of range");
        t.neighbors[a].push_back(b);
        t.neighbors[b].push_back(a);
        t.link_rate[a][b] = link_rate;
        t.link_rate[b][a] = link_rate;
    }
    for (auto& nb : t.neighbors) {
        std::sort(nb.begin(), nb.end());
        nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
    }
    t.core_rate = core_rate;
    t.tau = tau;
    t.cycles_per_bit = cycles_per_bit;
    t.validate();
    return t;
}

EdgeTopology EdgeTopology::table2_default() {
    const EdgeServer enb_a{1000.0, 'A', ServerType::enb};
    const EdgeServer gnb_a{3000.0, 'A', ServerType::gnb};
    const EdgeServer enb_b{1000.0, 'B', ServerType::enb};
    const EdgeServer gnb_b{3000.0, 'B', ServerType::gnb};
    // 1:A eNB, 2:B eNB, 3:A gNB, 4:A eNB, 5:B gNB, 6:B eNB, 7:A gNB
    std::vector<EdgeServer> servers{enb_a, enb_b, gnb_a, enb_a, gnb_b, enb_b, gnb_a};
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    for (std::size_t i = 0; i < servers.size(); ++i) {
        for (std::size_t j = i + 1; j < servers.size(); ++j) {
            if (servers[i].area == servers[j].area) edges.emplace_back(i, j);
        }
    }
    edges.emplace_back(2, 4);  // area bridge
    return from_edges(std::move(servers), edges, 600.0, 150.0, 0.1, 10.0);
}

SplitResult split_task(double size, double capacity, double tau, double cycles_per_bit) {
    const double local_cap = tau * capacity / cycles_per_bit;
    if (size <= local_cap) {
        return {size, 0.0};
    }
    return {local_cap, size - local_cap};
}

double latency_local(double size, double capacity, double cycles_per_bit) { return cycles_per_bit * size / capacity; }

double latency_core(double overflow, double tau, double core_rate) { return tau + overflow / core_rate; }

double latency_offload(double overflow, double tau, double link_rate, double target_capacity, double cycles_per_bit) {
    return tau + overflow / link_rate + cycles_per_bit * overflow / target_capacity;
}

long long OffloadChoice::code() const {
    switch (kind) {
        case Kind::noop:
            return -2;
        case Kind::core:
            return -1;
        case Kind::neighbor:
            break;
    }
    return static_cast<long long>(target);
}

OffloadChoice OffloadChoice::from_code(long long code) {
    if (code == -2) return noop();
    if (code == -1) return core();
    if (code < -2) throw std::invalid_argument("mec: invalid choice code");
    return neighbor(static_cast<std::size_t>(code));
}

ContentionResult contention_resolve(std::span<const OffloadRequest> requests, const EdgeTopology& topology,
                                    const TaskArrival& arrivals) {
    check_arrivals(topology, arrivals);
    const double v = topology.cycles_per_bit;
    ContentionResult result;
    result.accepted.assign(topology.size(), std::nullopt);
    std::vector<std::optional<std::size_t>> best(topology.size());  // index into requests
    for (std::size_t r = 0; r < requests.size(); ++r) {
        const auto& req = requests[r];
        require(req.target < topology.size() && req.source < topology.size(), "request endpoints out of range");
        const std::size_t j = req.target;
        const bool target_busy = overflow_of(topology, arrivals, j) > 0.0;
        const bool fits = v * req.overflow <= topology.tau * topology.servers[j].capacity - v * arrivals.sizes[j];
        if (target_busy || !fits) {
            continue;
        }
        auto& cur = best[j];
        if (!cur || req.overflow > requests[*cur].overflow ||
            (req.overflow == requests[*cur].overflow && req.source < requests[*cur].source)) {
            cur = r;
        }
    }
    for (std::size_t r = 0; r < requests.size(); ++r) {
        const std::size_t j = requests[r].target;
        if (best[j] && *best[j] == r) {
            result.accepted[j] = requests[r].source;
        } else {
            result.rejected.push_back(requests[r].source);
        }
    }
    std::sort(result.rejected.begin(), result.rejected.end());
    return result;
}

SlotOutcome evaluate_slot(const EdgeTopology& topology, const TaskArrival& arrivals, const JointAction& action) {
    check_arrivals(topology, arrivals);
    const std::size_t n = topology.size();
    require(action.size() == n, "joint action needs one choice per server");
    const double v = topology.cycles_per_bit;

    SlotOutcome out;
    out.servers.resize(n);
    out.latency.resize(n);
    out.accepted_per_target.assign(n, 0);
    std::vector<OffloadRequest> requests;
    for (std::size_t i = 0; i < n; ++i) {
        const double overflow = overflow_of(topology, arrivals, i);
        const auto& choice = action[i];
        auto& s = out.servers[i];
        s.overflow = overflow;
        if (overflow <= 0.0) {
            require(choice.kind == OffloadChoice::Kind::noop,
                    "server " + std::to_string(i) + " has no overflow and must take the no-op choice");
            s.route = Route::local;
            s.latency = latency_local(arrivals.sizes[i], topology.servers[i].capacity, v);
            continue;
        }
        switch (choice.kind) {
            case OffloadChoice::Kind::noop:
                throw std::invalid_argument("mec: server " + std::to_string(i) +
                                            " overflows and must send the excess to the core or a neighbor");
            case OffloadChoice::Kind::core:
                s.route = Route::core;
                break;
            case OffloadChoice::Kind::neighbor:
                require(choice.target < n && topology.adjacent(i, choice.target),
                        "server " + std::to_string(i) + " chose " + std::to_string(choice.target) +
                            ", which is not one of its neighbors");
                requests.push_back({i, choice.target, overflow});
                s.route = Route::neighbor;
                s.target = choice.target;
                break;
        }
    }
    const ContentionResult contention = contention_resolve(requests, topology, arrivals);
    for (std::size_t src : contention.rejected) {
        out.servers[src].route = Route::core;
        out.servers[src].rerouted = true;
    }
    for (std::size_t j = 0; j < n; ++j) {
        if (contention.accepted[j]) ++out.accepted_per_target[j];
    }
    for (std::size_t i = 0; i < n; ++i) {
        auto& s = out.servers[i];
        if (s.route == Route::core) {
            s.latency = latency_core(s.overflow, topology.tau, topology.core_rate);
        } else if (s.route == Route::neighbor) {
            s.latency = latency_offload(s.overflow, topology.tau, topology.link_rate[i][s.target],
                                        topology.servers[s.target].capacity, v);
        }
        out.latency[i] = s.latency;
    }
    out.max_latency = *std::max_element(out.latency.begin(), out.latency.end());
    return out;
}

std::size_t count_actions(const EdgeTopology& topology, const TaskArrival& arrivals) {
    check_arrivals(topology, arrivals);
    std::size_t count = 1;
    for (std::size_t i = 0; i < topology.size(); ++i) {
        if (overflow_of(topology, arrivals, i) > 0.0) {
            const std::size_t k = 1 + topology.neighbors[i].size();
            if (count > std::numeric_limits<std::size_t>::max() / k) {
                return std::numeric_limits<std::size_t>::max();
            }
            count *= k;
        }
    }
    return count;
}

std::vector<JointAction> enumerate_actions(const EdgeTopology& topology, const TaskArrival& arrivals,
                                           std::size_t ceiling) {
    const std::size_t count = count_actions(topology, arrivals);
    if (count > ceiling) {
        throw ActionSpaceTooLarge("mec: " + std::to_string(count) + " joint actions exceed the ceiling of " +
                                  std::to_string(ceiling) + "; shrink the instance (fewer overflowing servers or "
                                  "neighbors) or raise action_ceiling");
    }
    const std::size_t n = topology.size();
    std::vector<std::vector<OffloadChoice>> options(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (overflow_of(topology, arrivals, i) > 0.0) {
            options[i].push_back(OffloadChoice::core());
            for (std::size_t j : topology.neighbors[i]) options[i].push_back(OffloadChoice::neighbor(j));
        } else {
            options[i].push_back(OffloadChoice::noop());
        }
    }
    std::vector<JointAction> out;
    out.reserve(count);
    std::vector<std::size_t> digit(n, 0);
    for (std::size_t c = 0; c < count; ++c) {
        JointAction a(n);
        for (std::size_t i = 0; i < n; ++i) a[i] = options[i][digit[i]];
        out.push_back(std::move(a));
        for (std::size_t i = n; i-- > 0;) {
            if (++digit[i] < options[i].size()) break;
            digit[i] = 0;
        }
    }
    return out;
}

OptimalAction brute_force_optimal(const EdgeTopology& topology, const TaskArrival& arrivals, std::size_t ceiling) {
    const auto actions = enumerate_actions(topology, arrivals, ceiling);
    OptimalAction best;
    best.max_latency = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < actions.size(); ++k) {
        const double l = evaluate_slot(topology, arrivals, actions[k]).max_latency;
        if (l < best.max_latency) {
            best.max_latency = l;
            best.index = k;
        }
    }
    best.action = actions[best.index];
    return best;
}

JointAction rra(const EdgeTopology& topology, const TaskArrival& arrivals, Rng& rng) {
    check_arrivals(topology, arrivals);
    JointAction a(topology.size(), OffloadChoice::noop());
    for (std::size_t i = 0; i < topology.size(); ++i) {
        if (overflow_of(topology, arrivals, i) > 0.0) {
            std::uniform_int_distribution<std::size_t> pick(0, topology.neighbors[i].size());
            const std::size_t d = pick(rng);
            a[i] = d == 0 ? OffloadChoice::core() : OffloadChoice::neighbor(topology.neighbors[i][d - 1]);
        }
    }
    return a;
}

JointActionSpace::JointActionSpace(const EdgeTopology& topology, std::vector<bool> may_overflow) {
    require(may_overflow.size() == topology.size(), "capability mask needs one flag per server");
    radix_.resize(topology.size());
    for (std::size_t i = 0; i < topology.size(); ++i) {
        radix_[i] = may_overflow[i] ? 1 + topology.neighbors[i].size() : 1;
        if (size_ > kDefaultActionCeiling / radix_[i]) {
            throw ActionSpaceTooLarge("mec: joint action space exceeds the ceiling");
        }
        size_ *= radix_[i];
    }
}

std::vector<std::size_t> JointActionSpace::digits(std::size_t index) const {
    if (index >= size_) {
        throw std::out_of_range("JointActionSpace: index out of range");
    }
    std::vector<std::size_t> d(radix_.size());
    for (std::size_t i = radix_.size(); i-- > 0;) {
        d[i] = index % radix_[i];
        index /= radix_[i];
    }
    return d;
}

JointAction JointActionSpace::realize(std::size_t index, const EdgeTopology& topology,
                                      const TaskArrival& arrivals) const {
    const auto d = digits(index);
    JointAction a(topology.size(), OffloadChoice::noop());
    for (std::size_t i = 0; i < topology.size(); ++i) {
        if (overflow_of(topology, arrivals, i) <= 0.0) continue;
        // A server flagged as never overflowing that does overflow goes to the core.
        a[i] = d[i] == 0 ? OffloadChoice::core() : OffloadChoice::neighbor(topology.neighbors[i][d[i] - 1]);
    }
    return a;
}

std::size_t JointActionSpace::encode(const JointAction& action, const EdgeTopology& topology) const {
    require(action.size() == radix_.size(), "joint action width mismatch");
    std::size_t index = 0;
    for (std::size_t i = 0; i < radix_.size(); ++i) {
        std::size_t d = 0;
        if (action[i].kind == OffloadChoice::Kind::neighbor) {
            const auto& nb = topology.neighbors[i];
            const auto it = std::lower_bound(nb.begin(), nb.end(), action[i].target);
            require(it != nb.end() && *it == action[i].target, "encode: target is not a neighbor");
            d = 1 + static_cast<std::size_t>(it - nb.begin());
        }
        if (d >= radix_[i]) d = 0;
        index = index * radix_[i] + d;
    }
    return index;
}

double ArrivalModel::max_size(std::size_t i) const {
    return mode == Mode::fixed ? fixed_sizes.at(i) : high.at(i);
}

TaskArrival ArrivalModel::draw(Rng& rng) const {
    TaskArrival a;
    if (mode == Mode::fixed) {
        a.sizes = fixed_sizes;
        return a;
    }
    a.sizes.resize(low.size());
    for (std::size_t i = 0; i < low.size(); ++i) {
        std::uniform_real_distribution<double> u(low[i], high[i]);
        a.sizes[i] = u(rng);
    }
    return a;
}

double MecConfig::effective_latency_ref() const {
    if (latency_ref > 0.0) return latency_ref;
    double max_size = 0.0;
    for (std::size_t i = 0; i < topology.size(); ++i) max_size = std::max(max_size, arrivals.max_size(i));
    return 2.0 * topology.tau + max_size / topology.min_link_rate();
}

std::vector<bool> MecConfig::may_overflow() const {
    std::vector<bool> out(topology.size());
    for (std::size_t i = 0; i < topology.size(); ++i) {
        out[i] = arrivals.max_size(i) > topology.local_capacity(i);
    }
    return out;
}

void MecConfig::validate() const {
    topology.validate();
    const std::size_t n = topology.size();
    if (arrivals.mode == ArrivalModel::Mode::fixed) {
        require(arrivals.fixed_sizes.size() == n, "fixed arrivals need one size per server");
        for (double s : arrivals.fixed_sizes) require(s >= 0.0, "task sizes must be non-negative");
    } else {
        require(arrivals.low.size() == n && arrivals.high.size() == n, "uniform arrivals need bounds per server");
        for (std::size_t i = 0; i < n; ++i) {
            require(arrivals.low[i] >= 0.0 && arrivals.low[i] <= arrivals.high[i], "arrival bounds must satisfy 0 <= low <= high");
        }
    }
    require(latency_ref >= 0.0, "latency_ref must be non-negative");
    require(action_ceiling >= 1, "action_ceiling must be positive");
}

MecConfig MecConfig::table2_default() {
    MecConfig c;
    c.topology = EdgeTopology::table2_default();
    c.arrivals.mode = ArrivalModel::Mode::uniform;
    for (const auto& s : c.topology.servers) {
        c.arrivals.low.push_back(s.area == 'A' ? 8.0 : 2.0);
        c.arrivals.high.push_back(s.area == 'A' ? 30.0 : 10.0);
    }
    return c;
}

MecConfig MecConfig::small_fixed_default() {
    MecConfig c;
    const EdgeServer enb{1000.0, 'A', ServerType::enb};
    const EdgeServer gnb{3000.0, 'A', ServerType::gnb};
    c.topology = EdgeTopology::from_edges({enb, enb, enb, gnb}, {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}}, 600.0,
                                          150.0, 0.1, 10.0);
    c.arrivals.mode = ArrivalModel::Mode::fixed;
    c.arrivals.fixed_sizes = {25.0, 16.0, 14.0, 8.0};
    return c;
}

void to_json(nlohmann::json& j, const MecConfig& c) {
    nlohmann::json servers = nlohmann::json::array();
    for (const auto& s : c.topology.servers) {
        servers.push_back({{"capacity", s.capacity}, {"area", std::string(1, s.area)}, {"type", type_name(s.type)}});
    }
    nlohmann::json links = nlohmann::json::array();
    for (std::size_t i = 0; i < c.topology.size(); ++i) {
        for (std::size_t jn : c.topology.neighbors[i]) {
            if (i < jn) links.push_back({{"a", i}, {"b", jn}, {"rate", c.topology.link_rate[i][jn]}});
        }
    }
    nlohmann::json arrivals;
    if (c.arrivals.mode == ArrivalModel::Mode::fixed) {
        arrivals = {{"mode", "fixed"}, {"sizes", c.arrivals.fixed_sizes}};
    } else {
        arrivals = {{"mode", "uniform"}, {"low", c.arrivals.low}, {"high", c.arrivals.high}, {"hold", c.arrivals.hold}};
    }
    j = {{"servers", servers},
         {"links", links},
         {"core_rate", c.topology.core_rate},
         {"tau", c.topology.tau},
         {"cycles_per_bit", c.topology.cycles_per_bit},
         {"arrivals", arrivals},
         {"latency_ref", c.latency_ref},
         {"action_ceiling", c.action_ceiling}};
}

void from_json(const nlohmann::json& j, MecConfig& c) {
    const std::string preset = j.value("preset", std::string("table2"));
    if (preset == "table2") {
        c = MecConfig::table2_default();
    } else if (preset == "small4") {
        c = MecConfig::small_fixed_default();
    } else {
        throw std::invalid_argument("mec: unknown preset '" + preset + "'");
    }
    auto& t = c.topology;
    t.core_rate = j.value("core_rate", t.core_rate);
    t.tau = j.value("tau", t.tau);
    t.cycles_per_bit = j.value("cycles_per_bit", t.cycles_per_bit);
    if (j.contains("servers")) {
        std::vector<EdgeServer> servers;
        for (const auto& s : j.at("servers")) {
            EdgeServer e;
            e.type = type_from_name(s.value("type", std::string("eNB")));
            e.capacity = s.value("capacity", e.type == ServerType::gnb ? 3000.0 : 1000.0);
            const auto area = s.value("area", std::string("A"));
            require(area.size() == 1, "area must be a single letter");
            e.area = area[0];
            servers.push_back(e);
        }
        const double default_rate = j.value("link_rate", 600.0);
        std::vector<std::pair<std::size_t, std::size_t>> edges;
        std::vector<double> rates;
        for (const auto& l : j.at("links")) {
            edges.emplace_back(l.at("a").get<std::size_t>(), l.at("b").get<std::size_t>());
            rates.push_back(l.value("rate", default_rate));
        }
        t = EdgeTopology::from_edges(std::move(servers), edges, default_rate, t.core_rate, t.tau, t.cycles_per_bit);
        for (std::size_t e = 0; e < edges.size(); ++e) {
            t.link_rate[edges[e].first][edges[e].second] = rates[e];
            t.link_rate[edges[e].second][edges[e].first] = rates[e];
        }
    } else if (j.contains("link_rate")) {
        const double rate = j.at("link_rate").get<double>();
        for (std::size_t i = 0; i < t.size(); ++i) {
            for (std::size_t jn : t.neighbors[i]) t.link_rate[i][jn] = rate;
        }
    }
    if (j.contains("arrivals")) {
        const auto& a = j.at("arrivals");
        const std::string mode = a.value("mode", std::string("uniform"));
        if (mode == "fixed") {
            c.arrivals.mode = ArrivalModel::Mode::fixed;
            c.arrivals.fixed_sizes = a.at("sizes").get<std::vector<double>>();
        } else if (mode == "uniform") {
            c.arrivals.mode = ArrivalModel::Mode::uniform;
            c.arrivals.hold = a.value("hold", false);
            if (a.contains("low")) {
                c.arrivals.low = a.at("low").get<std::vector<double>>();
                c.arrivals.high = a.at("high").get<std::vector<double>>();
            } else {
                // Per-area bounds: {"area_bounds": {"A": [8, 30], "B": [2, 10]}}
                const auto& bounds = a.at("area_bounds");
                c.arrivals.low.clear();
                c.arrivals.high.clear();
                for (const auto& s : t.servers) {
                    const auto b = bounds.at(std::string(1, s.area)).get<std::vector<double>>();
                    require(b.size() == 2, "area bounds must be [low, high]");
                    c.arrivals.low.push_back(b[0]);
                    c.arrivals.high.push_back(b[1]);
                }
            }
        } else {
            throw std::invalid_argument("mec: arrivals.mode must be 'fixed' or 'uniform'");
        }
    }
    c.latency_ref = j.value("latency_ref", c.latency_ref);
    c.action_ceiling = j.value("action_ceiling", c.action_ceiling);
    c.validate();
}

std::vector<double> MecObservation::flatten() const {
    std::vector<double> out;
    for (std::size_t i = 0; i < latency.size(); ++i) {
        out.push_back(latency[i]);
        out.insert(out.end(), last_choice[i].begin(), last_choice[i].end());
    }
    return out;
}

MecEnv::MecEnv(MecConfig config, std::uint64_t seed)
    : config_(std::move(config)), seed_(seed), rng_(make_stream(seed, Stream::environment)) {
    config_.validate();
}

std::size_t MecEnv::observation_size() const {
    std::size_t n = 0;
    for (const auto& nb : config_.topology.neighbors) n += 1 + nb.size() + 2;
    return n;
}

MecObservation MecEnv::observe(const SlotOutcome* outcome, const JointAction* action) const {
    const auto& t = config_.topology;
    const double ref = config_.effective_latency_ref();
    MecObservation obs;
    obs.latency.assign(t.size(), 0.0);
    obs.last_choice.resize(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) {
        const std::size_t width = t.neighbors[i].size() + 2;
        obs.last_choice[i].assign(width, 0.0);
        std::size_t hot = width - 1;  // no-op
        if (outcome != nullptr) {
            obs.latency[i] = std::clamp(outcome->latency[i] / ref, 0.0, 1.0);
            const auto& c = (*action)[i];
            if (c.kind == OffloadChoice::Kind::core) {
                hot = 0;
            } else if (c.kind == OffloadChoice::Kind::neighbor) {
                const auto& nb = t.neighbors[i];
                hot = 1 + static_cast<std::size_t>(std::lower_bound(nb.begin(), nb.end(), c.target) - nb.begin());
            }
        }
        obs.last_choice[i][hot] = 1.0;
    }
    return obs;
}

MecObservation MecEnv::reset() {
    rng_ = make_stream(seed_, Stream::environment);
    slot_ = 0;
    current_ = config_.arrivals.draw(rng_);
    ready_ = true;
    return observe(nullptr, nullptr);
}

const TaskArrival& MecEnv::current_arrivals() const {
    if (!ready_) {
        throw std::logic_error("MecEnv: reset() has not been called");
    }
    return current_;
}

MecStep MecEnv::step(const JointAction& action) {
    if (!ready_) {
        throw std::logic_error("MecEnv::step called before reset");
    }
    MecStep out;
    out.slot = ++slot_;
    out.arrivals = current_;
    out.action = action;
    out.outcome = evaluate_slot(config_.topology, current_, action);
    out.observation = observe(&out.outcome, &action);
    if (!config_.arrivals.hold) current_ = config_.arrivals.draw(rng_);
    return out;
}

}  // namespace cnalloc::mec
