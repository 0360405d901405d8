#include "cnalloc/traffic.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace cnalloc::traffic {

Quanta to_quanta(double units) {
    if (!std::isfinite(units) || units < 0.0) {
        throw std::invalid_argument("traffic: data amounts must be finite and non-negative");
    }
    return static_cast<Quanta>(std::llround(units * kQuantaPerUnit));
}

double to_units(Quanta q) { return static_cast<double>(q) / kQuantaPerUnit; }

std::string_view to_string(ServiceKind kind) noexcept {
    switch (kind) {
        case ServiceKind::video:
            return "video";
        case ServiceKind::voice:
            return "voice";
        case ServiceKind::chat:
            return "chat";
    }
    return "voice";
}

ServiceKind service_from_string(std::string_view name) {
    if (name == "video") return ServiceKind::video;
    if (name == "voice") return ServiceKind::voice;
    if (name == "chat") return ServiceKind::chat;
    throw std::invalid_argument("unknown service kind '" + std::string(name) + "'");
}

void ServiceProfile::validate() const {
    switch (kind) {
        case ServiceKind::video:
            if (cycle_length < 2 || chunk_steps == 0 || chunk_steps > cycle_length || !(file_size > 0.0)) {
                throw std::invalid_argument(
                    "video profile: need cycle_length >= 2, 1 <= chunk_steps <= cycle_length, file_size > 0");
            }
            break;
        case ServiceKind::voice:
            if (!(packet_size > 0.0)) {
                throw std::invalid_argument("voice profile: packet_size must be positive");
            }
            break;
        case ServiceKind::chat:
            if (arrival_rate < 0.0 || !(size_min > 0.0) || size_max < size_min) {
                throw std::invalid_argument("chat profile: need arrival_rate >= 0 and 0 < size_min <= size_max");
            }
            break;
    }
}

ServiceProfile ServiceProfile::defaults(ServiceKind kind) {
    ServiceProfile p;
    p.kind = kind;
    return p;
}

void to_json(nlohmann::json& j, const ServiceProfile& p) {
    j = {{"kind", to_string(p.kind)}};
    switch (p.kind) {
        case ServiceKind::video:
            j["cycle_length"] = p.cycle_length;
            j["chunk_steps"] = p.chunk_steps;
            j["file_size"] = p.file_size;
            break;
        case ServiceKind::voice:
            j["packet_size"] = p.packet_size;
            break;
        case ServiceKind::chat:
            j["arrival_rate"] = p.arrival_rate;
            j["size_min"] = p.size_min;
            j["size_max"] = p.size_max;
            break;
    }
}

void from_json(const nlohmann::json& j, ServiceProfile& p) {
    p = ServiceProfile::defaults(service_from_string(j.at("kind").get<std::string>()));
    p.cycle_length = j.value("cycle_length", p.cycle_length);
    p.chunk_steps = j.value("chunk_steps", p.chunk_steps);
    p.file_size = j.value("file_size", p.file_size);
    p.packet_size = j.value("packet_size", p.packet_size);
    p.arrival_rate = j.value("arrival_rate", p.arrival_rate);
    p.size_min = j.value("size_min", p.size_min);
    p.size_max = j.value("size_max", p.size_max);
    p.validate();
}

bool cycle_start(const ServiceProfile& profile, std::uint64_t step) {
    return profile.kind == ServiceKind::video && step >= 1 && (step - 1) % profile.cycle_length == 0;
}

std::vector<Request> generate(const ServiceProfile& profile, std::uint64_t step, Rng& rng, double load_scale) {
    if (!(load_scale >= 0.0)) {
        throw std::invalid_argument("traffic: load_scale must be non-negative");
    }
    std::vector<Request> out;
    switch (profile.kind) {
        case ServiceKind::video: {
            const std::uint64_t pos = (step - 1) % profile.cycle_length;
            if (pos < profile.chunk_steps) {
                const double chunk = profile.file_size * load_scale / static_cast<double>(profile.chunk_steps);
                const Quanta q = to_quanta(chunk);
                if (q > 0) {
                    out.push_back({step, q, pos + 1 == profile.chunk_steps});
                }
            }
            break;
        }
        case ServiceKind::voice: {
            const Quanta q = to_quanta(profile.packet_size * load_scale);
            if (q > 0) {
                out.push_back({step, q, false});
            }
            break;
        }
        case ServiceKind::chat: {
            std::poisson_distribution<int> count(profile.arrival_rate * load_scale);
            std::uniform_real_distribution<double> size(profile.size_min, profile.size_max);
            const int n = profile.arrival_rate * load_scale > 0.0 ? count(rng) : 0;
            for (int i = 0; i < n; ++i) {
                const Quanta q = to_quanta(size(rng));
                if (q > 0) {
                    out.push_back({step, q, false});
                }
            }
            break;
        }
    }
    return out;
}

void RequestQueue::enqueue(const Request& request) {
    if (request.size <= 0) {
        throw std::invalid_argument("RequestQueue: request size must be positive");
    }
    queue_.push_back({request, request.size});
    backlog_ += request.size;
}

void RequestQueue::enqueue(const std::vector<Request>& requests) {
    for (const auto& r : requests) enqueue(r);
}

ServeResult RequestQueue::serve(double bandwidth, double step_duration, std::uint64_t step) {
    if (!(bandwidth > 0.0) || !(step_duration > 0.0)) {
        throw std::invalid_argument("RequestQueue::serve: bandwidth and step duration must be positive");
    }
    ServeResult result;
    result.capacity = to_quanta(bandwidth * step_duration);
    Quanta budget = result.capacity;
    double latency_sum = 0.0;
    while (budget > 0 && !queue_.empty()) {
        Pending& head = queue_.front();
        if (head.remaining > budget) {
            head.remaining -= budget;
            result.served += budget;
            budget = 0;
            break;
        }
        budget -= head.remaining;
        result.served += head.remaining;
        const double latency = static_cast<double>(step - head.request.arrival_step + 1) * step_duration;
        result.completions.push_back({head.request.arrival_step, head.request.size, latency, head.request.completes_file});
        latency_sum += latency;
        result.file_completed = result.file_completed || head.request.completes_file;
        total_completed_ += head.request.size;
        queue_.pop_front();
    }
    backlog_ -= result.served;
    total_served_ += result.served;
    result.completed = result.completions.size();
    result.mean_latency =
        result.completed > 0 ? latency_sum / static_cast<double>(result.completed) : step_duration;
    return result;
}

SliceTraffic::SliceTraffic(ServiceProfile profile, Rng rng) : profile_(std::move(profile)), rng_(std::move(rng)) {
    profile_.validate();
}

SliceTraffic::StepStats SliceTraffic::step(std::uint64_t step, double bandwidth, double step_duration,
                                           double load_scale) {
    if (cycle_start(profile_, step)) {
        flag_ = 0;
    }
    const auto arrivals = generate(profile_, step, rng_, load_scale);
    StepStats stats;
    for (const auto& r : arrivals) stats.arrived += to_units(r.size);
    queue_.enqueue(arrivals);
    stats.serve = queue_.serve(bandwidth, step_duration, step);
    if (profile_.kind == ServiceKind::video) {
        // Only the current cycle's file raises the flag; a late file from an
        // earlier cycle does not.
        const std::uint64_t cycle = (step - 1) / profile_.cycle_length;
        for (const auto& c : stats.serve.completions) {
            if (c.completes_file && (c.arrival_step - 1) / profile_.cycle_length == cycle) {
                flag_ = 1;
            }
        }
    }
    stats.completed = stats.serve.completed;
    stats.mean_latency = stats.serve.mean_latency;
    stats.video_flag = flag_;
    return stats;
}

}  // namespace cnalloc::traffic
