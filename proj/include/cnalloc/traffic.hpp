#pragma once

// Per-slice workload generators (video, voice, chat) and a fluid FIFO queue
// served at the slice's allocated bandwidth.
//
// Data amounts are tracked in integer quanta (1e-6 data unit) so that the
// bookkeeping of served versus completed data is exact.

#include <cstddef>
#include <cstdint>
#include <deque>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cnalloc/random.hpp"

namespace cnalloc::traffic {

using Quanta = std::int64_t;
inline constexpr double kQuantaPerUnit = 1e6;

Quanta to_quanta(double units);
double to_units(Quanta q);

enum class ServiceKind { video, voice, chat };

std::string_view to_string(ServiceKind kind) noexcept;
ServiceKind service_from_string(std::string_view name);

struct ServiceProfile {
    ServiceKind kind = ServiceKind::voice;
    // video: one file per cycle, split into chunk_steps equal chunks sent in
    // the first chunk_steps steps of the cycle.
    std::size_t cycle_length = 10;
    std::size_t chunk_steps = 4;
    double file_size = 8.0;
    // voice: one packet of this size every step.
    double packet_size = 0.5;
    // chat: Poisson(arrival_rate) requests per step, sizes uniform on [size_min, size_max].
    double arrival_rate = 2.0;
    double size_min = 0.1;
    double size_max = 0.5;

    void validate() const;
    static ServiceProfile defaults(ServiceKind kind);
};

void to_json(nlohmann::json& j, const ServiceProfile& p);
void from_json(const nlohmann::json& j, ServiceProfile& p);

struct Request {
    std::uint64_t arrival_step = 0;
    Quanta size = 0;
    bool completes_file = false;  // last chunk of a video cycle
};

/// New requests for `step` (1-based). load_scale multiplies request sizes for
/// video and voice and the arrival rate for chat.
std::vector<Request> generate(const ServiceProfile& profile, std::uint64_t step, Rng& rng, double load_scale = 1.0);

/// True when `step` opens a new video cycle.
bool cycle_start(const ServiceProfile& profile, std::uint64_t step);

struct Completion {
    std::uint64_t arrival_step = 0;
    Quanta size = 0;
    double latency = 0.0;  // time units
    bool completes_file = false;
};

struct ServeResult {
    std::size_t completed = 0;     // r_i
    double mean_latency = 0.0;     // l_i, in time units
    bool file_completed = false;   // a video file finished during this step
    Quanta served = 0;             // data drained this step
    Quanta capacity = 0;           // k_i * step_duration
    std::vector<Completion> completions;
};

/// Fluid FIFO queue for one slice.
class RequestQueue {
public:
    void enqueue(const Request& request);
    void enqueue(const std::vector<Request>& requests);

    /// Drains up to bandwidth * step_duration data in arrival order. Arrivals
    /// land at the start of a step and completions are stamped at its end, so
    /// a request served within its arrival step has latency one step_duration.
    /// When nothing completes, mean_latency is step_duration.
    ServeResult serve(double bandwidth, double step_duration, std::uint64_t step);

    std::size_t pending() const noexcept { return queue_.size(); }
    Quanta backlog() const noexcept { return backlog_; }
    Quanta total_served() const noexcept { return total_served_; }
    Quanta total_completed_size() const noexcept { return total_completed_; }

private:
    struct Pending {
        Request request;
        Quanta remaining = 0;
    };
    std::deque<Pending> queue_;
    Quanta backlog_ = 0;
    Quanta total_served_ = 0;
    Quanta total_completed_ = 0;
};

/// Generator + queue + the video completion flag for one slice.
class SliceTraffic {
public:
    SliceTraffic(ServiceProfile profile, Rng rng);

    struct StepStats {
        std::size_t completed = 0;
        double mean_latency = 0.0;
        int video_flag = 0;  // f_i
        double arrived = 0.0;  // data units offered this step
        ServeResult serve;
    };

    StepStats step(std::uint64_t step, double bandwidth, double step_duration, double load_scale);

    const ServiceProfile& profile() const noexcept { return profile_; }
    const RequestQueue& queue() const noexcept { return queue_; }
    int video_flag() const noexcept { return flag_; }

private:
    ServiceProfile profile_;
    Rng rng_;
    RequestQueue queue_;
    int flag_ = 0;
};

}  // namespace cnalloc::traffic
