#include <doctest.h>

#include <cmath>
#include <vector>

#include "cnalloc/traffic.hpp"

using namespace cnalloc;
using namespace cnalloc::traffic;

TEST_SUITE("traffic") {

TEST_CASE("video chunks arrive in the first steps of each cycle") {
    auto p = ServiceProfile::defaults(ServiceKind::video);
    p.cycle_length = 10;
    p.chunk_steps = 4;
    p.file_size = 8.0;
    Rng rng(1);
    for (std::uint64_t step = 1; step <= 30; ++step) {
        const auto r = generate(p, step, rng);
        const std::uint64_t pos = (step - 1) % 10;
        if (pos < 4) {
            REQUIRE(r.size() == 1);
            CHECK(r[0].size == to_quanta(2.0));
            CHECK(r[0].completes_file == (pos == 3));
        } else {
            CHECK(r.empty());
        }
    }
    CHECK(cycle_start(p, 1));
    CHECK(cycle_start(p, 11));
    CHECK_FALSE(cycle_start(p, 10));
}

TEST_CASE("voice sends one fixed packet per step") {
    auto p = ServiceProfile::defaults(ServiceKind::voice);
    Rng rng(1);
    for (std::uint64_t step = 1; step <= 20; ++step) {
        const auto r = generate(p, step, rng);
        REQUIRE(r.size() == 1);
        CHECK(r[0].size == to_quanta(p.packet_size));
    }
    CHECK(generate(p, 1, rng, 2.0)[0].size == to_quanta(2.0 * p.packet_size));
    CHECK(generate(p, 1, rng, 0.0).empty());
}

TEST_CASE("chat arrivals are Poisson with uniform sizes") {
    auto p = ServiceProfile::defaults(ServiceKind::chat);
    p.arrival_rate = 2.0;
    Rng rng(5);
    const int steps = 20000;
    double count = 0.0;
    for (int s = 1; s <= steps; ++s) {
        for (const auto& r : generate(p, static_cast<std::uint64_t>(s), rng)) {
            count += 1.0;
            CHECK(r.size >= to_quanta(p.size_min));
            CHECK(r.size <= to_quanta(p.size_max));
        }
    }
    const double mean = 2.0 * steps;
    CHECK(std::abs(count - mean) < 3.0 * std::sqrt(mean));
}

TEST_CASE("a request of exactly one step's capacity completes with latency one step") {
    RequestQueue q;
    q.enqueue(Request{4, to_quanta(1.5), false});
    const auto r = q.serve(1.5, 1.0, 4);
    CHECK(r.completed == 1);
    CHECK(r.mean_latency == 1.0);
    CHECK(q.pending() == 0);
    CHECK(q.backlog() == 0);
}

TEST_CASE("latency counts whole steps from arrival") {
    RequestQueue q;
    q.enqueue(Request{1, to_quanta(2.5), false});
    CHECK(q.serve(1.0, 1.0, 1).completed == 0);
    CHECK(q.serve(1.0, 1.0, 2).completed == 0);
    const auto r = q.serve(1.0, 1.0, 3);
    REQUIRE(r.completed == 1);
    CHECK(r.mean_latency == 3.0);
    CHECK(r.served == to_quanta(0.5));

    RequestQueue idle;
    CHECK(idle.serve(1.0, 0.5, 1).mean_latency == 0.5);
}

TEST_CASE("service is first in, first out") {
    RequestQueue q;
    q.enqueue(Request{1, to_quanta(1.0), false});
    q.enqueue(Request{2, to_quanta(0.2), false});
    q.enqueue(Request{2, to_quanta(0.3), true});
    const auto r = q.serve(1.3, 1.0, 2);
    REQUIRE(r.completed == 2);
    CHECK(r.completions[0].arrival_step == 1);
    CHECK(r.completions[1].size == to_quanta(0.2));
    CHECK_FALSE(r.file_completed);
    const auto r2 = q.serve(1.0, 1.0, 3);
    REQUIRE(r2.completed == 1);
    CHECK(r2.file_completed);
    CHECK(r2.completions[0].latency == 2.0);
}

TEST_CASE("arrived data equals served data plus backlog") {
    Rng rng(17);
    std::uniform_real_distribution<double> bw(0.05, 3.0);
    for (auto kind : {ServiceKind::video, ServiceKind::voice, ServiceKind::chat}) {
        SliceTraffic slice(ServiceProfile::defaults(kind), make_stream(3, Stream::traffic));
        Quanta arrived = 0;
        for (std::uint64_t step = 1; step <= 2000; ++step) {
            const auto s = slice.step(step, bw(rng), 1.0, 1.0);
            arrived += to_quanta(s.arrived);
            CHECK(s.serve.served <= s.serve.capacity);
        }
        const auto& q = slice.queue();
        CHECK(arrived == q.total_served() + q.backlog());
        CHECK(q.total_completed_size() <= q.total_served());
    }
}

TEST_CASE("more bandwidth never completes less") {
    for (auto kind : {ServiceKind::video, ServiceKind::voice, ServiceKind::chat}) {
        std::size_t previous = 0;
        for (double k : {0.1, 0.3, 0.6, 1.0, 2.0, 4.0}) {
            SliceTraffic slice(ServiceProfile::defaults(kind), make_stream(8, Stream::traffic));
            std::size_t done = 0;
            for (std::uint64_t step = 1; step <= 500; ++step) done += slice.step(step, k, 1.0, 1.0).completed;
            CHECK(done >= previous);
            previous = done;
        }
    }
}

TEST_CASE("the video flag is raised by the current file and cleared at each cycle") {
    auto p = ServiceProfile::defaults(ServiceKind::video);
    p.cycle_length = 5;
    p.chunk_steps = 2;
    p.file_size = 2.0;

    SliceTraffic fast(p, Rng(1));
    CHECK(fast.step(1, 10.0, 1.0, 1.0).video_flag == 0);
    CHECK(fast.step(2, 10.0, 1.0, 1.0).video_flag == 1);
    CHECK(fast.step(5, 10.0, 1.0, 1.0).video_flag == 1);
    CHECK(fast.step(6, 10.0, 1.0, 1.0).video_flag == 0);

    // At 0.3 units per step the first file finishes during step 7, in the next cycle.
    SliceTraffic slow(p, Rng(1));
    int raised = 0;
    for (std::uint64_t step = 1; step <= 9; ++step) raised += slow.step(step, 0.3, 1.0, 1.0).video_flag;
    CHECK(raised == 0);
}

TEST_CASE("invalid profiles and inputs are rejected") {
    auto p = ServiceProfile::defaults(ServiceKind::video);
    p.chunk_steps = 20;
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    CHECK_THROWS_AS(to_quanta(-1.0), std::invalid_argument);
    RequestQueue q;
    CHECK_THROWS_AS(q.serve(0.0, 1.0, 1), std::invalid_argument);
    CHECK_THROWS_AS(q.enqueue(Request{1, 0, false}), std::invalid_argument);
    CHECK_THROWS_AS(service_from_string("audio"), std::invalid_argument);
    nlohmann::json j = ServiceProfile::defaults(ServiceKind::chat);
    CHECK(j.get<ServiceProfile>().arrival_rate == 2.0);
}

}
