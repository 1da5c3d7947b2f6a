#include "diag.hpp"
#include "runtime.hpp"

#include <doctest.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <map>
#include <random>
#include <set>
#include <thread>
#include <vector>

using namespace kz;
using namespace kz::rt;

namespace {

// Runs a worksharing loop over [0, n) with step 1 and records how often each
// index executes, teamwide.
std::vector<int> coverage(ScheduleKind kind, int64_t chunk, int64_t n, int threads) {
    const size_t count = size_t(n);
    std::vector<std::atomic<int>> hits(count);
    for (auto& h : hits) h.store(0);
    fork_call(threads, [&](ThreadContext& ctx) {
        if (kind == ScheduleKind::static_sched || kind == ScheduleKind::unspecified) {
            StaticPlan plan = static_init(ctx, 0, n, CmpOp::lt, 1, chunk);
            for (int64_t lb = plan.lower; lb < plan.trip; lb += plan.stride) {
                int64_t hi = std::min(lb + plan.length, plan.trip);
                for (int64_t i = lb; i < hi; ++i) hits[size_t(i)]++;
            }
            static_fini(ctx, false);
        } else {
            dispatch_init(ctx, kind, 0, n, CmpOp::lt, 1, chunk, false);
            while (auto c = dispatch_next(ctx)) {
                for (int64_t i = c->first; i < c->second; ++i) hits[size_t(i)]++;
            }
        }
    });
    std::vector<int> out(count);
    for (size_t i = 0; i < count; ++i) out[i] = hits[i].load();
    return out;
}

} // namespace

TEST_CASE("fork_call invokes the function once per thread and joins") {
    std::atomic<int> counter{0};
    fork_call(4, [&](ThreadContext& ctx) {
        CHECK(ctx.team->size() == 4);
        counter++;
    });
    CHECK(counter.load() == 4);
}

TEST_CASE("a team of one is equivalent to calling inline") {
    int value = 0;
    fork_call(1, [&](ThreadContext& ctx) {
        CHECK(ctx.tid == 0);
        CHECK(get_num_threads() == 1);
        value = 42;
    });
    CHECK(value == 42);
}

TEST_CASE("OMP_NUM_THREADS picks the team size when nothing is requested") {
    testing_clear_num_threads();
    setenv("OMP_NUM_THREADS", "3", 1);
    std::atomic<int> seen{0};
    fork_call(0, [&](ThreadContext&) {
        if (get_num_threads() == 3) seen++;
    });
    CHECK(seen.load() == 3);
    unsetenv("OMP_NUM_THREADS");
}

TEST_CASE("thread ids form a permutation of 0..T-1") {
    std::atomic<uint32_t> mask{0};
    fork_call(4, [&](ThreadContext&) {
        mask.fetch_or(1u << get_thread_num());
    });
    CHECK(mask.load() == 0xFu);
}

TEST_CASE("static_init splits 10 iterations over 4 threads as [3,3,2,2] in order") {
    std::vector<std::pair<int64_t, int64_t>> blocks(4);
    fork_call(4, [&](ThreadContext& ctx) {
        StaticPlan plan = static_init(ctx, 0, 10, CmpOp::lt, 1, 0);
        blocks[size_t(ctx.tid)] = {plan.lower, plan.length};
        static_fini(ctx, false);
    });
    CHECK(blocks[0] == std::pair<int64_t, int64_t>{0, 3});
    CHECK(blocks[1] == std::pair<int64_t, int64_t>{3, 3});
    CHECK(blocks[2] == std::pair<int64_t, int64_t>{6, 2});
    CHECK(blocks[3] == std::pair<int64_t, int64_t>{8, 2});
}

TEST_CASE("static chunk 1 deals iterations round-robin: thread t owns {t, t+4}") {
    std::map<int, std::vector<int64_t>> owned;
    std::mutex m;
    fork_call(4, [&](ThreadContext& ctx) {
        StaticPlan plan = static_init(ctx, 0, 8, CmpOp::lt, 1, 1);
        std::vector<int64_t> mine;
        for (int64_t lb = plan.lower; lb < plan.trip; lb += plan.stride) {
            int64_t hi = std::min(lb + plan.length, plan.trip);
            for (int64_t i = lb; i < hi; ++i) mine.push_back(i);
        }
        static_fini(ctx, false);
        std::lock_guard lock(m);
        owned[ctx.tid] = mine;
    });
    for (int t = 0; t < 4; ++t) {
        CHECK(owned[t] == std::vector<int64_t>{t, t + 4});
    }
}

TEST_CASE("empty ranges produce no work but still hit the barrier") {
    auto hits = coverage(ScheduleKind::static_sched, 0, 0, 4);
    CHECK(hits.empty());
    hits = coverage(ScheduleKind::dynamic, 1, 0, 4);
    CHECK(hits.empty());
}

TEST_CASE("worksharing covers every index exactly once across schedules") {
    struct Config {
        ScheduleKind kind;
        int64_t chunk;
    };
    for (Config cfg : {Config{ScheduleKind::static_sched, 0},
                       Config{ScheduleKind::static_sched, 1},
                       Config{ScheduleKind::static_sched, 7},
                       Config{ScheduleKind::dynamic, 1},
                       Config{ScheduleKind::dynamic, 5},
                       Config{ScheduleKind::guided, 1},
                       Config{ScheduleKind::guided, 4}}) {
        for (int64_t n : {1, 10, 1000}) {
            for (int threads : {1, 2, 4, 8}) {
                auto hits = coverage(cfg.kind, cfg.chunk, n, threads);
                for (int64_t i = 0; i < n; ++i) {
                    REQUIRE(hits[size_t(i)] == 1);
                }
            }
        }
    }
}

TEST_CASE("normalize_trip handles all comparison operators and directions") {
    CHECK(normalize_trip(0, 10, CmpOp::lt, 2) == 5);
    CHECK(normalize_trip(0, 10, CmpOp::le, 2) == 6);
    CHECK(normalize_trip(10, 0, CmpOp::gt, -1) == 10);
    CHECK(normalize_trip(10, 0, CmpOp::ge, -1) == 11);
    CHECK(normalize_trip(5, 5, CmpOp::lt, 1) == 0);
    CHECK_THROWS_AS(normalize_trip(0, 10, CmpOp::lt, 0), RuntimeError);
    CHECK_THROWS_AS(normalize_trip(0, 10, CmpOp::lt, -1), RuntimeError);
}

TEST_CASE("static_fini without nowait is a barrier") {
    const auto start = std::chrono::steady_clock::now();
    std::vector<double> done(4, 0.0);
    fork_call(4, [&](ThreadContext& ctx) {
        StaticPlan plan = static_init(ctx, 0, 4, CmpOp::lt, 1, 0);
        (void)plan;
        if (ctx.tid == 0) {
            std::this_thread::sleep_for(std::chrono::milliseconds(50));
        }
        static_fini(ctx, false);
        done[size_t(ctx.tid)] =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    });
    for (double t : done) {
        CHECK(t >= 0.050);
    }
}

TEST_CASE("nowait lets fast threads proceed while one still works") {
    std::atomic<int> passed{0};
    std::atomic<int> observed_by_sleeper{-1};
    fork_call(4, [&](ThreadContext& ctx) {
        StaticPlan plan = static_init(ctx, 0, 4, CmpOp::lt, 1, 0);
        (void)plan;
        if (ctx.tid == 0) {
            std::this_thread::sleep_for(std::chrono::milliseconds(150));
            observed_by_sleeper.store(passed.load());
        }
        static_fini(ctx, true);
        passed++;
        barrier();
    });
    // the three non-sleeping threads passed their fini before the sleeper woke
    CHECK(observed_by_sleeper.load() == 3);
}

TEST_CASE("dynamic dispatch carves fixed chunks: sizes 3,3,3,1 for N=10") {
    std::mutex m;
    std::multiset<int64_t> sizes;
    fork_call(2, [&](ThreadContext& ctx) {
        dispatch_init(ctx, ScheduleKind::dynamic, 0, 10, CmpOp::lt, 1, 3, false);
        while (auto c = dispatch_next(ctx)) {
            std::lock_guard lock(m);
            sizes.insert(c->second - c->first);
        }
    });
    CHECK(sizes == std::multiset<int64_t>{1, 3, 3, 3});
}

TEST_CASE("dynamic chunk defaults to 1 when unspecified") {
    std::atomic<int64_t> max_grab{0};
    fork_call(4, [&](ThreadContext& ctx) {
        dispatch_init(ctx, ScheduleKind::dynamic, 0, 64, CmpOp::lt, 1, 0, false);
        while (auto c = dispatch_next(ctx)) {
            int64_t size = c->second - c->first;
            int64_t seen = max_grab.load();
            while (seen < size && !max_grab.compare_exchange_weak(seen, size)) {
            }
        }
    });
    CHECK(max_grab.load() == 1);
}

TEST_CASE("guided first grab is ceil(N/T)") {
    std::atomic<int64_t> first_size{0};
    fork_call(4, [&](ThreadContext& ctx) {
        dispatch_init(ctx, ScheduleKind::guided, 0, 100, CmpOp::lt, 1, 1, false);
        while (auto c = dispatch_next(ctx)) {
            if (c->first == 0) first_size.store(c->second - c->first);
        }
    });
    CHECK(first_size.load() == 25);
}

TEST_CASE("dispatch on an empty range returns nothing") {
    fork_call(2, [&](ThreadContext& ctx) {
        dispatch_init(ctx, ScheduleKind::dynamic, 0, 0, CmpOp::lt, 1, 1, false);
        CHECK(!dispatch_next(ctx).has_value());
    });
}

TEST_CASE("schedule(runtime) resolves via OMP_SCHEDULE") {
    setenv("OMP_SCHEDULE", "dynamic,5", 1);
    std::mutex m;
    std::multiset<int64_t> sizes;
    fork_call(2, [&](ThreadContext& ctx) {
        dispatch_init(ctx, ScheduleKind::runtime, 0, 20, CmpOp::lt, 1, 0, false);
        while (auto c = dispatch_next(ctx)) {
            std::lock_guard lock(m);
            sizes.insert(c->second - c->first);
        }
    });
    CHECK(sizes == std::multiset<int64_t>{5, 5, 5, 5});
    unsetenv("OMP_SCHEDULE");
}

TEST_CASE("runtime schedule defaults to static blocks when OMP_SCHEDULE is unset") {
    unsetenv("OMP_SCHEDULE");
    auto hits = coverage(ScheduleKind::runtime, 0, 100, 4);
    for (int h : hits) CHECK(h == 1);
}

TEST_CASE("malformed OMP_SCHEDULE values fall back to the default") {
    setenv("OMP_SCHEDULE", "fibonacci,banana", 1);
    auto hits = coverage(ScheduleKind::runtime, 0, 64, 4);
    for (int h : hits) CHECK(h == 1);
    unsetenv("OMP_SCHEDULE");
}

TEST_CASE("mismatched dispatch_init bounds violate the contract") {
    std::atomic<bool> raised{false};
    try {
        fork_call(2, [&](ThreadContext& ctx) {
            int64_t upper = ctx.tid == 0 ? 10 : 20;
            dispatch_init(ctx, ScheduleKind::dynamic, 0, upper, CmpOp::lt, 1, 1, false);
            while (dispatch_next(ctx)) {
            }
        });
    } catch (RuntimeError&) {
        raised = true;
    }
    CHECK(raised.load());
}

TEST_CASE("static_fini without a matching init is rejected") {
    bool raised = false;
    try {
        fork_call(1, [&](ThreadContext& ctx) { static_fini(ctx, false); });
    } catch (RuntimeError&) {
        raised = true;
    }
    CHECK(raised);
}

TEST_CASE("barrier releases all threads only after the last arrival") {
    // phase counters: all threads observe the same value after each barrier
    std::atomic<int> phase{0};
    std::atomic<bool> mismatch{false};
    std::mt19937 seed_rng(7);
    std::vector<int> delays(8);
    for (auto& d : delays) d = int(seed_rng() % 3);
    fork_call(8, [&](ThreadContext& ctx) {
        for (int round = 0; round < 20; ++round) {
            std::this_thread::sleep_for(std::chrono::microseconds(delays[size_t(ctx.tid)]));
            barrier();
            if (ctx.tid == 0) phase++;
            barrier();
            if (phase.load() != round + 1) mismatch = true;
        }
    });
    CHECK(!mismatch.load());
    CHECK(phase.load() == 20);
}

TEST_CASE("atomic rmw applies native operations") {
    Cell cell{std::bit_cast<uint64_t>(int64_t(3))};
    CHECK(atomic_rmw_i64(cell, ReductionOp::add, 5) == 8);
    CHECK(atomic_rmw_i64(cell, ReductionOp::min, 4) == 4);
    CHECK(atomic_rmw_i64(cell, ReductionOp::min, 9) == 4);
    CHECK(atomic_rmw_i64(cell, ReductionOp::max, 11) == 11);
    CHECK(atomic_rmw_i64(cell, ReductionOp::bit_and, 3) == 3);
    CHECK(atomic_rmw_i64(cell, ReductionOp::bit_or, 8) == 11);
    CHECK(atomic_rmw_i64(cell, ReductionOp::bit_xor, 1) == 10);

    Cell fcell{std::bit_cast<uint64_t>(2.5)};
    CHECK(atomic_rmw_f64(fcell, ReductionOp::add, 0.5) == 3.0);
    CHECK(atomic_rmw_f64(fcell, ReductionOp::max, 7.0) == 7.0);
}

TEST_CASE("8 threads x 100000 atomic increments add up exactly") {
    Cell cell{0};
    fork_call(8, [&](ThreadContext&) {
        for (int i = 0; i < 100000; ++i) {
            atomic_rmw_i64(cell, ReductionOp::add, 1);
        }
    });
    CHECK(std::bit_cast<int64_t>(cell.load()) == 800000);
}

TEST_CASE("cas_reduce implements multiply and logical operations") {
    Cell cell{std::bit_cast<uint64_t>(int64_t(3))};
    CHECK(atomic_rmw_i64(cell, ReductionOp::multiply, 5) == 15);

    Cell flag{uint64_t(1)};
    CHECK(atomic_rmw_bool(flag, ReductionOp::logical_and, false) == false);
    CHECK(atomic_rmw_bool(flag, ReductionOp::logical_or, true) == true);
}

TEST_CASE("concurrent CAS multiplications commute: 8 threads x2 from 1 is 256") {
    for (int rep = 0; rep < 20; ++rep) {
        Cell cell{std::bit_cast<uint64_t>(int64_t(1))};
        fork_call(8, [&](ThreadContext&) {
            atomic_rmw_i64(cell, ReductionOp::multiply, 2);
        });
        REQUIRE(std::bit_cast<int64_t>(cell.load()) == 256);
    }
}

TEST_CASE("folding the identity with any value yields the value") {
    std::mt19937_64 rng(11);
    for (int i = 0; i < 200; ++i) {
        int64_t v = int64_t(rng());
        for (ReductionOp op : {ReductionOp::add, ReductionOp::subtract, ReductionOp::multiply,
                               ReductionOp::min, ReductionOp::max, ReductionOp::bit_and,
                               ReductionOp::bit_or, ReductionOp::bit_xor}) {
            int64_t id = identity_i64(op);
            int64_t folded;
            switch (op) {
            case ReductionOp::add:
            case ReductionOp::subtract: folded = int64_t(uint64_t(id) + uint64_t(v)); break;
            case ReductionOp::multiply: folded = int64_t(uint64_t(id) * uint64_t(v)); break;
            case ReductionOp::min: folded = std::min(id, v); break;
            case ReductionOp::max: folded = std::max(id, v); break;
            case ReductionOp::bit_and: folded = id & v; break;
            case ReductionOp::bit_or: folded = id | v; break;
            default: folded = id ^ v; break;
            }
            REQUIRE(folded == v);
        }
        double f = double(int64_t(rng() % 1000000)) * 0.37;
        CHECK(identity_f64(ReductionOp::add) + f == f);
        CHECK(identity_f64(ReductionOp::multiply) * f == f);
        CHECK(std::min(identity_f64(ReductionOp::min), f) == f);
        CHECK(std::max(identity_f64(ReductionOp::max), f) == f);
    }
    CHECK((identity_bool(ReductionOp::logical_and) && true) == true);
    CHECK((identity_bool(ReductionOp::logical_or) || false) == false);
}

TEST_CASE("user API values are consistent inside and outside teams") {
    CHECK(get_thread_num() == 0);
    CHECK(get_num_threads() == 1);
    CHECK_THROWS_AS(set_num_threads(0), std::invalid_argument);

    double t1 = get_wtime();
    double t2 = get_wtime();
    CHECK(t2 >= t1);

    set_num_threads(3);
    CHECK(get_max_threads() == 3);
    testing_clear_num_threads();
}

TEST_CASE("nested forks serialize with a team of one") {
    std::atomic<int> inner_sizes{0};
    fork_call(4, [&](ThreadContext&) {
        fork_call(0, [&](ThreadContext& inner) {
            CHECK(inner.team->size() == 1);
            CHECK(get_thread_num() == 0);
            inner_sizes++;
        });
    });
    CHECK(inner_sizes.load() == 4);
}

TEST_CASE("an error on one thread aborts the team without hanging") {
    bool raised = false;
    try {
        fork_call(4, [&](ThreadContext& ctx) {
            if (ctx.tid == 0) {
                throw RuntimeError("injected failure", 0);
            }
            // other threads block on a barrier the failing thread never reaches
            barrier();
        });
    } catch (RuntimeError& e) {
        raised = true;
        CHECK(std::string(e.what()) == "injected failure");
    }
    CHECK(raised);
}
