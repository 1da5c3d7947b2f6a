#pragma once

#include "clauses.hpp"

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <optional>

namespace kz::rt {

// Fork-join thread-team runtime. A lazily created worker pool backs every
// team; the forking thread always participates as thread 0. Nested forks
// from inside an active team run serialized with a team of size 1.
//
// Environment: OMP_NUM_THREADS picks the default team size, OMP_SCHEDULE
// ("static|dynamic|guided[,chunk]") resolves schedule(runtime) loops.

enum class CmpOp : uint8_t { lt, le, gt, ge };

// Team barrier. Reusable across phases; abort() releases all current and
// future waiters, making arrive_and_wait return false.
class Barrier {
public:
    void reset(int size);
    bool arrive_and_wait();
    void abort();

private:
    std::mutex mutex_;
    std::condition_variable cv_;
    int size_ = 1;
    int arrived_ = 0;
    uint64_t generation_ = 0;
    bool aborted_ = false;
};

// Shared state of one in-flight worksharing loop, normalized to the
// iteration space [0, trip).
struct DispatchState {
    ScheduleKind kind = ScheduleKind::dynamic; // effective kind
    int64_t trip = 0;
    int64_t chunk = 1;
    bool nowait = false;
    std::atomic<int64_t> cursor{0};
    uint64_t seq = ~0ull;
    // signature for the identical-arguments contract check
    int64_t sig_lower = 0, sig_upper = 0, sig_step = 0;
    uint8_t sig_cmp = 0;
    std::mutex init_mutex;
};

class Team {
public:
    explicit Team(int size);

    int size() const { return size_; }
    bool failed() const { return error_.load(std::memory_order_acquire); }

    // Records the first real error and releases every blocked thread.
    void abort(std::exception_ptr error);
    std::exception_ptr first_error();

    Barrier& barrier() { return barrier_; }

    // Rotating dispatch slots: at most kDispatchSlots worksharing loops may
    // be in flight per team, i.e. chains of consecutive `nowait` loops
    // longer than kDispatchSlots - 1 are out of contract.
    static constexpr int kDispatchSlots = 8;
    DispatchState& slot(uint64_t seq) { return slots_[seq % kDispatchSlots]; }

private:
    int size_;
    Barrier barrier_;
    std::atomic<bool> error_{false};
    std::mutex error_mutex_;
    std::exception_ptr first_error_;
    DispatchState slots_[kDispatchSlots];
};

// Thrown inside team threads when another thread failed; unwinds to the
// fork boundary and is swallowed there.
struct TeamAborted {};

struct ThreadContext {
    Team* team = nullptr;
    int tid = 0;

    // worksharing bookkeeping
    uint64_t next_dispatch_seq = 0;
    DispatchState* current_loop = nullptr;
    bool in_static_loop = false;
    // per-thread cursors for schedule(runtime) resolving to static
    int64_t emul_pos = 0;
    bool emul_done = false;
};

// Context of the calling thread, or nullptr outside any team.
ThreadContext* current_context();

using TeamFn = std::function<void(ThreadContext&)>;

// Spawns/reuses a team of T threads (T = requested if > 0, else the
// set_num_threads value, else OMP_NUM_THREADS, else hardware concurrency),
// invokes `fn` once per thread and joins all threads before returning.
// Rethrows the first error raised by any team thread.
//
// One top-level fork at a time: calls from inside an active team serialize,
// but concurrent fork_call from unrelated OS threads is out of contract.
void fork_call(int requested_threads, const TeamFn& fn);

// ----- worksharing ---------------------------------------------------------

struct StaticPlan {
    int64_t trip = 0;   // total iterations in the normalized space
    int64_t lower = 0;  // this thread's first normalized index
    int64_t length = 0; // iterations per block
    int64_t stride = 0; // distance between successive block starts
};

// Number of iterations of (v = lower; v cmp upper; v += step). Throws on a
// zero step or a non-terminating combination.
int64_t normalize_trip(int64_t lower, int64_t upper, CmpOp cmp, int64_t step);

// chunk == 0: contiguous blocks, the first (trip mod T) threads get one
// extra iteration, in thread-id order. chunk > 0: round-robin, thread t owns
// chunks t, t+T, t+2T, ...
StaticPlan static_init(ThreadContext& ctx, int64_t lower, int64_t upper, CmpOp cmp,
                       int64_t step, int64_t chunk);

// Releases per-thread loop state and performs a team barrier unless nowait.
void static_fini(ThreadContext& ctx, bool nowait);

void dispatch_init(ThreadContext& ctx, ScheduleKind kind, int64_t lower, int64_t upper,
                   CmpOp cmp, int64_t step, int64_t chunk, bool nowait);

// Carves the next normalized chunk [lo, hi) off the shared cursor. After
// exhaustion an implicit barrier is performed unless the loop was lowered
// with nowait, and nullopt is returned.
std::optional<std::pair<int64_t, int64_t>> dispatch_next(ThreadContext& ctx);

// Team barrier; a no-op outside any team.
void barrier();

// ----- atomic cells ---------------------------------------------------------

// Shared numeric/boolean cells are std::atomic<uint64_t> holding the bit
// pattern of an i64, f64 or bool. Plain loads/stores use relaxed ordering;
// the RMW operations below are sequentially consistent.
using Cell = std::atomic<uint64_t>;

int64_t atomic_rmw_i64(Cell& cell, ReductionOp op, int64_t operand);
double atomic_rmw_f64(Cell& cell, ReductionOp op, double operand);
bool atomic_rmw_bool(Cell& cell, ReductionOp op, bool operand);

// Reduction identities; folding the identity with any value yields the value.
int64_t identity_i64(ReductionOp op);
double identity_f64(ReductionOp op);
bool identity_bool(ReductionOp op);

// ----- user-facing API -------------------------------------------------------

int get_thread_num();
int get_num_threads();
void set_num_threads(int n); // n < 1 is rejected with std::invalid_argument
int get_max_threads();
double get_wtime();

// Test support: forget the set_num_threads value so the environment lookup
// takes effect again.
void testing_clear_num_threads();

} // namespace kz::rt
