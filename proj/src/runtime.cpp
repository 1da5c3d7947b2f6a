#include "runtime.hpp"

#include "diag.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <string_view>
#include <thread>
#include <vector>

namespace kz::rt {

namespace {

thread_local ThreadContext* g_ctx = nullptr;
std::atomic<int> g_requested_threads{0}; // set_num_threads value, 0 = unset

int parse_positive_int(const char* text) {
    if (text == nullptr) return 0;
    int value = 0;
    auto [ptr, ec] = std::from_chars(text, text + std::strlen(text), value);
    if (ec != std::errc() || *ptr != '\0' || value < 1) return 0;
    return value;
}

int resolve_team_size(int requested) {
    if (requested > 0) return requested;
    if (int set = g_requested_threads.load(std::memory_order_relaxed); set > 0) return set;
    if (int env = parse_positive_int(std::getenv("OMP_NUM_THREADS")); env > 0) return env;
    unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? int(hw) : 1;
}

[[noreturn]] void contract_violation(const char* msg) {
    throw RuntimeError(msg, 0);
}

} // namespace

// ----- Barrier ---------------------------------------------------------------

void Barrier::reset(int size) {
    std::lock_guard lock(mutex_);
    size_ = size;
    arrived_ = 0;
    aborted_ = false;
}

bool Barrier::arrive_and_wait() {
    std::unique_lock lock(mutex_);
    if (aborted_) return false;
    if (++arrived_ == size_) {
        arrived_ = 0;
        ++generation_;
        cv_.notify_all();
        return true;
    }
    uint64_t gen = generation_;
    cv_.wait(lock, [&] { return generation_ != gen || aborted_; });
    return !aborted_;
}

void Barrier::abort() {
    std::lock_guard lock(mutex_);
    aborted_ = true;
    cv_.notify_all();
}

// ----- Team -------------------------------------------------------------------

Team::Team(int size) : size_(size) {
    barrier_.reset(size);
}

void Team::abort(std::exception_ptr error) {
    {
        std::lock_guard lock(error_mutex_);
        if (!first_error_) first_error_ = error;
    }
    error_.store(true, std::memory_order_release);
    barrier_.abort();
}

std::exception_ptr Team::first_error() {
    std::lock_guard lock(error_mutex_);
    return first_error_;
}

ThreadContext* current_context() { return g_ctx; }

// ----- worker pool -------------------------------------------------------------

namespace {

class WorkerPool {
public:
    ~WorkerPool() {
        {
            std::lock_guard lock(mutex_);
            shutdown_ = true;
        }
        cv_.notify_all();
        for (auto& w : workers_) w.join();
    }

    static WorkerPool& instance() {
        static WorkerPool pool;
        return pool;
    }

    // Runs `fn` on a team of team.size() threads; the caller is thread 0.
    void run(Team& team, const TeamFn& fn) {
        int helpers = team.size() - 1;
        ensure(helpers);
        {
            std::lock_guard lock(mutex_);
            job_fn_ = &fn;
            job_team_ = &team;
            job_helpers_ = helpers;
            remaining_ = helpers;
            ++job_generation_;
        }
        cv_.notify_all();

        ThreadContext ctx;
        ctx.team = &team;
        ctx.tid = 0;
        g_ctx = &ctx;
        try {
            fn(ctx);
        } catch (TeamAborted&) {
        } catch (...) {
            team.abort(std::current_exception());
        }
        g_ctx = nullptr;

        std::unique_lock lock(mutex_);
        done_cv_.wait(lock, [&] { return remaining_ == 0; });
        job_fn_ = nullptr;
    }

private:
    WorkerPool() = default;

    void ensure(int helpers) {
        std::lock_guard lock(mutex_);
        while (int(workers_.size()) < helpers) {
            int index = int(workers_.size());
            workers_.emplace_back([this, index] { worker_main(index); });
        }
    }

    void worker_main(int index) {
        uint64_t seen = 0;
        for (;;) {
            const TeamFn* fn;
            Team* team;
            int helpers;
            {
                std::unique_lock lock(mutex_);
                cv_.wait(lock, [&] { return job_generation_ != seen || shutdown_; });
                if (shutdown_) return;
                seen = job_generation_;
                fn = job_fn_;
                team = job_team_;
                helpers = job_helpers_;
            }
            if (index >= helpers) continue;

            ThreadContext ctx;
            ctx.team = team;
            ctx.tid = index + 1;
            g_ctx = &ctx;
            try {
                (*fn)(ctx);
            } catch (TeamAborted&) {
            } catch (...) {
                team->abort(std::current_exception());
            }
            g_ctx = nullptr;

            {
                std::lock_guard lock(mutex_);
                --remaining_;
            }
            done_cv_.notify_all();
        }
    }

    std::mutex mutex_;
    std::condition_variable cv_;
    std::condition_variable done_cv_;
    std::vector<std::thread> workers_;
    bool shutdown_ = false;
    uint64_t job_generation_ = 0;
    const TeamFn* job_fn_ = nullptr;
    Team* job_team_ = nullptr;
    int job_helpers_ = 0;
    int remaining_ = 0;
};

} // namespace

void fork_call(int requested_threads, const TeamFn& fn) {
    if (g_ctx != nullptr) {
        // Nested fork inside an active team: serialized with a team of 1.
        Team team(1);
        ThreadContext ctx;
        ctx.team = &team;
        ctx.tid = 0;
        ThreadContext* saved = g_ctx;
        g_ctx = &ctx;
        try {
            fn(ctx);
        } catch (...) {
            g_ctx = saved;
            throw;
        }
        g_ctx = saved;
        return;
    }

    Team team(resolve_team_size(requested_threads));
    WorkerPool::instance().run(team, fn);
    if (auto err = team.first_error()) std::rethrow_exception(err);
}

// ----- worksharing ---------------------------------------------------------------

int64_t normalize_trip(int64_t lower, int64_t upper, CmpOp cmp, int64_t step) {
    if (step == 0) {
        contract_violation("zero increment in worksharing loop");
    }
    bool ascending = cmp == CmpOp::lt || cmp == CmpOp::le;
    bool entered = false;
    switch (cmp) {
    case CmpOp::lt: entered = lower < upper; break;
    case CmpOp::le: entered = lower <= upper; break;
    case CmpOp::gt: entered = lower > upper; break;
    case CmpOp::ge: entered = lower >= upper; break;
    }
    if (!entered) return 0;
    if ((ascending && step < 0) || (!ascending && step > 0)) {
        contract_violation("worksharing loop does not terminate");
    }
    __int128 span = ascending ? (__int128)upper - lower : (__int128)lower - upper;
    __int128 magnitude = step > 0 ? step : -(__int128)step;
    __int128 trip;
    if (cmp == CmpOp::lt || cmp == CmpOp::gt) {
        trip = (span + magnitude - 1) / magnitude;
    } else {
        trip = span / magnitude + 1;
    }
    return int64_t(trip);
}

namespace {

// Contiguous block partition for the unchunked static schedule.
std::pair<int64_t, int64_t> static_block(int tid, int team, int64_t trip) {
    int64_t base = trip / team;
    int64_t rem = trip % team;
    if (tid < rem) {
        return {int64_t(tid) * (base + 1), base + 1};
    }
    return {rem * (base + 1) + (int64_t(tid) - rem) * base, base};
}

} // namespace

StaticPlan static_init(ThreadContext& ctx, int64_t lower, int64_t upper, CmpOp cmp,
                       int64_t step, int64_t chunk) {
    StaticPlan plan;
    plan.trip = normalize_trip(lower, upper, cmp, step);
    int team = ctx.team ? ctx.team->size() : 1;
    if (chunk <= 0) {
        auto [start, len] = static_block(ctx.tid, team, plan.trip);
        plan.lower = start;
        plan.length = len;
        plan.stride = plan.trip + 1; // single block: first advance exits the loop
    } else {
        plan.lower = int64_t(ctx.tid) * chunk;
        plan.length = chunk;
        plan.stride = int64_t(team) * chunk;
    }
    ctx.in_static_loop = true;
    return plan;
}

void static_fini(ThreadContext& ctx, bool nowait) {
    if (!ctx.in_static_loop) {
        contract_violation("static loop finalized without initialization");
    }
    ctx.in_static_loop = false;
    if (!nowait) barrier();
}

namespace {

struct RuntimeSchedule {
    ScheduleKind kind;
    int64_t chunk;
};

// Parses OMP_SCHEDULE ("kind[,chunk]"). Malformed values are reported once
// and fall back to static block semantics.
RuntimeSchedule resolve_runtime_schedule() {
    static std::atomic<bool> warned{false};
    const char* env = std::getenv("OMP_SCHEDULE");
    RuntimeSchedule fallback{ScheduleKind::static_sched, 0};
    if (env == nullptr || *env == '\0') return fallback;

    std::string_view text(env);
    std::string_view kind_text = text;
    int64_t chunk = 0;
    bool bad = false;
    if (auto comma = text.find(','); comma != std::string_view::npos) {
        kind_text = text.substr(0, comma);
        int parsed = parse_positive_int(std::string(text.substr(comma + 1)).c_str());
        if (parsed < 1) bad = true;
        chunk = parsed;
    }
    ScheduleKind kind = ScheduleKind::static_sched;
    if (kind_text == "static") {
        kind = ScheduleKind::static_sched;
    } else if (kind_text == "dynamic") {
        kind = ScheduleKind::dynamic;
    } else if (kind_text == "guided") {
        kind = ScheduleKind::guided;
    } else {
        bad = true;
    }
    if (bad) {
        if (!warned.exchange(true)) {
            std::fprintf(stderr, "kzomp: malformed OMP_SCHEDULE '%s', using static\n", env);
        }
        return fallback;
    }
    return RuntimeSchedule{kind, chunk};
}

} // namespace

void dispatch_init(ThreadContext& ctx, ScheduleKind kind, int64_t lower, int64_t upper,
                   CmpOp cmp, int64_t step, int64_t chunk, bool nowait) {
    int64_t trip = normalize_trip(lower, upper, cmp, step);

    ScheduleKind effective = kind;
    if (kind == ScheduleKind::runtime) {
        RuntimeSchedule rs = resolve_runtime_schedule();
        effective = rs.kind;
        chunk = rs.chunk;
    }
    if (effective == ScheduleKind::dynamic || effective == ScheduleKind::guided) {
        if (chunk <= 0) chunk = 1;
    }

    Team* team = ctx.team;
    uint64_t seq = ctx.next_dispatch_seq++;
    if (team == nullptr) {
        static thread_local DispatchState serial_slot;
        serial_slot.kind = effective;
        serial_slot.trip = trip;
        serial_slot.chunk = chunk;
        serial_slot.nowait = nowait;
        serial_slot.cursor.store(0, std::memory_order_relaxed);
        serial_slot.seq = seq;
        ctx.current_loop = &serial_slot;
        ctx.emul_pos = 0;
        ctx.emul_done = false;
        return;
    }

    DispatchState& slot = team->slot(seq);
    {
        std::lock_guard lock(slot.init_mutex);
        if (slot.seq != seq) {
            slot.kind = effective;
            slot.trip = trip;
            slot.chunk = chunk;
            slot.nowait = nowait;
            slot.cursor.store(0, std::memory_order_relaxed);
            slot.sig_lower = lower;
            slot.sig_upper = upper;
            slot.sig_step = step;
            slot.sig_cmp = uint8_t(cmp);
            slot.seq = seq;
        } else if (slot.sig_lower != lower || slot.sig_upper != upper ||
                   slot.sig_step != step || slot.sig_cmp != uint8_t(cmp)) {
            contract_violation("worksharing loop initialized with mismatched bounds");
        }
    }
    ctx.current_loop = &slot;
    ctx.emul_pos = 0;
    ctx.emul_done = false;
}

std::optional<std::pair<int64_t, int64_t>> dispatch_next(ThreadContext& ctx) {
    DispatchState* slot = ctx.current_loop;
    if (slot == nullptr) {
        contract_violation("dispatch_next without dispatch_init");
    }
    if (ctx.team != nullptr && ctx.team->failed()) {
        ctx.current_loop = nullptr;
        throw TeamAborted{};
    }

    int team = ctx.team ? ctx.team->size() : 1;
    int64_t trip = slot->trip;
    std::optional<std::pair<int64_t, int64_t>> result;

    switch (slot->kind) {
    case ScheduleKind::dynamic: {
        int64_t old = slot->cursor.fetch_add(slot->chunk);
        if (old < trip) {
            result = {{old, std::min(old + slot->chunk, trip)}};
        }
        break;
    }
    case ScheduleKind::guided: {
        int64_t old = slot->cursor.load();
        while (old < trip) {
            int64_t remaining = trip - old;
            int64_t size = std::max(slot->chunk, (remaining + team - 1) / team);
            size = std::min(size, remaining);
            if (slot->cursor.compare_exchange_weak(old, old + size)) {
                result = {{old, old + size}};
                break;
            }
        }
        break;
    }
    case ScheduleKind::static_sched:
    case ScheduleKind::unspecified: {
        // schedule(runtime) resolved to static: per-thread arithmetic only.
        if (slot->chunk <= 0) {
            if (!ctx.emul_done) {
                ctx.emul_done = true;
                auto [start, len] = static_block(ctx.tid, team, trip);
                if (len > 0) result = {{start, start + len}};
            }
        } else {
            int64_t start = (int64_t(ctx.tid) + ctx.emul_pos * int64_t(team)) * slot->chunk;
            if (start < trip) {
                ++ctx.emul_pos;
                result = {{start, std::min(start + slot->chunk, trip)}};
            }
        }
        break;
    }
    case ScheduleKind::runtime:
        contract_violation("runtime schedule was not resolved");
    }

    if (!result) {
        bool nowait = slot->nowait;
        ctx.current_loop = nullptr;
        if (!nowait) barrier();
    }
    return result;
}

void barrier() {
    ThreadContext* ctx = g_ctx;
    if (ctx == nullptr || ctx->team == nullptr || ctx->team->size() == 1) return;
    if (!ctx->team->barrier().arrive_and_wait()) {
        throw TeamAborted{};
    }
}

// ----- atomic cells ----------------------------------------------------------------

namespace {

int64_t as_i64(uint64_t bits) { return std::bit_cast<int64_t>(bits); }
uint64_t to_bits(int64_t v) { return std::bit_cast<uint64_t>(v); }
double as_f64(uint64_t bits) { return std::bit_cast<double>(bits); }
uint64_t to_bits(double v) { return std::bit_cast<uint64_t>(v); }

int64_t apply_i64(ReductionOp op, int64_t a, int64_t b) {
    switch (op) {
    case ReductionOp::multiply: return int64_t(uint64_t(a) * uint64_t(b));
    case ReductionOp::min: return std::min(a, b);
    case ReductionOp::max: return std::max(a, b);
    default: contract_violation("unsupported CAS-loop integer operation");
    }
}

double apply_f64(ReductionOp op, double a, double b) {
    switch (op) {
    case ReductionOp::add: return a + b;
    case ReductionOp::subtract: return a - b;
    case ReductionOp::multiply: return a * b;
    case ReductionOp::min: return std::min(a, b);
    case ReductionOp::max: return std::max(a, b);
    default: contract_violation("bitwise reduction on float cell");
    }
}

} // namespace

int64_t atomic_rmw_i64(Cell& cell, ReductionOp op, int64_t operand) {
    switch (op) {
    case ReductionOp::add:
        return int64_t(cell.fetch_add(to_bits(operand)) + to_bits(operand));
    case ReductionOp::subtract:
        return int64_t(cell.fetch_sub(to_bits(operand)) - to_bits(operand));
    case ReductionOp::bit_and:
        return as_i64(cell.fetch_and(to_bits(operand)) & to_bits(operand));
    case ReductionOp::bit_or:
        return as_i64(cell.fetch_or(to_bits(operand)) | to_bits(operand));
    case ReductionOp::bit_xor:
        return as_i64(cell.fetch_xor(to_bits(operand)) ^ to_bits(operand));
    default: {
        // min, max and multiply lack native fetch ops: retry with a CAS loop
        // until the exchange succeeds.
        uint64_t old_bits = cell.load();
        for (;;) {
            int64_t updated = apply_i64(op, as_i64(old_bits), operand);
            if (cell.compare_exchange_weak(old_bits, to_bits(updated))) {
                return updated;
            }
            // old_bits now holds the observed value; recompute and retry.
        }
    }
    }
}

double atomic_rmw_f64(Cell& cell, ReductionOp op, double operand) {
    // All f64 updates use a bit-pattern CAS loop. NaN operands poison
    // min/max results but cannot hang the loop.
    uint64_t old_bits = cell.load();
    for (;;) {
        double updated = apply_f64(op, as_f64(old_bits), operand);
        if (cell.compare_exchange_weak(old_bits, to_bits(updated))) {
            return updated;
        }
    }
}

bool atomic_rmw_bool(Cell& cell, ReductionOp op, bool operand) {
    switch (op) {
    case ReductionOp::logical_and:
    case ReductionOp::bit_and:
        return (cell.fetch_and(uint64_t(operand)) & uint64_t(operand)) != 0;
    case ReductionOp::logical_or:
    case ReductionOp::bit_or:
        return (cell.fetch_or(uint64_t(operand)) | uint64_t(operand)) != 0;
    case ReductionOp::bit_xor:
        return (cell.fetch_xor(uint64_t(operand)) ^ uint64_t(operand)) != 0;
    default: contract_violation("unsupported atomic operation on bool cell");
    }
}

int64_t identity_i64(ReductionOp op) {
    switch (op) {
    case ReductionOp::add:
    case ReductionOp::subtract:
    case ReductionOp::bit_or:
    case ReductionOp::bit_xor: return 0;
    case ReductionOp::multiply: return 1;
    case ReductionOp::min: return INT64_MAX;
    case ReductionOp::max: return INT64_MIN;
    case ReductionOp::bit_and: return -1;
    default: contract_violation("no integer identity for logical operator");
    }
}

double identity_f64(ReductionOp op) {
    switch (op) {
    case ReductionOp::add:
    case ReductionOp::subtract: return 0.0;
    case ReductionOp::multiply: return 1.0;
    case ReductionOp::min: return HUGE_VAL;
    case ReductionOp::max: return -HUGE_VAL;
    default: contract_violation("no float identity for this operator");
    }
}

bool identity_bool(ReductionOp op) {
    switch (op) {
    case ReductionOp::logical_and: return true;
    case ReductionOp::logical_or: return false;
    default: contract_violation("no boolean identity for this operator");
    }
}

// ----- user API ------------------------------------------------------------------------

int get_thread_num() {
    return g_ctx ? g_ctx->tid : 0;
}

int get_num_threads() {
    return g_ctx && g_ctx->team ? g_ctx->team->size() : 1;
}

void set_num_threads(int n) {
    if (n < 1) {
        throw std::invalid_argument("set_num_threads requires a positive thread count");
    }
    g_requested_threads.store(n, std::memory_order_relaxed);
}

int get_max_threads() {
    return resolve_team_size(0);
}

void testing_clear_num_threads() {
    g_requested_threads.store(0, std::memory_order_relaxed);
}

double get_wtime() {
    static const auto start = std::chrono::steady_clock::now();
    auto now = std::chrono::steady_clock::now();
    return std::chrono::duration<double>(now - start).count();
}

} // namespace kz::rt
