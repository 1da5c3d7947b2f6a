// Acceptance suite: runs every acceptance criterion at its stated tolerance
// and prints one PASS/FAIL line per criterion. Exits nonzero on any failure.
//
// Criteria whose own precondition requires at least four physical cores
// (the bench speedup checks) report SKIP on smaller machines.

#include "bench.hpp"
#include "diag.hpp"
#include "kernels.hpp"
#include "parser.hpp"
#include "preprocess.hpp"
#include "runtime.hpp"
#include "test_util.hpp"
#include "tokenizer.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <random>
#include <sstream>
#include <thread>

using namespace kz;

namespace {

int g_failures = 0;

void report(const char* name, bool ok, const std::string& detail = "") {
    std::printf("%s  %s%s%s\n", ok ? "PASS" : "FAIL", name,
                detail.empty() ? "" : "  -- ", detail.c_str());
    std::fflush(stdout);
    if (!ok) ++g_failures;
}

void report_skip(const char* name, const std::string& reason) {
    std::printf("SKIP  %s  -- %s\n", name, reason.c_str());
    std::fflush(stdout);
}

// ----- criterion 1: schedule coverage oracle ---------------------------------------

bool schedule_coverage(std::string& detail) {
    struct Sched {
        const char* name;
        ScheduleKind kind;
        int64_t chunk;
        const char* env; // OMP_SCHEDULE for the runtime entry
    };
    const Sched schedules[] = {
        {"static", ScheduleKind::static_sched, 0, nullptr},
        {"static,1", ScheduleKind::static_sched, 1, nullptr},
        {"static,7", ScheduleKind::static_sched, 7, nullptr},
        {"dynamic,1", ScheduleKind::dynamic, 1, nullptr},
        {"dynamic,5", ScheduleKind::dynamic, 5, nullptr},
        {"guided,1", ScheduleKind::guided, 1, nullptr},
        {"guided,4", ScheduleKind::guided, 4, nullptr},
        {"runtime(dynamic,3)", ScheduleKind::runtime, 0, "dynamic,3"},
    };
    for (const Sched& sched : schedules) {
        if (sched.env != nullptr) {
            setenv("OMP_SCHEDULE", sched.env, 1);
        } else {
            unsetenv("OMP_SCHEDULE");
        }
        for (int64_t n : {int64_t(0), int64_t(1), int64_t(10), int64_t(1000)}) {
            for (int threads : {1, 2, 4, 8}) {
                const size_t count = size_t(n);
                std::vector<std::atomic<int>> hits(count);
                for (auto& h : hits) h.store(0);
                rt::fork_call(threads, [&](rt::ThreadContext& ctx) {
                    if (sched.kind == ScheduleKind::static_sched) {
                        rt::StaticPlan plan =
                            rt::static_init(ctx, 0, n, rt::CmpOp::lt, 1, sched.chunk);
                        for (int64_t lb = plan.lower; lb < plan.trip; lb += plan.stride) {
                            int64_t hi = std::min(lb + plan.length, plan.trip);
                            for (int64_t i = lb; i < hi; ++i) hits[size_t(i)]++;
                        }
                        rt::static_fini(ctx, false);
                    } else {
                        rt::dispatch_init(ctx, sched.kind, 0, n, rt::CmpOp::lt, 1,
                                          sched.chunk, false);
                        while (auto c = rt::dispatch_next(ctx)) {
                            for (int64_t i = c->first; i < c->second; ++i) {
                                hits[size_t(i)]++;
                            }
                        }
                    }
                });
                for (int64_t i = 0; i < n; ++i) {
                    if (hits[size_t(i)].load() != 1) {
                        char buf[160];
                        std::snprintf(buf, sizeof(buf),
                                      "%s N=%lld T=%d: index %lld executed %d times",
                                      sched.name, (long long)n, threads, (long long)i,
                                      hits[size_t(i)].load());
                        detail = buf;
                        unsetenv("OMP_SCHEDULE");
                        return false;
                    }
                }
            }
        }
    }
    unsetenv("OMP_SCHEDULE");
    return true;
}

// ----- criterion 2: clause-codec properties ----------------------------------------

bool clause_codec(std::string& detail) {
    if (clauses::pack_loop_word({ScheduleKind::dynamic, 8}) != 66) {
        detail = "LOOP(dynamic,8) != 66";
        return false;
    }
    if (clauses::pack_misc_word(DefaultKind::none, true, 2) != 22) {
        detail = "MISC(none,nowait,collapse 2) != 22";
        return false;
    }
    {
        ClauseSet set;
        set.schedule = {ScheduleKind::dynamic, kMaxChunk};
        std::vector<uint32_t> extra;
        uint32_t at = clauses::encode(set, extra);
        if (clauses::decode(extra, at).schedule.chunk != 536870911u) {
            detail = "chunk 536870911 failed to round trip";
            return false;
        }
        set.schedule.chunk = 536870912u;
        std::vector<uint32_t> extra2;
        try {
            clauses::encode(set, extra2);
            detail = "chunk 536870912 was not rejected";
            return false;
        } catch (ClauseCodecError&) {
        }
    }
    std::mt19937 rng(424242);
    std::vector<uint32_t> extra;
    for (int i = 0; i < 10000; ++i) {
        ClauseSet set;
        auto random_list = [&](std::vector<NodeIndex>& list) {
            int n = int(rng() % 5);
            for (int j = 0; j < n; ++j) list.push_back(NodeIndex(rng() % 1000000));
        };
        random_list(set.private_vars);
        random_list(set.firstprivate_vars);
        random_list(set.shared_vars);
        int nred = int(rng() % 4);
        for (int j = 0; j < nred; ++j) {
            set.reductions.emplace_back(ReductionOp(rng() % 10), NodeIndex(rng() % 1000000));
        }
        set.schedule.kind = ScheduleKind(rng() % 5);
        set.schedule.chunk = uint32_t(rng() % (kMaxChunk + 1));
        set.default_kind = DefaultKind(rng() % 3);
        set.nowait = rng() % 2;
        set.collapse = uint8_t(rng() % 16);
        uint32_t at = clauses::encode(set, extra);
        if (!(clauses::decode(extra, at) == set)) {
            detail = "round trip mismatch at sample " + std::to_string(i);
            return false;
        }
    }
    return true;
}

// ----- criterion 3: golden suite ---------------------------------------------------

bool golden_suite(std::string& detail) {
    for (const std::string& name : testutil::fixture_names()) {
        std::string source = testutil::read_file(testutil::fixture_path(name));
        std::string golden = testutil::read_file(testutil::golden_path(name + ".golden"));
        std::string out = preprocess(source);
        if (out != golden) {
            detail = name + " does not match its golden output";
            return false;
        }
        if (preprocess(out) != out) {
            detail = name + ": preprocess is not a fixpoint on its output";
            return false;
        }
        if (out.find("//$omp") != std::string::npos) {
            detail = name + ": sentinel left in output";
            return false;
        }
    }
    std::string plain = "fn main() void {\n    print(7);\n}\n";
    if (preprocess(plain) != plain) {
        detail = "sentinel-free file was not passed through byte-identical";
        return false;
    }
    return true;
}

// ----- criterion 4: semantic preservation at one thread -----------------------------

bool semantic_preservation(std::string& detail) {
    for (const std::string& name : testutil::fixture_names()) {
        std::string source = testutil::read_file(testutil::fixture_path(name));
        auto serial = testutil::run_serial(source);
        auto parallel = testutil::run_parallel(source, 1);
        if (!serial.ok || !parallel.ok) {
            detail = name + ": execution failed: " +
                     (serial.ok ? parallel.error : serial.error);
            return false;
        }
        if (serial.output != parallel.output) {
            detail = name + ": one-thread output differs from the stripped serial run";
            return false;
        }
    }
    return true;
}

// ----- criterion 5: reduction suite --------------------------------------------------

bool reduction_suite(std::string& detail) {
    constexpr int64_t kN = 1000000;
    constexpr int kThreads = 8;
    constexpr int kRepeats = 20;

    const size_t count = size_t(kN);
    std::vector<int64_t> data(count);
    std::vector<uint8_t> flags(count);
    std::mt19937_64 rng(20240501);
    for (int64_t i = 0; i < kN; ++i) {
        data[size_t(i)] = int64_t(rng());
        flags[size_t(i)] = (rng() % 97) != 0; // mostly true
    }

    struct IntOp {
        ReductionOp op;
        const char* name;
    };
    const IntOp int_ops[] = {
        {ReductionOp::add, "+"},     {ReductionOp::multiply, "*"},
        {ReductionOp::min, "min"},   {ReductionOp::max, "max"},
        {ReductionOp::bit_and, "&"}, {ReductionOp::bit_or, "|"},
        {ReductionOp::bit_xor, "^"},
    };

    auto fold_i64 = [&](ReductionOp op, int64_t acc, int64_t v) -> int64_t {
        switch (op) {
        case ReductionOp::add: return int64_t(uint64_t(acc) + uint64_t(v));
        case ReductionOp::multiply: return int64_t(uint64_t(acc) * uint64_t(v));
        case ReductionOp::min: return std::min(acc, v);
        case ReductionOp::max: return std::max(acc, v);
        case ReductionOp::bit_and: return acc & v;
        case ReductionOp::bit_or: return acc | v;
        default: return acc ^ v;
        }
    };

    for (const IntOp& entry : int_ops) {
        int64_t serial = rt::identity_i64(entry.op);
        for (int64_t i = 0; i < kN; ++i) serial = fold_i64(entry.op, serial, data[size_t(i)]);
        for (int rep = 0; rep < kRepeats; ++rep) {
            rt::Cell cell{std::bit_cast<uint64_t>(rt::identity_i64(entry.op))};
            rt::fork_call(kThreads, [&](rt::ThreadContext& ctx) {
                rt::StaticPlan plan = rt::static_init(ctx, 0, kN, rt::CmpOp::lt, 1, 0);
                int64_t local = rt::identity_i64(entry.op);
                for (int64_t lb = plan.lower; lb < plan.trip; lb += plan.stride) {
                    int64_t hi = std::min(lb + plan.length, plan.trip);
                    for (int64_t i = lb; i < hi; ++i) {
                        local = fold_i64(entry.op, local, data[size_t(i)]);
                    }
                }
                rt::atomic_rmw_i64(cell, entry.op, local);
                rt::static_fini(ctx, false);
            });
            int64_t got = std::bit_cast<int64_t>(cell.load());
            if (got != serial) {
                char buf[128];
                std::snprintf(buf, sizeof(buf), "op %s rep %d: got %lld want %lld",
                              entry.name, rep, (long long)got, (long long)serial);
                detail = buf;
                return false;
            }
        }
    }

    for (ReductionOp op : {ReductionOp::logical_and, ReductionOp::logical_or}) {
        bool serial = rt::identity_bool(op);
        for (int64_t i = 0; i < kN; ++i) {
            bool v = flags[size_t(i)] != 0;
            serial = op == ReductionOp::logical_and ? (serial && v) : (serial || v);
        }
        for (int rep = 0; rep < kRepeats; ++rep) {
            rt::Cell cell{uint64_t(rt::identity_bool(op))};
            rt::fork_call(kThreads, [&](rt::ThreadContext& ctx) {
                rt::StaticPlan plan = rt::static_init(ctx, 0, kN, rt::CmpOp::lt, 1, 0);
                bool local = rt::identity_bool(op);
                for (int64_t lb = plan.lower; lb < plan.trip; lb += plan.stride) {
                    int64_t hi = std::min(lb + plan.length, plan.trip);
                    for (int64_t i = lb; i < hi; ++i) {
                        bool v = flags[size_t(i)] != 0;
                        local = op == ReductionOp::logical_and ? (local && v) : (local || v);
                    }
                }
                rt::atomic_rmw_bool(cell, op, local);
                rt::static_fini(ctx, false);
            });
            if ((cell.load() != 0) != serial) {
                detail = std::string("logical op mismatch at rep ") + std::to_string(rep);
                return false;
            }
        }
    }

    {
        double serial = 0.0;
        for (int64_t i = 0; i < kN; ++i) {
            serial += double(data[size_t(i)] % 1000) * 0.001;
        }
        for (int rep = 0; rep < kRepeats; ++rep) {
            rt::Cell cell{std::bit_cast<uint64_t>(0.0)};
            rt::fork_call(kThreads, [&](rt::ThreadContext& ctx) {
                rt::StaticPlan plan = rt::static_init(ctx, 0, kN, rt::CmpOp::lt, 1, 0);
                double local = 0.0;
                for (int64_t lb = plan.lower; lb < plan.trip; lb += plan.stride) {
                    int64_t hi = std::min(lb + plan.length, plan.trip);
                    for (int64_t i = lb; i < hi; ++i) {
                        local += double(data[size_t(i)] % 1000) * 0.001;
                    }
                }
                rt::atomic_rmw_f64(cell, ReductionOp::add, local);
                rt::static_fini(ctx, false);
            });
            double got = std::bit_cast<double>(cell.load());
            if (std::fabs(got - serial) > 1e-12 * std::max(std::fabs(serial), 1.0)) {
                char buf[128];
                std::snprintf(buf, sizeof(buf), "f64 add rep %d: got %.17g want %.17g", rep,
                              got, serial);
                detail = buf;
                return false;
            }
        }
    }

    for (int rep = 0; rep < kRepeats; ++rep) {
        rt::Cell cell{std::bit_cast<uint64_t>(int64_t(1))};
        rt::fork_call(8, [&](rt::ThreadContext&) {
            rt::atomic_rmw_i64(cell, ReductionOp::multiply, 2);
        });
        if (std::bit_cast<int64_t>(cell.load()) != 256) {
            detail = "CAS multiply rep " + std::to_string(rep) + " != 256";
            return false;
        }
    }
    return true;
}

// ----- criterion 6: atomic counter ----------------------------------------------------

bool atomic_counter(std::string& detail) {
    rt::Cell cell{0};
    rt::fork_call(8, [&](rt::ThreadContext&) {
        for (int i = 0; i < 100000; ++i) {
            rt::atomic_rmw_i64(cell, ReductionOp::add, 1);
        }
    });
    int64_t got = std::bit_cast<int64_t>(cell.load());
    if (got != 800000) {
        detail = "counter is " + std::to_string(got);
        return false;
    }
    return true;
}

// ----- criterion 7: kernels -----------------------------------------------------------

bool kernel_verification(bench::Kernel k, std::string& detail) {
    try {
        bench::KernelOutputs oracle = bench::run_kernel(k, bench::ProblemClass::S, 1, true);
        for (int threads : {1, 2, 4, 8}) {
            bench::KernelOutputs run =
                bench::run_kernel(k, bench::ProblemClass::S, threads, false);
            bench::VerifyResult check = bench::verify_outputs(k, run, oracle, threads);
            if (!check.ok) {
                detail = check.detail + " (threads " + std::to_string(threads) + ")";
                return false;
            }
        }
        return true;
    } catch (std::exception& e) {
        detail = e.what();
        return false;
    }
}

int physical_cores() {
    unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? int(hw) : 1;
}

bool kernel_speedup(bench::Kernel k, bench::ProblemClass cls, double required,
                    std::string& detail) {
    try {
        bench::BenchConfig config;
        config.kernel = k;
        config.cls = cls;
        config.threads = {1, 4};
        config.reps = 5;
        std::ostringstream log;
        auto rows = bench::run_bench(config, log);
        double speedup = rows.back().speedup;
        char buf[128];
        std::snprintf(buf, sizeof(buf), "speedup %.2f at 4 threads (required >= %.1f)",
                      speedup, required);
        detail = buf;
        return speedup >= required;
    } catch (std::exception& e) {
        detail = e.what();
        return false;
    }
}

// ----- criterion 8: robustness ---------------------------------------------------------

int run_cli(const std::string& args, std::string& output) {
    std::string command = std::string(KZOMP_BIN) + " " + args + " 2>&1";
    FILE* pipe = popen(command.c_str(), "r");
    if (pipe == nullptr) return -1;
    char buf[512];
    output.clear();
    while (fgets(buf, sizeof(buf), pipe) != nullptr) output += buf;
    int status = pclose(pipe);
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

bool robustness(std::string& detail) {
    struct Bad {
        const char* name;
        const char* source;
    };
    const Bad cases[] = {
        {"unknown directive", "fn main() void {\n//$omp taskloop\n{\n}\n}\n"},
        {"illegal clause",
         "fn main() void {\n//$omp parallel schedule(static)\n{\nprint(1);\n}\n}\n"},
        {"chunk overflow",
         "fn main() void {\nvar i: i64 = 0;\ni = 0;\n//$omp parallel private(i)\n{\ni = 0;\n"
         "//$omp while schedule(static, 536870912)\nwhile (i < 4) : (i += 1) {\n_ = i;\n}\n}\n}\n"},
        {"collapse > 2",
         "fn main() void {\nvar i: i64 = 0;\nvar j: i64 = 0;\n//$omp parallel private(i, j)\n"
         "{\ni = 0;\n//$omp while collapse(3)\nwhile (i < 2) : (i += 1) {\nj = 0;\n"
         "while (j < 2) : (j += 1) {\n_ = j;\n}\n}\n}\n}\n"},
        {"atomic on non-assignment",
         "fn main() void {\n//$omp parallel\n{\n//$omp atomic\nprint(1);\n}\n}\n"},
    };
    for (const Bad& bad : cases) {
        std::string path = std::string("/tmp/kzomp_bad_") + std::to_string(rand()) + ".kz";
        FILE* f = fopen(path.c_str(), "w");
        fputs(bad.source, f);
        fclose(f);
        std::string output;
        int code = run_cli("preprocess " + path, output);
        remove(path.c_str());
        if (code != 1) {
            detail = std::string(bad.name) + ": exit code " + std::to_string(code) +
                     " (expected 1)";
            return false;
        }
        if (output.find("error:") == std::string::npos) {
            detail = std::string(bad.name) + ": diagnostic is not located: " + output;
            return false;
        }
    }

    // usage errors exit 2
    {
        std::string output;
        int code = run_cli("frobnicate", output);
        if (code != 2) {
            detail = "unknown subcommand: exit " + std::to_string(code) + " (expected 2)";
            return false;
        }
        code = run_cli("run", output);
        if (code != 2) {
            detail = "missing argument: exit " + std::to_string(code) + " (expected 2)";
            return false;
        }
    }

    // well-formed input through the CLI: exit 0 and the program's output
    {
        std::string path = "/tmp/kzomp_ok.kz";
        FILE* f = fopen(path.c_str(), "w");
        fputs("var total: i64 = 0;\n"
              "fn main() void {\n"
              "    var i: i64 = 0;\n"
              "    //$omp parallel private(i)\n"
              "    {\n"
              "        i = 0;\n"
              "        //$omp while\n"
              "        while (i < 100) : (i += 1) {\n"
              "            //$omp atomic\n"
              "            total += i;\n"
              "        }\n"
              "    }\n"
              "    print(total);\n"
              "}\n",
              f);
        fclose(f);
        std::string output;
        int code = run_cli("run " + path + " --threads 4", output);
        remove(path.c_str());
        if (code != 0 || output != "4950\n") {
            detail = "CLI run: exit " + std::to_string(code) + ", output '" + output + "'";
            return false;
        }
    }

    std::mt19937 rng(31337);
    for (int i = 0; i < 100000; ++i) {
        size_t len = rng() % 48;
        std::string input;
        for (size_t j = 0; j < len; ++j) input += char(rng() % 256);
        try {
            auto tokens = tokenize(input);
            if (tokens.empty() || tokens.back().tag != TokenTag::eof) {
                detail = "tokenizer returned a stream without eof";
                return false;
            }
        } catch (CompileError&) {
            // a located lexical error is an acceptable outcome
        }
    }
    return true;
}

} // namespace

int main() {
    std::string detail;
    double wall0 = rt::get_wtime();

    {
        detail.clear();
        double t0 = rt::get_wtime();
        bool ok = schedule_coverage(detail);
        double dt = rt::get_wtime() - t0;
        if (ok && dt >= 30.0) {
            ok = false;
            detail = "grid took " + std::to_string(dt) + " s (limit 30 s)";
        }
        report("schedule coverage oracle (8 schedules x N x T, < 30 s)", ok, detail);
    }

    detail.clear();
    report("clause-codec round trip, boundaries and packed words", clause_codec(detail),
           detail);

    detail.clear();
    report("preprocessor golden suite (9 fixtures, fixpoint, passthrough)",
           golden_suite(detail), detail);

    detail.clear();
    report("semantic preservation at one thread", semantic_preservation(detail), detail);

    detail.clear();
    report("reduction suite (10^6 elements, 8 threads, 20 repetitions)",
           reduction_suite(detail), detail);

    detail.clear();
    report("atomic counter: 8 threads x 10^5 increments = 800000", atomic_counter(detail),
           detail);

    detail.clear();
    report("cg class S vs serial oracle at T in {1,2,4,8} (rel 1e-10)",
           kernel_verification(bench::Kernel::cg, detail), detail);
    detail.clear();
    report("ep class S bit-identical to serial oracle at T in {1,2,4,8}",
           kernel_verification(bench::Kernel::ep, detail), detail);
    detail.clear();
    report("is class S bit-identical to serial oracle at T in {1,2,4,8}",
           kernel_verification(bench::Kernel::is, detail), detail);

    int cores = physical_cores();
    if (cores >= 4) {
        detail.clear();
        report("ep speedup >= 2.0 at 4 threads (class S, mean of 5)",
               kernel_speedup(bench::Kernel::ep, bench::ProblemClass::S, 2.0, detail),
               detail);
        detail.clear();
        report("cg speedup >= 1.5 at 4 threads (class W, mean of 5)",
               kernel_speedup(bench::Kernel::cg, bench::ProblemClass::W, 1.5, detail),
               detail);
        detail.clear();
        report("is speedup >= 1.5 at 4 threads (class W, mean of 5)",
               kernel_speedup(bench::Kernel::is, bench::ProblemClass::W, 1.5, detail),
               detail);
    } else {
        std::string reason =
            "requires >= 4 physical cores, found " + std::to_string(cores);
        report_skip("ep speedup >= 2.0 at 4 threads (class S, mean of 5)", reason);
        report_skip("cg speedup >= 1.5 at 4 threads (class W, mean of 5)", reason);
        report_skip("is speedup >= 1.5 at 4 threads (class W, mean of 5)", reason);
    }

    detail.clear();
    report("robustness: malformed pragmas exit 1 with located diagnostics; "
           "tokenizer fuzz (10^5 inputs)",
           robustness(detail), detail);

    std::printf("%s: %d failure(s), %.1f s total\n", g_failures == 0 ? "OK" : "FAILED",
                g_failures, rt::get_wtime() - wall0);
    return g_failures == 0 ? 0 : 1;
}
