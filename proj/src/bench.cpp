#include "bench.hpp"

#include "preprocess.hpp"
#include "runtime.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <map>
#include <ostream>
#include <random>

namespace kz::bench {

std::vector<BenchRow> run_bench(const BenchConfig& config, std::ostream& log) {
    // One serial oracle per configuration, reused across rows.
    log << "generating " << kernel_name(config.kernel) << " class "
        << class_name(config.cls) << " serial oracle...\n";
    KernelOutputs oracle = run_kernel(config.kernel, config.cls, 1, /*stripped=*/true);

    std::vector<BenchRow> rows;
    double baseline = 0.0;
    for (int threads : config.threads) {
        BenchRow row;
        row.kernel = kernel_name(config.kernel);
        row.cls = class_name(config.cls);
        row.threads = threads;
        row.reps = config.reps;
        row.min_s = 1e300;
        double total = 0.0;
        for (int rep = 0; rep < config.reps; ++rep) {
            KernelOutputs run = run_kernel(config.kernel, config.cls, threads, false);
            VerifyResult check = verify_outputs(config.kernel, run, oracle, threads);
            if (!check.ok) {
                throw RuntimeError("verification failed (" + row.kernel + ", class " +
                                       row.cls + ", " + std::to_string(threads) +
                                       " threads): " + check.detail,
                                   0);
            }
            total += run.seconds;
            row.min_s = std::min(row.min_s, run.seconds);
            row.max_s = std::max(row.max_s, run.seconds);
        }
        row.mean_s = total / config.reps;
        row.verified = true;
        if (rows.empty()) {
            baseline = row.mean_s;
        }
        row.speedup = baseline > 0.0 && row.mean_s > 0.0 ? baseline / row.mean_s : 1.0;
        log << "  " << row.kernel << " class " << row.cls << " threads " << threads
            << ": mean " << row.mean_s << " s (" << config.reps << " runs)\n";
        rows.push_back(row);
    }
    return rows;
}

void print_table(const std::vector<BenchRow>& rows, std::ostream& out) {
    char line[160];
    std::snprintf(line, sizeof(line), "%-6s %-5s %-8s %-5s %-10s %-10s %-10s %-8s %s",
                  "kernel", "class", "threads", "reps", "mean_s", "min_s", "max_s",
                  "speedup", "verified");
    out << line << "\n";
    for (const BenchRow& r : rows) {
        std::snprintf(line, sizeof(line),
                      "%-6s %-5s %-8d %-5d %-10.4f %-10.4f %-10.4f %-8.2f %s",
                      r.kernel.c_str(), r.cls.c_str(), r.threads, r.reps, r.mean_s, r.min_s,
                      r.max_s, r.speedup, r.verified ? "yes" : "no");
        out << line << "\n";
    }
}

std::string to_json(const std::vector<BenchRow>& rows) {
    nlohmann::json array = nlohmann::json::array();
    for (const BenchRow& r : rows) {
        array.push_back({{"kernel", r.kernel},
                         {"class", r.cls},
                         {"threads", r.threads},
                         {"reps", r.reps},
                         {"mean_s", r.mean_s},
                         {"min_s", r.min_s},
                         {"max_s", r.max_s},
                         {"speedup", r.speedup},
                         {"verified", r.verified}});
    }
    return array.dump(2) + "\n";
}

// ----- verify subcommand -----------------------------------------------------------

namespace {

int check(std::ostream& out, const char* name, bool ok, const std::string& detail = "") {
    out << (ok ? "PASS" : "FAIL") << "  " << name;
    if (!ok && !detail.empty()) out << "  (" << detail << ")";
    out << "\n";
    return ok ? 0 : 1;
}

bool clause_roundtrip_sample(std::string& detail) {
    std::mt19937 rng(20240817);
    for (int i = 0; i < 2000; ++i) {
        ClauseSet set;
        auto random_list = [&](std::vector<NodeIndex>& list) {
            int n = int(rng() % 4);
            for (int j = 0; j < n; ++j) list.push_back(NodeIndex(rng() % 100000));
        };
        random_list(set.private_vars);
        random_list(set.firstprivate_vars);
        random_list(set.shared_vars);
        int nred = int(rng() % 3);
        for (int j = 0; j < nred; ++j) {
            set.reductions.emplace_back(ReductionOp(rng() % 10), NodeIndex(rng() % 100000));
        }
        set.schedule.kind = ScheduleKind(rng() % 5);
        set.schedule.chunk = uint32_t(rng() % (kMaxChunk + 1));
        set.default_kind = DefaultKind(rng() % 3);
        set.nowait = rng() % 2;
        set.collapse = uint8_t(rng() % 16);

        std::vector<uint32_t> extra;
        uint32_t at = clauses::encode(set, extra);
        ClauseSet back = clauses::decode(extra, at);
        if (!(back == set)) {
            detail = "round trip mismatch at sample " + std::to_string(i);
            return false;
        }
    }
    return true;
}

bool coverage_sample(std::string& detail) {
    struct Config {
        ScheduleKind kind;
        int64_t chunk;
    };
    const Config configs[] = {
        {ScheduleKind::static_sched, 0}, {ScheduleKind::static_sched, 1},
        {ScheduleKind::dynamic, 3},      {ScheduleKind::guided, 2},
    };
    for (const Config& cfg : configs) {
        for (int64_t n : {0, 1, 10, 257}) {
            for (int threads : {1, 2, 4}) {
                const size_t count = size_t(n);
                std::vector<std::atomic<int>> hits(count);
                for (auto& h : hits) h.store(0);
                rt::fork_call(threads, [&](rt::ThreadContext& ctx) {
                    if (cfg.kind == ScheduleKind::static_sched) {
                        rt::StaticPlan plan =
                            rt::static_init(ctx, 0, n, rt::CmpOp::lt, 1, cfg.chunk);
                        for (int64_t lb = plan.lower; lb < plan.trip; lb += plan.stride) {
                            int64_t hi = std::min(lb + plan.length, plan.trip);
                            for (int64_t i = lb; i < hi; ++i) hits[size_t(i)]++;
                        }
                        rt::static_fini(ctx, false);
                    } else {
                        rt::dispatch_init(ctx, cfg.kind, 0, n, rt::CmpOp::lt, 1, cfg.chunk,
                                          false);
                        while (auto chunk = rt::dispatch_next(ctx)) {
                            for (int64_t i = chunk->first; i < chunk->second; ++i) {
                                hits[size_t(i)]++;
                            }
                        }
                    }
                });
                for (int64_t i = 0; i < n; ++i) {
                    if (hits[size_t(i)].load() != 1) {
                        detail = "iteration executed " +
                                 std::to_string(hits[size_t(i)].load()) + " times (n=" +
                                 std::to_string(n) + ", T=" + std::to_string(threads) + ")";
                        return false;
                    }
                }
            }
        }
    }
    return true;
}

bool kernel_check(Kernel k, std::string& detail) {
    try {
        KernelOutputs oracle = run_kernel(k, ProblemClass::S, 1, true);
        for (int threads : {1, 4}) {
            KernelOutputs run = run_kernel(k, ProblemClass::S, threads, false);
            VerifyResult check = verify_outputs(k, run, oracle, threads);
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

} // namespace

int run_verify(std::ostream& out) {
    int failures = 0;
    std::string detail;

    detail.clear();
    failures += check(out, "clause-codec round trip (2000 samples)",
                      clause_roundtrip_sample(detail), detail);
    detail.clear();
    failures += check(out, "worksharing schedule coverage grid", coverage_sample(detail),
                      detail);
    detail.clear();
    failures += check(out, "cg class S vs serial oracle", kernel_check(Kernel::cg, detail),
                      detail);
    detail.clear();
    failures += check(out, "ep class S vs serial oracle", kernel_check(Kernel::ep, detail),
                      detail);
    detail.clear();
    failures += check(out, "is class S vs serial oracle", kernel_check(Kernel::is, detail),
                      detail);
    return failures;
}

} // namespace kz::bench
