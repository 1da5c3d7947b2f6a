#pragma once

#include "kernels.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace kz::bench {

struct BenchConfig {
    Kernel kernel = Kernel::ep;
    ProblemClass cls = ProblemClass::S;
    std::vector<int> threads = {1};
    int reps = 5;
};

struct BenchRow {
    std::string kernel;
    std::string cls;
    int threads = 1;
    int reps = 0;
    double mean_s = 0.0;
    double min_s = 0.0;
    double max_s = 0.0;
    double speedup = 1.0;
    bool verified = false;
};

// Runs the benchmark grid. Every run is verified against the serial
// directive-stripped oracle before its timing is recorded; a verification
// failure aborts with RuntimeError, so reports never contain unverified
// timing rows. Speedup is relative to the first thread-count row.
std::vector<BenchRow> run_bench(const BenchConfig& config, std::ostream& log);

void print_table(const std::vector<BenchRow>& rows, std::ostream& out);
std::string to_json(const std::vector<BenchRow>& rows);

// Built-in self-check used by the `verify` CLI subcommand: clause-codec
// round trips, schedule coverage over a small grid, and all three kernels
// (class S) against their serial oracles. Returns the number of failures.
int run_verify(std::ostream& out);

} // namespace kz::bench
