#pragma once

#include "interp.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace kz::bench {

enum class Kernel { cg, ep, is };
enum class ProblemClass { S, W };

Kernel kernel_from_name(const std::string& name);
ProblemClass class_from_name(const std::string& name);
const char* kernel_name(Kernel k);
const char* class_name(ProblemClass c);

// Kernel-language source of each benchmark (run through the preprocessor
// before execution; stripped of directives for the serial oracle).
const char* kernel_source(Kernel k);

// NPB linear congruential generator: x <- a*x mod 2^46, returns x * 2^-46.
double randlc(double* x, double a);

struct KernelOutputs {
    double seconds = 0.0;
    // Values used for verification; layout depends on the kernel.
    std::vector<double> reals;
    std::vector<int64_t> ints;
    double rnorm = 0.0; // cg only: final residual norm
};

// Runs one kernel instance. `stripped` selects the directive-stripped serial
// program instead of the preprocessed parallel one.
KernelOutputs run_kernel(Kernel k, ProblemClass c, int threads, bool stripped,
                         vm::ExecMode mode = vm::ExecMode::release);

struct VerifyResult {
    bool ok = true;
    std::string detail;
};

// Compares a run against the serial oracle outputs of the same configuration.
// CG: relative tolerance (1e-12 at 1 thread, 1e-10 otherwise); EP/IS: exact.
VerifyResult verify_outputs(Kernel k, const KernelOutputs& run, const KernelOutputs& oracle,
                            int threads);

} // namespace kz::bench
