#pragma once

#include "interp.hpp"
#include "preprocess.hpp"
#include "runtime.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace testutil {

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

inline std::string fixture_path(const std::string& name) {
    return std::string(KZOMP_TESTS_DIR) + "/fixtures/" + name;
}

inline std::string golden_path(const std::string& name) {
    return std::string(KZOMP_TESTS_DIR) + "/golden/" + name;
}

inline std::vector<std::string> fixture_names() {
    return {
        "01_parallel_only.kz", "02_while_only.kz",  "03_nested_parallel_while.kz",
        "04_reductions.kz",    "05_atomic.kz",      "06_nowait.kz",
        "07_static_one.kz",    "08_collapse2.kz",   "09_schedules.kz",
    };
}

// Compiles and runs already-lowered (or directive-free) text.
inline kz::vm::Program::RunResult run_text(const std::string& text, int threads,
                                           kz::vm::ExecMode mode = kz::vm::ExecMode::debug) {
    kz::vm::Program program = kz::vm::Program::compile(text, kz::ParseOptions{false});
    kz::rt::set_num_threads(threads);
    return program.run("main", mode);
}

// Full pipeline on annotated source.
inline kz::vm::Program::RunResult run_parallel(const std::string& source, int threads,
                                               kz::vm::ExecMode mode = kz::vm::ExecMode::debug) {
    return run_text(kz::preprocess(source), threads, mode);
}

// Serial oracle: directives stripped, one thread.
inline kz::vm::Program::RunResult run_serial(const std::string& source,
                                             kz::vm::ExecMode mode = kz::vm::ExecMode::debug) {
    return run_text(kz::strip_directives(source), 1, mode);
}

} // namespace testutil
