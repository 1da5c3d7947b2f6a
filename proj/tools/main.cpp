// kzomp command-line driver: preprocess, run, verify and bench subcommands.

#include "bench.hpp"
#include "diag.hpp"
#include "interp.hpp"
#include "kernels.hpp"
#include "preprocess.hpp"
#include "runtime.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open '" + path + "'");
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write '" + path + "'");
    }
    out << text;
}

std::vector<int> parse_thread_list(const std::string& text) {
    std::vector<int> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        int n = std::stoi(item);
        if (n < 1) throw std::runtime_error("thread counts must be positive");
        out.push_back(n);
    }
    if (out.empty()) throw std::runtime_error("empty thread list");
    return out;
}

int cmd_preprocess(const std::string& file, const std::string& output) {
    std::string source = read_file(file);
    std::string result;
    try {
        result = kz::preprocess(source);
    } catch (kz::CompileError& e) {
        std::cerr << kz::format_error(file, source, e) << "\n";
        return 1;
    }
    if (output.empty()) {
        std::cout << result;
    } else {
        write_file(output, result);
    }
    return 0;
}

int cmd_run(const std::string& file, int threads, const std::string& mode,
            const std::string& entry) {
    std::string source = read_file(file);
    std::string prepared;
    try {
        prepared = kz::preprocess(source);
    } catch (kz::CompileError& e) {
        std::cerr << kz::format_error(file, source, e) << "\n";
        return 1;
    }

    kz::vm::ExecMode exec_mode =
        mode == "release" ? kz::vm::ExecMode::release : kz::vm::ExecMode::debug;
    try {
        kz::vm::Program program =
            kz::vm::Program::compile(prepared, kz::ParseOptions{false});
        if (threads > 0) kz::rt::set_num_threads(threads);
        auto result = program.run(entry, exec_mode);
        std::cout << result.output;
        if (!result.ok) {
            kz::RuntimeError err(result.error, result.error_offset, result.stack);
            std::cerr << kz::format_error(file, prepared, err) << "\n";
            return 1;
        }
        return 0;
    } catch (kz::CompileError& e) {
        std::cerr << kz::format_error(file, prepared, e) << "\n";
        return 1;
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"pragma-driven shared-memory parallelism toolchain for the kz kernel "
                 "language"};
    app.require_subcommand(1);

    std::string file;
    std::string output;
    auto* pre = app.add_subcommand("preprocess", "lower directives to runtime calls");
    pre->add_option("file", file, "kernel-language source file")->required();
    pre->add_option("-o,--output", output, "output file (default: stdout)");

    int threads = 0;
    std::string mode = "debug";
    std::string entry = "main";
    auto* run = app.add_subcommand("run", "preprocess and execute a program");
    run->add_option("file", file, "kernel-language source file")->required();
    run->add_option("--threads", threads, "team size for parallel regions");
    run->add_option("--mode", mode, "execution mode: debug or release")
        ->check(CLI::IsMember({"debug", "release"}));
    run->add_option("--entry", entry, "entry function (default: main)");

    auto* verify = app.add_subcommand("verify", "run the built-in self checks");

    std::string kernel = "ep";
    std::string cls = "S";
    std::string thread_list = "1";
    int reps = 5;
    std::string json_path;
    auto* bench = app.add_subcommand("bench", "run a desk-scale NPB-style kernel");
    bench->add_option("--kernel", kernel, "cg, ep or is")->required();
    bench->add_option("--class", cls, "problem class: S or W");
    bench->add_option("--threads", thread_list, "comma-separated thread counts");
    bench->add_option("--reps", reps, "repetitions per thread count (default 5)")
        ->check(CLI::PositiveNumber);
    bench->add_option("--json", json_path, "write the report as JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (pre->parsed()) {
            return cmd_preprocess(file, output);
        }
        if (run->parsed()) {
            return cmd_run(file, threads, mode, entry);
        }
        if (verify->parsed()) {
            int failures = kz::bench::run_verify(std::cout);
            return failures == 0 ? 0 : 1;
        }
        if (bench->parsed()) {
            kz::bench::BenchConfig config;
            config.kernel = kz::bench::kernel_from_name(kernel);
            config.cls = kz::bench::class_from_name(cls);
            config.threads = parse_thread_list(thread_list);
            config.reps = reps;
            auto rows = kz::bench::run_bench(config, std::cerr);
            kz::bench::print_table(rows, std::cout);
            if (!json_path.empty()) {
                write_file(json_path, kz::bench::to_json(rows));
            }
            return 0;
        }
    } catch (kz::RuntimeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
