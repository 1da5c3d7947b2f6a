#include "test_util.hpp"

#include <doctest.h>

#include <set>
#include <sstream>

using namespace kz;
using testutil::run_parallel;
using testutil::run_serial;
using testutil::run_text;

TEST_CASE("arithmetic and print") {
    auto result = run_text("fn main() void {\n    var x: i64 = 2 + 3;\n    print(x);\n}\n", 1);
    REQUIRE(result.ok);
    CHECK(result.output == "5\n");
}

TEST_CASE("out-of-bounds indexing is a located error in debug mode") {
    std::string source = "fn main() void {\n"
                         "    var a: [10]i64 = undefined;\n"
                         "    a[10] = 1;\n"
                         "}\n";
    auto result = run_text(source, 1, vm::ExecMode::debug);
    REQUIRE(!result.ok);
    CHECK(result.error.find("out of bounds") != std::string::npos);
    CHECK(result.error_offset > 0);
    // bounds stay checked in release mode: the interpreter is memory-safe
    auto release = run_text(source, 1, vm::ExecMode::release);
    CHECK(!release.ok);
}

TEST_CASE("a forked program observes every thread id") {
    std::string source = "fn main() void {\n"
                         "    //$omp parallel\n"
                         "    {\n"
                         "        print(omp_get_thread_num());\n"
                         "    }\n"
                         "}\n";
    auto result = run_parallel(source, 2);
    REQUIRE(result.ok);
    std::set<std::string> lines;
    std::stringstream ss(result.output);
    std::string line;
    while (std::getline(ss, line)) lines.insert(line);
    CHECK(lines == std::set<std::string>{"0", "1"});
}

TEST_CASE("firstprivate values are copied into every thread") {
    std::string source = "var mismatches: i64 = 0;\n"
                         "fn main() void {\n"
                         "    var x: i64 = 7;\n"
                         "    //$omp parallel firstprivate(x)\n"
                         "    {\n"
                         "        if (x != 7) {\n"
                         "            //$omp atomic\n"
                         "            mismatches += 1;\n"
                         "        }\n"
                         "        x += omp_get_thread_num();\n"
                         "    }\n"
                         "    print(mismatches);\n"
                         "    print(x);\n"
                         "}\n";
    auto result = run_parallel(source, 4);
    REQUIRE(result.ok);
    CHECK(result.output == "0\n7\n"); // enclosing x unchanged: by-value capture
}

TEST_CASE("threads writing disjoint shared slots are all visible after the join") {
    std::string source = "fn main() void {\n"
                         "    var a: [4]i64 = undefined;\n"
                         "    //$omp parallel shared(a)\n"
                         "    {\n"
                         "        var t: i64 = omp_get_thread_num();\n"
                         "        if (t < 4) {\n"
                         "            a[t] = (t + 1) * 10;\n"
                         "        }\n"
                         "    }\n"
                         "    print(a[0] + a[1] + a[2] + a[3]);\n"
                         "}\n";
    auto result = run_parallel(source, 4);
    REQUIRE(result.ok);
    CHECK(result.output == "100\n");
}

TEST_CASE("an error on one thread surfaces without hanging the team") {
    std::string source = "fn main() void {\n"
                         "    var a: [2]i64 = undefined;\n"
                         "    //$omp parallel shared(a)\n"
                         "    {\n"
                         "        if (omp_get_thread_num() == 0) {\n"
                         "            a[5] = 1;\n"
                         "        }\n"
                         "        omp_barrier();\n"
                         "    }\n"
                         "}\n";
    auto result = run_parallel(source, 4);
    REQUIRE(!result.ok);
    CHECK(result.error.find("out of bounds") != std::string::npos);
}

TEST_CASE("debug and release agree on error-free programs") {
    std::string source = testutil::read_file(testutil::fixture_path("04_reductions.kz"));
    auto debug = run_parallel(source, 2, vm::ExecMode::debug);
    auto release = run_parallel(source, 2, vm::ExecMode::release);
    REQUIRE(debug.ok);
    REQUIRE(release.ok);
    CHECK(debug.output == release.output);
}

TEST_CASE("mixed integer/float arithmetic requires explicit conversion") {
    auto result = run_text("fn main() void {\n    var x: f64 = 1 + 2.0;\n    print(x);\n}\n", 1);
    REQUIRE(!result.ok);
    CHECK(result.error.find("explicit conversion") != std::string::npos);
    auto converted = run_text(
        "fn main() void {\n    var x: f64 = @intToFloat(f64, 1) + 2.0;\n    print(x);\n}\n", 1);
    CHECK(converted.ok);
}

TEST_CASE("uninitialized reads are caught in debug mode") {
    auto result = run_text("fn main() void {\n    var x: i64 = undefined;\n    print(x);\n}\n",
                           1, vm::ExecMode::debug);
    REQUIRE(!result.ok);
    CHECK(result.error.find("uninitialized") != std::string::npos);
}

TEST_CASE("division by zero is an error in both modes") {
    for (auto mode : {vm::ExecMode::debug, vm::ExecMode::release}) {
        auto result = run_text(
            "fn main() void {\n    var z: i64 = 0;\n    print(10 / z);\n}\n", 1, mode);
        REQUIRE(!result.ok);
        CHECK(result.error.find("division by zero") != std::string::npos);
    }
}

TEST_CASE("integer overflow checks in debug mode, wraps in release mode") {
    std::string source = "fn main() void {\n"
                         "    var x: i64 = 9223372036854775807;\n"
                         "    x += 1;\n"
                         "    print(x);\n"
                         "}\n";
    auto debug = run_text(source, 1, vm::ExecMode::debug);
    REQUIRE(!debug.ok);
    CHECK(debug.error.find("overflow") != std::string::npos);
    auto release = run_text(source, 1, vm::ExecMode::release);
    REQUIRE(release.ok);
    CHECK(release.output == "-9223372036854775808\n");
}

TEST_CASE("runtime errors carry a call stack") {
    std::string source = "fn inner(a: i64) i64 {\n    return a / 0;\n}\n"
                         "fn outer() i64 {\n    return inner(3);\n}\n"
                         "fn main() void {\n    print(outer());\n}\n";
    auto result = run_text(source, 1);
    REQUIRE(!result.ok);
    REQUIRE(result.stack.size() >= 2);
    CHECK(result.stack[0] == "inner");
    CHECK(result.stack[1] == "outer");
}

TEST_CASE("unused locals and parameters are rejected unless discarded") {
    CHECK_THROWS_WITH_AS(vm::Program::compile("fn main() void {\n    var x: i64 = 0;\n}\n"),
                         doctest::Contains("unused local variable 'x'"), CompileError);
    CHECK_THROWS_WITH_AS(
        vm::Program::compile("fn f(a: i64) void {\n    return;\n}\nfn main() void {\n    f(1);\n}\n"),
        doctest::Contains("unused function parameter 'a'"), CompileError);
    CHECK_NOTHROW(vm::Program::compile("fn main() void {\n    var x: i64 = 0;\n    _ = x;\n}\n"));
}

TEST_CASE("binder rejects bad calls and missing returns are runtime errors") {
    CHECK_THROWS_WITH_AS(vm::Program::compile("fn main() void {\n    frob();\n}\n"),
                         doctest::Contains("unknown function"), CompileError);
    CHECK_THROWS_WITH_AS(
        vm::Program::compile("fn f(a: i64) i64 {\n    return a;\n}\n"
                             "fn main() void {\n    _ = f(1, 2);\n}\n"),
        doctest::Contains("expects 1 argument"), CompileError);
    auto result = run_text("fn f(a: i64) i64 {\n    _ = a;\n}\n"
                           "fn main() void {\n    print(f(1));\n}\n",
                           1);
    REQUIRE(!result.ok);
    CHECK(result.error.find("did not return a value") != std::string::npos);
}

TEST_CASE("call results must be used or discarded") {
    CHECK_THROWS_WITH_AS(
        vm::Program::compile("fn f() i64 {\n    return 1;\n}\nfn main() void {\n    f();\n}\n"),
        doctest::Contains("discarded"), CompileError);
}

TEST_CASE("struct round trip through pointers and casts") {
    std::string source =
        "const Pair = struct {\n    a: i64,\n    b: f64,\n};\n"
        "fn reader(h: ?*anyopaque) f64 {\n"
        "    const p: *Pair = @ptrCast(*Pair, h);\n"
        "    return @intToFloat(f64, p.a) + p.b;\n"
        "}\n"
        "fn main() void {\n"
        "    var pair: Pair = Pair{ .a = 4, .b = 0.5 };\n"
        "    print(reader(&pair));\n"
        "}\n";
    auto result = run_text(source, 1);
    REQUIRE(result.ok);
    CHECK(result.output == "4.5000000000000e+00\n");
}

TEST_CASE("host injection and readback round trip") {
    std::string source = "var data: []i64 = undefined;\nvar total: i64 = 0;\n"
                         "fn main() void {\n"
                         "    var i: i64 = 0;\n"
                         "    while (i < len(data)) : (i += 1) {\n"
                         "        total += data[i];\n"
                         "    }\n"
                         "}\n";
    vm::Program program = vm::Program::compile(source);
    program.inject_array_i64("data", {3, 5, 7});
    auto result = program.run("main", vm::ExecMode::debug);
    REQUIRE(result.ok);
    CHECK(program.read_i64("total") == 15);
}

TEST_CASE("serial programs are deterministic across runs") {
    std::string source = testutil::read_file(testutil::fixture_path("04_reductions.kz"));
    auto first = run_serial(source);
    auto second = run_serial(source);
    REQUIRE(first.ok);
    CHECK(first.output == second.output);
}

TEST_CASE("struct declarations in loop bodies reuse their storage") {
    std::string source = "const Acc = struct {\n    v: i64,\n};\n"
                         "fn main() void {\n"
                         "    var i: i64 = 0;\n"
                         "    var total: i64 = 0;\n"
                         "    while (i < 100000) : (i += 1) {\n"
                         "        var a: Acc = Acc{ .v = i };\n"
                         "        total += a.v % 7;\n"
                         "    }\n"
                         "    print(total);\n"
                         "}\n";
    auto result = run_text(source, 1);
    REQUIRE(result.ok);
    CHECK(result.output == "299995\n");
}

TEST_CASE("float to int conversion checks its exact boundary") {
    auto fits = run_text("fn main() void {\n"
                         "    print(@floatToInt(i64, 9223372036854774784.0));\n"
                         "}\n",
                         1);
    REQUIRE(fits.ok);
    CHECK(fits.output == "9223372036854774784\n");
    auto overflows = run_text("fn main() void {\n"
                              "    print(@floatToInt(i64, 9223372036854775808.0));\n"
                              "}\n",
                              1, vm::ExecMode::debug);
    REQUIRE(!overflows.ok);
    CHECK(overflows.error.find("out of range") != std::string::npos);
}
