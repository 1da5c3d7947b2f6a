#pragma once

#include "ast.hpp"
#include "parser.hpp"
#include "value.hpp"

#include <cstdint>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

namespace kz::vm {

enum class ExecMode : uint8_t {
    debug,   // checked integer overflow, uninitialized-read detection
    release, // wrapping integer arithmetic, no init tracking
};

// Per-slot static metadata assigned by the binder.
struct SlotInfo {
    ValueKind kind = ValueKind::none;
    PtrTag ptr_tag = PtrTag::to_i64; // pointee tag for ptr_v slots
    bool ptr_any = false;            // ?*anyopaque: any pointee accepted
    uint16_t struct_type = 0xffff;   // struct id for struct_v / ptr-to-struct
    uint32_t name_token = 0;
    bool is_const = false;
    bool is_param = false;
};

struct StructField {
    std::string name;
    SlotInfo info;
};

struct StructInfo {
    std::string name;
    std::vector<StructField> fields;
};

struct FnInfo {
    std::string name;
    NodeIndex decl = kNoNode;
    NodeIndex body = kNoNode;
    std::vector<SlotInfo> slots; // params first
    uint32_t param_count = 0;
    ValueKind return_kind = ValueKind::none; // none = void
};

enum class BuiltinId : uint8_t {
    print, len, sqrt_f, abs_f, floor_f, log_f, min_f, max_f, now_seconds,
    int_to_float, float_to_int, ptr_cast,
    omp_get_thread_num, omp_get_num_threads, omp_set_num_threads,
    omp_get_max_threads, omp_get_wtime,
    omp_fork_call, omp_static_init, omp_static_fini,
    omp_dispatch_init, omp_dispatch_next, omp_barrier,
    omp_atomic_rmw, omp_cas_reduce,
};

// Per-node binder resolutions (meaning depends on node kind).
struct NodeRes {
    uint32_t a = 0;
    uint32_t b = 0;
};

// A parsed, bound program plus its module-level storage. Compile once, run
// once; globals stay readable after the run for verification.
class Program {
public:
    static Program compile(std::string source, ParseOptions options = {});

    // Pre-run data injection: applied after module initializers execute,
    // before the entry function runs. Names must refer to module-level vars.
    void inject_i64(const std::string& name, int64_t v);
    void inject_f64(const std::string& name, double v);
    void inject_array_i64(const std::string& name, const std::vector<int64_t>& data);
    void inject_array_f64(const std::string& name, const std::vector<double>& data);

    struct RunResult {
        bool ok = true;
        std::string error;
        uint32_t error_offset = 0;
        std::vector<std::string> stack;
        std::string output;
    };

    RunResult run(const std::string& entry, ExecMode mode);

    // Post-run global readback.
    int64_t read_i64(const std::string& name) const;
    double read_f64(const std::string& name) const;
    std::vector<int64_t> read_array_i64(const std::string& name) const;
    std::vector<double> read_array_f64(const std::string& name) const;

    const Ast& ast() const { return ast_; }

private:
    friend class Binder;
    friend class Interp;

    Ast ast_;
    std::vector<NodeRes> res_;
    std::vector<uint64_t> literals_;
    std::vector<std::string> strings_;
    std::vector<uint8_t> string_op_codes_;  // precomputed ReductionOp per string
    std::vector<uint8_t> string_cmp_codes_; // precomputed CmpOp per string
    std::vector<StructInfo> structs_;
    std::vector<FnInfo> fns_;
    std::unordered_map<std::string, uint32_t> fn_by_name_;
    std::vector<SlotInfo> global_slots_;
    std::unordered_map<std::string, uint32_t> global_by_name_;
    std::vector<NodeIndex> global_decl_order_;

    std::unique_ptr<Slot[]> globals_;
    std::vector<std::unique_ptr<ArrayObj>> owned_arrays_;
    std::vector<std::unique_ptr<StructObj>> owned_structs_;

    struct Injection {
        uint32_t slot;
        Value value;
    };
    std::vector<Injection> injections_;
    bool ran_ = false;

    uint32_t global_index(const std::string& name) const;
    Value make_injected_array(ValueKind elem, const void* data, size_t n);
};

} // namespace kz::vm
