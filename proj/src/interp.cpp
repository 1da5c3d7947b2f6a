#include "interp.hpp"

#include "diag.hpp"

#include <cassert>
#include <charconv>
#include <cmath>
#include <cstring>
#include <mutex>
#include <unordered_set>

namespace kz::vm {

const char* value_kind_name(ValueKind k) {
    switch (k) {
    case ValueKind::none: return "undefined";
    case ValueKind::i64_v: return "i64";
    case ValueKind::f64_v: return "f64";
    case ValueKind::bool_v: return "bool";
    case ValueKind::str_v: return "string";
    case ValueKind::arr_i64: return "[]i64";
    case ValueKind::arr_f64: return "[]f64";
    case ValueKind::arr_bool: return "[]bool";
    case ValueKind::struct_v: return "struct";
    case ValueKind::fn_v: return "function";
    case ValueKind::ptr_v: return "pointer";
    }
    return "?";
}

namespace {

struct BuiltinDef {
    const char* name;
    BuiltinId id;
    int arity;
    bool returns_value;
};

constexpr BuiltinDef kBuiltins[] = {
    {"print", BuiltinId::print, 1, false},
    {"len", BuiltinId::len, 1, true},
    {"sqrt", BuiltinId::sqrt_f, 1, true},
    {"abs", BuiltinId::abs_f, 1, true},
    {"floor", BuiltinId::floor_f, 1, true},
    {"log", BuiltinId::log_f, 1, true},
    {"min", BuiltinId::min_f, 2, true},
    {"max", BuiltinId::max_f, 2, true},
    {"now_seconds", BuiltinId::now_seconds, 0, true},
    {"omp_get_thread_num", BuiltinId::omp_get_thread_num, 0, true},
    {"omp_get_num_threads", BuiltinId::omp_get_num_threads, 0, true},
    {"omp_set_num_threads", BuiltinId::omp_set_num_threads, 1, false},
    {"omp_get_max_threads", BuiltinId::omp_get_max_threads, 0, true},
    {"omp_get_wtime", BuiltinId::omp_get_wtime, 0, true},
    {"omp_fork_call", BuiltinId::omp_fork_call, 4, false},
    {"omp_static_init", BuiltinId::omp_static_init, 9, false},
    {"omp_static_fini", BuiltinId::omp_static_fini, 1, false},
    {"omp_dispatch_init", BuiltinId::omp_dispatch_init, 7, false},
    {"omp_dispatch_next", BuiltinId::omp_dispatch_next, 2, true},
    {"omp_barrier", BuiltinId::omp_barrier, 0, false},
    {"omp_atomic_rmw", BuiltinId::omp_atomic_rmw, 3, true},
    {"omp_cas_reduce", BuiltinId::omp_cas_reduce, 3, false},
};

const BuiltinDef* find_builtin(std::string_view name) {
    for (const auto& b : kBuiltins) {
        if (name == b.name) return &b;
    }
    return nullptr;
}

uint8_t op_code_for_string(std::string_view s) {
    if (s == "add") return uint8_t(ReductionOp::add);
    if (s == "sub") return uint8_t(ReductionOp::subtract);
    if (s == "mul") return uint8_t(ReductionOp::multiply);
    if (s == "min") return uint8_t(ReductionOp::min);
    if (s == "max") return uint8_t(ReductionOp::max);
    if (s == "band") return uint8_t(ReductionOp::bit_and);
    if (s == "bor") return uint8_t(ReductionOp::bit_or);
    if (s == "bxor") return uint8_t(ReductionOp::bit_xor);
    if (s == "land") return uint8_t(ReductionOp::logical_and);
    if (s == "lor") return uint8_t(ReductionOp::logical_or);
    return 0xff;
}

uint8_t cmp_code_for_string(std::string_view s) {
    if (s == "<") return uint8_t(rt::CmpOp::lt);
    if (s == "<=") return uint8_t(rt::CmpOp::le);
    if (s == ">") return uint8_t(rt::CmpOp::gt);
    if (s == ">=") return uint8_t(rt::CmpOp::ge);
    return 0xff;
}

// ----- binder -----------------------------------------------------------------

// Resolution markers stored in NodeRes::a for identifier nodes.
constexpr uint32_t kResLocal = 1;
constexpr uint32_t kResGlobal = 2;
constexpr uint32_t kResFn = 3;

} // namespace

class Binder {
public:
    Binder(Program& prog) : p_(prog), ast_(prog.ast_) {}

    void run() {
        p_.res_.assign(ast_.nodes.size(), NodeRes{});
        collect_top_level();
        bind_globals();
        for (uint32_t f = 0; f < p_.fns_.size(); ++f) {
            bind_fn(f);
        }
    }

private:
    Program& p_;
    Ast& ast_;

    struct LocalScope {
        std::vector<std::pair<std::string_view, uint32_t>> names;
    };
    std::vector<LocalScope> scopes_;
    FnInfo* current_fn_ = nullptr;
    std::vector<uint32_t> use_counts_;

    [[noreturn]] void fail(NodeIndex n, std::string msg) {
        throw CompileError(std::move(msg), ast_.nodes[n].span_start);
    }
    [[noreturn]] void fail_tok(uint32_t tok, std::string msg) {
        throw CompileError(std::move(msg), ast_.tokens[tok].start);
    }

    std::string_view tok_text(uint32_t tok) const { return ast_.token_text(tok); }

    std::string_view node_name(NodeIndex n) const {
        return tok_text(ast_.nodes[n].main_token);
    }

    // ----- type translation ------------------------------------------------

    SlotInfo slot_info_for_type(TypeIndex ti, uint32_t name_token, NodeIndex at) {
        const Type& t = ast_.types[ti];
        SlotInfo info;
        info.name_token = name_token;
        switch (t.kind) {
        case TypeKind::i64_type: info.kind = ValueKind::i64_v; return info;
        case TypeKind::f64_type: info.kind = ValueKind::f64_v; return info;
        case TypeKind::bool_type: info.kind = ValueKind::bool_v; return info;
        case TypeKind::named: {
            auto id = struct_id_by_name(tok_text(t.name_token));
            if (!id) fail(at, "unknown type '" + std::string(tok_text(t.name_token)) + "'");
            info.kind = ValueKind::struct_v;
            info.struct_type = uint16_t(*id);
            return info;
        }
        case TypeKind::pointer: {
            const Type& elem = ast_.types[t.elem];
            info.kind = ValueKind::ptr_v;
            switch (elem.kind) {
            case TypeKind::i64_type: info.ptr_tag = PtrTag::to_i64; return info;
            case TypeKind::f64_type: info.ptr_tag = PtrTag::to_f64; return info;
            case TypeKind::bool_type: info.ptr_tag = PtrTag::to_bool; return info;
            case TypeKind::named: {
                auto id = struct_id_by_name(tok_text(elem.name_token));
                if (!id) {
                    fail(at, "unknown type '" + std::string(tok_text(elem.name_token)) + "'");
                }
                info.ptr_tag = PtrTag::to_struct;
                info.struct_type = uint16_t(*id);
                return info;
            }
            default: fail(at, "unsupported pointee type");
            }
        }
        case TypeKind::opt_pointer: {
            if (ast_.types[t.elem].kind != TypeKind::anyopaque) {
                fail(at, "only ?*anyopaque optional pointers are supported");
            }
            info.kind = ValueKind::ptr_v;
            info.ptr_any = true;
            return info;
        }
        case TypeKind::array:
        case TypeKind::slice: {
            const Type& elem = ast_.types[t.elem];
            switch (elem.kind) {
            case TypeKind::i64_type: info.kind = ValueKind::arr_i64; break;
            case TypeKind::f64_type: info.kind = ValueKind::arr_f64; break;
            case TypeKind::bool_type: info.kind = ValueKind::arr_bool; break;
            default: fail(at, "array elements must be i64, f64 or bool");
            }
            return info;
        }
        case TypeKind::anyopaque: fail(at, "anyopaque is only valid behind ?*");
        case TypeKind::void_type: fail(at, "void is only valid as a return type");
        }
        fail(at, "unsupported type");
    }

    std::optional<uint32_t> struct_id_by_name(std::string_view name) const {
        for (uint32_t i = 0; i < p_.structs_.size(); ++i) {
            if (p_.structs_[i].name == name) return i;
        }
        return std::nullopt;
    }

    // ----- collection pass ---------------------------------------------------

    void collect_top_level() {
        const Node& root = ast_.nodes[0];
        std::unordered_set<std::string_view> top_names;

        auto claim = [&](uint32_t tok) {
            std::string_view name = tok_text(tok);
            if (find_builtin(name)) {
                fail_tok(tok, "'" + std::string(name) + "' collides with a builtin");
            }
            if (!top_names.insert(name).second) {
                fail_tok(tok, "duplicate top-level name '" + std::string(name) + "'");
            }
        };

        // Structs first so later signatures can reference them.
        for (uint32_t i = root.lhs; i < root.rhs; ++i) {
            NodeIndex d = ast_.extra[i];
            if (ast_.nodes[d].kind != NodeKind::struct_decl) continue;
            claim(ast_.nodes[d].main_token);
            StructInfo info;
            info.name = std::string(node_name(d));
            p_.structs_.push_back(std::move(info));
        }
        uint32_t struct_cursor = 0;
        for (uint32_t i = root.lhs; i < root.rhs; ++i) {
            NodeIndex d = ast_.extra[i];
            const Node& n = ast_.nodes[d];
            if (n.kind != NodeKind::struct_decl) continue;
            StructInfo& info = p_.structs_[struct_cursor];
            p_.res_[d] = {0, struct_cursor};
            ++struct_cursor;
            for (uint32_t f = n.lhs; f < n.rhs; f += 2) {
                uint32_t fname = ast_.extra[f];
                TypeIndex ftype = ast_.extra[f + 1];
                StructField field;
                field.name = std::string(tok_text(fname));
                field.info = slot_info_for_type(ftype, fname, d);
                if (field.info.kind == ValueKind::struct_v) {
                    fail_tok(fname, "nested struct fields are not supported");
                }
                info.fields.push_back(std::move(field));
            }
        }

        for (uint32_t i = root.lhs; i < root.rhs; ++i) {
            NodeIndex d = ast_.extra[i];
            const Node& n = ast_.nodes[d];
            if (n.kind == NodeKind::fn_decl) {
                claim(n.main_token);
                FnInfo fn;
                fn.name = std::string(node_name(d));
                fn.decl = d;
                fn.body = n.rhs;
                FnData data = read_fn_data(ast_, n.lhs);
                for (auto [ptok, ptype] : data.params) {
                    SlotInfo info = slot_info_for_type(ptype, ptok, d);
                    info.is_param = true;
                    info.is_const = true;
                    fn.slots.push_back(info);
                }
                fn.param_count = uint32_t(data.params.size());
                const Type& ret = ast_.types[data.return_type];
                switch (ret.kind) {
                case TypeKind::void_type: fn.return_kind = ValueKind::none; break;
                case TypeKind::i64_type: fn.return_kind = ValueKind::i64_v; break;
                case TypeKind::f64_type: fn.return_kind = ValueKind::f64_v; break;
                case TypeKind::bool_type: fn.return_kind = ValueKind::bool_v; break;
                default: fail(d, "functions may only return i64, f64, bool or void");
                }
                p_.fn_by_name_.emplace(fn.name, uint32_t(p_.fns_.size()));
                p_.res_[d] = {0, uint32_t(p_.fns_.size())};
                p_.fns_.push_back(std::move(fn));
            } else if (n.kind == NodeKind::var_decl) {
                claim(n.main_token);
                SlotInfo info = slot_info_for_type(n.lhs, n.main_token, d);
                info.is_const = decl_is_const(d);
                uint32_t slot = uint32_t(p_.global_slots_.size());
                p_.global_by_name_.emplace(std::string(node_name(d)), slot);
                p_.global_slots_.push_back(info);
                p_.global_decl_order_.push_back(d);
                p_.res_[d] = {kResGlobal, slot};
            }
        }
    }

    bool decl_is_const(NodeIndex d) const {
        // span_start points at the var/const keyword
        return ast_.src().substr(ast_.nodes[d].span_start, 5) == "const";
    }

    // ----- binding ---------------------------------------------------------------

    void bind_globals() {
        for (NodeIndex d : p_.global_decl_order_) {
            const Node& n = ast_.nodes[d];
            bind_type_exprs(n.lhs);
            if (n.rhs != kNoNode) bind_expr(n.rhs);
        }
    }

    void bind_type_exprs(TypeIndex ti) {
        const Type& t = ast_.types[ti];
        if (t.kind == TypeKind::array && t.size_node != kNoNode) {
            bind_expr(t.size_node);
        }
        if (t.kind == TypeKind::pointer || t.kind == TypeKind::opt_pointer ||
            t.kind == TypeKind::array || t.kind == TypeKind::slice) {
            bind_type_exprs(t.elem);
        }
    }

    void bind_fn(uint32_t fn_id) {
        FnInfo& fn = p_.fns_[fn_id];
        current_fn_ = &fn;
        scopes_.clear();
        scopes_.emplace_back();
        use_counts_.assign(fn.slots.size(), 0);
        for (uint32_t i = 0; i < fn.param_count; ++i) {
            declare_name(tok_text(fn.slots[i].name_token), i, fn.slots[i].name_token);
        }
        bind_stmt(fn.body);

        for (uint32_t i = 0; i < fn.slots.size(); ++i) {
            if (use_counts_.size() > i && use_counts_[i] == 0) {
                const char* what = i < fn.param_count ? "function parameter" : "local variable";
                fail_tok(fn.slots[i].name_token,
                         std::string("unused ") + what + " '" +
                             std::string(tok_text(fn.slots[i].name_token)) +
                             "'; discard it with '_ = " +
                             std::string(tok_text(fn.slots[i].name_token)) + ";'");
            }
        }
        current_fn_ = nullptr;
    }

    void declare_name(std::string_view name, uint32_t slot, uint32_t tok) {
        if (p_.global_by_name_.count(std::string(name)) ||
            p_.fn_by_name_.count(std::string(name)) || struct_id_by_name(name) ||
            find_builtin(name)) {
            fail_tok(tok, "cannot redeclare '" + std::string(name) +
                              "': shadowing is not allowed");
        }
        scopes_.back().names.emplace_back(name, slot);
    }

    std::optional<uint32_t> lookup_local(std::string_view name) const {
        for (auto it = scopes_.rbegin(); it != scopes_.rend(); ++it) {
            for (auto& [n, slot] : it->names) {
                if (n == name) return slot;
            }
        }
        return std::nullopt;
    }

    void bind_stmt(NodeIndex s) {
        const Node& n = ast_.nodes[s];
        switch (n.kind) {
        case NodeKind::block: {
            scopes_.emplace_back();
            for (uint32_t i = n.lhs; i < n.rhs; ++i) {
                bind_stmt(ast_.extra[i]);
            }
            scopes_.pop_back();
            break;
        }
        case NodeKind::var_decl: {
            if (current_fn_ == nullptr) fail(s, "nested functions are not supported");
            bind_type_exprs(n.lhs);
            if (n.rhs != kNoNode) bind_expr(n.rhs);
            SlotInfo info = slot_info_for_type(n.lhs, n.main_token, s);
            info.is_const = decl_is_const(s);
            uint32_t slot = uint32_t(current_fn_->slots.size());
            current_fn_->slots.push_back(info);
            use_counts_.push_back(0);
            declare_name(node_name(s), slot, n.main_token);
            p_.res_[s] = {kResLocal, slot};
            break;
        }
        case NodeKind::while_stmt: {
            bind_expr(n.lhs);
            auto [cont, body] = while_parts(ast_, n);
            bind_stmt(body);
            if (cont != kNoNode) bind_stmt(cont);
            break;
        }
        case NodeKind::if_stmt: {
            bind_expr(n.lhs);
            auto [then_block, else_stmt] = if_parts(ast_, n);
            bind_stmt(then_block);
            if (else_stmt != kNoNode) bind_stmt(else_stmt);
            break;
        }
        case NodeKind::assign: {
            const Node& target = ast_.nodes[n.lhs];
            if (target.kind == NodeKind::discard) {
                bind_expr(n.rhs);
                break;
            }
            bind_expr(n.lhs);
            bind_expr(n.rhs);
            if (target.kind == NodeKind::ident) {
                const NodeRes& r = p_.res_[n.lhs];
                const SlotInfo* info = nullptr;
                if (r.a == kResLocal) info = &current_fn_->slots[r.b];
                if (r.a == kResGlobal) info = &p_.global_slots_[r.b];
                if (r.a == kResFn) fail(s, "cannot assign to a function");
                if (info && info->is_const) {
                    fail(s, "cannot assign to constant '" +
                                std::string(node_name(n.lhs)) + "'");
                }
            }
            break;
        }
        case NodeKind::return_stmt:
            if (n.lhs != kNoNode) bind_expr(n.lhs);
            break;
        case NodeKind::expr_stmt: {
            bind_expr(n.lhs);
            const Node& call = ast_.nodes[n.lhs];
            bool returns_value = false;
            if (call.kind == NodeKind::call) {
                const NodeRes& r = p_.res_[n.lhs];
                if (r.a == 1) {
                    returns_value = kBuiltins[r.b].returns_value;
                } else {
                    returns_value = p_.fns_[r.b].return_kind != ValueKind::none;
                }
            } else if (call.kind == NodeKind::builtin_call) {
                returns_value = true;
            }
            if (returns_value) {
                fail(s, "call result must be used or discarded with '_ = ...'");
            }
            break;
        }
        case NodeKind::omp_parallel:
        case NodeKind::omp_while:
        case NodeKind::omp_atomic: {
            // Clause identifier lists are name-resolved by the preprocessor,
            // not the binder; only the governed statement binds here.
            bind_stmt(n.rhs);
            break;
        }
        default:
            fail(s, "unexpected statement");
        }
    }

    void bind_expr(NodeIndex e) {
        const Node& n = ast_.nodes[e];
        switch (n.kind) {
        case NodeKind::ident: {
            std::string_view name = node_name(e);
            if (name == "_") fail(e, "'_' cannot be used as a value");
            if (auto slot = lookup_local(name)) {
                p_.res_[e] = {kResLocal, *slot};
                ++use_counts_[*slot];
                return;
            }
            auto git = p_.global_by_name_.find(std::string(name));
            if (git != p_.global_by_name_.end()) {
                p_.res_[e] = {kResGlobal, git->second};
                return;
            }
            auto fit = p_.fn_by_name_.find(std::string(name));
            if (fit != p_.fn_by_name_.end()) {
                p_.res_[e] = {kResFn, fit->second};
                return;
            }
            fail(e, "use of undeclared identifier '" + std::string(name) + "'");
        }
        case NodeKind::int_lit: {
            std::string_view text = node_name(e);
            int64_t value = 0;
            auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
            if (ec != std::errc() || ptr != text.data() + text.size()) {
                fail(e, "integer literal out of range");
            }
            p_.res_[e] = {0, uint32_t(p_.literals_.size())};
            p_.literals_.push_back(std::bit_cast<uint64_t>(value));
            return;
        }
        case NodeKind::float_lit: {
            std::string text(node_name(e));
            double value = std::strtod(text.c_str(), nullptr);
            p_.res_[e] = {0, uint32_t(p_.literals_.size())};
            p_.literals_.push_back(std::bit_cast<uint64_t>(value));
            return;
        }
        case NodeKind::str_lit: {
            std::string_view raw = node_name(e);
            std::string decoded;
            for (size_t i = 1; i + 1 < raw.size(); ++i) {
                if (raw[i] == '\\' && i + 2 < raw.size()) {
                    ++i;
                    switch (raw[i]) {
                    case 'n': decoded += '\n'; break;
                    case 't': decoded += '\t'; break;
                    default: decoded += raw[i]; break;
                    }
                } else {
                    decoded += raw[i];
                }
            }
            p_.res_[e] = {0, uint32_t(p_.strings_.size())};
            p_.string_op_codes_.push_back(op_code_for_string(decoded));
            p_.string_cmp_codes_.push_back(cmp_code_for_string(decoded));
            p_.strings_.push_back(std::move(decoded));
            return;
        }
        case NodeKind::bool_lit:
        case NodeKind::null_lit:
            return;
        case NodeKind::binary:
            bind_expr(n.lhs);
            bind_expr(n.rhs);
            return;
        case NodeKind::unary:
            bind_expr(n.lhs);
            return;
        case NodeKind::deref:
            bind_expr(n.lhs);
            return;
        case NodeKind::index:
            bind_expr(n.lhs);
            bind_expr(n.rhs);
            return;
        case NodeKind::member: {
            const Node& base = ast_.nodes[n.lhs];
            if (base.kind != NodeKind::ident) {
                fail(e, "field access requires a struct variable");
            }
            bind_expr(n.lhs);
            const NodeRes& r = p_.res_[n.lhs];
            const SlotInfo* info = nullptr;
            if (r.a == kResLocal) info = &current_fn_->slots[r.b];
            else if (r.a == kResGlobal) info = &p_.global_slots_[r.b];
            else fail(e, "field access requires a struct variable");
            uint16_t stype = 0xffff;
            if (info->kind == ValueKind::struct_v) stype = info->struct_type;
            else if (info->kind == ValueKind::ptr_v && info->ptr_tag == PtrTag::to_struct &&
                     !info->ptr_any) {
                stype = info->struct_type;
            } else {
                fail(e, "field access requires a struct variable");
            }
            const StructInfo& si = p_.structs_[stype];
            std::string_view field_name = tok_text(n.main_token);
            for (uint32_t f = 0; f < si.fields.size(); ++f) {
                if (si.fields[f].name == field_name) {
                    p_.res_[e] = {stype, f};
                    return;
                }
            }
            fail(e, "no field '" + std::string(field_name) + "' in struct '" + si.name + "'");
        }
        case NodeKind::struct_lit: {
            auto id = struct_id_by_name(node_name(e));
            if (!id) fail(e, "unknown struct type '" + std::string(node_name(e)) + "'");
            const StructInfo& si = p_.structs_[*id];
            uint32_t count = (n.rhs - n.lhs) / 2;
            if (count != si.fields.size()) {
                fail(e, "struct literal must initialize every field of '" + si.name + "'");
            }
            for (uint32_t f = 0; f < count; ++f) {
                uint32_t ftok = ast_.extra[n.lhs + 2 * f];
                NodeIndex fexpr = ast_.extra[n.lhs + 2 * f + 1];
                if (tok_text(ftok) != si.fields[f].name) {
                    fail_tok(ftok, "struct literal fields must appear in declaration order");
                }
                bind_expr(fexpr);
            }
            p_.res_[e] = {0, *id};
            return;
        }
        case NodeKind::call: {
            std::string_view name = node_name(e);
            auto args = call_args(ast_, n);
            for (NodeIndex a : args) bind_expr(a);
            if (const BuiltinDef* b = find_builtin(name)) {
                if (int(args.size()) != b->arity) {
                    fail(e, "'" + std::string(name) + "' expects " +
                                std::to_string(b->arity) + " argument(s)");
                }
                p_.res_[e] = {1, uint32_t(b - kBuiltins)};
                return;
            }
            auto fit = p_.fn_by_name_.find(std::string(name));
            if (fit == p_.fn_by_name_.end()) {
                fail(e, "call to unknown function '" + std::string(name) + "'");
            }
            const FnInfo& fn = p_.fns_[fit->second];
            if (args.size() != fn.param_count) {
                fail(e, "'" + std::string(name) + "' expects " +
                            std::to_string(fn.param_count) + " argument(s)");
            }
            p_.res_[e] = {0, fit->second};
            return;
        }
        case NodeKind::builtin_call: {
            std::string_view name = node_name(e);
            auto args = call_args(ast_, n);
            for (NodeIndex a : args) bind_expr(a);
            const Type& t = ast_.types[n.lhs];
            if (name == "@intToFloat") {
                if (t.kind != TypeKind::f64_type) {
                    fail(e, "@intToFloat target type must be f64");
                }
                p_.res_[e] = {uint32_t(BuiltinId::int_to_float), 0};
            } else if (name == "@floatToInt") {
                if (t.kind != TypeKind::i64_type) {
                    fail(e, "@floatToInt target type must be i64");
                }
                p_.res_[e] = {uint32_t(BuiltinId::float_to_int), 0};
            } else {
                // @ptrCast(*Struct, handle)
                if (t.kind != TypeKind::pointer ||
                    ast_.types[t.elem].kind != TypeKind::named) {
                    fail(e, "@ptrCast target must be a pointer to a struct type");
                }
                auto id = struct_id_by_name(tok_text(ast_.types[t.elem].name_token));
                if (!id) fail(e, "unknown struct type in @ptrCast");
                p_.res_[e] = {uint32_t(BuiltinId::ptr_cast), *id};
            }
            return;
        }
        case NodeKind::discard:
            fail(e, "'_' cannot be used as a value");
        default:
            fail(e, "unexpected expression");
        }
    }
};

// ----- evaluator --------------------------------------------------------------------

namespace {

// Per-thread slot arena with stack discipline. Worker threads persist in the
// pool, so the arena is reused across forks.
class SlotArena {
public:
    Slot* alloc(size_t n) {
        if (storage_ == nullptr) {
            capacity_ = 1 << 16;
            storage_.reset(new Slot[capacity_]);
        }
        if (top_ + n > capacity_) {
            throw RuntimeError("call stack exhausted", 0);
        }
        Slot* base = storage_.get() + top_;
        top_ += n;
        for (size_t i = 0; i < n; ++i) {
            base[i].cell.store(0, std::memory_order_relaxed);
            base[i].flags.store(0, std::memory_order_relaxed);
        }
        return base;
    }

    void release(size_t n) { top_ -= n; }

private:
    std::unique_ptr<Slot[]> storage_;
    size_t capacity_ = 0;
    size_t top_ = 0;
};

thread_local SlotArena t_arena;
thread_local std::vector<const FnInfo*> t_call_stack;

} // namespace

class Interp {
public:
    Interp(Program& p, ExecMode mode) : p_(p), ast_(p.ast_), mode_(mode) {}

    void run_entry(const std::string& entry) {
        run_globals();
        for (const auto& inj : p_.injections_) {
            p_.globals_[inj.slot].store(inj.value.bits);
        }
        auto it = p_.fn_by_name_.find(entry);
        if (it == p_.fn_by_name_.end()) {
            throw RuntimeError("no entry function '" + entry + "'", 0);
        }
        const FnInfo& fn = p_.fns_[it->second];
        if (fn.param_count != 0) {
            throw RuntimeError("entry function must take no parameters", 0);
        }
        call_fn(it->second, nullptr, 0, fn.decl);
    }

    std::string take_output() {
        std::lock_guard lock(output_mutex_);
        return std::move(output_);
    }

private:
    void run_globals() {
        Frame fr;
        fr.slots = p_.globals_.get();
        fr.global = true;
        for (NodeIndex d : p_.global_decl_order_) {
            exec_var_decl(d, fr);
        }
    }

    Program& p_;
    Ast& ast_;
    ExecMode mode_;
    std::string output_;
    std::mutex output_mutex_;

    struct Frame {
        Slot* slots = nullptr;
        const FnInfo* fn = nullptr;
        std::vector<std::pair<uint32_t, std::unique_ptr<ArrayObj>>>* arrays = nullptr;
        std::vector<std::pair<uint32_t, std::unique_ptr<StructObj>>>* structs = nullptr;
        bool global = false;
    };

    enum class Flow : uint8_t { normal, returned };

    bool debug() const { return mode_ == ExecMode::debug; }

    [[noreturn]] void fail(NodeIndex n, std::string msg) {
        std::vector<std::string> stack;
        for (auto it = t_call_stack.rbegin(); it != t_call_stack.rend(); ++it) {
            stack.push_back((*it)->name);
        }
        throw RuntimeError(std::move(msg), ast_.nodes[n].span_start, std::move(stack));
    }

    std::string_view node_name(NodeIndex n) const {
        return ast_.token_text(ast_.nodes[n].main_token);
    }

    // ----- storage access -------------------------------------------------------

    struct Place {
        rt::Cell* cell = nullptr;
        Slot* slot = nullptr; // non-null when init tracking applies
        ValueKind kind = ValueKind::none;
        PtrTag ptr_tag = PtrTag::to_i64;
        bool ptr_any = false;
        uint16_t stype = 0xffff;
        uint32_t name_token = 0;
    };

    const SlotInfo& slot_info(const NodeRes& r, const Frame& fr) const {
        return r.a == kResLocal ? fr.fn->slots[r.b] : p_.global_slots_[r.b];
    }

    Slot& slot_ref(const NodeRes& r, Frame& fr) const {
        return r.a == kResLocal ? fr.slots[r.b] : p_.globals_[r.b];
    }

    Place resolve_place(NodeIndex n, Frame& fr) {
        const Node& node = ast_.nodes[n];
        switch (node.kind) {
        case NodeKind::ident: {
            const NodeRes& r = p_.res_[n];
            if (r.a == kResFn) fail(n, "functions are not assignable locations");
            const SlotInfo& info = slot_info(r, fr);
            Slot& slot = slot_ref(const_cast<NodeRes&>(r), fr);
            Place place;
            place.cell = &slot.cell;
            place.slot = &slot;
            place.kind = info.kind;
            place.ptr_tag = info.ptr_tag;
            place.ptr_any = info.ptr_any;
            place.stype = info.struct_type;
            place.name_token = node.main_token;
            return place;
        }
        case NodeKind::index: {
            Value base = eval(node.lhs, fr);
            if (!is_array_kind(base.kind)) {
                fail(n, "cannot index a value of type " +
                            std::string(value_kind_name(base.kind)));
            }
            Value idx = eval(node.rhs, fr);
            if (idx.kind != ValueKind::i64_v) fail(n, "array index must be an i64");
            ArrayObj* arr = as_array(base);
            int64_t i = idx.as_i64();
            if (i < 0 || i >= arr->len) {
                fail(n, "index " + std::to_string(i) + " out of bounds for length " +
                            std::to_string(arr->len));
            }
            Place place;
            place.cell = &arr->cells[i];
            place.kind = arr->elem;
            return place;
        }
        case NodeKind::member: {
            StructObj* obj = member_object(n, fr);
            const NodeRes& r = p_.res_[n];
            const StructField& field = p_.structs_[r.a].fields[r.b];
            Place place;
            place.cell = &obj->fields[r.b].cell;
            place.slot = &obj->fields[r.b];
            place.kind = field.info.kind;
            place.ptr_tag = field.info.ptr_tag;
            place.ptr_any = field.info.ptr_any;
            place.stype = field.info.struct_type;
            place.name_token = node.main_token;
            return place;
        }
        case NodeKind::deref: {
            Value base = eval(node.lhs, fr);
            if (base.kind != ValueKind::ptr_v) fail(n, "'.*' requires a pointer");
            if (ptr_cell(base) == nullptr) fail(n, "null pointer dereference");
            Place place;
            place.cell = ptr_cell(base);
            place.kind = kind_for_tag(ptr_tag(base));
            return place;
        }
        default:
            fail(n, "expression is not an assignable location");
        }
    }

    StructObj* member_object(NodeIndex n, Frame& fr) {
        const Node& node = ast_.nodes[n];
        Value base = eval(node.lhs, fr);
        StructObj* obj = nullptr;
        if (base.kind == ValueKind::struct_v) {
            obj = as_struct(base);
        } else if (base.kind == ValueKind::ptr_v) {
            if (ptr_cell(base) == nullptr) fail(n, "null pointer dereference");
            if (ptr_tag(base) != PtrTag::to_struct) fail(n, "field access requires a struct");
            obj = reinterpret_cast<StructObj*>(
                ptr_cell(base)->load(std::memory_order_relaxed));
        } else {
            fail(n, "field access requires a struct");
        }
        if (obj == nullptr) fail(n, "use of undefined struct value");
        const NodeRes& r = p_.res_[n];
        if (debug() && obj->type_id != r.a) {
            fail(n, "struct type mismatch in field access");
        }
        return obj;
    }

    Value load_place(const Place& place, NodeIndex at) {
        if (debug() && place.slot != nullptr && !place.slot->initialized()) {
            fail(at, "use of uninitialized value" +
                         (place.name_token
                              ? " '" + std::string(ast_.token_text(place.name_token)) + "'"
                              : std::string()));
        }
        return Value{place.cell->load(std::memory_order_relaxed), place.kind};
    }

    void store_place(const Place& place, Value v, NodeIndex at) {
        if (v.kind != place.kind) {
            fail(at, std::string("cannot assign ") + value_kind_name(v.kind) + " to " +
                         value_kind_name(place.kind));
        }
        if (v.kind == ValueKind::ptr_v && !place.ptr_any && v.bits != 0 &&
            ptr_tag(v) != place.ptr_tag) {
            fail(at, "pointer type mismatch in assignment");
        }
        place.cell->store(v.bits, std::memory_order_relaxed);
        if (place.slot != nullptr) {
            place.slot->flags.store(1, std::memory_order_relaxed);
        }
    }

    // ----- expression evaluation ---------------------------------------------------

    Value eval(NodeIndex n, Frame& fr) {
        const Node& node = ast_.nodes[n];
        switch (node.kind) {
        case NodeKind::int_lit:
            return Value{p_.literals_[p_.res_[n].b], ValueKind::i64_v};
        case NodeKind::float_lit:
            return Value{p_.literals_[p_.res_[n].b], ValueKind::f64_v};
        case NodeKind::str_lit:
            return Value{p_.res_[n].b, ValueKind::str_v};
        case NodeKind::bool_lit:
            return Value::of_bool(ast_.tokens[node.main_token].tag == TokenTag::kw_true);
        case NodeKind::null_lit:
            return Value{0, ValueKind::ptr_v};
        case NodeKind::ident: {
            const NodeRes& r = p_.res_[n];
            if (r.a == kResFn) return Value{r.b, ValueKind::fn_v};
            const SlotInfo& info = slot_info(r, fr);
            Slot& slot = slot_ref(const_cast<NodeRes&>(r), fr);
            if (debug() && !slot.initialized()) {
                fail(n, "use of uninitialized variable '" + std::string(node_name(n)) + "'");
            }
            uint64_t bits = slot.load();
            if (!debug() && is_array_kind(info.kind) && bits == 0) {
                fail(n, "use of uninitialized variable '" + std::string(node_name(n)) + "'");
            }
            return Value{bits, info.kind};
        }
        case NodeKind::binary:
            return eval_binary(n, fr);
        case NodeKind::unary:
            return eval_unary(n, fr);
        case NodeKind::deref:
        case NodeKind::index:
        case NodeKind::member: {
            Place place = resolve_place(n, fr);
            return load_place(place, n);
        }
        case NodeKind::struct_lit:
            return eval_struct_lit(n, fr);
        case NodeKind::call:
            return eval_call(n, fr);
        case NodeKind::builtin_call:
            return eval_builtin_call(n, fr);
        default:
            fail(n, "unexpected expression");
        }
    }

    Value eval_unary(NodeIndex n, Frame& fr) {
        const Node& node = ast_.nodes[n];
        TokenTag op = ast_.tokens[node.main_token].tag;
        if (op == TokenTag::amp) {
            const Node& operand = ast_.nodes[node.lhs];
            if (operand.kind == NodeKind::deref) {
                // &x.* is x
                Value v = eval(operand.lhs, fr);
                if (v.kind != ValueKind::ptr_v) fail(n, "'.*' requires a pointer");
                return v;
            }
            Place place = resolve_place(node.lhs, fr);
            switch (place.kind) {
            case ValueKind::i64_v: return make_ptr(place.cell, PtrTag::to_i64);
            case ValueKind::f64_v: return make_ptr(place.cell, PtrTag::to_f64);
            case ValueKind::bool_v: return make_ptr(place.cell, PtrTag::to_bool);
            case ValueKind::struct_v: return make_ptr(place.cell, PtrTag::to_struct);
            default: fail(n, "cannot take the address of this value");
            }
        }
        Value v = eval(node.lhs, fr);
        if (op == TokenTag::minus) {
            if (v.kind == ValueKind::i64_v) {
                int64_t x = v.as_i64();
                if (debug() && x == INT64_MIN) fail(n, "integer overflow in negation");
                return Value::of_i64(int64_t(uint64_t(0) - uint64_t(x)));
            }
            if (v.kind == ValueKind::f64_v) return Value::of_f64(-v.as_f64());
            fail(n, "negation requires a numeric operand");
        }
        // logical not
        if (v.kind != ValueKind::bool_v) fail(n, "'!' requires a bool operand");
        return Value::of_bool(!v.as_bool());
    }

    Value eval_binary(NodeIndex n, Frame& fr) {
        const Node& node = ast_.nodes[n];
        TokenTag op = ast_.tokens[node.main_token].tag;
        if (op == TokenTag::kw_and || op == TokenTag::kw_or) {
            Value l = eval(node.lhs, fr);
            if (l.kind != ValueKind::bool_v) fail(n, "'and'/'or' require bool operands");
            if (op == TokenTag::kw_and && !l.as_bool()) return Value::of_bool(false);
            if (op == TokenTag::kw_or && l.as_bool()) return Value::of_bool(true);
            Value r = eval(node.rhs, fr);
            if (r.kind != ValueKind::bool_v) fail(n, "'and'/'or' require bool operands");
            return r;
        }
        Value l = eval(node.lhs, fr);
        Value r = eval(node.rhs, fr);
        return apply_binary(op, l, r, n);
    }

    Value apply_binary(TokenTag op, Value l, Value r, NodeIndex n) {
        switch (op) {
        case TokenTag::eq_eq:
        case TokenTag::bang_eq: {
            if (l.kind != r.kind) fail(n, "comparison of mismatched types");
            bool eq;
            if (l.kind == ValueKind::f64_v) {
                eq = l.as_f64() == r.as_f64();
            } else if (l.kind == ValueKind::i64_v || l.kind == ValueKind::bool_v) {
                eq = l.bits == r.bits;
            } else {
                fail(n, "equality requires numeric or bool operands");
            }
            return Value::of_bool(op == TokenTag::eq_eq ? eq : !eq);
        }
        case TokenTag::lt:
        case TokenTag::lt_eq:
        case TokenTag::gt:
        case TokenTag::gt_eq: {
            if (l.kind != r.kind) fail(n, "comparison of mismatched types");
            bool result;
            if (l.kind == ValueKind::i64_v) {
                int64_t a = l.as_i64(), b = r.as_i64();
                result = op == TokenTag::lt      ? a < b
                         : op == TokenTag::lt_eq ? a <= b
                         : op == TokenTag::gt    ? a > b
                                                 : a >= b;
            } else if (l.kind == ValueKind::f64_v) {
                double a = l.as_f64(), b = r.as_f64();
                result = op == TokenTag::lt      ? a < b
                         : op == TokenTag::lt_eq ? a <= b
                         : op == TokenTag::gt    ? a > b
                                                 : a >= b;
            } else {
                fail(n, "ordering requires numeric operands");
            }
            return Value::of_bool(result);
        }
        default: break;
        }

        if (l.kind == ValueKind::i64_v && r.kind == ValueKind::i64_v) {
            return apply_int(op, l.as_i64(), r.as_i64(), n);
        }
        if (l.kind == ValueKind::f64_v && r.kind == ValueKind::f64_v) {
            return apply_float(op, l.as_f64(), r.as_f64(), n);
        }
        if ((l.kind == ValueKind::i64_v && r.kind == ValueKind::f64_v) ||
            (l.kind == ValueKind::f64_v && r.kind == ValueKind::i64_v)) {
            fail(n, "mixed integer/float arithmetic requires an explicit conversion");
        }
        fail(n, std::string("invalid operands: ") + value_kind_name(l.kind) + " and " +
                    value_kind_name(r.kind));
    }

    Value apply_int(TokenTag op, int64_t a, int64_t b, NodeIndex n) {
        int64_t out = 0;
        switch (op) {
        case TokenTag::plus:
        case TokenTag::plus_eq:
            if (debug() && __builtin_add_overflow(a, b, &out)) fail(n, "integer overflow");
            return Value::of_i64(int64_t(uint64_t(a) + uint64_t(b)));
        case TokenTag::minus:
        case TokenTag::minus_eq:
            if (debug() && __builtin_sub_overflow(a, b, &out)) fail(n, "integer overflow");
            return Value::of_i64(int64_t(uint64_t(a) - uint64_t(b)));
        case TokenTag::star:
        case TokenTag::star_eq:
            if (debug() && __builtin_mul_overflow(a, b, &out)) fail(n, "integer overflow");
            return Value::of_i64(int64_t(uint64_t(a) * uint64_t(b)));
        case TokenTag::slash:
        case TokenTag::slash_eq:
            if (b == 0) fail(n, "division by zero");
            if (a == INT64_MIN && b == -1) {
                if (debug()) fail(n, "integer overflow in division");
                return Value::of_i64(INT64_MIN);
            }
            return Value::of_i64(a / b);
        case TokenTag::percent:
        case TokenTag::percent_eq:
            if (b == 0) fail(n, "division by zero");
            if (a == INT64_MIN && b == -1) return Value::of_i64(0);
            return Value::of_i64(a % b);
        case TokenTag::amp:
        case TokenTag::amp_eq: return Value::of_i64(a & b);
        case TokenTag::pipe:
        case TokenTag::pipe_eq: return Value::of_i64(a | b);
        case TokenTag::caret:
        case TokenTag::caret_eq: return Value::of_i64(a ^ b);
        default: fail(n, "unsupported integer operator");
        }
    }

    Value apply_float(TokenTag op, double a, double b, NodeIndex n) {
        switch (op) {
        case TokenTag::plus:
        case TokenTag::plus_eq: return Value::of_f64(a + b);
        case TokenTag::minus:
        case TokenTag::minus_eq: return Value::of_f64(a - b);
        case TokenTag::star:
        case TokenTag::star_eq: return Value::of_f64(a * b);
        case TokenTag::slash:
        case TokenTag::slash_eq: return Value::of_f64(a / b);
        default: fail(n, "unsupported float operator");
        }
    }

    void fill_struct_lit(NodeIndex n, StructObj* obj, Frame& fr) {
        const Node& node = ast_.nodes[n];
        const StructInfo& si = p_.structs_[obj->type_id];
        for (uint32_t f = 0; f < si.fields.size(); ++f) {
            NodeIndex fexpr = ast_.extra[node.lhs + 2 * f + 1];
            Value v = eval(fexpr, fr);
            const SlotInfo& fi = si.fields[f].info;
            Place place;
            place.cell = &obj->fields[f].cell;
            place.slot = &obj->fields[f];
            place.kind = fi.kind;
            place.ptr_tag = fi.ptr_tag;
            place.ptr_any = fi.ptr_any;
            store_place(place, v, fexpr);
        }
    }

    StructObj* materialize_struct(Frame& fr, const NodeRes& r, const SlotInfo& info) {
        for (auto& [slot_id, obj] : *fr.structs) {
            if (slot_id == r.b) return obj.get();
        }
        fr.structs->emplace_back(
            r.b, std::make_unique<StructObj>(info.struct_type,
                                             uint32_t(p_.structs_[info.struct_type]
                                                          .fields.size())));
        return fr.structs->back().second.get();
    }

    Value eval_struct_lit(NodeIndex n, Frame& fr) {
        uint32_t type_id = p_.res_[n].b;
        const StructInfo& si = p_.structs_[type_id];
        auto obj = std::make_unique<StructObj>(type_id, uint32_t(si.fields.size()));
        fill_struct_lit(n, obj.get(), fr);
        Value v{reinterpret_cast<uint64_t>(obj.get()), ValueKind::struct_v};
        if (fr.structs != nullptr) {
            fr.structs->emplace_back(0xffffffffu, std::move(obj));
        } else {
            p_.owned_structs_.push_back(std::move(obj)); // module scope
        }
        return v;
    }

    std::vector<std::pair<uint32_t, std::unique_ptr<ArrayObj>>>* owned_arrays(Frame& fr) {
        return fr.arrays;
    }

    // ----- statement execution ----------------------------------------------------

    Flow exec(NodeIndex s, Frame& fr, Value* ret) {
        const Node& node = ast_.nodes[s];
        switch (node.kind) {
        case NodeKind::block: {
            for (uint32_t i = node.lhs; i < node.rhs; ++i) {
                Flow flow = exec(ast_.extra[i], fr, ret);
                if (flow != Flow::normal) return flow;
            }
            return Flow::normal;
        }
        case NodeKind::var_decl:
            exec_var_decl(s, fr);
            return Flow::normal;
        case NodeKind::assign:
            exec_assign(s, fr);
            return Flow::normal;
        case NodeKind::expr_stmt:
            eval(node.lhs, fr);
            return Flow::normal;
        case NodeKind::while_stmt: {
            auto [cont, body] = while_parts(ast_, node);
            for (;;) {
                Value c = eval(node.lhs, fr);
                if (c.kind != ValueKind::bool_v) fail(s, "loop condition must be a bool");
                if (!c.as_bool()) break;
                Flow flow = exec(body, fr, ret);
                if (flow != Flow::normal) return flow;
                if (cont != kNoNode) exec_assign(cont, fr);
            }
            return Flow::normal;
        }
        case NodeKind::if_stmt: {
            Value c = eval(node.lhs, fr);
            if (c.kind != ValueKind::bool_v) fail(s, "if condition must be a bool");
            auto [then_block, else_stmt] = if_parts(ast_, node);
            if (c.as_bool()) return exec(then_block, fr, ret);
            if (else_stmt != kNoNode) return exec(else_stmt, fr, ret);
            return Flow::normal;
        }
        case NodeKind::return_stmt: {
            if (node.lhs != kNoNode && ret != nullptr) {
                *ret = eval(node.lhs, fr);
            } else if (node.lhs != kNoNode) {
                eval(node.lhs, fr);
            }
            return Flow::returned;
        }
        case NodeKind::omp_parallel:
        case NodeKind::omp_while:
        case NodeKind::omp_atomic:
            fail(s, "directive was not lowered; run the preprocessor first");
        default:
            fail(s, "unexpected statement");
        }
    }

    void exec_var_decl(NodeIndex s, Frame& fr) {
        const Node& node = ast_.nodes[s];
        const NodeRes& r = p_.res_[s];
        const SlotInfo& info = slot_info(r, fr);
        Slot& slot = slot_ref(const_cast<NodeRes&>(r), fr);
        const Type& type = ast_.types[node.lhs];

        if (type.kind == TypeKind::array) {
            Value sz = eval(type.size_node, fr);
            if (sz.kind != ValueKind::i64_v || sz.as_i64() < 0) {
                fail(s, "array length must be a non-negative i64");
            }
            int64_t len = sz.as_i64();
            ArrayObj* arr = materialize_array(fr, r, info, len, s);
            slot.store(reinterpret_cast<uint64_t>(arr));
            return;
        }

        if (node.rhs == kNoNode) {
            // undefined: slot stays uninitialized
            slot.store(0, false);
            slot.flags.store(0, std::memory_order_relaxed);
            return;
        }

        if (info.kind == ValueKind::struct_v && fr.structs != nullptr &&
            ast_.nodes[node.rhs].kind == NodeKind::struct_lit) {
            StructObj* obj = materialize_struct(fr, r, info);
            fill_struct_lit(node.rhs, obj, fr);
            slot.store(reinterpret_cast<uint64_t>(obj));
            return;
        }

        Value v = eval(node.rhs, fr);
        Place place;
        place.cell = &slot.cell;
        place.slot = &slot;
        place.kind = info.kind;
        place.ptr_tag = info.ptr_tag;
        place.ptr_any = info.ptr_any;
        place.stype = info.struct_type;
        place.name_token = node.main_token;
        if (v.kind == ValueKind::struct_v && info.kind == ValueKind::struct_v && debug()) {
            if (as_struct(v)->type_id != info.struct_type) {
                fail(s, "struct type mismatch in declaration");
            }
        }
        store_place(place, v, s);
    }

    ArrayObj* materialize_array(Frame& fr, const NodeRes& r, const SlotInfo& info,
                                int64_t len, NodeIndex at) {
        ValueKind elem = array_elem_kind(info.kind);
        if (r.a == kResGlobal || fr.global) {
            auto arr = std::make_unique<ArrayObj>(elem, len);
            ArrayObj* raw = arr.get();
            p_.owned_arrays_.push_back(std::move(arr));
            return raw;
        }
        auto* owned = owned_arrays(fr);
        for (auto& [slot_id, arr] : *owned) {
            if (slot_id == r.b) {
                if (arr->len == len) {
                    arr->zero();
                    return arr.get();
                }
                arr = std::make_unique<ArrayObj>(elem, len);
                return arr.get();
            }
        }
        owned->emplace_back(r.b, std::make_unique<ArrayObj>(elem, len));
        return owned->back().second.get();
    }

    void exec_assign(NodeIndex s, Frame& fr) {
        const Node& node = ast_.nodes[s];
        TokenTag op = ast_.tokens[node.main_token].tag;
        const Node& target = ast_.nodes[node.lhs];
        if (target.kind == NodeKind::discard) {
            exec_discard(node.rhs, fr);
            return;
        }
        Place place = resolve_place(node.lhs, fr);
        Value v = eval(node.rhs, fr);
        if (op != TokenTag::assign) {
            Value current = load_place(place, s);
            v = apply_binary(op, current, v, s);
        }
        store_place(place, v, s);
    }

    void exec_discard(NodeIndex rhs, Frame& fr) {
        // `_ = name;` marks a use without reading; other expressions run
        // for their effects.
        if (ast_.nodes[rhs].kind == NodeKind::ident) return;
        eval(rhs, fr);
    }

    // ----- calls -----------------------------------------------------------------

    Value call_fn(uint32_t fn_id, const Value* args, uint32_t arg_count, NodeIndex at) {
        const FnInfo& fn = p_.fns_[fn_id];
        size_t n_slots = std::max<size_t>(fn.slots.size(), 1);
        Slot* slots = t_arena.alloc(n_slots);

        std::vector<std::pair<uint32_t, std::unique_ptr<ArrayObj>>> arrays;
        std::vector<std::pair<uint32_t, std::unique_ptr<StructObj>>> structs;
        Frame fr;
        fr.slots = slots;
        fr.fn = &fn;
        fr.arrays = &arrays;
        fr.structs = &structs;

        for (uint32_t i = 0; i < arg_count; ++i) {
            const SlotInfo& info = fn.slots[i];
            Place place;
            place.cell = &slots[i].cell;
            place.slot = &slots[i];
            place.kind = info.kind;
            place.ptr_tag = info.ptr_tag;
            place.ptr_any = info.ptr_any;
            place.name_token = info.name_token;
            store_place(place, args[i], at);
        }

        t_call_stack.push_back(&fn);
        Value ret;
        Flow flow;
        try {
            flow = exec(fn.body, fr, &ret);
        } catch (...) {
            t_call_stack.pop_back();
            t_arena.release(n_slots);
            throw;
        }
        t_call_stack.pop_back();
        t_arena.release(n_slots);

        if (fn.return_kind != ValueKind::none) {
            if (flow != Flow::returned || ret.kind != fn.return_kind) {
                fail(at, "function '" + fn.name + "' did not return a value");
            }
        }
        return ret;
    }

    // Argument lists live contiguously in extra_data; no copy needed.
    struct ArgView {
        const uint32_t* data;
        size_t count;
        NodeIndex operator[](size_t i) const { return data[i]; }
        size_t size() const { return count; }
    };

    ArgView args_of(const Node& call) const {
        uint32_t s = ast_.extra[call.rhs];
        uint32_t e = ast_.extra[call.rhs + 1];
        return ArgView{ast_.extra.data() + s, e - s};
    }

    Value eval_call(NodeIndex n, Frame& fr) {
        const Node& node = ast_.nodes[n];
        const NodeRes& r = p_.res_[n];
        ArgView args = args_of(node);
        if (r.a == 1) {
            return eval_builtin(BuiltinId(kBuiltins[r.b].id), args, n, fr);
        }
        Value argv[16];
        for (size_t i = 0; i < args.size(); ++i) argv[i] = eval(args[i], fr);
        return call_fn(r.b, argv, uint32_t(args.size()), n);
    }

    Value eval_builtin_call(NodeIndex n, Frame& fr) {
        const Node& node = ast_.nodes[n];
        const NodeRes& r = p_.res_[n];
        ArgView args = args_of(node);
        Value v = eval(args[0], fr);
        switch (BuiltinId(r.a)) {
        case BuiltinId::int_to_float:
            if (v.kind != ValueKind::i64_v) fail(n, "@intToFloat requires an i64 operand");
            return Value::of_f64(double(v.as_i64()));
        case BuiltinId::float_to_int: {
            if (v.kind != ValueKind::f64_v) fail(n, "@floatToInt requires an f64 operand");
            double x = v.as_f64();
            // 2^63 is exact in double; NaN fails both comparisons
            if (!(x >= -9223372036854775808.0 && x < 9223372036854775808.0)) {
                if (debug()) fail(n, "float to int conversion out of range");
                return Value::of_i64(INT64_MIN);
            }
            return Value::of_i64(int64_t(x));
        }
        case BuiltinId::ptr_cast: {
            if (v.kind != ValueKind::ptr_v) fail(n, "@ptrCast requires a pointer");
            if (v.bits == 0) fail(n, "@ptrCast of a null pointer");
            if (ptr_tag(v) != PtrTag::to_struct) {
                fail(n, "@ptrCast source does not point to a struct");
            }
            auto* obj = reinterpret_cast<StructObj*>(
                ptr_cell(v)->load(std::memory_order_relaxed));
            if (obj == nullptr || obj->type_id != r.b) {
                fail(n, "@ptrCast to mismatched struct type");
            }
            return v;
        }
        default:
            fail(n, "unexpected builtin");
        }
    }

    // ----- builtins ----------------------------------------------------------------

    rt::ThreadContext& exec_context() {
        if (auto* ctx = rt::current_context()) return *ctx;
        static thread_local rt::ThreadContext serial;
        return serial;
    }

    void append_output(const std::string& text) {
        std::lock_guard lock(output_mutex_);
        output_ += text;
    }

    int64_t want_i64(NodeIndex arg, Frame& fr, const char* what) {
        Value v = eval(arg, fr);
        if (v.kind != ValueKind::i64_v) fail(arg, std::string(what) + " must be an i64");
        return v.as_i64();
    }

    bool want_bool(NodeIndex arg, Frame& fr, const char* what) {
        Value v = eval(arg, fr);
        if (v.kind != ValueKind::bool_v) fail(arg, std::string(what) + " must be a bool");
        return v.as_bool();
    }

    // Evaluates an &target argument used as an i64 out-parameter.
    rt::Cell* want_out_i64(NodeIndex arg, Frame& fr) {
        Value v = eval(arg, fr);
        if (v.kind != ValueKind::ptr_v || v.bits == 0 || ptr_tag(v) != PtrTag::to_i64) {
            fail(arg, "expected a pointer to an i64");
        }
        return ptr_cell(v);
    }

    uint8_t want_cmp(NodeIndex arg, Frame& fr) {
        Value v = eval(arg, fr);
        if (v.kind != ValueKind::str_v) fail(arg, "comparison must be a string literal");
        uint8_t code = p_.string_cmp_codes_[v.bits];
        if (code == 0xff) fail(arg, "unknown comparison operator string");
        return code;
    }

    ReductionOp want_op(NodeIndex arg, Frame& fr) {
        Value v = eval(arg, fr);
        if (v.kind != ValueKind::str_v) fail(arg, "operation must be a string literal");
        uint8_t code = p_.string_op_codes_[v.bits];
        if (code == 0xff) fail(arg, "unknown atomic operation string");
        return ReductionOp(code);
    }

    Value eval_builtin(BuiltinId id, ArgView args, NodeIndex n, Frame& fr) {
        switch (id) {
        case BuiltinId::print: {
            Value v = eval(args[0], fr);
            char buf[64];
            switch (v.kind) {
            case ValueKind::i64_v:
                std::snprintf(buf, sizeof(buf), "%lld\n", (long long)v.as_i64());
                append_output(buf);
                break;
            case ValueKind::f64_v:
                std::snprintf(buf, sizeof(buf), "%.13e\n", v.as_f64());
                append_output(buf);
                break;
            case ValueKind::bool_v:
                append_output(v.as_bool() ? "true\n" : "false\n");
                break;
            case ValueKind::str_v:
                append_output(p_.strings_[v.bits] + "\n");
                break;
            default:
                fail(n, "print supports i64, f64, bool and string values");
            }
            return {};
        }
        case BuiltinId::len: {
            Value v = eval(args[0], fr);
            if (!is_array_kind(v.kind)) fail(n, "len requires an array or slice");
            return Value::of_i64(as_array(v)->len);
        }
        case BuiltinId::sqrt_f:
        case BuiltinId::floor_f:
        case BuiltinId::log_f: {
            Value v = eval(args[0], fr);
            if (v.kind != ValueKind::f64_v) fail(n, "argument must be an f64");
            double x = v.as_f64();
            double out = id == BuiltinId::sqrt_f    ? std::sqrt(x)
                         : id == BuiltinId::floor_f ? std::floor(x)
                                                    : std::log(x);
            return Value::of_f64(out);
        }
        case BuiltinId::abs_f: {
            Value v = eval(args[0], fr);
            if (v.kind == ValueKind::f64_v) return Value::of_f64(std::fabs(v.as_f64()));
            if (v.kind == ValueKind::i64_v) {
                int64_t x = v.as_i64();
                if (x == INT64_MIN) {
                    if (debug()) fail(n, "integer overflow in abs");
                    return Value::of_i64(INT64_MIN);
                }
                return Value::of_i64(x < 0 ? -x : x);
            }
            fail(n, "abs requires a numeric argument");
        }
        case BuiltinId::min_f:
        case BuiltinId::max_f: {
            Value a = eval(args[0], fr);
            Value b = eval(args[1], fr);
            if (a.kind != b.kind) fail(n, "min/max operands must have the same type");
            bool take_min = id == BuiltinId::min_f;
            if (a.kind == ValueKind::i64_v) {
                return Value::of_i64(take_min ? std::min(a.as_i64(), b.as_i64())
                                              : std::max(a.as_i64(), b.as_i64()));
            }
            if (a.kind == ValueKind::f64_v) {
                return Value::of_f64(take_min ? std::min(a.as_f64(), b.as_f64())
                                              : std::max(a.as_f64(), b.as_f64()));
            }
            fail(n, "min/max require numeric operands");
        }
        case BuiltinId::now_seconds:
        case BuiltinId::omp_get_wtime:
            return Value::of_f64(rt::get_wtime());
        case BuiltinId::omp_get_thread_num:
            return Value::of_i64(rt::get_thread_num());
        case BuiltinId::omp_get_num_threads:
            return Value::of_i64(rt::get_num_threads());
        case BuiltinId::omp_get_max_threads:
            return Value::of_i64(rt::get_max_threads());
        case BuiltinId::omp_set_num_threads: {
            int64_t v = want_i64(args[0], fr, "thread count");
            if (v < 1 || v > 4096) fail(n, "set_num_threads requires a count in [1, 4096]");
            rt::set_num_threads(int(v));
            return {};
        }
        case BuiltinId::omp_barrier:
            rt::barrier();
            return {};
        case BuiltinId::omp_fork_call:
            return exec_fork(args, n, fr);
        case BuiltinId::omp_static_init: {
            int64_t lower = want_i64(args[0], fr, "lower bound");
            int64_t upper = want_i64(args[1], fr, "upper bound");
            uint8_t cmp = want_cmp(args[2], fr);
            int64_t step = want_i64(args[3], fr, "increment");
            int64_t chunk = want_i64(args[4], fr, "chunk");
            rt::Cell* out_trip = want_out_i64(args[5], fr);
            rt::Cell* out_lb = want_out_i64(args[6], fr);
            rt::Cell* out_len = want_out_i64(args[7], fr);
            rt::Cell* out_stride = want_out_i64(args[8], fr);
            rt::StaticPlan plan;
            try {
                plan = rt::static_init(exec_context(), lower, upper, rt::CmpOp(cmp), step,
                                       chunk);
            } catch (RuntimeError& e) {
                fail(n, e.what());
            }
            out_trip->store(std::bit_cast<uint64_t>(plan.trip), std::memory_order_relaxed);
            out_lb->store(std::bit_cast<uint64_t>(plan.lower), std::memory_order_relaxed);
            out_len->store(std::bit_cast<uint64_t>(plan.length), std::memory_order_relaxed);
            out_stride->store(std::bit_cast<uint64_t>(plan.stride), std::memory_order_relaxed);
            return {};
        }
        case BuiltinId::omp_static_fini: {
            bool nowait = want_bool(args[0], fr, "nowait flag");
            try {
                rt::static_fini(exec_context(), nowait);
            } catch (RuntimeError& e) {
                fail(n, e.what());
            }
            return {};
        }
        case BuiltinId::omp_dispatch_init: {
            Value kind_v = eval(args[0], fr);
            if (kind_v.kind != ValueKind::str_v) fail(n, "schedule kind must be a string");
            const std::string& kind_s = p_.strings_[kind_v.bits];
            ScheduleKind kind;
            if (kind_s == "dynamic") kind = ScheduleKind::dynamic;
            else if (kind_s == "guided") kind = ScheduleKind::guided;
            else if (kind_s == "runtime") kind = ScheduleKind::runtime;
            else fail(n, "unknown dispatch schedule kind '" + kind_s + "'");
            int64_t lower = want_i64(args[1], fr, "lower bound");
            int64_t upper = want_i64(args[2], fr, "upper bound");
            uint8_t cmp = want_cmp(args[3], fr);
            int64_t step = want_i64(args[4], fr, "increment");
            int64_t chunk = want_i64(args[5], fr, "chunk");
            bool nowait = want_bool(args[6], fr, "nowait flag");
            try {
                rt::dispatch_init(exec_context(), kind, lower, upper, rt::CmpOp(cmp), step,
                                  chunk, nowait);
            } catch (RuntimeError& e) {
                fail(n, e.what());
            }
            return {};
        }
        case BuiltinId::omp_dispatch_next: {
            rt::Cell* out_lo = want_out_i64(args[0], fr);
            rt::Cell* out_hi = want_out_i64(args[1], fr);
            std::optional<std::pair<int64_t, int64_t>> chunk;
            try {
                chunk = rt::dispatch_next(exec_context());
            } catch (RuntimeError& e) {
                fail(n, e.what());
            }
            if (!chunk) return Value::of_bool(false);
            out_lo->store(std::bit_cast<uint64_t>(chunk->first), std::memory_order_relaxed);
            out_hi->store(std::bit_cast<uint64_t>(chunk->second), std::memory_order_relaxed);
            return Value::of_bool(true);
        }
        case BuiltinId::omp_atomic_rmw:
        case BuiltinId::omp_cas_reduce: {
            Value ptr = eval(args[0], fr);
            if (ptr.kind != ValueKind::ptr_v || ptr.bits == 0) {
                fail(n, "atomic operation requires a non-null pointer");
            }
            ReductionOp op = want_op(args[1], fr);
            Value operand = eval(args[2], fr);
            if (id == BuiltinId::omp_cas_reduce && op != ReductionOp::multiply &&
                op != ReductionOp::logical_and && op != ReductionOp::logical_or) {
                fail(n, "cas_reduce supports only mul, land and lor");
            }
            rt::Cell* cell = ptr_cell(ptr);
            try {
                switch (ptr_tag(ptr)) {
                case PtrTag::to_i64: {
                    if (operand.kind != ValueKind::i64_v) {
                        fail(n, "atomic operand must match the cell type (i64)");
                    }
                    int64_t out = rt::atomic_rmw_i64(*cell, op, operand.as_i64());
                    if (id == BuiltinId::omp_cas_reduce) return {};
                    return Value::of_i64(out);
                }
                case PtrTag::to_f64: {
                    if (operand.kind != ValueKind::f64_v) {
                        fail(n, "atomic operand must match the cell type (f64)");
                    }
                    double out = rt::atomic_rmw_f64(*cell, op, operand.as_f64());
                    if (id == BuiltinId::omp_cas_reduce) return {};
                    return Value::of_f64(out);
                }
                case PtrTag::to_bool: {
                    if (operand.kind != ValueKind::bool_v) {
                        fail(n, "atomic operand must match the cell type (bool)");
                    }
                    bool out = rt::atomic_rmw_bool(*cell, op, operand.as_bool());
                    if (id == BuiltinId::omp_cas_reduce) return {};
                    return Value::of_bool(out);
                }
                default:
                    fail(n, "atomic operations require a scalar cell");
                }
            } catch (RuntimeError& e) {
                if (e.offset() == 0) fail(n, e.what());
                throw;
            }
        }
        default:
            fail(n, "unexpected builtin call");
        }
    }

    Value exec_fork(ArgView args, NodeIndex n, Frame& fr) {
        Value fn_v = eval(args[0], fr);
        if (fn_v.kind != ValueKind::fn_v) {
            fail(n, "omp_fork_call requires a function reference");
        }
        const FnInfo& fn = p_.fns_[fn_v.bits];
        if (fn.param_count != 3) {
            fail(n, "outlined functions take exactly three argument groups");
        }
        Value handles[3];
        for (int i = 0; i < 3; ++i) {
            handles[i] = eval(args[i + 1], fr);
            if (handles[i].kind != ValueKind::ptr_v) {
                fail(n, "argument groups must be pointers or null");
            }
        }
        uint32_t fn_id = uint32_t(fn_v.bits);
        try {
            rt::fork_call(0, [&](rt::ThreadContext&) {
                Value local[3] = {handles[0], handles[1], handles[2]};
                call_fn(fn_id, local, 3, n);
            });
        } catch (RuntimeError&) {
            throw;
        } catch (std::exception& e) {
            fail(n, e.what());
        }
        return {};
    }
};

// ----- Program API ----------------------------------------------------------------

Program Program::compile(std::string source, ParseOptions options) {
    Program p;
    p.ast_ = parse(std::move(source), options);
    Binder(p).run();
    p.globals_.reset(new Slot[std::max<size_t>(p.global_slots_.size(), 1)]);
    return p;
}

uint32_t Program::global_index(const std::string& name) const {
    auto it = global_by_name_.find(name);
    if (it == global_by_name_.end()) {
        throw std::out_of_range("no module-level variable named '" + name + "'");
    }
    return it->second;
}

Value Program::make_injected_array(ValueKind elem, const void* data, size_t n) {
    auto arr = std::make_unique<ArrayObj>(elem, int64_t(n));
    std::memcpy(arr->cells.get(), data, n * sizeof(uint64_t));
    Value v{reinterpret_cast<uint64_t>(arr.get()), array_kind_of(elem)};
    owned_arrays_.push_back(std::move(arr));
    return v;
}

void Program::inject_i64(const std::string& name, int64_t v) {
    injections_.push_back({global_index(name), Value::of_i64(v)});
}

void Program::inject_f64(const std::string& name, double v) {
    injections_.push_back({global_index(name), Value::of_f64(v)});
}

void Program::inject_array_i64(const std::string& name, const std::vector<int64_t>& data) {
    injections_.push_back(
        {global_index(name), make_injected_array(ValueKind::i64_v, data.data(), data.size())});
}

void Program::inject_array_f64(const std::string& name, const std::vector<double>& data) {
    injections_.push_back(
        {global_index(name), make_injected_array(ValueKind::f64_v, data.data(), data.size())});
}

Program::RunResult Program::run(const std::string& entry, ExecMode mode) {
    assert(!ran_ && "Program::run may only be called once");
    ran_ = true;
    RunResult result;
    Interp interp(*this, mode);
    try {
        interp.run_entry(entry);
    } catch (RuntimeError& e) {
        result.ok = false;
        result.error = e.what();
        result.error_offset = e.offset();
        result.stack = e.stack();
    } catch (rt::TeamAborted&) {
        result.ok = false;
        result.error = "parallel region aborted";
    }
    result.output = interp.take_output();
    return result;
}

int64_t Program::read_i64(const std::string& name) const {
    return std::bit_cast<int64_t>(globals_[global_index(name)].load());
}

double Program::read_f64(const std::string& name) const {
    return std::bit_cast<double>(globals_[global_index(name)].load());
}

std::vector<int64_t> Program::read_array_i64(const std::string& name) const {
    auto* arr = reinterpret_cast<ArrayObj*>(globals_[global_index(name)].load());
    if (arr == nullptr) throw std::out_of_range("array '" + name + "' was never assigned");
    std::vector<int64_t> out(size_t(arr->len));
    for (int64_t i = 0; i < arr->len; ++i) {
        out[size_t(i)] = std::bit_cast<int64_t>(arr->cells[i].load(std::memory_order_relaxed));
    }
    return out;
}

std::vector<double> Program::read_array_f64(const std::string& name) const {
    auto* arr = reinterpret_cast<ArrayObj*>(globals_[global_index(name)].load());
    if (arr == nullptr) throw std::out_of_range("array '" + name + "' was never assigned");
    std::vector<double> out(size_t(arr->len));
    for (int64_t i = 0; i < arr->len; ++i) {
        out[size_t(i)] = std::bit_cast<double>(arr->cells[i].load(std::memory_order_relaxed));
    }
    return out;
}

} // namespace kz::vm
