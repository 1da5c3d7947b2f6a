#include "preprocess.hpp"

#include "clauses.hpp"
#include "diag.hpp"
#include "parser.hpp"

#include <algorithm>
#include <functional>
#include <optional>
#include <set>
#include <unordered_map>
#include <unordered_set>

namespace kz {

namespace {

enum class PassKind { parallel, while_ws, atomic };

enum class VarShape : uint8_t { i64_s, f64_s, bool_s, array, slice, pointer, other };

struct DeclInfo {
    NodeIndex decl = kNoNode;
    TypeIndex type = kNoType;
    bool is_global = false;
    bool is_param = false;
    bool found = false;
};

struct TextEdit {
    uint32_t start;
    uint32_t end;
    std::string text;
};

// One pending rewrite: the directive, its decoded clauses, and the byte span
// to replace (sentinel through governed construct).
struct Payload {
    NodeIndex node = kNoNode;
    uint32_t id = 0;
    ByteRange span;
    ClauseSet clauses;
    NodeIndex governed = kNoNode;
    NodeIndex fn = kNoNode; // enclosing function
    std::string indent;
    std::string site_text;
    std::string appended_defs;
};

const char* op_string(ReductionOp op) {
    switch (op) {
    case ReductionOp::add: return "add";
    case ReductionOp::subtract: return "sub";
    case ReductionOp::multiply: return "mul";
    case ReductionOp::min: return "min";
    case ReductionOp::max: return "max";
    case ReductionOp::bit_and: return "band";
    case ReductionOp::bit_or: return "bor";
    case ReductionOp::bit_xor: return "bxor";
    case ReductionOp::logical_and: return "land";
    case ReductionOp::logical_or: return "lor";
    }
    return "?";
}

bool op_uses_cas(ReductionOp op) {
    return op == ReductionOp::multiply || op == ReductionOp::logical_and ||
           op == ReductionOp::logical_or;
}

class Pass {
public:
    Pass(const Ast& ast, uint32_t& id_counter)
        : ast_(ast), lines_(ast.source), id_counter_(id_counter) {
        index_program();
    }

    std::vector<Payload> collect(PassKind kind) {
        std::vector<Payload> payloads;
        NodeKind want = kind == PassKind::parallel  ? NodeKind::omp_parallel
                        : kind == PassKind::while_ws ? NodeKind::omp_while
                                                     : NodeKind::omp_atomic;
        for (NodeIndex n = 0; n < ast_.nodes.size(); ++n) {
            if (ast_.nodes[n].kind != want) continue;
            Payload p;
            p.node = n;
            p.span = ast_.node_span(n);
            p.clauses = clauses::decode(ast_.extra, ast_.nodes[n].lhs);
            p.governed = ast_.nodes[n].rhs;
            p.fn = enclosing_fn(n);
            p.indent = indent_of(p.span.start);
            payloads.push_back(std::move(p));
        }
        std::sort(payloads.begin(), payloads.end(),
                  [](const Payload& a, const Payload& b) { return a.span.start < b.span.start; });
        for (size_t i = 0; i + 1 < payloads.size(); ++i) {
            if (payloads[i + 1].span.start < payloads[i].span.end) {
                fail(payloads[i + 1].span.start,
                     "nested directives of the same kind are not supported");
            }
        }
        for (Payload& p : payloads) {
            p.id = id_counter_++;
            switch (kind) {
            case PassKind::parallel: build_parallel(p); break;
            case PassKind::while_ws: build_while(p); break;
            case PassKind::atomic: build_atomic(p); break;
            }
        }
        return payloads;
    }

private:
    const Ast& ast_;
    LineMap lines_;
    uint32_t& id_counter_;

    std::unordered_map<NodeIndex, NodeIndex> stmt_parent_; // statement -> enclosing block
    std::unordered_map<NodeIndex, NodeIndex> block_fn_;    // block -> enclosing fn
    std::unordered_map<std::string_view, NodeIndex> globals_;
    std::unordered_set<std::string_view> fn_names_;
    std::unordered_set<std::string_view> struct_names_;

    [[noreturn]] static void fail(uint32_t offset, std::string msg) {
        throw CompileError(std::move(msg), offset);
    }
    [[noreturn]] void fail_node(NodeIndex n, std::string msg) const {
        fail(ast_.nodes[n].span_start, std::move(msg));
    }

    std::string_view text_of(NodeIndex n) const { return ast_.node_text(n); }
    std::string_view name_of(NodeIndex n) const {
        return ast_.token_text(ast_.nodes[n].main_token);
    }

    std::string indent_of(uint32_t offset) const {
        uint32_t ls = lines_.line_start(offset);
        std::string out;
        for (uint32_t i = ls; i < offset; ++i) {
            char c = ast_.source[i];
            out += (c == '\t') ? '\t' : ' ';
        }
        return out;
    }

    // ----- program indexing -----------------------------------------------------

    void index_program() {
        const Node& root = ast_.nodes[0];
        for (uint32_t i = root.lhs; i < root.rhs; ++i) {
            NodeIndex d = ast_.extra[i];
            const Node& n = ast_.nodes[d];
            if (n.kind == NodeKind::var_decl) {
                globals_.emplace(name_of(d), d);
            } else if (n.kind == NodeKind::fn_decl) {
                fn_names_.insert(name_of(d));
                index_stmt(n.rhs, kNoNode, d);
            } else if (n.kind == NodeKind::struct_decl) {
                struct_names_.insert(name_of(d));
            }
        }
    }

    void index_stmt(NodeIndex s, NodeIndex parent_block, NodeIndex fn) {
        const Node& n = ast_.nodes[s];
        if (parent_block != kNoNode) stmt_parent_[s] = parent_block;
        switch (n.kind) {
        case NodeKind::block:
            block_fn_[s] = fn;
            for (uint32_t i = n.lhs; i < n.rhs; ++i) {
                index_stmt(ast_.extra[i], s, fn);
            }
            break;
        case NodeKind::while_stmt: {
            auto [cont, body] = while_parts(ast_, n);
            index_stmt(body, parent_block, fn);
            (void)cont;
            break;
        }
        case NodeKind::if_stmt: {
            auto [then_block, else_stmt] = if_parts(ast_, n);
            index_stmt(then_block, parent_block, fn);
            if (else_stmt != kNoNode) index_stmt(else_stmt, parent_block, fn);
            break;
        }
        case NodeKind::omp_parallel:
        case NodeKind::omp_while:
        case NodeKind::omp_atomic:
            index_stmt(n.rhs, parent_block, fn);
            break;
        default:
            break;
        }
    }

    NodeIndex enclosing_fn(NodeIndex directive) const {
        auto it = stmt_parent_.find(directive);
        if (it == stmt_parent_.end()) {
            fail_node(directive, "directives must appear inside a function body");
        }
        return block_fn_.at(it->second);
    }

    // ----- subtree walking --------------------------------------------------------

    // Visits every node of a subtree. Identifier nodes referenced from nested
    // directive clause records are visited with in_clause = true.
    void walk(NodeIndex n, const std::function<void(NodeIndex, bool)>& visit,
              bool in_clause = false) const {
        if (n == kNoNode) return;
        visit(n, in_clause);
        const Node& node = ast_.nodes[n];
        switch (node.kind) {
        case NodeKind::block:
            for (uint32_t i = node.lhs; i < node.rhs; ++i) {
                walk(ast_.extra[i], visit, in_clause);
            }
            break;
        case NodeKind::var_decl: {
            const Type& t = ast_.types[node.lhs];
            if (t.kind == TypeKind::array && t.size_node != kNoNode) {
                walk(t.size_node, visit, in_clause);
            }
            if (node.rhs != kNoNode) walk(node.rhs, visit, in_clause);
            break;
        }
        case NodeKind::while_stmt: {
            walk(node.lhs, visit, in_clause);
            auto [cont, body] = while_parts(ast_, node);
            if (cont != kNoNode) walk(cont, visit, in_clause);
            walk(body, visit, in_clause);
            break;
        }
        case NodeKind::if_stmt: {
            walk(node.lhs, visit, in_clause);
            auto [then_block, else_stmt] = if_parts(ast_, node);
            walk(then_block, visit, in_clause);
            if (else_stmt != kNoNode) walk(else_stmt, visit, in_clause);
            break;
        }
        case NodeKind::assign:
        case NodeKind::binary:
        case NodeKind::index:
            walk(node.lhs, visit, in_clause);
            walk(node.rhs, visit, in_clause);
            break;
        case NodeKind::unary:
        case NodeKind::deref:
        case NodeKind::member:
        case NodeKind::expr_stmt:
            walk(node.lhs, visit, in_clause);
            break;
        case NodeKind::return_stmt:
            if (node.lhs != kNoNode) walk(node.lhs, visit, in_clause);
            break;
        case NodeKind::call: {
            walk(node.lhs, visit, in_clause);
            for (NodeIndex a : call_args(ast_, node)) walk(a, visit, in_clause);
            break;
        }
        case NodeKind::builtin_call:
            for (NodeIndex a : call_args(ast_, node)) walk(a, visit, in_clause);
            break;
        case NodeKind::struct_lit:
            for (uint32_t i = node.lhs; i < node.rhs; i += 2) {
                walk(ast_.extra[i + 1], visit, in_clause);
            }
            break;
        case NodeKind::omp_parallel:
        case NodeKind::omp_while:
        case NodeKind::omp_atomic: {
            ClauseSet set = clauses::decode(ast_.extra, node.lhs);
            for (NodeIndex v : set.private_vars) walk(v, visit, true);
            for (NodeIndex v : set.firstprivate_vars) walk(v, visit, true);
            for (NodeIndex v : set.shared_vars) walk(v, visit, true);
            for (auto [op, v] : set.reductions) walk(v, visit, true);
            walk(node.rhs, visit, in_clause);
            break;
        }
        default:
            break;
        }
    }

    // ----- declaration lookup ------------------------------------------------------

    DeclInfo resolve_decl(std::string_view name, uint32_t use_offset, NodeIndex fn) const {
        DeclInfo out;
        if (fn != kNoNode) {
            const Node& fn_node = ast_.nodes[fn];
            FnData data = read_fn_data(ast_, fn_node.lhs);
            for (auto [ptok, ptype] : data.params) {
                if (ast_.token_text(ptok) == name) {
                    out.found = true;
                    out.is_param = true;
                    out.type = ptype;
                    return out;
                }
            }
            NodeIndex found = kNoNode;
            std::function<void(NodeIndex)> search = [&](NodeIndex s) {
                const Node& n = ast_.nodes[s];
                switch (n.kind) {
                case NodeKind::block: {
                    if (use_offset < n.span_start || use_offset >= n.span_end) return;
                    for (uint32_t i = n.lhs; i < n.rhs; ++i) {
                        NodeIndex stmt = ast_.extra[i];
                        const Node& sn = ast_.nodes[stmt];
                        if (sn.kind == NodeKind::var_decl && name_of(stmt) == name &&
                            sn.span_end <= use_offset) {
                            found = stmt;
                        }
                        search(stmt);
                    }
                    break;
                }
                case NodeKind::while_stmt: {
                    auto [cont, body] = while_parts(ast_, n);
                    (void)cont;
                    search(body);
                    break;
                }
                case NodeKind::if_stmt: {
                    auto [then_block, else_stmt] = if_parts(ast_, n);
                    search(then_block);
                    if (else_stmt != kNoNode) search(else_stmt);
                    break;
                }
                case NodeKind::omp_parallel:
                case NodeKind::omp_while:
                case NodeKind::omp_atomic:
                    search(n.rhs);
                    break;
                default:
                    break;
                }
            };
            search(fn_node.rhs);
            if (found != kNoNode) {
                out.found = true;
                out.decl = found;
                out.type = ast_.nodes[found].lhs;
                return out;
            }
        }
        auto git = globals_.find(name);
        if (git != globals_.end()) {
            out.found = true;
            out.is_global = true;
            out.decl = git->second;
            out.type = ast_.nodes[git->second].lhs;
            return out;
        }
        return out;
    }

    VarShape shape_of(TypeIndex t) const {
        switch (ast_.types[t].kind) {
        case TypeKind::i64_type: return VarShape::i64_s;
        case TypeKind::f64_type: return VarShape::f64_s;
        case TypeKind::bool_type: return VarShape::bool_s;
        case TypeKind::array: return VarShape::array;
        case TypeKind::slice: return VarShape::slice;
        case TypeKind::pointer: return VarShape::pointer;
        default: return VarShape::other;
        }
    }

    bool is_scalar(VarShape s) const {
        return s == VarShape::i64_s || s == VarShape::f64_s || s == VarShape::bool_s;
    }

    std::string scalar_type_text(VarShape s) const {
        switch (s) {
        case VarShape::i64_s: return "i64";
        case VarShape::f64_s: return "f64";
        case VarShape::bool_s: return "bool";
        default: return "?";
        }
    }

    std::string elem_type_text(TypeIndex t) const {
        return ast_.type_text(ast_.types[t].elem);
    }

    // Identity literal emitted for reduction accumulators.
    std::string identity_literal(ReductionOp op, VarShape shape, uint32_t at) const {
        if (shape == VarShape::bool_s) {
            if (op == ReductionOp::logical_and) return "true";
            if (op == ReductionOp::logical_or) return "false";
            fail(at, "bool reductions support only 'and' and 'or'");
        }
        if (shape == VarShape::f64_s) {
            switch (op) {
            case ReductionOp::add:
            case ReductionOp::subtract: return "0.0";
            case ReductionOp::multiply: return "1.0";
            case ReductionOp::min: return "(1.0 / 0.0)";
            case ReductionOp::max: return "(-1.0 / 0.0)";
            default: fail(at, "bitwise and logical reductions require integer or bool variables");
            }
        }
        if (shape == VarShape::i64_s) {
            switch (op) {
            case ReductionOp::add:
            case ReductionOp::subtract:
            case ReductionOp::bit_or:
            case ReductionOp::bit_xor: return "0";
            case ReductionOp::multiply: return "1";
            case ReductionOp::min: return "9223372036854775807";
            case ReductionOp::max: return "(-9223372036854775807 - 1)";
            case ReductionOp::bit_and: return "-1";
            default: fail(at, "'and'/'or' reductions require a bool variable");
            }
        }
        fail(at, "reduction variables must be scalar");
    }

    // ----- text assembly helpers -----------------------------------------------------

    static void emit_line(std::string& out, const std::string& indent, bool& first,
                          std::string_view line) {
        if (!first) {
            out += "\n";
            out += indent;
        }
        first = false;
        out += line;
    }

    std::string apply_edits(uint32_t start, uint32_t end, std::vector<TextEdit> edits) const {
        std::sort(edits.begin(), edits.end(),
                  [](const TextEdit& a, const TextEdit& b) { return a.start < b.start; });
        std::string out;
        uint32_t at = start;
        for (const TextEdit& e : edits) {
            out += ast_.source.substr(at, e.start - at);
            out += e.text;
            at = e.end;
        }
        out += ast_.source.substr(at, end - at);
        return out;
    }

    // ----- parallel pass ---------------------------------------------------------------

    struct Captured {
        std::string name;
        DeclInfo decl;
        VarShape shape;
        ReductionOp op = ReductionOp::add;
        bool implicit = false;
    };

    void build_parallel(Payload& p) {
        const Node& governed = ast_.nodes[p.governed];
        if (governed.kind != NodeKind::block) {
            fail_node(p.node, "'parallel' must be followed by a block");
        }
        uint32_t use_at = governed.span_start;

        std::vector<Captured> privates, firstprivates, shareds, reductions;
        std::set<std::string, std::less<>> listed;

        auto resolve_listed = [&](NodeIndex ident, const char* clause) {
            Captured c;
            c.name = std::string(name_of(ident));
            c.decl = resolve_decl(c.name, use_at, p.fn);
            if (!c.decl.found) {
                fail_node(ident, std::string(clause) + " variable '" + c.name +
                                     "' not found in enclosing scope");
            }
            if (c.decl.is_param) {
                fail_node(ident, "function parameters cannot be captured; copy '" + c.name +
                                     "' into a local first");
            }
            c.shape = shape_of(c.decl.type);
            listed.insert(c.name);
            return c;
        };

        for (NodeIndex v : p.clauses.private_vars) {
            Captured c = resolve_listed(v, "private");
            if (!is_scalar(c.shape) && c.shape != VarShape::array) {
                fail_node(v, "private variables must be scalars or fixed-size arrays");
            }
            privates.push_back(std::move(c));
        }
        for (NodeIndex v : p.clauses.firstprivate_vars) {
            Captured c = resolve_listed(v, "firstprivate");
            if (!is_scalar(c.shape)) {
                fail_node(v, "firstprivate variables must be scalars");
            }
            firstprivates.push_back(std::move(c));
        }
        for (NodeIndex v : p.clauses.shared_vars) {
            Captured c = resolve_listed(v, "shared");
            if (!is_scalar(c.shape) && c.shape != VarShape::array && c.shape != VarShape::slice) {
                fail_node(v, "shared variables must be scalars, arrays or slices");
            }
            if (!c.decl.is_global) shareds.push_back(std::move(c));
            // shared globals need no capture: module storage is visible
            // inside the outlined function
        }
        for (auto [op, v] : p.clauses.reductions) {
            Captured c = resolve_listed(v, "reduction");
            if (!is_scalar(c.shape)) {
                fail_node(v, "reduction variables must be scalar");
            }
            c.op = op;
            reductions.push_back(std::move(c));
        }

        // Counters of worksharing loops inside the region become private.
        std::set<std::string, std::less<>> ws_counters;
        walk(p.governed, [&](NodeIndex n, bool in_clause) {
            if (in_clause || ast_.nodes[n].kind != NodeKind::omp_while) return;
            NodeIndex loop = ast_.nodes[n].rhs;
            if (ast_.nodes[loop].kind != NodeKind::while_stmt) return;
            const Node& cond = ast_.nodes[ast_.nodes[loop].lhs];
            if (cond.kind == NodeKind::binary &&
                ast_.nodes[cond.lhs].kind == NodeKind::ident) {
                ws_counters.insert(std::string(name_of(cond.lhs)));
            }
        });
        for (const std::string& counter : ws_counters) {
            if (listed.count(counter)) {
                bool ok = false;
                for (const auto& c : privates) ok = ok || c.name == counter;
                for (const auto& c : firstprivates) ok = ok || c.name == counter;
                if (!ok) {
                    fail_node(p.node, "worksharing loop counter '" + counter +
                                          "' may not be shared");
                }
                continue;
            }
            DeclInfo decl = resolve_decl(counter, use_at, p.fn);
            if (!decl.found) continue; // declared inside the region body
            bool local_in_body = decl.decl != kNoNode &&
                                 ast_.nodes[decl.decl].span_start >= governed.span_start;
            if (local_in_body) continue;
            Captured c;
            c.name = counter;
            c.decl = decl;
            c.shape = shape_of(decl.type);
            c.implicit = true;
            privates.push_back(std::move(c));
            listed.insert(counter);
        }

        // Names declared inside the region body are locals, never captured.
        std::set<std::string, std::less<>> body_locals;
        walk(p.governed, [&](NodeIndex n, bool in_clause) {
            if (!in_clause && ast_.nodes[n].kind == NodeKind::var_decl) {
                body_locals.insert(std::string(name_of(n)));
            }
        });

        // Implicit capture of remaining enclosing-function locals.
        std::vector<std::pair<uint32_t, std::string>> implicit_order;
        std::set<std::string, std::less<>> seen_implicit;
        walk(p.governed, [&](NodeIndex n, bool in_clause) {
            const Node& node = ast_.nodes[n];
            if (node.kind != NodeKind::ident) return;
            std::string name(name_of(n));
            if (name == "_") return;
            if (in_clause) return;
            if (listed.count(name) || body_locals.count(name) || seen_implicit.count(name)) {
                return;
            }
            if (fn_names_.count(name) || struct_names_.count(name)) return;
            DeclInfo decl = resolve_decl(name, use_at, p.fn);
            if (!decl.found) return; // builtin call or later error
            if (decl.is_global) return;
            if (decl.is_param) {
                fail_node(n, "function parameters cannot be captured; copy '" + name +
                                 "' into a local first");
            }
            if (p.clauses.default_kind == DefaultKind::none) {
                fail_node(n, "variable '" + name +
                                 "' is not listed in a data-sharing clause (default(none))");
            }
            seen_implicit.insert(name);
            implicit_order.emplace_back(node.span_start, name);
        });
        std::sort(implicit_order.begin(), implicit_order.end());
        for (auto& [offset, name] : implicit_order) {
            Captured c;
            c.name = name;
            c.decl = resolve_decl(name, use_at, p.fn);
            c.shape = shape_of(c.decl.type);
            c.implicit = true;
            if (!is_scalar(c.shape) && c.shape != VarShape::array && c.shape != VarShape::slice) {
                fail(offset, "variable '" + name + "' cannot be shared implicitly");
            }
            shareds.push_back(std::move(c));
        }

        // Also count uses inside nested clause lists so that bindings needed
        // by later passes are kept.
        std::set<std::string, std::less<>> used;
        walk(p.governed, [&](NodeIndex n, bool) {
            if (ast_.nodes[n].kind == NodeKind::ident) {
                used.insert(std::string(name_of(n)));
            }
        });
        auto drop_unused = [&](std::vector<Captured>& list) {
            list.erase(std::remove_if(list.begin(), list.end(),
                                      [&](const Captured& c) { return !used.count(c.name); }),
                       list.end());
        };
        drop_unused(privates);
        drop_unused(firstprivates);
        drop_unused(shareds);

        emit_parallel(p, privates, firstprivates, shareds, reductions);
    }

    std::string local_name(const Captured& c, const char* role, uint32_t id) const {
        if (!c.decl.is_global) return c.name;
        return std::string("__omp_") + role + "_" + c.name + "_" + std::to_string(id);
    }

    void emit_parallel(Payload& p, const std::vector<Captured>& privates,
                       const std::vector<Captured>& firstprivates,
                       const std::vector<Captured>& shareds,
                       const std::vector<Captured>& reductions) {
        const std::string id = std::to_string(p.id);
        const Node& body = ast_.nodes[p.governed];

        // Rewrites inside the region body.
        std::vector<TextEdit> edits;
        auto rewrite_ident = [&](const std::string& from, const std::string& to,
                                 bool deref_suffix) {
            walk(p.governed, [&](NodeIndex n, bool in_clause) {
                if (in_clause || ast_.nodes[n].kind != NodeKind::ident) return;
                if (name_of(n) != from) return;
                const Node& node = ast_.nodes[n];
                if (deref_suffix) {
                    edits.push_back({node.span_start, node.span_end, from + ".*"});
                } else {
                    edits.push_back({node.span_start, node.span_end, to});
                }
            });
        };

        for (const Captured& c : shareds) {
            if (is_scalar(c.shape)) rewrite_ident(c.name, "", true);
        }
        for (const Captured& c : privates) {
            if (c.decl.is_global) rewrite_ident(c.name, local_name(c, "prv", p.id), false);
        }
        for (const Captured& c : firstprivates) {
            if (c.decl.is_global) rewrite_ident(c.name, local_name(c, "fpl", p.id), false);
        }
        for (const Captured& c : reductions) {
            rewrite_ident(c.name, "__omp_red_" + c.name + "_" + id, false);
        }

        std::string body_text = apply_edits(body.span_start, body.span_end, std::move(edits));

        auto field_type = [&](const Captured& c, bool as_ref) -> std::string {
            if (c.shape == VarShape::array || c.shape == VarShape::slice) {
                return "[]" + elem_type_text(c.decl.type);
            }
            std::string t = scalar_type_text(c.shape);
            return as_ref ? "*" + t : t;
        };

        // Struct definitions for the three argument groups.
        std::string defs;
        auto emit_struct = [&](const char* tag, const std::vector<Captured>& list,
                               bool as_ref) {
            if (list.empty()) return;
            defs += "\nconst __omp_" + std::string(tag) + "_t_" + id + " = struct {\n";
            for (const Captured& c : list) {
                defs += "    " + c.name + ": " + field_type(c, as_ref) + ",\n";
            }
            defs += "};\n";
        };
        emit_struct("fp", firstprivates, false);
        emit_struct("sh", shareds, true);
        if (!reductions.empty()) {
            defs += "\nconst __omp_rd_t_" + id + " = struct {\n";
            for (const Captured& c : reductions) {
                defs += "    " + c.name + ": *" + scalar_type_text(c.shape) + ",\n";
            }
            defs += "};\n";
        }

        // The outlined function.
        defs += "\nfn __omp_outlined_" + id +
                "(__omp_fp: ?*anyopaque, __omp_sh: ?*anyopaque, __omp_rd: ?*anyopaque) void {\n";
        auto emit_cast = [&](const char* tag, bool empty) {
            std::string group = std::string("__omp_") + tag;
            if (empty) {
                defs += "    _ = " + group + ";\n";
            } else {
                std::string t = "__omp_" + std::string(tag) + "_t_" + id;
                defs += "    const " + group + "v_" + id + ": *" + t + " = @ptrCast(*" + t +
                        ", " + group + ");\n";
            }
        };
        emit_cast("fp", firstprivates.empty());
        emit_cast("sh", shareds.empty());
        emit_cast("rd", reductions.empty());

        for (const Captured& c : firstprivates) {
            defs += "    var " + local_name(c, "fpl", p.id) + ": " +
                    scalar_type_text(c.shape) + " = __omp_fpv_" + id + "." + c.name + ";\n";
        }
        for (const Captured& c : shareds) {
            defs += "    const " + c.name + ": " + field_type(c, true) + " = __omp_shv_" +
                    id + "." + c.name + ";\n";
        }
        for (const Captured& c : privates) {
            defs += "    var " + local_name(c, "prv", p.id) + ": " +
                    std::string(ast_.type_text(c.decl.type)) + " = undefined;\n";
        }
        for (const Captured& c : reductions) {
            defs += "    var __omp_red_" + c.name + "_" + id + ": " +
                    scalar_type_text(c.shape) + " = " +
                    identity_literal(c.op, c.shape, ast_.nodes[p.node].span_start) + ";\n";
        }
        defs += "    " + body_text + "\n";
        for (const Captured& c : reductions) {
            std::string cell = "__omp_rdv_" + id + "." + c.name;
            std::string acc = "__omp_red_" + c.name + "_" + id;
            ReductionOp combine_op =
                c.op == ReductionOp::subtract ? ReductionOp::add : c.op;
            if (op_uses_cas(combine_op)) {
                defs += "    omp_cas_reduce(" + cell + ", \"" + op_string(combine_op) +
                        "\", " + acc + ");\n";
            } else {
                defs += "    _ = omp_atomic_rmw(" + cell + ", \"" + op_string(combine_op) +
                        "\", " + acc + ");\n";
            }
        }
        defs += "}\n";
        p.appended_defs = std::move(defs);

        // Fork site.
        std::string site;
        bool first = true;
        auto emit_group_var = [&](const char* tag, const std::vector<Captured>& list,
                                  bool as_ref, bool is_rd) {
            if (list.empty()) return;
            std::string t = "__omp_" + std::string(tag) + "_t_" + id;
            std::string line = "var __omp_" + std::string(tag) + "_v_" + id + ": " + t +
                               " = " + t + "{";
            for (size_t i = 0; i < list.size(); ++i) {
                const Captured& c = list[i];
                line += (i == 0 ? " ." : " .") + c.name + " = ";
                if (is_rd || (as_ref && is_scalar(c.shape))) {
                    line += "&" + c.name;
                } else {
                    line += c.name;
                }
                line += ",";
            }
            line += " };";
            emit_line(site, p.indent, first, line);
        };
        emit_group_var("fp", firstprivates, false, false);
        emit_group_var("sh", shareds, true, false);
        emit_group_var("rd", reductions, true, true);

        auto group_arg = [&](const char* tag, bool empty) -> std::string {
            if (empty) return "null";
            return "&__omp_" + std::string(tag) + "_v_" + id;
        };
        emit_line(site, p.indent, first,
                  "omp_fork_call(__omp_outlined_" + id + ", " +
                      group_arg("fp", firstprivates.empty()) + ", " +
                      group_arg("sh", shareds.empty()) + ", " +
                      group_arg("rd", reductions.empty()) + ");");
        // Private variables move into the outlined function wholesale; keep
        // the enclosing declarations legal when the region held their only
        // uses.
        for (const Captured& c : privates) {
            if (!c.decl.is_global) {
                emit_line(site, p.indent, first, "_ = " + c.name + ";");
            }
        }
        p.site_text = std::move(site);
    }

    // ----- worksharing pass ----------------------------------------------------------

    struct LoopBounds {
        std::string counter;
        std::string lower;
        std::string upper;
        std::string cmp;
        std::string step; // signed expression text
        NodeIndex counter_ident = kNoNode;
    };

    LoopBounds extract_bounds(NodeIndex directive, NodeIndex loop) const {
        const Node& loop_node = ast_.nodes[loop];
        auto [cont, body] = while_parts(ast_, loop_node);
        (void)body;
        if (cont == kNoNode) {
            fail_node(loop, "worksharing loops require a continuation expression");
        }
        const Node& cond = ast_.nodes[loop_node.lhs];
        if (cond.kind != NodeKind::binary ||
            ast_.nodes[cond.lhs].kind != NodeKind::ident) {
            fail_node(loop, "worksharing loop condition must compare the counter "
                            "against a bound");
        }
        TokenTag cmp_tag = ast_.tokens[cond.main_token].tag;
        std::string cmp;
        switch (cmp_tag) {
        case TokenTag::lt: cmp = "<"; break;
        case TokenTag::lt_eq: cmp = "<="; break;
        case TokenTag::gt: cmp = ">"; break;
        case TokenTag::gt_eq: cmp = ">="; break;
        default:
            fail_node(loop, "worksharing loop condition must use <, <=, > or >=");
        }

        LoopBounds b;
        b.counter_ident = cond.lhs;
        b.counter = std::string(name_of(cond.lhs));
        b.upper = std::string(text_of(cond.rhs));
        b.cmp = cmp;

        const Node& cont_node = ast_.nodes[cont];
        if (cont_node.kind != NodeKind::assign ||
            ast_.nodes[cont_node.lhs].kind != NodeKind::ident ||
            name_of(cont_node.lhs) != b.counter) {
            fail_node(loop, "loop continuation must update the loop counter");
        }
        TokenTag cont_op = ast_.tokens[cont_node.main_token].tag;
        std::string incr(text_of(cont_node.rhs));
        if (incr == "0") {
            fail_node(cont, "worksharing loop increment must not be zero");
        }
        if (cont_op == TokenTag::plus_eq) {
            b.step = "(" + incr + ")";
        } else if (cont_op == TokenTag::minus_eq) {
            b.step = "(0 - (" + incr + "))";
        } else {
            fail_node(loop, "loop continuation must use += or -=");
        }

        // Lower bound: nearest preceding assignment or initialized declaration
        // of the counter, searching outward from the directive's block.
        std::optional<std::string> lower = find_lower_bound(directive, b.counter);
        if (!lower) {
            fail_node(directive, "cannot determine the lower bound of worksharing loop "
                                 "counter '" +
                                     b.counter + "'");
        }
        b.lower = *lower;
        return b;
    }

    std::optional<std::string> find_lower_bound(NodeIndex directive,
                                                std::string_view counter) const {
        NodeIndex at = directive;
        for (;;) {
            auto pit = stmt_parent_.find(at);
            if (pit == stmt_parent_.end()) return std::nullopt;
            NodeIndex block = pit->second;
            const Node& bn = ast_.nodes[block];
            uint32_t at_start = ast_.nodes[at].span_start;
            std::optional<std::string> best;
            for (uint32_t i = bn.lhs; i < bn.rhs; ++i) {
                NodeIndex stmt = ast_.extra[i];
                const Node& sn = ast_.nodes[stmt];
                if (sn.span_start >= at_start) break;
                if (sn.kind == NodeKind::assign) {
                    const Node& target = ast_.nodes[sn.lhs];
                    if (target.kind == NodeKind::ident && name_of(sn.lhs) == counter &&
                        ast_.tokens[sn.main_token].tag == TokenTag::assign) {
                        best = std::string(text_of(sn.rhs));
                    }
                } else if (sn.kind == NodeKind::var_decl && name_of(stmt) == counter &&
                           sn.rhs != kNoNode) {
                    best = std::string(text_of(sn.rhs));
                }
            }
            if (best) return best;
            at = block;
        }
    }

    void check_counter_unmodified(NodeIndex body, std::string_view counter) const {
        walk(body, [&](NodeIndex n, bool in_clause) {
            if (in_clause || ast_.nodes[n].kind != NodeKind::assign) return;
            const Node& target = ast_.nodes[ast_.nodes[n].lhs];
            if (target.kind == NodeKind::ident && name_of(ast_.nodes[n].lhs) == counter) {
                fail_node(n, "worksharing loop counter '" + std::string(counter) +
                                 "' may not be modified inside the loop body");
            }
        });
    }

    void build_while(Payload& p) {
        const Node& governed = ast_.nodes[p.governed];
        if (governed.kind != NodeKind::while_stmt) {
            fail_node(p.node, "'while' directive must be followed by a while loop");
        }
        std::string_view fn_name = name_of(p.fn);
        if (fn_name.substr(0, 15) != "__omp_outlined_") {
            fail_node(p.node, "worksharing loop outside any parallel region");
        }
        if (p.clauses.collapse > 2) {
            fail_node(p.node, "collapse counts above 2 are not supported");
        }

        const std::string id = std::to_string(p.id);
        uint32_t use_at = ast_.nodes[p.node].span_start;

        LoopBounds outer = extract_bounds(p.node, p.governed);
        DeclInfo counter_decl = resolve_decl(outer.counter, use_at, p.fn);
        if (!counter_decl.found || shape_of(counter_decl.type) != VarShape::i64_s) {
            fail_node(p.governed, "worksharing loop counters must be declared i64");
        }

        auto [outer_cont, outer_body] = while_parts(ast_, governed);
        (void)outer_cont;
        check_counter_unmodified(outer_body, outer.counter);

        // collapse(2): the outer body must be a perfectly nested loop pair.
        bool collapse2 = p.clauses.collapse == 2;
        LoopBounds inner;
        NodeIndex body_node = outer_body;
        if (collapse2) {
            const Node& ob = ast_.nodes[outer_body];
            std::vector<NodeIndex> stmts = ast_.extra_slice(ob.lhs, ob.rhs);
            NodeIndex inner_loop = kNoNode;
            if (stmts.size() == 1 && ast_.nodes[stmts[0]].kind == NodeKind::while_stmt) {
                inner_loop = stmts[0];
            } else if (stmts.size() == 2 &&
                       ast_.nodes[stmts[0]].kind == NodeKind::assign &&
                       ast_.nodes[stmts[1]].kind == NodeKind::while_stmt) {
                inner_loop = stmts[1];
            } else {
                fail_node(p.node, "collapse(2) requires a perfectly nested loop pair");
            }
            inner = extract_bounds(inner_loop, inner_loop);
            bool outer_desc = outer.step.substr(0, 3) == "(0 ";
            bool inner_desc = inner.step.substr(0, 3) == "(0 ";
            if (outer.cmp != "<" || inner.cmp != "<" || outer_desc || inner_desc) {
                fail_node(p.node, "collapse(2) supports only '<' loops with positive "
                                  "increments");
            }
            // Inner bounds must not depend on the outer counter.
            const Node& in_node = ast_.nodes[inner_loop];
            auto check_independent = [&](NodeIndex expr) {
                walk(expr, [&](NodeIndex n, bool) {
                    if (ast_.nodes[n].kind == NodeKind::ident &&
                        name_of(n) == outer.counter) {
                        fail_node(n, "collapse(2) inner loop bounds must not depend on "
                                     "the outer counter");
                    }
                });
            };
            check_independent(in_node.lhs);
            auto [in_cont, in_body] = while_parts(ast_, in_node);
            check_independent(in_cont);
            check_counter_unmodified(in_body, inner.counter);
            DeclInfo inner_decl = resolve_decl(inner.counter, use_at, p.fn);
            if (!inner_decl.found || shape_of(inner_decl.type) != VarShape::i64_s) {
                fail_node(inner_loop, "worksharing loop counters must be declared i64");
            }
            body_node = in_body;
        }

        // Reductions and loop-level privates.
        struct LoopRed {
            std::string name;
            ReductionOp op;
            VarShape shape;
            enum Target { pointer, global, local } target;
        };
        std::vector<LoopRed> reds;
        std::vector<TextEdit> edits;

        // Map each reduction identifier use (possibly `name.*`) to the
        // accumulator name.
        std::vector<std::pair<NodeIndex, NodeIndex>> deref_of; // (ident, deref)
        walk(body_node, [&](NodeIndex n, bool in_clause) {
            if (in_clause) return;
            const Node& node = ast_.nodes[n];
            if (node.kind == NodeKind::deref &&
                ast_.nodes[node.lhs].kind == NodeKind::ident) {
                deref_of.emplace_back(node.lhs, n);
            }
        });

        for (auto [op, v] : p.clauses.reductions) {
            LoopRed red;
            red.name = std::string(name_of(v));
            red.op = op;
            DeclInfo decl = resolve_decl(red.name, use_at, p.fn);
            if (!decl.found) {
                fail_node(v, "reduction variable '" + red.name +
                                 "' not found in enclosing scope");
            }
            VarShape shape = shape_of(decl.type);
            if (shape == VarShape::pointer) {
                red.target = LoopRed::pointer;
                red.shape = shape_of(ast_.types[decl.type].elem);
            } else if (is_scalar(shape)) {
                red.target = decl.is_global ? LoopRed::global : LoopRed::local;
                red.shape = shape;
            } else {
                fail_node(v, "reduction variables must be scalar");
            }
            if (!is_scalar(red.shape)) {
                fail_node(v, "reduction variables must be scalar");
            }
            std::string acc = "__omp_red_" + red.name + "_" + id;
            walk(body_node, [&](NodeIndex n, bool in_clause) {
                if (in_clause || ast_.nodes[n].kind != NodeKind::ident) return;
                if (name_of(n) != red.name) return;
                uint32_t start = ast_.nodes[n].span_start;
                uint32_t end = ast_.nodes[n].span_end;
                if (red.target == LoopRed::pointer) {
                    for (auto [ident, deref] : deref_of) {
                        if (ident == n) {
                            end = ast_.nodes[deref].span_end;
                            break;
                        }
                    }
                }
                edits.push_back({start, end, acc});
            });
            reds.push_back(std::move(red));
        }

        // Loop-level privates: fresh locals with rewritten uses.
        struct LoopPriv {
            std::string name;
            std::string fresh;
            std::string type_text;
            std::string init; // empty = undefined
            bool discard_original = false;
        };
        std::vector<LoopPriv> privs;
        auto add_priv = [&](NodeIndex v, bool first_private) {
            LoopPriv lp;
            lp.name = std::string(name_of(v));
            DeclInfo decl = resolve_decl(lp.name, use_at, p.fn);
            if (!decl.found) {
                fail_node(v, std::string(first_private ? "firstprivate" : "private") +
                                 " variable '" + lp.name + "' not found in enclosing scope");
            }
            VarShape shape = shape_of(decl.type);
            // A pointer declaration means the enclosing region turned a
            // shared scalar into a reference binding: use the pointee type
            // and absorb the `.*` of every use.
            bool through_pointer = shape == VarShape::pointer;
            if (first_private) {
                if (!is_scalar(shape) && !through_pointer) {
                    fail_node(v, "firstprivate variables must be scalars");
                }
                if (through_pointer) {
                    lp.type_text = std::string(ast_.type_text(ast_.types[decl.type].elem));
                    lp.init = lp.name + ".*";
                } else {
                    lp.type_text = scalar_type_text(shape);
                    lp.init = lp.name;
                }
            } else {
                if (!is_scalar(shape) && shape != VarShape::array && !through_pointer) {
                    fail_node(v, "private variables must be scalars or fixed-size arrays");
                }
                lp.type_text = through_pointer
                                   ? std::string(ast_.type_text(ast_.types[decl.type].elem))
                                   : std::string(ast_.type_text(decl.type));
            }
            lp.fresh = std::string("__omp_") + (first_private ? "fpl_" : "prv_") + lp.name +
                       "_" + id;
            // Rewriting can orphan the enclosing binding; a discard keeps it
            // legal. firstprivate initializers already read the original.
            lp.discard_original = !first_private && !decl.is_global;
            walk(body_node, [&](NodeIndex n, bool in_clause) {
                if (in_clause || ast_.nodes[n].kind != NodeKind::ident) return;
                if (name_of(n) != lp.name) return;
                uint32_t start = ast_.nodes[n].span_start;
                uint32_t end = ast_.nodes[n].span_end;
                if (through_pointer) {
                    for (auto [ident, deref] : deref_of) {
                        if (ident == n) {
                            end = ast_.nodes[deref].span_end;
                            break;
                        }
                    }
                }
                edits.push_back({start, end, lp.fresh});
            });
            privs.push_back(std::move(lp));
        };
        for (NodeIndex v : p.clauses.private_vars) add_priv(v, false);
        for (NodeIndex v : p.clauses.firstprivate_vars) add_priv(v, true);

        const Node& body = ast_.nodes[body_node];
        std::string body_text = apply_edits(body.span_start, body.span_end, std::move(edits));

        emit_while(p, outer, collapse2 ? &inner : nullptr, reds, privs, body_text);
    }

    template <typename LoopRed>
    void emit_combine(std::string& out, const std::string& indent, bool& first,
                      const LoopRed& red, const std::string& id) {
        std::string acc = "__omp_red_" + red.name + "_" + id;
        if (red.target == LoopRed::local) {
            switch (red.op) {
            case ReductionOp::add:
            case ReductionOp::subtract:
                emit_line(out, indent, first, red.name + " += " + acc + ";");
                return;
            case ReductionOp::multiply:
                emit_line(out, indent, first, red.name + " *= " + acc + ";");
                return;
            case ReductionOp::min:
                emit_line(out, indent, first,
                          red.name + " = min(" + red.name + ", " + acc + ");");
                return;
            case ReductionOp::max:
                emit_line(out, indent, first,
                          red.name + " = max(" + red.name + ", " + acc + ");");
                return;
            case ReductionOp::bit_and:
                emit_line(out, indent, first, red.name + " &= " + acc + ";");
                return;
            case ReductionOp::bit_or:
                emit_line(out, indent, first, red.name + " |= " + acc + ";");
                return;
            case ReductionOp::bit_xor:
                emit_line(out, indent, first, red.name + " ^= " + acc + ";");
                return;
            case ReductionOp::logical_and:
                emit_line(out, indent, first,
                          red.name + " = " + red.name + " and " + acc + ";");
                return;
            case ReductionOp::logical_or:
                emit_line(out, indent, first,
                          red.name + " = " + red.name + " or " + acc + ";");
                return;
            }
        }
        std::string cell = red.target == LoopRed::global ? "&" + red.name : red.name;
        ReductionOp combine_op = red.op == ReductionOp::subtract ? ReductionOp::add : red.op;
        if (op_uses_cas(combine_op)) {
            emit_line(out, indent, first,
                      "omp_cas_reduce(" + cell + ", \"" + op_string(combine_op) + "\", " +
                          acc + ");");
        } else {
            emit_line(out, indent, first,
                      "_ = omp_atomic_rmw(" + cell + ", \"" + op_string(combine_op) +
                          "\", " + acc + ");");
        }
    }

    template <typename LoopRed, typename LoopPriv>
    void emit_while(Payload& p, const LoopBounds& outer, const LoopBounds* inner,
                    const std::vector<LoopRed>& reds, const std::vector<LoopPriv>& privs,
                    const std::string& body_text) {
        const std::string id = std::to_string(p.id);
        const std::string& indent = p.indent;
        std::string out;
        bool first = true;

        for (const auto& lp : privs) {
            emit_line(out, indent, first,
                      "var " + lp.fresh + ": " + lp.type_text + " = " +
                          (lp.init.empty() ? "undefined" : lp.init) + ";");
        }
        for (const auto& red : reds) {
            emit_line(out, indent, first,
                      "var __omp_red_" + red.name + "_" + id + ": " +
                          scalar_type_text(red.shape) + " = " +
                          identity_literal(red.op, red.shape,
                                           ast_.nodes[p.node].span_start) +
                          ";");
        }

        std::string lower = "(" + outer.lower + ")";
        std::string upper = "(" + outer.upper + ")";
        std::string step = outer.step;
        std::string cmp = outer.cmp;
        if (inner != nullptr) {
            // Linearize the rectangular nest into [0, n1 * n2).
            emit_line(out, indent, first,
                      "var __omp_n1_" + id + ": i64 = (((" + outer.upper + ") - (" +
                          outer.lower + ")) + (" + outer.step + ") - 1) / (" + outer.step +
                          ");");
            emit_line(out, indent, first, "if (__omp_n1_" + id + " < 0) {");
            emit_line(out, indent, first, "    __omp_n1_" + id + " = 0;");
            emit_line(out, indent, first, "}");
            emit_line(out, indent, first,
                      "var __omp_n2_" + id + ": i64 = (((" + inner->upper + ") - (" +
                          inner->lower + ")) + (" + inner->step + ") - 1) / (" +
                          inner->step + ");");
            emit_line(out, indent, first, "if (__omp_n2_" + id + " < 0) {");
            emit_line(out, indent, first, "    __omp_n2_" + id + " = 0;");
            emit_line(out, indent, first, "}");
            lower = "0";
            upper = "__omp_n1_" + id + " * __omp_n2_" + id;
            step = "(1)";
            cmp = "<";
        }

        auto emit_counters = [&](std::string& dst, bool& dst_first) {
            if (inner == nullptr) {
                emit_line(dst, indent, dst_first,
                          "        " + outer.counter + " = " + lower + " + __omp_i_" + id +
                              " * " + step + ";");
            } else {
                emit_line(dst, indent, dst_first,
                          "        " + outer.counter + " = (" + outer.lower +
                              ") + (__omp_i_" + id + " / __omp_n2_" + id + ") * " +
                              outer.step + ";");
                emit_line(dst, indent, dst_first,
                          "        " + inner->counter + " = (" + inner->lower +
                              ") + (__omp_i_" + id + " % __omp_n2_" + id + ") * " +
                              inner->step + ";");
            }
        };

        ScheduleKind kind = p.clauses.schedule.kind;
        std::string chunk = std::to_string(p.clauses.schedule.chunk);
        std::string nowait = p.clauses.nowait ? "true" : "false";

        // Reduction combines must land before the loop-end barrier releases
        // readers of the shared cell.
        bool has_reds = !reds.empty();

        if (kind == ScheduleKind::unspecified || kind == ScheduleKind::static_sched) {
            emit_line(out, indent, first, "var __omp_tc_" + id + ": i64 = 0;");
            emit_line(out, indent, first, "var __omp_lb_" + id + ": i64 = 0;");
            emit_line(out, indent, first, "var __omp_len_" + id + ": i64 = 0;");
            emit_line(out, indent, first, "var __omp_st_" + id + ": i64 = 0;");
            emit_line(out, indent, first,
                      "omp_static_init(" + lower + ", " + upper + ", \"" + cmp + "\", " +
                          step + ", " + chunk + ", &__omp_tc_" + id + ", &__omp_lb_" + id +
                          ", &__omp_len_" + id + ", &__omp_st_" + id + ");");
            emit_line(out, indent, first,
                      "while (__omp_lb_" + id + " < __omp_tc_" + id + ") : (__omp_lb_" + id +
                          " += __omp_st_" + id + ") {");
            emit_line(out, indent, first,
                      "    var __omp_hi_" + id + ": i64 = __omp_lb_" + id + " + __omp_len_" +
                          id + ";");
            emit_line(out, indent, first,
                      "    if (__omp_hi_" + id + " > __omp_tc_" + id + ") {");
            emit_line(out, indent, first, "        __omp_hi_" + id + " = __omp_tc_" + id + ";");
            emit_line(out, indent, first, "    }");
            emit_line(out, indent, first,
                      "    var __omp_i_" + id + ": i64 = __omp_lb_" + id + ";");
            emit_line(out, indent, first,
                      "    while (__omp_i_" + id + " < __omp_hi_" + id + ") : (__omp_i_" +
                          id + " += 1) {");
            emit_counters(out, first);
            emit_line(out, indent, first, "        " + body_text);
            emit_line(out, indent, first, "    }");
            emit_line(out, indent, first, "}");
            for (const auto& red : reds) {
                emit_combine(out, indent, first, red, id);
            }
            emit_line(out, indent, first, "omp_static_fini(" + nowait + ");");
        } else {
            const char* kind_name = kind == ScheduleKind::dynamic ? "dynamic"
                                    : kind == ScheduleKind::guided ? "guided"
                                                                   : "runtime";
            std::string dispatch_nowait = has_reds ? "true" : nowait;
            emit_line(out, indent, first,
                      "omp_dispatch_init(\"" + std::string(kind_name) + "\", " + lower +
                          ", " + upper + ", \"" + cmp + "\", " + step + ", " + chunk + ", " +
                          dispatch_nowait + ");");
            emit_line(out, indent, first, "var __omp_lo_" + id + ": i64 = 0;");
            emit_line(out, indent, first, "var __omp_hi_" + id + ": i64 = 0;");
            emit_line(out, indent, first,
                      "while (omp_dispatch_next(&__omp_lo_" + id + ", &__omp_hi_" + id +
                          ")) {");
            emit_line(out, indent, first,
                      "    var __omp_i_" + id + ": i64 = __omp_lo_" + id + ";");
            emit_line(out, indent, first,
                      "    while (__omp_i_" + id + " < __omp_hi_" + id + ") : (__omp_i_" +
                          id + " += 1) {");
            emit_counters(out, first);
            emit_line(out, indent, first, "        " + body_text);
            emit_line(out, indent, first, "    }");
            emit_line(out, indent, first, "}");
            for (const auto& red : reds) {
                emit_combine(out, indent, first, red, id);
            }
            if (has_reds && !p.clauses.nowait) {
                emit_line(out, indent, first, "omp_barrier();");
            }
        }
        for (const auto& lp : privs) {
            if (lp.discard_original) {
                emit_line(out, indent, first, "_ = " + lp.name + ";");
            }
        }
        p.site_text = std::move(out);
    }

    // ----- atomic pass ------------------------------------------------------------------

    void build_atomic(Payload& p) {
        const Node& governed = ast_.nodes[p.governed];
        if (governed.kind != NodeKind::assign) {
            fail_node(p.node, "atomic requires a compound assignment");
        }
        TokenTag op_tag = ast_.tokens[governed.main_token].tag;
        const Node& target = ast_.nodes[governed.lhs];

        ReductionOp op;
        std::string value_text;
        switch (op_tag) {
        case TokenTag::plus_eq: op = ReductionOp::add; break;
        case TokenTag::minus_eq: op = ReductionOp::subtract; break;
        case TokenTag::star_eq: op = ReductionOp::multiply; break;
        case TokenTag::amp_eq: op = ReductionOp::bit_and; break;
        case TokenTag::pipe_eq: op = ReductionOp::bit_or; break;
        case TokenTag::caret_eq: op = ReductionOp::bit_xor; break;
        case TokenTag::slash_eq:
        case TokenTag::percent_eq:
            fail_node(p.governed, "unsupported atomic operator");
        case TokenTag::assign: {
            // x = min(x, e) / x = max(x, e)
            const Node& rhs = ast_.nodes[governed.rhs];
            if (rhs.kind != NodeKind::call) {
                fail_node(p.node, "atomic requires a compound assignment");
            }
            std::string_view callee = name_of(governed.rhs);
            if (callee != "min" && callee != "max") {
                fail_node(p.node, "atomic requires a compound assignment");
            }
            auto args = call_args(ast_, rhs);
            if (args.size() != 2 || text_of(args[0]) != text_of(governed.lhs)) {
                fail_node(p.node, "atomic min/max must have the form x = min(x, value)");
            }
            op = callee == "min" ? ReductionOp::min : ReductionOp::max;
            value_text = std::string(text_of(args[1]));
            break;
        }
        default:
            fail_node(p.node, "atomic requires a compound assignment");
        }
        if (value_text.empty()) value_text = std::string(text_of(governed.rhs));

        std::string addr;
        switch (target.kind) {
        case NodeKind::ident:
            addr = "&" + std::string(text_of(governed.lhs));
            break;
        case NodeKind::index:
        case NodeKind::member:
            addr = "&" + std::string(text_of(governed.lhs));
            break;
        case NodeKind::deref:
            addr = std::string(text_of(ast_.nodes[governed.lhs].lhs));
            break;
        default:
            fail_node(p.governed, "atomic target is not an addressable location");
        }

        std::string stmt;
        if (op_uses_cas(op)) {
            stmt = "omp_cas_reduce(" + addr + ", \"" + op_string(op) + "\", " + value_text +
                   ");";
        } else {
            stmt = "_ = omp_atomic_rmw(" + addr + ", \"" + op_string(op) + "\", " +
                   value_text + ");";
        }
        p.site_text = std::move(stmt);
    }
};

// Applies replacements left-to-right, adjusting subsequent offsets by the
// size delta of each splice, then appends generated definitions.
std::string apply_payloads(const std::string& source, std::vector<Payload>& payloads) {
    std::string text = source;
    int64_t delta = 0;
    std::string appended;
    for (Payload& p : payloads) {
        uint32_t start = uint32_t(int64_t(p.span.start) + delta);
        uint32_t end = uint32_t(int64_t(p.span.end) + delta);
        text.replace(start, end - start, p.site_text);
        delta += int64_t(p.site_text.size()) - int64_t(p.span.end - p.span.start);
        appended += p.appended_defs;
    }
    text += appended;
    return text;
}

} // namespace

std::string preprocess(std::string source) {
    uint32_t id_counter = 0;
    bool first_parse = true;
    for (PassKind pass : {PassKind::parallel, PassKind::while_ws, PassKind::atomic}) {
        ParseOptions options;
        options.reject_reserved_names = first_parse;
        Ast ast = parse(source, options);
        first_parse = false;
        Pass builder(ast, id_counter);
        std::vector<Payload> payloads = builder.collect(pass);
        if (!payloads.empty()) {
            source = apply_payloads(source, payloads);
        }
    }
    // The output must parse cleanly and contain no sentinels.
    ParseOptions options;
    options.reject_reserved_names = false;
    parse(source, options);
    return source;
}

std::string strip_directives(const std::string& source) {
    std::string out;
    size_t at = 0;
    while (at < source.size()) {
        size_t eol = source.find('\n', at);
        size_t end = eol == std::string::npos ? source.size() : eol + 1;
        std::string_view line(source.data() + at, end - at);
        size_t ws = line.find_first_not_of(" \t");
        bool sentinel = ws != std::string_view::npos && line.substr(ws, 6) == "//$omp";
        if (!sentinel) out.append(line);
        at = end;
    }
    return out;
}

} // namespace kz
