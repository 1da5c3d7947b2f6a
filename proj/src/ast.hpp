#pragma once

#include "token.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace kz {

// Node index into Ast::nodes. Index 0 is the root; kNoNode marks absence.
using NodeIndex = uint32_t;
inline constexpr NodeIndex kNoNode = 0xffffffff;

enum class NodeKind : uint8_t {
    root,        // lhs/rhs = extra slice of top-level declaration nodes
    fn_decl,     // main_token = name; lhs = extra index of FnData; rhs = body block
    struct_decl, // main_token = name; lhs/rhs = extra slice of (field name token, type) pairs
    var_decl,    // main_token = name; lhs = type index; rhs = init expr (kNoNode => undefined)
    block,       // lhs/rhs = extra slice of statement nodes
    while_stmt,  // lhs = condition; rhs = extra index of [continuation (kNoNode ok), body]
    if_stmt,     // lhs = condition; rhs = extra index of [then block, else stmt (kNoNode ok)]
    assign,      // main_token = operator; lhs = target; rhs = value expr
    return_stmt, // lhs = expr or kNoNode
    expr_stmt,   // lhs = call expr used as a statement
    binary,      // main_token = operator; lhs, rhs = operands
    unary,       // main_token = operator (- ! &); lhs = operand
    call,        // lhs = callee identifier node; rhs = extra slice of argument nodes
    builtin_call,// main_token = @name; lhs = type index or kNoNode; rhs = extra slice of args
    index,       // lhs = base; rhs = subscript
    member,      // lhs = base; main_token = field name
    deref,       // lhs = base (`x.*`)
    struct_lit,  // main_token = type name; lhs/rhs = extra slice of (field token, expr) pairs
    ident,       // main_token = name
    int_lit,
    float_lit,
    str_lit,
    bool_lit,    // main_token = kw_true/kw_false
    null_lit,
    discard,     // `_` as an assignment target

    // OpenMP directive nodes. lhs = ExtraData index where the encoded clause
    // record begins; rhs = governed statement node.
    omp_parallel,
    omp_while,
    omp_atomic,
};

// One AST node. `span` covers the full construct in source bytes; for
// directive nodes it runs from the sentinel through the governed statement.
struct Node {
    NodeKind kind;
    uint32_t main_token = 0;
    uint32_t lhs = kNoNode;
    uint32_t rhs = kNoNode;
    uint32_t span_start = 0;
    uint32_t span_end = 0;
};

// Type annotations, interned per parse.
using TypeIndex = uint32_t;
inline constexpr TypeIndex kNoType = 0xffffffff;

enum class TypeKind : uint8_t {
    void_type,
    i64_type,
    f64_type,
    bool_type,
    anyopaque,
    pointer,  // *T
    opt_pointer, // ?*T
    array,    // [N]T, size_node holds the length expression
    slice,    // []T
    named,    // struct type by name
};

struct Type {
    TypeKind kind;
    TypeIndex elem = kNoType;      // pointer/array/slice element
    NodeIndex size_node = kNoNode; // array length expression
    uint32_t name_token = 0;       // named types
};

struct ByteRange {
    uint32_t start = 0;
    uint32_t end = 0;
};

// Parse result: token stream, node list and the extra_data side array of
// 32-bit words holding clause payloads and node child lists.
struct Ast {
    std::string source;
    std::vector<Token> tokens;
    std::vector<Node> nodes;
    std::vector<uint32_t> extra;
    std::vector<Type> types;

    std::string_view src() const { return source; }

    std::string_view token_text(uint32_t token_index) const {
        return tokens[token_index].text(source);
    }

    const Node& node(NodeIndex i) const { return nodes[i]; }

    // [start, end) byte range of a node, suitable for textual splicing.
    // Throws std::out_of_range on an invalid index.
    ByteRange node_span(NodeIndex i) const;

    std::string_view node_text(NodeIndex i) const {
        ByteRange r = node_span(i);
        return src().substr(r.start, r.end - r.start);
    }

    // Extra slice helpers: a slice is a [start, end) pair of extra indices.
    std::vector<NodeIndex> extra_slice(uint32_t start, uint32_t end) const {
        return std::vector<NodeIndex>(extra.begin() + start, extra.begin() + end);
    }

    // Renders a type back to source text (used by the preprocessor when
    // generating declarations).
    std::string type_text(TypeIndex t) const;
};

// Extra layout for fn_decl: [param_count, (name_token, type)*, return_type].
struct FnData {
    std::vector<std::pair<uint32_t, TypeIndex>> params;
    TypeIndex return_type;
};

FnData read_fn_data(const Ast& ast, uint32_t extra_index);

// Call and builtin_call store a [start, end) extra pair in rhs.
std::vector<NodeIndex> call_args(const Ast& ast, const Node& call);

struct WhileParts {
    NodeIndex continuation; // kNoNode when absent
    NodeIndex body;
};
WhileParts while_parts(const Ast& ast, const Node& while_node);

struct IfParts {
    NodeIndex then_block;
    NodeIndex else_stmt; // kNoNode when absent
};
IfParts if_parts(const Ast& ast, const Node& if_node);

} // namespace kz
