#include "ast.hpp"

#include <stdexcept>

namespace kz {

ByteRange Ast::node_span(NodeIndex i) const {
    if (i >= nodes.size()) {
        throw std::out_of_range("node index out of range");
    }
    return ByteRange{nodes[i].span_start, nodes[i].span_end};
}

std::string Ast::type_text(TypeIndex t) const {
    const Type& ty = types.at(t);
    switch (ty.kind) {
    case TypeKind::void_type: return "void";
    case TypeKind::i64_type: return "i64";
    case TypeKind::f64_type: return "f64";
    case TypeKind::bool_type: return "bool";
    case TypeKind::anyopaque: return "anyopaque";
    case TypeKind::pointer: return "*" + type_text(ty.elem);
    case TypeKind::opt_pointer: return "?*" + type_text(ty.elem);
    case TypeKind::array:
        return "[" + std::string(node_text(ty.size_node)) + "]" + type_text(ty.elem);
    case TypeKind::slice: return "[]" + type_text(ty.elem);
    case TypeKind::named: return std::string(token_text(ty.name_token));
    }
    return "?";
}

FnData read_fn_data(const Ast& ast, uint32_t extra_index) {
    FnData data;
    uint32_t count = ast.extra[extra_index];
    uint32_t at = extra_index + 1;
    for (uint32_t i = 0; i < count; ++i) {
        uint32_t name_token = ast.extra[at++];
        TypeIndex type = ast.extra[at++];
        data.params.emplace_back(name_token, type);
    }
    data.return_type = ast.extra[at];
    return data;
}

std::vector<NodeIndex> call_args(const Ast& ast, const Node& call) {
    uint32_t s = ast.extra[call.rhs];
    uint32_t e = ast.extra[call.rhs + 1];
    return ast.extra_slice(s, e);
}

WhileParts while_parts(const Ast& ast, const Node& while_node) {
    return WhileParts{ast.extra[while_node.rhs], ast.extra[while_node.rhs + 1]};
}

IfParts if_parts(const Ast& ast, const Node& if_node) {
    return IfParts{ast.extra[if_node.rhs], ast.extra[if_node.rhs + 1]};
}

} // namespace kz
