#include "token.hpp"

#include <unordered_map>

namespace kz {

const char* token_tag_name(TokenTag tag) {
    switch (tag) {
    case TokenTag::eof: return "end of file";
    case TokenTag::identifier: return "identifier";
    case TokenTag::int_literal: return "integer literal";
    case TokenTag::float_literal: return "float literal";
    case TokenTag::string_literal: return "string literal";
    case TokenTag::lparen: return "'('";
    case TokenTag::rparen: return "')'";
    case TokenTag::lbrace: return "'{'";
    case TokenTag::rbrace: return "'}'";
    case TokenTag::lbracket: return "'['";
    case TokenTag::rbracket: return "']'";
    case TokenTag::semicolon: return "';'";
    case TokenTag::colon: return "':'";
    case TokenTag::comma: return "','";
    case TokenTag::dot: return "'.'";
    case TokenTag::dot_star: return "'.*'";
    case TokenTag::question: return "'?'";
    case TokenTag::builtin: return "builtin";
    case TokenTag::plus: return "'+'";
    case TokenTag::minus: return "'-'";
    case TokenTag::star: return "'*'";
    case TokenTag::slash: return "'/'";
    case TokenTag::percent: return "'%'";
    case TokenTag::amp: return "'&'";
    case TokenTag::pipe: return "'|'";
    case TokenTag::caret: return "'^'";
    case TokenTag::bang: return "'!'";
    case TokenTag::assign: return "'='";
    case TokenTag::plus_eq: return "'+='";
    case TokenTag::minus_eq: return "'-='";
    case TokenTag::star_eq: return "'*='";
    case TokenTag::slash_eq: return "'/='";
    case TokenTag::percent_eq: return "'%='";
    case TokenTag::amp_eq: return "'&='";
    case TokenTag::pipe_eq: return "'|='";
    case TokenTag::caret_eq: return "'^='";
    case TokenTag::eq_eq: return "'=='";
    case TokenTag::bang_eq: return "'!='";
    case TokenTag::lt: return "'<'";
    case TokenTag::lt_eq: return "'<='";
    case TokenTag::gt: return "'>'";
    case TokenTag::gt_eq: return "'>='";
    case TokenTag::kw_fn: return "'fn'";
    case TokenTag::kw_var: return "'var'";
    case TokenTag::kw_const: return "'const'";
    case TokenTag::kw_while: return "'while'";
    case TokenTag::kw_if: return "'if'";
    case TokenTag::kw_else: return "'else'";
    case TokenTag::kw_return: return "'return'";
    case TokenTag::kw_true: return "'true'";
    case TokenTag::kw_false: return "'false'";
    case TokenTag::kw_null: return "'null'";
    case TokenTag::kw_undefined: return "'undefined'";
    case TokenTag::kw_and: return "'and'";
    case TokenTag::kw_or: return "'or'";
    case TokenTag::kw_struct: return "'struct'";
    case TokenTag::omp_sentinel: return "'//$omp'";
    case TokenTag::omp_kw_parallel: return "'parallel'";
    case TokenTag::omp_kw_while_ws: return "'while'";
    case TokenTag::omp_kw_atomic: return "'atomic'";
    case TokenTag::omp_kw_private: return "'private'";
    case TokenTag::omp_kw_firstprivate: return "'firstprivate'";
    case TokenTag::omp_kw_shared: return "'shared'";
    case TokenTag::omp_kw_reduction: return "'reduction'";
    case TokenTag::omp_kw_default: return "'default'";
    case TokenTag::omp_kw_none: return "'none'";
    case TokenTag::omp_kw_nowait: return "'nowait'";
    case TokenTag::omp_kw_schedule: return "'schedule'";
    case TokenTag::omp_kw_static: return "'static'";
    case TokenTag::omp_kw_dynamic: return "'dynamic'";
    case TokenTag::omp_kw_guided: return "'guided'";
    case TokenTag::omp_kw_runtime: return "'runtime'";
    case TokenTag::omp_kw_collapse: return "'collapse'";
    }
    return "?";
}

std::optional<TokenTag> lang_keyword(std::string_view text) {
    static const std::unordered_map<std::string_view, TokenTag> map = {
        {"fn", TokenTag::kw_fn},           {"var", TokenTag::kw_var},
        {"const", TokenTag::kw_const},     {"while", TokenTag::kw_while},
        {"if", TokenTag::kw_if},           {"else", TokenTag::kw_else},
        {"return", TokenTag::kw_return},   {"true", TokenTag::kw_true},
        {"false", TokenTag::kw_false},     {"null", TokenTag::kw_null},
        {"undefined", TokenTag::kw_undefined},
        {"and", TokenTag::kw_and},         {"or", TokenTag::kw_or},
        {"struct", TokenTag::kw_struct},
    };
    auto it = map.find(text);
    if (it == map.end()) return std::nullopt;
    return it->second;
}

std::optional<TokenTag> omp_keyword(std::string_view text) {
    static const std::unordered_map<std::string_view, TokenTag> map = {
        {"parallel", TokenTag::omp_kw_parallel},
        {"while", TokenTag::omp_kw_while_ws},
        {"atomic", TokenTag::omp_kw_atomic},
        {"private", TokenTag::omp_kw_private},
        {"firstprivate", TokenTag::omp_kw_firstprivate},
        {"shared", TokenTag::omp_kw_shared},
        {"reduction", TokenTag::omp_kw_reduction},
        {"default", TokenTag::omp_kw_default},
        {"none", TokenTag::omp_kw_none},
        {"nowait", TokenTag::omp_kw_nowait},
        {"schedule", TokenTag::omp_kw_schedule},
        {"static", TokenTag::omp_kw_static},
        {"dynamic", TokenTag::omp_kw_dynamic},
        {"guided", TokenTag::omp_kw_guided},
        {"runtime", TokenTag::omp_kw_runtime},
        {"collapse", TokenTag::omp_kw_collapse},
    };
    auto it = map.find(text);
    if (it == map.end()) return std::nullopt;
    return it->second;
}

const char* omp_keyword_text(TokenTag tag) {
    switch (tag) {
    case TokenTag::omp_kw_parallel: return "parallel";
    case TokenTag::omp_kw_while_ws: return "while";
    case TokenTag::omp_kw_atomic: return "atomic";
    case TokenTag::omp_kw_private: return "private";
    case TokenTag::omp_kw_firstprivate: return "firstprivate";
    case TokenTag::omp_kw_shared: return "shared";
    case TokenTag::omp_kw_reduction: return "reduction";
    case TokenTag::omp_kw_default: return "default";
    case TokenTag::omp_kw_none: return "none";
    case TokenTag::omp_kw_nowait: return "nowait";
    case TokenTag::omp_kw_schedule: return "schedule";
    case TokenTag::omp_kw_static: return "static";
    case TokenTag::omp_kw_dynamic: return "dynamic";
    case TokenTag::omp_kw_guided: return "guided";
    case TokenTag::omp_kw_runtime: return "runtime";
    case TokenTag::omp_kw_collapse: return "collapse";
    default: return "?";
    }
}

} // namespace kz
