#pragma once

#include <cstdint>
#include <optional>
#include <string_view>

namespace kz {

// Lexical token tags. OpenMP keyword tags (omp_kw_*) are never produced by
// the tokenizer: outside a sentinel `parallel` is a legal variable name, so
// directive keywords are stored as plain identifiers and re-interpreted by
// the parser (see Parser::eat_token).
enum class TokenTag : uint8_t {
    eof,
    identifier,
    int_literal,
    float_literal,
    string_literal,

    // punctuation
    lparen,
    rparen,
    lbrace,
    rbrace,
    lbracket,
    rbracket,
    semicolon,
    colon,
    comma,
    dot,
    dot_star, // `.*` pointer dereference
    question,
    builtin, // `@name`

    // operators
    plus,
    minus,
    star,
    slash,
    percent,
    amp,
    pipe,
    caret,
    bang,
    assign,
    plus_eq,
    minus_eq,
    star_eq,
    slash_eq,
    percent_eq,
    amp_eq,
    pipe_eq,
    caret_eq,
    eq_eq,
    bang_eq,
    lt,
    lt_eq,
    gt,
    gt_eq,

    // kernel-language keywords
    kw_fn,
    kw_var,
    kw_const,
    kw_while,
    kw_if,
    kw_else,
    kw_return,
    kw_true,
    kw_false,
    kw_null,
    kw_undefined,
    kw_and,
    kw_or,
    kw_struct,

    omp_sentinel, // `//$omp`

    // OpenMP keywords, one tag each
    omp_kw_parallel,
    omp_kw_while_ws,
    omp_kw_atomic,
    omp_kw_private,
    omp_kw_firstprivate,
    omp_kw_shared,
    omp_kw_reduction,
    omp_kw_default,
    omp_kw_none,
    omp_kw_nowait,
    omp_kw_schedule,
    omp_kw_static,
    omp_kw_dynamic,
    omp_kw_guided,
    omp_kw_runtime,
    omp_kw_collapse,
};

struct Token {
    TokenTag tag = TokenTag::eof;
    uint32_t start = 0; // byte span [start, end) into the source
    uint32_t end = 0;

    std::string_view text(std::string_view source) const {
        return source.substr(start, end - start);
    }
};

const char* token_tag_name(TokenTag tag);

// Kernel-language keyword lookup (fn, var, while, ...).
std::optional<TokenTag> lang_keyword(std::string_view text);

// String -> OpenMP keyword tag map used by the parser to re-interpret
// identifier tokens inside directives.
std::optional<TokenTag> omp_keyword(std::string_view text);
const char* omp_keyword_text(TokenTag tag);

inline bool is_omp_keyword_tag(TokenTag tag) {
    return tag >= TokenTag::omp_kw_parallel && tag <= TokenTag::omp_kw_collapse;
}

} // namespace kz
