#pragma once

#include "ast.hpp"
#include "clauses.hpp"
#include "diag.hpp"

#include <optional>
#include <string_view>

namespace kz {

struct ParseOptions {
    // Reject user declarations with the reserved `__omp_` prefix when the
    // file still contains directive sentinels. The preprocessor turns this
    // off when re-parsing its own generated output.
    bool reject_reserved_names = true;
};

// Parses a token stream into an Ast. Throws CompileError on the first error.
Ast parse(std::string source, ParseOptions options = {});

// Convenience: tokenize + parse.
inline Ast parse_source(std::string_view source, ParseOptions options = {}) {
    return parse(std::string(source), options);
}

// True when `tok` matches `tag`. An OpenMP keyword tag matches an identifier
// whose text maps to that keyword (the worksharing `while` matches the
// language's own while token); other tags match exactly.
bool token_matches(const Token& tok, TokenTag tag, std::string_view source);

// Minimal cursor over a token stream, mirroring the parser's core matcher:
// if the next token matches, it is returned and the cursor advances;
// otherwise nullopt is returned and the cursor is unchanged.
struct TokenCursor {
    const std::vector<Token>* tokens = nullptr;
    std::string_view source;
    uint32_t pos = 0;
};

std::optional<Token> eat_token(TokenCursor& cursor, TokenTag tag);

} // namespace kz
