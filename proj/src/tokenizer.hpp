#pragma once

#include "token.hpp"

#include <string_view>
#include <vector>

namespace kz {

// Tokenizes kernel-language source. A sentinel comment `//$omp` yields one
// omp_sentinel token and the remainder of that line is tokenized as ordinary
// code, as if the sentinel was not present. Ordinary `//` comments are
// skipped. The returned stream always ends with an eof token.
//
// Throws CompileError on lexical errors (illegal byte, unterminated string,
// sentinel not at the start of its line).
std::vector<Token> tokenize(std::string_view source);

} // namespace kz
