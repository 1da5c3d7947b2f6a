#pragma once

#include <string>

namespace kz {

// Multi-pass source-to-source rewriter. Pass order: parallel regions are
// outlined first, then worksharing while loops are lowered onto the runtime
// intrinsics, then atomic statements become RMW intrinsic calls. Each pass
// re-parses the current text, collects a replacement payload per directive
// and splices replacements left-to-right, adjusting subsequent offsets by
// the size delta of each splice.
//
// The output contains no sentinel comments and parses cleanly; sources
// without sentinels are returned byte-identical, so preprocess is a fixpoint
// on its own output.
//
// Throws CompileError with a byte offset on malformed or unsupported input.
std::string preprocess(std::string source);

// Removes every directive line (lines whose first token is `//$omp`),
// yielding the serial program the directives annotate.
std::string strip_directives(const std::string& source);

} // namespace kz
