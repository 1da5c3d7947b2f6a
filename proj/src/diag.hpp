#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace kz {

// Byte offset into a source buffer. All frontend errors are located.
struct SourceLoc {
    uint32_t offset = 0;
    uint32_t line = 0;   // 1-based, filled in by LineMap
    uint32_t column = 0; // 1-based byte column
};

// Maps byte offsets to line/column pairs. Built once per source buffer.
class LineMap {
public:
    LineMap() = default;
    explicit LineMap(std::string_view source);

    SourceLoc locate(uint32_t offset) const;
    uint32_t line_of(uint32_t offset) const;
    // Byte offset of the first character of the line containing `offset`.
    uint32_t line_start(uint32_t offset) const;

private:
    std::vector<uint32_t> line_starts_{0};
    uint32_t size_ = 0;
};

// Error raised by the tokenizer, parser, binder or preprocessor.
// The first error aborts the pipeline.
class CompileError : public std::runtime_error {
public:
    CompileError(std::string message, uint32_t offset)
        : std::runtime_error(std::move(message)), offset_(offset) {}

    uint32_t offset() const { return offset_; }

private:
    uint32_t offset_;
};

// Error raised while executing a program. Carries the interpreter call
// stack captured at the point of failure.
class RuntimeError : public std::runtime_error {
public:
    RuntimeError(std::string message, uint32_t offset,
                 std::vector<std::string> stack = {})
        : std::runtime_error(std::move(message)), offset_(offset),
          stack_(std::move(stack)) {}

    uint32_t offset() const { return offset_; }
    const std::vector<std::string>& stack() const { return stack_; }

private:
    uint32_t offset_;
    std::vector<std::string> stack_;
};

// "file:line:col: error: message" rendering used by the CLI and tests.
std::string format_error(std::string_view filename, std::string_view source,
                         const CompileError& err);
std::string format_error(std::string_view filename, std::string_view source,
                         const RuntimeError& err);

} // namespace kz
