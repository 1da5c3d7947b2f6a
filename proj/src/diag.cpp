#include "diag.hpp"

#include <algorithm>
#include <cstdio>

namespace kz {

LineMap::LineMap(std::string_view source) : size_(uint32_t(source.size())) {
    for (uint32_t i = 0; i < source.size(); ++i) {
        if (source[i] == '\n') {
            line_starts_.push_back(i + 1);
        }
    }
}

SourceLoc LineMap::locate(uint32_t offset) const {
    offset = std::min(offset, size_);
    auto it = std::upper_bound(line_starts_.begin(), line_starts_.end(), offset);
    uint32_t line_index = uint32_t(it - line_starts_.begin()) - 1;
    SourceLoc loc;
    loc.offset = offset;
    loc.line = line_index + 1;
    loc.column = offset - line_starts_[line_index] + 1;
    return loc;
}

uint32_t LineMap::line_of(uint32_t offset) const {
    return locate(offset).line;
}

uint32_t LineMap::line_start(uint32_t offset) const {
    offset = std::min(offset, size_);
    auto it = std::upper_bound(line_starts_.begin(), line_starts_.end(), offset);
    return line_starts_[uint32_t(it - line_starts_.begin()) - 1];
}

namespace {

std::string render(std::string_view filename, std::string_view source,
                   std::string_view message, uint32_t offset) {
    LineMap lines(source);
    SourceLoc loc = lines.locate(offset);
    char buf[64];
    std::snprintf(buf, sizeof(buf), ":%u:%u: error: ", loc.line, loc.column);
    std::string out;
    out += filename;
    out += buf;
    out += message;
    return out;
}

} // namespace

std::string format_error(std::string_view filename, std::string_view source,
                         const CompileError& err) {
    return render(filename, source, err.what(), err.offset());
}

std::string format_error(std::string_view filename, std::string_view source,
                         const RuntimeError& err) {
    std::string out = render(filename, source, err.what(), err.offset());
    for (const auto& frame : err.stack()) {
        out += "\n    in ";
        out += frame;
    }
    return out;
}

} // namespace kz
