#pragma once

#include "ast.hpp"

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace kz {

// Directive clauses and their bit-exact 32-bit encodings.
//
// A clause record occupies ten consecutive extra_data words starting at the
// index stored in the directive node, followed by the list payloads:
//
//   word 0   LOOP  = schedule.kind | (chunk << 3)
//   word 1   MISC  = default_kind | (nowait << 2) | (collapse << 3)
//   words 2..3   private slice       [start, end) into extra_data
//   words 4..5   firstprivate slice  [start, end)
//   words 6..7   shared slice        [start, end)
//   words 8..9   reduction slice     [start, end), pairs of (op code, node)
//
// Slice payloads hold identifier node indices. The schedule kind is a 3-bit
// enumeration and the chunk a 29-bit integer, so the maximum encodable chunk
// is 536870911 and chunk 0 means "no chunk size specified". default_kind is
// 2 bits, nowait 1 bit and collapse 4 bits; the remaining MISC bits are zero.
// This layout is normative: golden preprocessor output depends on it.

enum class ScheduleKind : uint8_t {
    unspecified = 0,
    static_sched = 1,
    dynamic = 2,
    guided = 3,
    runtime = 4,
};

inline constexpr uint32_t kMaxChunk = (1u << 29) - 1; // 536870911

struct ScheduleSpec {
    ScheduleKind kind = ScheduleKind::unspecified;
    uint32_t chunk = 0; // 0 = unspecified

    bool operator==(const ScheduleSpec&) const = default;
};

enum class ReductionOp : uint8_t {
    add = 0,
    subtract = 1,
    multiply = 2,
    min = 3,
    max = 4,
    bit_and = 5,
    bit_or = 6,
    bit_xor = 7,
    logical_and = 8,
    logical_or = 9,
};

const char* reduction_op_name(ReductionOp op);

enum class DefaultKind : uint8_t {
    unspecified = 0,
    shared = 1,
    none = 2,
};

struct ClauseSet {
    std::vector<NodeIndex> private_vars;
    std::vector<NodeIndex> firstprivate_vars;
    std::vector<NodeIndex> shared_vars;
    std::vector<std::pair<ReductionOp, NodeIndex>> reductions;
    ScheduleSpec schedule;
    DefaultKind default_kind = DefaultKind::unspecified;
    bool nowait = false;
    uint8_t collapse = 0; // 0 = unspecified (one loop)

    bool operator==(const ClauseSet&) const = default;
};

// Raised on out-of-range fields (encode) or malformed words (decode).
class ClauseCodecError : public std::runtime_error {
public:
    explicit ClauseCodecError(std::string msg) : std::runtime_error(std::move(msg)) {}
};

namespace clauses {

uint32_t pack_loop_word(const ScheduleSpec& spec);
uint32_t pack_misc_word(DefaultKind default_kind, bool nowait, uint8_t collapse);
ScheduleSpec unpack_loop_word(uint32_t word);

// Appends the clause record to `extra` and returns the index of word LOOP.
uint32_t encode(const ClauseSet& set, std::vector<uint32_t>& extra);

// Inverse of encode: decode(extra, encode(set, extra)) == set.
ClauseSet decode(const std::vector<uint32_t>& extra, uint32_t start);

} // namespace clauses

} // namespace kz
