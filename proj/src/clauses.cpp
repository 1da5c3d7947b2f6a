#include "clauses.hpp"

namespace kz {

const char* reduction_op_name(ReductionOp op) {
    switch (op) {
    case ReductionOp::add: return "+";
    case ReductionOp::subtract: return "-";
    case ReductionOp::multiply: return "*";
    case ReductionOp::min: return "min";
    case ReductionOp::max: return "max";
    case ReductionOp::bit_and: return "&";
    case ReductionOp::bit_or: return "|";
    case ReductionOp::bit_xor: return "^";
    case ReductionOp::logical_and: return "and";
    case ReductionOp::logical_or: return "or";
    }
    return "?";
}

namespace clauses {

uint32_t pack_loop_word(const ScheduleSpec& spec) {
    if (spec.chunk > kMaxChunk) {
        throw ClauseCodecError("schedule chunk size out of range");
    }
    return uint32_t(spec.kind) | (spec.chunk << 3);
}

uint32_t pack_misc_word(DefaultKind default_kind, bool nowait, uint8_t collapse) {
    if (collapse > 15) {
        throw ClauseCodecError("collapse count out of range");
    }
    return uint32_t(default_kind) | (uint32_t(nowait) << 2) | (uint32_t(collapse) << 3);
}

ScheduleSpec unpack_loop_word(uint32_t word) {
    uint32_t kind_bits = word & 0x7;
    if (kind_bits > uint32_t(ScheduleKind::runtime)) {
        throw ClauseCodecError("malformed LOOP word: unknown schedule kind");
    }
    ScheduleSpec spec;
    spec.kind = ScheduleKind(kind_bits);
    spec.chunk = word >> 3;
    return spec;
}

uint32_t encode(const ClauseSet& set, std::vector<uint32_t>& extra) {
    uint32_t start = uint32_t(extra.size());
    extra.push_back(pack_loop_word(set.schedule));
    extra.push_back(pack_misc_word(set.default_kind, set.nowait, set.collapse));
    // Reserve the four slice pairs; payloads are appended after the header
    // and the bounds backpatched.
    uint32_t slice_header = uint32_t(extra.size());
    for (int i = 0; i < 8; ++i) extra.push_back(0);

    auto append_list = [&](const std::vector<NodeIndex>& list, int slot) {
        uint32_t begin = uint32_t(extra.size());
        for (NodeIndex n : list) extra.push_back(n);
        extra[slice_header + 2 * slot] = begin;
        extra[slice_header + 2 * slot + 1] = uint32_t(extra.size());
    };
    append_list(set.private_vars, 0);
    append_list(set.firstprivate_vars, 1);
    append_list(set.shared_vars, 2);

    uint32_t begin = uint32_t(extra.size());
    for (auto [op, node] : set.reductions) {
        extra.push_back(uint32_t(op));
        extra.push_back(node);
    }
    extra[slice_header + 6] = begin;
    extra[slice_header + 7] = uint32_t(extra.size());
    return start;
}

ClauseSet decode(const std::vector<uint32_t>& extra, uint32_t start) {
    if (start + 10 > extra.size()) {
        throw ClauseCodecError("clause record out of range");
    }
    ClauseSet set;
    set.schedule = unpack_loop_word(extra[start]);

    uint32_t misc = extra[start + 1];
    uint32_t default_bits = misc & 0x3;
    if (default_bits > uint32_t(DefaultKind::none)) {
        throw ClauseCodecError("malformed MISC word: unknown default kind");
    }
    set.default_kind = DefaultKind(default_bits);
    set.nowait = (misc >> 2) & 0x1;
    set.collapse = uint8_t((misc >> 3) & 0xf);
    if (misc >> 7) {
        throw ClauseCodecError("malformed MISC word: reserved bits set");
    }

    auto read_slice = [&](int slot) {
        uint32_t begin = extra[start + 2 + 2 * slot];
        uint32_t end = extra[start + 2 + 2 * slot + 1];
        if (end < begin || end > extra.size()) {
            throw ClauseCodecError("malformed clause slice bounds");
        }
        return std::pair<uint32_t, uint32_t>{begin, end};
    };

    auto [pb, pe] = read_slice(0);
    set.private_vars.assign(extra.begin() + pb, extra.begin() + pe);
    auto [fb, fe] = read_slice(1);
    set.firstprivate_vars.assign(extra.begin() + fb, extra.begin() + fe);
    auto [sb, se] = read_slice(2);
    set.shared_vars.assign(extra.begin() + sb, extra.begin() + se);

    auto [rb, re] = read_slice(3);
    if ((re - rb) % 2 != 0) {
        throw ClauseCodecError("malformed reduction slice: odd length");
    }
    for (uint32_t i = rb; i < re; i += 2) {
        uint32_t op = extra[i];
        if (op > uint32_t(ReductionOp::logical_or)) {
            throw ClauseCodecError("malformed reduction entry: unknown operator");
        }
        set.reductions.emplace_back(ReductionOp(op), extra[i + 1]);
    }
    return set;
}

} // namespace clauses

} // namespace kz
