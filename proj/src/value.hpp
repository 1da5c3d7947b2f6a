#pragma once

#include "runtime.hpp"

#include <atomic>
#include <cstdint>
#include <memory>

namespace kz::vm {

// Dynamic value kinds. Slots have a static kind assigned by the binder, so
// an 8-byte atomic cell plus the static kind reconstructs a Value; shared
// cells therefore never tear and never change their interpretation.
enum class ValueKind : uint8_t {
    none,
    i64_v,
    f64_v,
    bool_v,
    str_v,    // bits = string table id
    arr_i64,  // bits = ArrayObj*
    arr_f64,
    arr_bool,
    struct_v, // bits = StructObj*
    fn_v,     // bits = function id
    ptr_v,    // bits = Cell* | pointee tag (low 3 bits); 0 = null
};

// Pointee tags packed into the low bits of pointer values. Cells are
// 8-byte aligned so three tag bits are always free.
enum class PtrTag : uint8_t { to_i64 = 0, to_f64 = 1, to_bool = 2, to_struct = 3 };

struct Value {
    uint64_t bits = 0;
    ValueKind kind = ValueKind::none;

    static Value of_i64(int64_t v) { return {std::bit_cast<uint64_t>(v), ValueKind::i64_v}; }
    static Value of_f64(double v) { return {std::bit_cast<uint64_t>(v), ValueKind::f64_v}; }
    static Value of_bool(bool v) { return {uint64_t(v), ValueKind::bool_v}; }

    int64_t as_i64() const { return std::bit_cast<int64_t>(bits); }
    double as_f64() const { return std::bit_cast<double>(bits); }
    bool as_bool() const { return bits != 0; }
};

// One storage cell plus debug-mode initialization tracking. Writes through
// pointers update only the cell, not the flag.
struct Slot {
    rt::Cell cell{0};
    std::atomic<uint8_t> flags{0}; // bit 0: initialized

    void store(uint64_t bits, bool mark_init = true) {
        cell.store(bits, std::memory_order_relaxed);
        if (mark_init) flags.store(1, std::memory_order_relaxed);
    }
    uint64_t load() const { return cell.load(std::memory_order_relaxed); }
    bool initialized() const { return flags.load(std::memory_order_relaxed) & 1; }
};

inline Value make_ptr(rt::Cell* cell, PtrTag tag) {
    return {reinterpret_cast<uint64_t>(cell) | uint64_t(tag), ValueKind::ptr_v};
}

inline rt::Cell* ptr_cell(const Value& v) {
    return reinterpret_cast<rt::Cell*>(v.bits & ~uint64_t(7));
}

inline PtrTag ptr_tag(const Value& v) { return PtrTag(v.bits & 7); }

// Heap array with zero-initialized atomic storage; element kind is uniform.
struct ArrayObj {
    ValueKind elem;
    int64_t len;
    std::unique_ptr<rt::Cell[]> cells;

    ArrayObj(ValueKind elem_kind, int64_t n)
        : elem(elem_kind), len(n), cells(new rt::Cell[size_t(n)]) {
        for (int64_t i = 0; i < n; ++i) cells[i].store(0, std::memory_order_relaxed);
    }

    void zero() {
        for (int64_t i = 0; i < len; ++i) cells[i].store(0, std::memory_order_relaxed);
    }
};

struct StructObj {
    uint32_t type_id;
    uint32_t field_count;
    std::unique_ptr<Slot[]> fields;

    StructObj(uint32_t type, uint32_t count)
        : type_id(type), field_count(count), fields(new Slot[count]) {}
};

inline ArrayObj* as_array(const Value& v) { return reinterpret_cast<ArrayObj*>(v.bits); }
inline StructObj* as_struct(const Value& v) { return reinterpret_cast<StructObj*>(v.bits); }

inline bool is_array_kind(ValueKind k) {
    return k == ValueKind::arr_i64 || k == ValueKind::arr_f64 || k == ValueKind::arr_bool;
}

inline ValueKind array_elem_kind(ValueKind arr) {
    switch (arr) {
    case ValueKind::arr_i64: return ValueKind::i64_v;
    case ValueKind::arr_f64: return ValueKind::f64_v;
    case ValueKind::arr_bool: return ValueKind::bool_v;
    default: return ValueKind::none;
    }
}

inline ValueKind array_kind_of(ValueKind elem) {
    switch (elem) {
    case ValueKind::i64_v: return ValueKind::arr_i64;
    case ValueKind::f64_v: return ValueKind::arr_f64;
    case ValueKind::bool_v: return ValueKind::arr_bool;
    default: return ValueKind::none;
    }
}

inline PtrTag tag_for_kind(ValueKind k) {
    switch (k) {
    case ValueKind::i64_v: return PtrTag::to_i64;
    case ValueKind::f64_v: return PtrTag::to_f64;
    case ValueKind::bool_v: return PtrTag::to_bool;
    default: return PtrTag::to_struct;
    }
}

inline ValueKind kind_for_tag(PtrTag t) {
    switch (t) {
    case PtrTag::to_i64: return ValueKind::i64_v;
    case PtrTag::to_f64: return ValueKind::f64_v;
    case PtrTag::to_bool: return ValueKind::bool_v;
    case PtrTag::to_struct: return ValueKind::struct_v;
    }
    return ValueKind::none;
}

const char* value_kind_name(ValueKind k);

} // namespace kz::vm
