#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace setforge {

// The expression dictionary: 2 variables, 7 unary operators, 5 binary
// operators and 6 constants. Symbol ids index this table and are stable; the
// model vocabulary and all file formats rely on this ordering.

enum class SymbolKind : std::uint8_t {
    variable,
    unary_op,
    binary_op,
    constant,
};

using SymbolId = std::uint8_t;

struct SymbolInfo {
    std::string_view name;
    SymbolKind kind;
    std::uint8_t arity;
    double value;  // meaningful for constants only
};

inline constexpr std::size_t dictionary_size = 20;

inline constexpr std::array<SymbolInfo, dictionary_size> dictionary{{
    {"x", SymbolKind::variable, 0, 0.0},
    {"y", SymbolKind::variable, 0, 0.0},
    {"sin", SymbolKind::unary_op, 1, 0.0},
    {"cos", SymbolKind::unary_op, 1, 0.0},
    {"log", SymbolKind::unary_op, 1, 0.0},
    {"sqrt", SymbolKind::unary_op, 1, 0.0},
    {"nega", SymbolKind::unary_op, 1, 0.0},
    {"inv", SymbolKind::unary_op, 1, 0.0},
    {"exp", SymbolKind::unary_op, 1, 0.0},
    {"+", SymbolKind::binary_op, 2, 0.0},
    {"-", SymbolKind::binary_op, 2, 0.0},
    {"*", SymbolKind::binary_op, 2, 0.0},
    {"/", SymbolKind::binary_op, 2, 0.0},
    {"power", SymbolKind::binary_op, 2, 0.0},
    {"0.5", SymbolKind::constant, 0, 0.5},
    {"1", SymbolKind::constant, 0, 1.0},
    {"2", SymbolKind::constant, 0, 2.0},
    {"3", SymbolKind::constant, 0, 3.0},
    {"4", SymbolKind::constant, 0, 4.0},
    {"5", SymbolKind::constant, 0, 5.0},
}};

// Id ranges implied by the table layout above.
inline constexpr SymbolId first_unary = 2;
inline constexpr SymbolId first_binary = 9;
inline constexpr SymbolId first_constant = 14;

inline constexpr SymbolKind kind(SymbolId id) { return dictionary[id].kind; }
inline constexpr int arity(SymbolId id) { return dictionary[id].arity; }
inline constexpr std::string_view symbol_name(SymbolId id) { return dictionary[id].name; }
inline constexpr double constant_value(SymbolId id) { return dictionary[id].value; }

inline constexpr bool is_operator(SymbolId id) {
    return kind(id) == SymbolKind::unary_op || kind(id) == SymbolKind::binary_op;
}

inline constexpr bool is_terminal(SymbolId id) { return !is_operator(id); }

// Draw pools, in dictionary order. Operator draws are uniform over all 12
// operators; terminal draws are uniform over the 2 variables and 6 constants.
inline constexpr std::array<SymbolId, 12> operator_ids{2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13};
inline constexpr std::array<SymbolId, 8> terminal_ids{0, 1, 14, 15, 16, 17, 18, 19};

inline std::optional<SymbolId> find_symbol(std::string_view name) {
    for (std::size_t i = 0; i < dictionary.size(); ++i) {
        if (dictionary[i].name == name) {
            return static_cast<SymbolId>(i);
        }
    }
    return std::nullopt;
}

}  // namespace setforge
