#pragma once

#include <cassert>
#include <cmath>
#include <deque>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "setforge/common.hpp"
#include "setforge/symbols.hpp"

namespace setforge {

// ----------------------------------------------------------------------------
// Expression trees
// ----------------------------------------------------------------------------

struct Expr {
    SymbolId symbol{};
    std::vector<Expr> children;

    bool operator==(const Expr&) const = default;
};

inline int operator_count(const Expr& e) {
    int count = is_operator(e.symbol) ? 1 : 0;
    for (const Expr& c : e.children) {
        count += operator_count(c);
    }
    return count;
}

/// Token sequences hold dictionary symbol ids; the text form is the
/// space-separated token names.
using TokenSeq = std::vector<SymbolId>;

// ----------------------------------------------------------------------------
// Random sampling
// ----------------------------------------------------------------------------

namespace detail {

inline SymbolId draw_terminal(Rng& rng) {
    std::uniform_int_distribution<int> d(0, static_cast<int>(terminal_ids.size()) - 1);
    return terminal_ids[static_cast<std::size_t>(d(rng))];
}

inline SymbolId draw_operator(Rng& rng) {
    std::uniform_int_distribution<int> d(0, static_cast<int>(operator_ids.size()) - 1);
    return operator_ids[static_cast<std::size_t>(d(rng))];
}

}  // namespace detail

/// Samples a random expression tree with exactly `k` operator nodes.
///
/// For k >= 1 the root is always an operator. Nodes are expanded in
/// breadth-first order; while operator budget remains, each expansion places
/// at least one operator child (count uniform in [1, min(blanks, budget)],
/// positions uniform among the blanks), so the budget is always spent exactly.
inline Expr sample_expression(int k, Rng& rng) {
    assert(k >= 0);
    if (k == 0) {
        return Expr{detail::draw_terminal(rng), {}};
    }

    Expr root{detail::draw_operator(rng), {}};
    int placed = 1;
    std::deque<Expr*> pending{&root};

    while (!pending.empty()) {
        Expr* node = pending.front();
        pending.pop_front();

        const int blanks = arity(node->symbol);
        const int budget = k - placed;

        int ops_here = 0;
        if (budget > 0) {
            const int hi = std::min(blanks, budget);
            ops_here = hi == 1 ? 1 : std::uniform_int_distribution<int>(1, hi)(rng);
        }

        // Uniformly pick which of the blanks become operators.
        std::array<bool, 2> slot_is_op{false, false};
        int need = ops_here;
        for (int i = 0; i < blanks && need > 0; ++i) {
            const int remaining = blanks - i;
            if (need == remaining) {
                for (int j = i; j < blanks; ++j) {
                    slot_is_op[static_cast<std::size_t>(j)] = true;
                }
                break;
            }
            if (std::uniform_int_distribution<int>(0, remaining - 1)(rng) < need) {
                slot_is_op[static_cast<std::size_t>(i)] = true;
                --need;
            }
        }

        node->children.reserve(static_cast<std::size_t>(blanks));
        for (int i = 0; i < blanks; ++i) {
            if (slot_is_op[static_cast<std::size_t>(i)]) {
                node->children.push_back(Expr{detail::draw_operator(rng), {}});
                ++placed;
            } else {
                node->children.push_back(Expr{detail::draw_terminal(rng), {}});
            }
        }
        // Children vectors are sized exactly once, so these pointers stay valid.
        for (Expr& c : node->children) {
            if (is_operator(c.symbol)) {
                pending.push_back(&c);
            }
        }
    }

    assert(placed == k);
    return root;
}

// ----------------------------------------------------------------------------
// Pre-order serialization and parsing
// ----------------------------------------------------------------------------

inline void to_preorder(const Expr& e, TokenSeq& out) {
    out.push_back(e.symbol);
    for (const Expr& c : e.children) {
        to_preorder(c, out);
    }
}

inline TokenSeq to_preorder(const Expr& e) {
    TokenSeq out;
    to_preorder(e, out);
    return out;
}

namespace detail {

inline Expr parse_preorder_at(std::span<const SymbolId> tokens, std::size_t& pos) {
    if (pos >= tokens.size()) {
        throw IncompleteSequence("token sequence ends before all arities are satisfied");
    }
    Expr node{tokens[pos++], {}};
    const int n = arity(node.symbol);
    node.children.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        node.children.push_back(parse_preorder_at(tokens, pos));
    }
    return node;
}

}  // namespace detail

/// Rebuilds the unique tree whose pre-order traversal equals `tokens`.
inline Expr parse_preorder(std::span<const SymbolId> tokens) {
    if (tokens.empty()) {
        throw IncompleteSequence("empty token sequence");
    }
    std::size_t pos = 0;
    Expr root = detail::parse_preorder_at(tokens, pos);
    if (pos != tokens.size()) {
        throw TrailingTokens("tokens remain after a complete tree");
    }
    return root;
}

inline Expr parse_preorder(const TokenSeq& tokens) {
    return parse_preorder(std::span<const SymbolId>{tokens});
}

inline std::string to_string(const TokenSeq& tokens) {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i > 0) {
            out += ' ';
        }
        out += symbol_name(tokens[i]);
    }
    return out;
}

/// Splits whitespace-separated token names into symbol ids.
inline TokenSeq parse_tokens(std::string_view text) {
    TokenSeq out;
    std::istringstream in{std::string(text)};
    std::string word;
    while (in >> word) {
        const auto id = find_symbol(word);
        if (!id) {
            throw UnknownToken("unknown token: " + word);
        }
        out.push_back(*id);
    }
    return out;
}

// ----------------------------------------------------------------------------
// Numerical evaluation
// ----------------------------------------------------------------------------

/// Any intermediate whose magnitude exceeds this is treated as a domain error,
/// so a single spike cannot saturate the digitized image.
inline constexpr double overflow_guard = 1e8;

/// Exponents within this distance of an integer are treated as integral when
/// the base is negative.
inline constexpr double integer_exponent_tol = 1e-9;

/// Evaluates the tree at (x, y). Returns nullopt on any domain failure:
/// log/sqrt of a negative argument, log(0), division by zero, inv(0), a
/// negative base raised to a non-integer exponent, 0^0 or 0 to a negative
/// power, and any intermediate that is non-finite or beyond the overflow
/// guard.
inline std::optional<double> evaluate(const Expr& e, double x, double y) {
    const auto guard = [](double v) -> std::optional<double> {
        if (!std::isfinite(v) || std::abs(v) > overflow_guard) {
            return std::nullopt;
        }
        return v;
    };

    switch (kind(e.symbol)) {
        case SymbolKind::variable:
            return guard(e.symbol == 0 ? x : y);
        case SymbolKind::constant:
            return constant_value(e.symbol);
        case SymbolKind::unary_op: {
            const auto a = evaluate(e.children[0], x, y);
            if (!a) {
                return std::nullopt;
            }
            switch (e.symbol) {
                case 2: return guard(std::sin(*a));
                case 3: return guard(std::cos(*a));
                case 4: return *a <= 0.0 ? std::nullopt : guard(std::log(*a));
                case 5: return *a < 0.0 ? std::nullopt : guard(std::sqrt(*a));
                case 6: return guard(-*a);
                case 7: return *a == 0.0 ? std::nullopt : guard(1.0 / *a);
                case 8: return guard(std::exp(*a));
                default: break;
            }
            return std::nullopt;
        }
        case SymbolKind::binary_op: {
            const auto a = evaluate(e.children[0], x, y);
            if (!a) {
                return std::nullopt;
            }
            const auto b = evaluate(e.children[1], x, y);
            if (!b) {
                return std::nullopt;
            }
            switch (e.symbol) {
                case 9: return guard(*a + *b);
                case 10: return guard(*a - *b);
                case 11: return guard(*a * *b);
                case 12: return *b == 0.0 ? std::nullopt : guard(*a / *b);
                case 13: {
                    if (*a == 0.0) {
                        // 0^0 and 0 to a negative power are undefined here.
                        return *b > 0.0 ? std::optional<double>(0.0) : std::nullopt;
                    }
                    if (*a < 0.0) {
                        const double r = std::nearbyint(*b);
                        if (std::abs(*b - r) >= integer_exponent_tol) {
                            return std::nullopt;
                        }
                        return guard(std::pow(*a, r));
                    }
                    return guard(std::pow(*a, *b));
                }
                default: break;
            }
            return std::nullopt;
        }
    }
    return std::nullopt;
}

}  // namespace setforge
