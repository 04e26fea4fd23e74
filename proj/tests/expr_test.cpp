#include "setforge/expr.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "test_oracles.hpp"

namespace setforge {
namespace {

using test_oracles::reference_eval;

Expr leaf(std::string_view name) { return Expr{*find_symbol(name), {}}; }

Expr node(std::string_view name, std::vector<Expr> children) {
    return Expr{*find_symbol(name), std::move(children)};
}

TEST(Dictionary, ExactSymbolSet) {
    EXPECT_EQ(dictionary.size(), 20u);
    int variables = 0, unary = 0, binary = 0, constants = 0;
    for (SymbolId id = 0; id < dictionary.size(); ++id) {
        switch (kind(id)) {
            case SymbolKind::variable: ++variables; EXPECT_EQ(arity(id), 0); break;
            case SymbolKind::unary_op: ++unary; EXPECT_EQ(arity(id), 1); break;
            case SymbolKind::binary_op: ++binary; EXPECT_EQ(arity(id), 2); break;
            case SymbolKind::constant: ++constants; EXPECT_EQ(arity(id), 0); break;
        }
    }
    EXPECT_EQ(variables, 2);
    EXPECT_EQ(unary, 7);
    EXPECT_EQ(binary, 5);
    EXPECT_EQ(constants, 6);
    EXPECT_TRUE(find_symbol("power").has_value());
    EXPECT_TRUE(find_symbol("0.5").has_value());
    EXPECT_FALSE(find_symbol("tan").has_value());
}

TEST(SampleExpression, ZeroOperatorsGivesBareTerminal) {
    Rng rng = make_rng(7);
    for (int i = 0; i < 50; ++i) {
        const Expr e = sample_expression(0, rng);
        EXPECT_TRUE(e.children.empty());
        EXPECT_TRUE(is_terminal(e.symbol));
    }
}

TEST(SampleExpression, OperatorCountIsExact) {
    Rng rng = make_rng(123);
    for (int k = 0; k <= 6; ++k) {
        for (int i = 0; i < 1000; ++i) {
            const Expr e = sample_expression(k, rng);
            ASSERT_EQ(operator_count(e), k) << "k=" << k << " draw " << i;
            if (k >= 1) {
                EXPECT_TRUE(is_operator(e.symbol));
            }
        }
    }
}

TEST(SampleExpression, DeterministicGivenSeed) {
    Rng a = make_rng(99);
    Rng b = make_rng(99);
    for (int i = 0; i < 20; ++i) {
        EXPECT_EQ(sample_expression(5, a), sample_expression(5, b));
    }
}

TEST(Preorder, PaperFigureExample) {
    // x*2+log(y)
    const Expr tree = node("+", {node("*", {leaf("x"), leaf("2")}), node("log", {leaf("y")})});
    EXPECT_EQ(to_string(to_preorder(tree)), "+ * x 2 log y");
    EXPECT_EQ(parse_preorder(parse_tokens("+ * x 2 log y")), tree);
}

TEST(Preorder, SingleLeaf) {
    const Expr tree = leaf("x");
    EXPECT_EQ(to_string(to_preorder(tree)), "x");
}

TEST(Preorder, RoundTripRandomTrees) {
    Rng rng = make_rng(2024);
    for (int k = 0; k <= 6; ++k) {
        for (int i = 0; i < 1000; ++i) {
            const Expr e = sample_expression(k, rng);
            const TokenSeq seq = to_preorder(e);
            EXPECT_EQ(parse_preorder(seq), e);
            EXPECT_LE(seq.size(), 13u);
        }
    }
}

TEST(Preorder, ArityAccountingInvariant) {
    // Running sum of (arity - 1) hits -1 exactly at the last token, never before.
    Rng rng = make_rng(5);
    for (int k = 0; k <= 6; ++k) {
        for (int i = 0; i < 200; ++i) {
            const TokenSeq seq = to_preorder(sample_expression(k, rng));
            int sum = 0;
            for (std::size_t t = 0; t < seq.size(); ++t) {
                sum += arity(seq[t]) - 1;
                if (t + 1 < seq.size()) {
                    EXPECT_GT(sum, -1);
                } else {
                    EXPECT_EQ(sum, -1);
                }
            }
        }
    }
}

TEST(ParsePreorder, ErrorCases) {
    EXPECT_THROW(parse_preorder(parse_tokens("sin")), IncompleteSequence);
    EXPECT_THROW(parse_preorder(parse_tokens("x y")), TrailingTokens);
    EXPECT_THROW(parse_preorder(TokenSeq{}), IncompleteSequence);
    EXPECT_THROW(parse_tokens("+ x z"), UnknownToken);
}

TEST(Evaluate, BasicValues) {
    const Expr tree = parse_preorder(parse_tokens("+ * x 2 log y"));
    const auto v = evaluate(tree, 1.0, 1.0);
    ASSERT_TRUE(v.has_value());
    EXPECT_DOUBLE_EQ(*v, 2.0);
}

TEST(Evaluate, DomainErrors) {
    EXPECT_FALSE(evaluate(parse_preorder(parse_tokens("inv x")), 0.0, 1.0).has_value());
    EXPECT_FALSE(evaluate(parse_preorder(parse_tokens("log nega x")), 1.0, 0.0).has_value());
    EXPECT_FALSE(evaluate(parse_preorder(parse_tokens("log - x x")), 1.0, 0.0).has_value());
    EXPECT_FALSE(evaluate(parse_preorder(parse_tokens("sqrt nega x")), 2.0, 0.0).has_value());
    EXPECT_FALSE(evaluate(parse_preorder(parse_tokens("/ 1 - x x")), 3.0, 0.0).has_value());
    // power: negative base with non-integer exponent, 0^0, 0^negative
    EXPECT_FALSE(evaluate(parse_preorder(parse_tokens("power nega 2 0.5")), 0, 0).has_value());
    EXPECT_FALSE(evaluate(parse_preorder(parse_tokens("power - x x - y y")), 1, 1).has_value());
    EXPECT_FALSE(evaluate(parse_preorder(parse_tokens("power - x x nega 1")), 1, 1).has_value());
    // negative base with integer exponent is fine
    const auto cube = evaluate(parse_preorder(parse_tokens("power nega 2 3")), 0, 0);
    ASSERT_TRUE(cube.has_value());
    EXPECT_DOUBLE_EQ(*cube, -8.0);
    // overflow guard
    EXPECT_FALSE(evaluate(parse_preorder(parse_tokens("exp * 5 * 5 5")), 0, 0).has_value());
    EXPECT_FALSE(evaluate(parse_preorder(parse_tokens("power 5 * 5 5")), 0, 0).has_value());
}

TEST(Evaluate, DualInterpreterOracle) {
    Rng rng = make_rng(31337);
    std::uniform_real_distribution<double> point(0.05, 7.5);
    std::uniform_int_distribution<int> ops(0, 6);
    int errors = 0, successes = 0;
    for (int i = 0; i < 500; ++i) {
        const Expr e = sample_expression(ops(rng), rng);
        const double x = point(rng);
        const double y = point(rng);
        const auto got = evaluate(e, x, y);
        const auto want = reference_eval(e, x, y);
        ASSERT_EQ(got.has_value(), want.has_value()) << to_string(to_preorder(e));
        if (got) {
            ++successes;
            const double scale = std::max(1.0, std::fabs(*want));
            EXPECT_LE(std::fabs(*got - *want) / scale, 1e-12) << to_string(to_preorder(e));
        } else {
            ++errors;
        }
    }
    // Both outcomes must actually occur for the oracle to mean anything.
    EXPECT_GT(successes, 0);
    EXPECT_GT(errors, 0);
}

TEST(Evaluate, DeterministicAndPure) {
    const Expr e = parse_preorder(parse_tokens("* sin x cos y"));
    const auto a = evaluate(e, 0.3, 0.7);
    const auto b = evaluate(e, 0.3, 0.7);
    ASSERT_TRUE(a && b);
    EXPECT_EQ(*a, *b);
}

}  // namespace
}  // namespace setforge
