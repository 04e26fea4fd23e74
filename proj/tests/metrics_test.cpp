#include "setforge/metrics.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "test_oracles.hpp"

namespace setforge {
namespace {

FunctionImage blank_image(int h, int w, int c, std::uint8_t fill) {
    FunctionImage img;
    img.height = static_cast<std::uint16_t>(h);
    img.width = static_cast<std::uint16_t>(w);
    img.channels = static_cast<std::uint8_t>(c);
    img.data.assign(static_cast<std::size_t>(h) * w * c, fill);
    return img;
}

FunctionImage random_image(int h, int w, int c, std::uint64_t seed) {
    FunctionImage img = blank_image(h, w, c, 0);
    Rng rng = make_rng(seed);
    std::uniform_int_distribution<int> byte(0, 255);
    for (auto& b : img.data) {
        b = static_cast<std::uint8_t>(byte(rng));
    }
    return img;
}

using test_oracles::ssim_reference;

DatasetRecord record_for(const std::string& tokens, std::uint64_t seed = 1) {
    DatasetRecord rec;
    rec.tokens = parse_tokens(tokens);
    rec.op_count = operator_count(parse_preorder(rec.tokens));
    RenderConfig cfg;
    cfg.noisy = true;
    rec.noisy = *render(parse_preorder(rec.tokens), cfg, seed);
    rec.fp = fingerprint(*render(parse_preorder(rec.tokens), RenderConfig{}));
    rec.split = Split::test;
    return rec;
}

TEST(Rmse, ClosedForms) {
    const FunctionImage a = random_image(32, 32, 4, 1);
    EXPECT_DOUBLE_EQ(image_rmse(a, a), 0.0);

    const FunctionImage zero = blank_image(32, 32, 4, 0);
    const FunctionImage full = blank_image(32, 32, 4, 255);
    EXPECT_DOUBLE_EQ(image_rmse(zero, full), 255.0);

    FunctionImage one_off = zero;
    one_off.data[500] = 10;
    EXPECT_DOUBLE_EQ(image_rmse(zero, one_off), 0.15625);  // 10 / sqrt(4096)

    FunctionImage small = blank_image(16, 16, 1, 0);
    EXPECT_THROW(image_rmse(zero, small), ShapeError);
}

TEST(Ssim, IdentityAndInversion) {
    const FunctionImage a = random_image(32, 32, 4, 7);
    EXPECT_DOUBLE_EQ(image_ssim(a, a), 1.0);

    FunctionImage inverted = a;
    for (auto& b : inverted.data) {
        b = static_cast<std::uint8_t>(255 - b);
    }
    EXPECT_LT(image_ssim(a, inverted), 1.0);
    EXPECT_GE(image_ssim(a, inverted), -1.0);
}

TEST(Ssim, MatchesIndependentImplementation) {
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
        const FunctionImage a = random_image(16, 16, 2, 100 + seed);
        const FunctionImage b = random_image(16, 16, 2, 200 + seed);
        EXPECT_NEAR(image_ssim(a, b), ssim_reference(a, b), 1e-8);
    }
    // And on renders of actual expressions.
    const FunctionImage a = *render(parse_preorder(parse_tokens("+ x y")), RenderConfig{});
    const FunctionImage b = *render(parse_preorder(parse_tokens("* x y")), RenderConfig{});
    EXPECT_NEAR(image_ssim(a, b), ssim_reference(a, b), 1e-8);
}

TEST(EvaluatePredictions, PerfectPredictor) {
    std::vector<DatasetRecord> test{record_for("+ x y"), record_for("sin x"),
                                    record_for("* x y")};
    std::vector<std::vector<TokenSeq>> candidates;
    for (const auto& rec : test) {
        candidates.push_back({rec.tokens});
    }
    const MetricsReport report = evaluate_predictions(test, candidates);
    EXPECT_DOUBLE_EQ(report.mean_rmse, 0.0);
    EXPECT_DOUBLE_EQ(report.mean_ssim, 1.0);
    EXPECT_DOUBLE_EQ(report.success_ratio_pct, 100.0);
    for (const SampleResult& row : report.rows) {
        EXPECT_TRUE(row.success);
        EXPECT_DOUBLE_EQ(row.best_rmse, 0.0);
        EXPECT_DOUBLE_EQ(row.best_ssim, 1.0);
    }
}

TEST(EvaluatePredictions, EquivalentExpressionCountsAsSuccess) {
    // cos(y*x) and cos(-y*x) share one image even though the sequences differ.
    std::vector<DatasetRecord> test{record_for("cos * y x")};
    std::vector<std::vector<TokenSeq>> candidates{{parse_tokens("cos nega * y x")}};
    const MetricsReport report = evaluate_predictions(test, candidates);
    EXPECT_DOUBLE_EQ(report.success_ratio_pct, 100.0);
    EXPECT_DOUBLE_EQ(report.rows[0].best_rmse, 0.0);
}

TEST(EvaluatePredictions, MinMaxThenMeanFixture) {
    // Three samples with candidate lists of mixed quality; expectations are
    // assembled by hand from the pairwise metrics.
    const std::vector<std::string> refs{"+ x y", "* x y", "sin x"};
    const std::vector<std::vector<std::string>> cands{
        {"+ x y", "- x y", "power x 2"},
        {"/ y x", "+ y 1"},
        {"cos x", "sqrt y", "log bad tokens"},  // last one never parses
    };

    std::vector<DatasetRecord> test;
    std::vector<std::vector<TokenSeq>> candidate_tokens;
    double expect_rmse_sum = 0.0;
    double expect_ssim_sum = 0.0;
    int expect_successes = 0;
    for (std::size_t i = 0; i < refs.size(); ++i) {
        test.push_back(record_for(refs[i]));
        const FunctionImage ref_img = *render(parse_preorder(parse_tokens(refs[i])), RenderConfig{});
        std::vector<TokenSeq> row;
        double best_rmse = unrenderable_rmse;
        double best_ssim = unrenderable_ssim;
        bool any = false;
        bool success = false;
        for (const std::string& cand : cands[i]) {
            TokenSeq seq;
            try {
                seq = parse_tokens(cand);
                parse_preorder(seq);
            } catch (const ParseError&) {
                row.push_back(seq);
                continue;
            }
            row.push_back(seq);
            const auto img = render(parse_preorder(seq), RenderConfig{});
            if (!img) {
                continue;
            }
            const double rmse = image_rmse(*img, ref_img);
            const double ssim = image_ssim(*img, ref_img);
            best_rmse = any ? std::min(best_rmse, rmse) : rmse;
            best_ssim = any ? std::max(best_ssim, ssim) : ssim;
            any = true;
            success = success || img->data == ref_img.data;
        }
        expect_rmse_sum += best_rmse;
        expect_ssim_sum += best_ssim;
        expect_successes += success ? 1 : 0;
        candidate_tokens.push_back(std::move(row));
    }

    const MetricsReport report = evaluate_predictions(test, candidate_tokens);
    EXPECT_NEAR(report.mean_rmse, expect_rmse_sum / 3.0, 1e-12);
    EXPECT_NEAR(report.mean_ssim, expect_ssim_sum / 3.0, 1e-12);
    EXPECT_DOUBLE_EQ(report.success_ratio_pct, 100.0 * expect_successes / 3.0);

    // Permuting each candidate list never changes the report.
    for (auto& row : candidate_tokens) {
        std::reverse(row.begin(), row.end());
    }
    const MetricsReport permuted = evaluate_predictions(test, candidate_tokens);
    EXPECT_DOUBLE_EQ(permuted.mean_rmse, report.mean_rmse);
    EXPECT_DOUBLE_EQ(permuted.mean_ssim, report.mean_ssim);
    EXPECT_DOUBLE_EQ(permuted.success_ratio_pct, report.success_ratio_pct);
    for (std::size_t i = 0; i < report.rows.size(); ++i) {
        EXPECT_DOUBLE_EQ(permuted.rows[i].best_rmse, report.rows[i].best_rmse);
        EXPECT_DOUBLE_EQ(permuted.rows[i].best_ssim, report.rows[i].best_ssim);
        EXPECT_EQ(permuted.rows[i].success, report.rows[i].success);
    }
}

TEST(EvaluatePredictions, UnrenderablePenalty) {
    std::vector<DatasetRecord> test{record_for("+ x y")};
    // One unparseable candidate, one that hits a domain error on the boxes.
    std::vector<std::vector<TokenSeq>> candidates{
        {parse_tokens("+ x"), parse_tokens("inv log x")}};
    const MetricsReport report = evaluate_predictions(test, candidates);
    EXPECT_DOUBLE_EQ(report.mean_rmse, 255.0);
    EXPECT_DOUBLE_EQ(report.mean_ssim, 0.0);
    EXPECT_DOUBLE_EQ(report.success_ratio_pct, 0.0);
    EXPECT_FALSE(report.rows[0].any_rendered);
}

TEST(EvaluatePredictions, ErrorCases) {
    EXPECT_THROW(evaluate_predictions({}, {}), EmptyTestSet);
    std::vector<DatasetRecord> test{record_for("x")};
    EXPECT_THROW(evaluate_predictions(test, {}), ShapeError);
}

TEST(NnBaseline, SelfRetrievalAndOrdering) {
    std::vector<DatasetRecord> train{record_for("+ x y", 1), record_for("* x y", 2),
                                     record_for("sin x", 3), record_for("cos y", 4)};
    const auto hits = nn_top_k(train[2].noisy, train, 3);
    ASSERT_EQ(hits.size(), 3u);
    EXPECT_DOUBLE_EQ(hits[0].first, 0.0);
    EXPECT_EQ(hits[1].second != 2 && hits[0].second == 2, true);
    for (std::size_t i = 1; i < hits.size(); ++i) {
        EXPECT_GE(hits[i].first, hits[i - 1].first);
    }
}

TEST(NnBaseline, ZeroSuccessOnDisjointSplits) {
    GenerateConfig cfg;
    cfg.n_min = 0;
    cfg.n_max = 2;
    cfg.attempts_per_count = {30, 80, 120};
    cfg.seed = 3;
    cfg.resolution = 16;
    GenerateResult data = generate_dataset(cfg);
    // Use the raw Algorithm-1 assignment (no train-only policy) so the test
    // split is non-empty at small counts.
    ASSERT_GT(data.test.size(), 0u);
    ASSERT_GT(data.train.size(), 0u);

    RenderConfig render_cfg;
    render_cfg.resolution = 16;
    const MetricsReport report = nn_baseline(data.test, data.train, 10, render_cfg);
    EXPECT_DOUBLE_EQ(report.success_ratio_pct, 0.0);
    EXPECT_GT(report.mean_rmse, 0.0);
}

TEST(NnBaseline, ErrorCases) {
    std::vector<DatasetRecord> test{record_for("x")};
    EXPECT_THROW(nn_baseline(test, {}, 5), EmptyTrainSet);
    std::vector<DatasetRecord> train{record_for("y")};
    EXPECT_THROW(nn_baseline({}, train, 5), EmptyTestSet);
}

TEST(Report, TsvRoundTripShape) {
    std::vector<DatasetRecord> test{record_for("+ x y")};
    std::vector<std::vector<TokenSeq>> candidates{{test[0].tokens}};
    const MetricsReport report = evaluate_predictions(test, candidates);
    const auto path = std::filesystem::temp_directory_path() / "setforge_report.tsv";
    write_report_tsv(report, path);
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    EXPECT_EQ(header, "sample_id\tbest_rmse\tbest_ssim\tsuccess\tbest_candidate_tokens");
    std::string row;
    std::getline(in, row);
    EXPECT_EQ(row.substr(0, 2), "0\t");
    std::filesystem::remove(path);
}

}  // namespace
}  // namespace setforge
