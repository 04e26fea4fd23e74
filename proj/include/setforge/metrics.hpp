#pragma once

// Image-space evaluation: per-sample beam-min RMSE and beam-max SSIM, the
// pixel-identity success ratio, and the nearest-neighbor retrieval baseline.
// All candidate scoring happens on clean re-renders of the candidate
// expressions, never on stored noisy images.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "setforge/common.hpp"
#include "setforge/dataset.hpp"
#include "setforge/expr.hpp"
#include "setforge/imaging.hpp"

namespace setforge {

// ----------------------------------------------------------------------------
// Pairwise metrics
// ----------------------------------------------------------------------------

/// Root of the mean squared difference over all C*H*W pixels, as reals in
/// [0, 255].
inline double image_rmse(const FunctionImage& a, const FunctionImage& b) {
    if (a.height != b.height || a.width != b.width || a.channels != b.channels) {
        throw ShapeError("image_rmse: shape mismatch");
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]);
        sum += d * d;
    }
    return std::sqrt(sum / static_cast<double>(a.data.size()));
}

/// Mean local SSIM over sliding 8x8 uniform windows (stride 1), per channel,
/// averaged across channels. Constants K1 = 0.01, K2 = 0.03, L = 255.
inline double image_ssim(const FunctionImage& a, const FunctionImage& b) {
    if (a.height != b.height || a.width != b.width || a.channels != b.channels) {
        throw ShapeError("image_ssim: shape mismatch");
    }
    constexpr int window = 8;
    constexpr double l = 255.0;
    constexpr double c1 = (0.01 * l) * (0.01 * l);
    constexpr double c2 = (0.03 * l) * (0.03 * l);
    const int h = a.height;
    const int w = a.width;
    if (h < window || w < window) {
        throw ShapeError("image_ssim: image smaller than the window");
    }
    const double area = static_cast<double>(window) * window;

    double channel_sum = 0.0;
    for (int c = 0; c < a.channels; ++c) {
        double window_sum = 0.0;
        int windows = 0;
        for (int i = 0; i + window <= h; ++i) {
            for (int j = 0; j + window <= w; ++j) {
                double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
                for (int di = 0; di < window; ++di) {
                    for (int dj = 0; dj < window; ++dj) {
                        const double va = a.at(c, i + di, j + dj);
                        const double vb = b.at(c, i + di, j + dj);
                        sa += va;
                        sb += vb;
                        saa += va * va;
                        sbb += vb * vb;
                        sab += va * vb;
                    }
                }
                const double mu_a = sa / area;
                const double mu_b = sb / area;
                const double var_a = saa / area - mu_a * mu_a;
                const double var_b = sbb / area - mu_b * mu_b;
                const double cov = sab / area - mu_a * mu_b;
                window_sum += ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) /
                              ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
                ++windows;
            }
        }
        channel_sum += window_sum / windows;
    }
    return channel_sum / a.channels;
}

// ----------------------------------------------------------------------------
// Prediction evaluation
// ----------------------------------------------------------------------------

struct SampleResult {
    std::size_t sample_id = 0;
    double best_rmse = 0.0;
    double best_ssim = 0.0;
    bool success = false;
    bool any_rendered = false;
    TokenSeq best_candidate;  // empty when nothing rendered
};

struct MetricsReport {
    double mean_rmse = 0.0;
    double mean_ssim = 0.0;
    double success_ratio_pct = 0.0;
    std::vector<SampleResult> rows;
};

/// Penalties for samples where no candidate yields a renderable image.
inline constexpr double unrenderable_rmse = 255.0;
inline constexpr double unrenderable_ssim = 0.0;

/// Scores per-sample candidate lists against the clean renders of the test
/// records. Unparseable or domain-erroring candidates are skipped; success
/// means some candidate's clean image is pixel-identical to the reference.
inline MetricsReport evaluate_predictions(const std::vector<DatasetRecord>& test,
                                          const std::vector<std::vector<TokenSeq>>& candidates,
                                          const RenderConfig& render_cfg = {}) {
    if (test.empty()) {
        throw EmptyTestSet("no test records to evaluate");
    }
    if (candidates.size() != test.size()) {
        throw ShapeError("one candidate list per test record required");
    }
    RenderConfig clean_cfg = render_cfg;
    clean_cfg.noisy = false;

    MetricsReport report;
    report.rows.reserve(test.size());
    double rmse_total = 0.0;
    double ssim_total = 0.0;
    int successes = 0;

    for (std::size_t i = 0; i < test.size(); ++i) {
        const auto reference = render(parse_preorder(test[i].tokens), clean_cfg);
        if (!reference) {
            throw ShapeError("reference expression failed to render cleanly");
        }

        SampleResult row;
        row.sample_id = i;
        row.best_rmse = unrenderable_rmse;
        row.best_ssim = unrenderable_ssim;
        bool have_ssim = false;

        for (const TokenSeq& cand : candidates[i]) {
            std::optional<FunctionImage> img;
            try {
                img = render(parse_preorder(cand), clean_cfg);
            } catch (const ParseError&) {
                continue;
            }
            if (!img) {
                continue;
            }
            const double rmse = image_rmse(*img, *reference);
            const double ssim = image_ssim(*img, *reference);
            if (!row.any_rendered || rmse < row.best_rmse) {
                row.best_rmse = rmse;
                row.best_candidate = cand;
            }
            if (!have_ssim || ssim > row.best_ssim) {
                row.best_ssim = ssim;
                have_ssim = true;
            }
            row.any_rendered = true;
            row.success = row.success || img->data == reference->data;
        }

        rmse_total += row.best_rmse;
        ssim_total += row.best_ssim;
        successes += row.success ? 1 : 0;
        report.rows.push_back(std::move(row));
    }

    const double n = static_cast<double>(test.size());
    report.mean_rmse = rmse_total / n;
    report.mean_ssim = ssim_total / n;
    report.success_ratio_pct = 100.0 * successes / n;
    return report;
}

// ----------------------------------------------------------------------------
// Nearest-neighbor baseline
// ----------------------------------------------------------------------------

/// Indices of the top-k training records by squared L2 distance between the
/// stored noisy images, with distances, non-decreasing. Ties keep the lower
/// record index first.
inline std::vector<std::pair<double, std::size_t>> nn_top_k(
    const FunctionImage& query, const std::vector<DatasetRecord>& train, int top_k) {
    std::vector<std::pair<double, std::size_t>> scored;
    scored.reserve(train.size());
    for (std::size_t j = 0; j < train.size(); ++j) {
        const FunctionImage& img = train[j].noisy;
        if (img.data.size() != query.data.size()) {
            throw ShapeError("nn_top_k: image size mismatch");
        }
        double dist = 0.0;
        for (std::size_t p = 0; p < query.data.size(); ++p) {
            const double d = static_cast<double>(query.data[p]) - static_cast<double>(img.data[p]);
            dist += d * d;
        }
        scored.emplace_back(dist, j);
    }
    const std::size_t k = std::min(scored.size(), static_cast<std::size_t>(top_k));
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(k),
                      scored.end());
    scored.resize(k);
    return scored;
}

/// Retrieval baseline: the k nearest training images provide the candidate
/// expressions, which are then scored exactly like beam candidates.
inline MetricsReport nn_baseline(const std::vector<DatasetRecord>& test,
                                 const std::vector<DatasetRecord>& train, int top_k,
                                 const RenderConfig& render_cfg = {}) {
    if (train.empty()) {
        throw EmptyTrainSet("nearest-neighbor baseline requires training records");
    }
    if (test.empty()) {
        throw EmptyTestSet("no test records to evaluate");
    }
    std::vector<std::vector<TokenSeq>> candidates;
    candidates.reserve(test.size());
    for (const DatasetRecord& rec : test) {
        std::vector<TokenSeq> cands;
        for (const auto& [dist, idx] : nn_top_k(rec.noisy, train, top_k)) {
            cands.push_back(train[idx].tokens);
        }
        candidates.push_back(std::move(cands));
    }
    return evaluate_predictions(test, candidates, render_cfg);
}

// ----------------------------------------------------------------------------
// Report output
// ----------------------------------------------------------------------------

inline void write_report_tsv(const MetricsReport& report, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot open for writing: " + path.string());
    }
    out << "sample_id\tbest_rmse\tbest_ssim\tsuccess\tbest_candidate_tokens\n";
    for (const SampleResult& row : report.rows) {
        out << row.sample_id << '\t' << row.best_rmse << '\t' << row.best_ssim << '\t'
            << (row.success ? 1 : 0) << '\t' << to_string(row.best_candidate) << '\n';
    }
    out << "# RMSE=" << report.mean_rmse << " SSIM=" << report.mean_ssim
        << " Rsucc=" << report.success_ratio_pct << "%\n";
    if (!out) {
        throw IoError("report write failed: " + path.string());
    }
}

}  // namespace setforge
