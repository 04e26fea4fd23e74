#pragma once

// Length-penalized beam search over an autoregressive next-token model. The
// search itself only needs a step function mapping equal-length prefixes to
// next-token log-probabilities, so toy models and the real transformer share
// one implementation.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "setforge/common.hpp"
#include "setforge/expr.hpp"
#include "setforge/net.hpp"
#include "setforge/transformer.hpp"
#include "setforge/vocab.hpp"

namespace setforge {

/// lp(S) = (5 + |S|)^alpha / (5 + 1)^alpha, with |S| counting expression
/// tokens only (no BOS/EOS). Negative alpha shrinks lp as sequences grow,
/// which penalizes long hypotheses once the log-probability is divided by it.
inline double length_penalty(int length, double alpha) {
    return std::pow((5.0 + static_cast<double>(length)) / 6.0, alpha);
}

/// score(S, I) = log P(S | I) / lp(S)
inline double hypothesis_score(double log_prob, int length, double alpha) {
    return log_prob / length_penalty(std::max(length, 1), alpha);
}

struct BeamCandidate {
    TokenSeq tokens;          // dictionary symbols, BOS/EOS stripped
    std::vector<int> ids;     // model vocabulary ids, BOS/EOS stripped
    double log_prob = 0.0;    // cumulative, including EOS when finished
    double score = 0.0;       // Eq. 2 ranking value
    bool finished = false;    // EOS was emitted within the length budget
    bool valid = false;       // tokens parse as exactly one expression tree
};

struct BeamResult {
    std::vector<BeamCandidate> candidates;  // sorted by score, descending
    /// True when no hypothesis reached EOS within the length budget; the
    /// candidates are then the surviving unfinished prefixes.
    bool decode_error = false;
};

/// Log-probability rows (one per prefix) over the model vocabulary.
using BeamStepFn =
    std::function<Mat<double>(const std::vector<std::vector<int>>& prefixes)>;

namespace detail {

struct BeamHypothesis {
    std::vector<int> ids;  // includes leading BOS
    double log_prob = 0.0;

    int expr_length() const { return static_cast<int>(ids.size()) - 1; }
};

inline bool lex_less(const std::vector<int>& a, const std::vector<int>& b) {
    return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

inline BeamCandidate finish_candidate(const BeamHypothesis& hyp, double alpha, bool finished) {
    BeamCandidate cand;
    cand.ids.assign(hyp.ids.begin() + 1, hyp.ids.end());
    cand.log_prob = hyp.log_prob;
    cand.finished = finished;
    cand.score = hypothesis_score(hyp.log_prob, static_cast<int>(cand.ids.size()), alpha);
    for (int id : cand.ids) {
        if (Vocabulary::is_symbol(id)) {
            cand.tokens.push_back(Vocabulary::to_symbol(id));
        }
    }
    try {
        if (!cand.tokens.empty() &&
            cand.tokens.size() == cand.ids.size()) {  // no stray specials inside
            parse_preorder(cand.tokens);
            cand.valid = true;
        }
    } catch (const ParseError&) {
        cand.valid = false;
    }
    return cand;
}

}  // namespace detail

/// Standard beam expansion: keep the `beam` best unfinished continuations by
/// cumulative log-probability each step, set EOS-terminated hypotheses aside
/// (pool capped at `beam`), and stop once the pool is full and no unfinished
/// prefix could still outscore its worst member. Final ranking uses the
/// length-penalized score; ties break lexicographically on token ids.
inline BeamResult beam_search(const BeamStepFn& step_fn, int beam, double alpha, int max_len) {
    if (beam < 1) {
        throw ConfigError("beam size must be at least 1");
    }
    if (max_len < 1) {
        throw ConfigError("max length must be at least 1");
    }

    std::vector<detail::BeamHypothesis> live{{{Vocabulary::bos_id}, 0.0}};
    std::vector<detail::BeamHypothesis> finished;
    std::vector<detail::BeamHypothesis> survivors;  // reported when nothing finishes

    const auto finished_score = [alpha](const detail::BeamHypothesis& hyp) {
        // EOS is never appended to ids, so expr_length() is the token count.
        return hypothesis_score(hyp.log_prob, hyp.expr_length(), alpha);
    };
    const auto worst_finished_score = [&] {
        double worst = std::numeric_limits<double>::infinity();
        for (const auto& hyp : finished) {
            worst = std::min(worst, finished_score(hyp));
        }
        return worst;
    };

    // Steps 0..max_len: at the last step hypotheses holding max_len tokens may
    // still close with EOS, but cannot grow further.
    for (int step = 0; step <= max_len && !live.empty(); ++step) {
        std::vector<std::vector<int>> prefixes;
        prefixes.reserve(live.size());
        for (const auto& hyp : live) {
            prefixes.push_back(hyp.ids);
        }
        const Mat<double> logp = step_fn(prefixes);
        if (logp.rows() != static_cast<Eigen::Index>(live.size())) {
            throw ShapeError("beam step function returned wrong row count");
        }
        survivors = live;

        std::vector<detail::BeamHypothesis> expansions;
        expansions.reserve(live.size() * static_cast<std::size_t>(logp.cols()));
        for (std::size_t h = 0; h < live.size(); ++h) {
            const bool at_cap = live[h].expr_length() >= max_len;
            for (Eigen::Index v = 0; v < logp.cols(); ++v) {
                // PAD and BOS are never valid continuations; an immediate EOS
                // would denote an empty expression, equally impossible.
                if (v == Vocabulary::pad_id || v == Vocabulary::bos_id) {
                    continue;
                }
                if (v == Vocabulary::eos_id && live[h].ids.size() == 1) {
                    continue;
                }
                if (v != Vocabulary::eos_id && at_cap) {
                    continue;
                }
                const double lp = logp(static_cast<Eigen::Index>(h), v);
                if (std::isinf(lp) && lp < 0) {
                    continue;  // zero-probability tokens are not continuations
                }
                detail::BeamHypothesis next = live[h];
                next.log_prob += lp;
                if (v == Vocabulary::eos_id) {
                    finished.push_back(std::move(next));
                } else {
                    next.ids.push_back(static_cast<int>(v));
                    expansions.push_back(std::move(next));
                }
            }
        }

        // Keep the best `beam` finished hypotheses by final score.
        std::sort(finished.begin(), finished.end(), [&](const auto& a, const auto& b) {
            const double sa = finished_score(a);
            const double sb = finished_score(b);
            if (sa != sb) {
                return sa > sb;
            }
            return detail::lex_less(a.ids, b.ids);
        });
        if (finished.size() > static_cast<std::size_t>(beam)) {
            finished.resize(static_cast<std::size_t>(beam));
        }

        std::sort(expansions.begin(), expansions.end(), [](const auto& a, const auto& b) {
            if (a.log_prob != b.log_prob) {
                return a.log_prob > b.log_prob;
            }
            return detail::lex_less(a.ids, b.ids);
        });
        if (expansions.size() > static_cast<std::size_t>(beam)) {
            expansions.resize(static_cast<std::size_t>(beam));
        }
        live = std::move(expansions);

        // Early stop, sound for alpha <= 0: log-probs only fall and lp only
        // shrinks with length, so logp / lp(current length) bounds any future
        // score of a live hypothesis from above.
        if (alpha <= 0.0 && finished.size() == static_cast<std::size_t>(beam) && !live.empty()) {
            const double bound =
                hypothesis_score(live.front().log_prob,
                                 std::max(live.front().expr_length(), 1), alpha);
            if (bound < worst_finished_score()) {
                break;
            }
        }
    }

    BeamResult result;
    if (finished.empty()) {
        result.decode_error = true;
        for (const auto& hyp : survivors) {
            result.candidates.push_back(detail::finish_candidate(hyp, alpha, false));
        }
    } else {
        for (const auto& hyp : finished) {
            // EOS was consumed without entering ids, so expr length is right.
            result.candidates.push_back(detail::finish_candidate(hyp, alpha, true));
        }
    }
    std::sort(result.candidates.begin(), result.candidates.end(),
              [](const BeamCandidate& a, const BeamCandidate& b) {
                  if (a.score != b.score) {
                      return a.score > b.score;
                  }
                  return detail::lex_less(a.ids, b.ids);
              });
    return result;
}

/// Beam search driven by the transformer decoder for one image.
template <class S>
BeamResult beam_search(SetTransformer<S>& model, const FunctionImage& img, int beam, double alpha,
                       int max_len = -1) {
    const Mat<S> memory = encode_image(model, img);
    if (max_len < 0) {
        max_len = model.config().max_len;
    }
    const BeamStepFn step = [&](const std::vector<std::vector<int>>& prefixes) {
        return next_token_logprobs(model, memory, prefixes);
    };
    return beam_search(step, beam, alpha, max_len);
}

}  // namespace setforge
