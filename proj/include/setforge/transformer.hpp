#pragma once

// The image-to-sequence model: patch embedding, pre-norm transformer encoder
// over image patches, autoregressive decoder with cross-attention, and the
// training loop with teacher forcing. Checkpoints serialize the configuration
// plus every named parameter tensor.

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <string>
#include <unordered_map>
#include <vector>

#include "setforge/common.hpp"
#include "setforge/dataset.hpp"
#include "setforge/imaging.hpp"
#include "setforge/net.hpp"
#include "setforge/vocab.hpp"

namespace setforge {

// ----------------------------------------------------------------------------
// Configuration
// ----------------------------------------------------------------------------

struct ModelConfig {
    int patch = 8;
    int dim = 128;
    int heads = 4;
    int enc_blocks = 4;
    int dec_blocks = 4;
    int ffn_dim = 512;
    int vocab = Vocabulary::size;
    int max_len = 20;  // longest generated expression, in dictionary tokens
    double dropout = 0.1;
    int image_h = 32;
    int image_w = 32;
    int image_c = 4;

    int patches() const { return (image_h / patch) * (image_w / patch); }
    int patch_dim() const { return patch * patch * image_c; }
    int max_positions() const { return max_len + 1; }  // BOS plus tokens

    void validate() const {
        if (patch <= 0 || image_h % patch != 0 || image_w % patch != 0) {
            throw ShapeError("image size must be divisible by the patch size");
        }
        if (dim <= 0 || heads <= 0 || dim % heads != 0) {
            throw ShapeError("embed dim must divide evenly into heads");
        }
        if (enc_blocks < 1 || dec_blocks < 1 || ffn_dim < 1 || max_len < 1) {
            throw ConfigError("block counts, ffn dim and max length must be positive");
        }
        if (vocab != Vocabulary::size) {
            throw ConfigError("vocab size must match the fixed vocabulary");
        }
        if (dropout < 0.0 || dropout >= 1.0) {
            throw ConfigError("dropout must lie in [0, 1)");
        }
    }
};

// ----------------------------------------------------------------------------
// Patchify
// ----------------------------------------------------------------------------

/// Crops the image into non-overlapping P x P patches (row-major over the
/// patch grid), flattens each one channel-major and normalizes to [0, 1].
template <class S>
Mat<S> patchify(const FunctionImage& img, int patch) {
    if (patch <= 0 || img.height % patch != 0 || img.width % patch != 0) {
        throw ShapeError("patchify: image size must be divisible by the patch size");
    }
    const int rows_of_patches = img.height / patch;
    const int cols_of_patches = img.width / patch;
    const int n = rows_of_patches * cols_of_patches;
    const int patch_dim = patch * patch * img.channels;
    Mat<S> out(n, patch_dim);
    for (int pi = 0; pi < rows_of_patches; ++pi) {
        for (int pj = 0; pj < cols_of_patches; ++pj) {
            const int row = pi * cols_of_patches + pj;
            for (int c = 0; c < img.channels; ++c) {
                for (int py = 0; py < patch; ++py) {
                    for (int px = 0; px < patch; ++px) {
                        const int col = (c * patch + py) * patch + px;
                        out(row, col) = static_cast<S>(
                            img.at(c, pi * patch + py, pj * patch + px) / 255.0);
                    }
                }
            }
        }
    }
    return out;
}

// ----------------------------------------------------------------------------
// Blocks
// ----------------------------------------------------------------------------

namespace detail {

template <class S>
struct EncoderBlock {
    LayerNorm<S> ln1;
    MultiHeadAttention<S> attn;
    Dropout<S> drop1;
    LayerNorm<S> ln2;
    FeedForward<S> ffn;
    Dropout<S> drop2;

    void setup(const std::string& name, const ModelConfig& cfg) {
        ln1.setup(name + ".ln1", cfg.dim);
        attn.setup(name + ".attn", cfg.dim, cfg.heads);
        ln2.setup(name + ".ln2", cfg.dim);
        ffn.setup(name + ".ffn", cfg.dim, cfg.ffn_dim);
        drop1.rate = drop2.rate = cfg.dropout;
    }

    void collect(std::vector<Tensor<S>*>& params) {
        ln1.collect(params);
        attn.collect(params);
        ln2.collect(params);
        ffn.collect(params);
    }

    Mat<S> forward(const Mat<S>& x, int batch, int t, bool training, Rng* rng, bool cache) {
        const Mat<S> normed = ln1.forward(x, cache);
        Mat<S> x1 = x + drop1.forward(attn.forward(normed, normed, batch, t, t, false, cache),
                                      training, rng, cache);
        x1 += drop2.forward(ffn.forward(ln2.forward(x1, cache), cache), training, rng, cache);
        return x1;
    }

    Mat<S> backward(const Mat<S>& dout) {
        Mat<S> dx1 = dout + ln2.backward(ffn.backward(drop2.backward(dout)));
        Mat<S> dnormed = Mat<S>::Zero(dx1.rows(), dx1.cols());
        const Mat<S> dq = attn.backward(drop1.backward(dx1), dnormed);
        dnormed += dq;
        return dx1 + ln1.backward(dnormed);
    }
};

template <class S>
struct DecoderBlock {
    LayerNorm<S> ln1;
    MultiHeadAttention<S> self_attn;
    Dropout<S> drop1;
    LayerNorm<S> ln2;
    MultiHeadAttention<S> cross_attn;
    Dropout<S> drop2;
    LayerNorm<S> ln3;
    FeedForward<S> ffn;
    Dropout<S> drop3;

    void setup(const std::string& name, const ModelConfig& cfg) {
        ln1.setup(name + ".ln1", cfg.dim);
        self_attn.setup(name + ".self", cfg.dim, cfg.heads);
        ln2.setup(name + ".ln2", cfg.dim);
        cross_attn.setup(name + ".cross", cfg.dim, cfg.heads);
        ln3.setup(name + ".ln3", cfg.dim);
        ffn.setup(name + ".ffn", cfg.dim, cfg.ffn_dim);
        drop1.rate = drop2.rate = drop3.rate = cfg.dropout;
    }

    void collect(std::vector<Tensor<S>*>& params) {
        ln1.collect(params);
        self_attn.collect(params);
        ln2.collect(params);
        cross_attn.collect(params);
        ln3.collect(params);
        ffn.collect(params);
    }

    Mat<S> forward(const Mat<S>& x, const Mat<S>& memory, int batch, int t, int mem_t,
                   bool training, Rng* rng, bool cache) {
        const Mat<S> a = ln1.forward(x, cache);
        Mat<S> x1 = x + drop1.forward(self_attn.forward(a, a, batch, t, t, true, cache), training,
                                      rng, cache);
        x1 += drop2.forward(
            cross_attn.forward(ln2.forward(x1, cache), memory, batch, t, mem_t, false, cache),
            training, rng, cache);
        x1 += drop3.forward(ffn.forward(ln3.forward(x1, cache), cache), training, rng, cache);
        return x1;
    }

    Mat<S> backward(const Mat<S>& dout, Mat<S>& dmemory) {
        Mat<S> dx2 = dout + ln3.backward(ffn.backward(drop3.backward(dout)));
        const Mat<S> dc = cross_attn.backward(drop2.backward(dx2), dmemory);
        Mat<S> dx1 = dx2 + ln2.backward(dc);
        Mat<S> da = Mat<S>::Zero(dx1.rows(), dx1.cols());
        const Mat<S> dq = self_attn.backward(drop1.backward(dx1), da);
        da += dq;
        return dx1 + ln1.backward(da);
    }
};

}  // namespace detail

// ----------------------------------------------------------------------------
// The model
// ----------------------------------------------------------------------------

template <class S>
class SetTransformer {
public:
    explicit SetTransformer(const ModelConfig& cfg, std::uint64_t init_seed = 1)
        : cfg_(cfg) {
        cfg_.validate();
        patch_proj_.setup("patch_proj", cfg_.patch_dim(), cfg_.dim);
        enc_pos_.setup("enc_pos", cfg_.patches(), cfg_.dim);
        tok_emb_.setup("tok_emb", cfg_.vocab, cfg_.dim);
        dec_pos_.setup("dec_pos", cfg_.max_positions(), cfg_.dim);
        enc_ln_.setup("enc_ln", cfg_.dim);
        dec_ln_.setup("dec_ln", cfg_.dim);
        head_.setup("head", cfg_.dim, cfg_.vocab);
        enc_blocks_.resize(static_cast<std::size_t>(cfg_.enc_blocks));
        for (int i = 0; i < cfg_.enc_blocks; ++i) {
            enc_blocks_[static_cast<std::size_t>(i)].setup("enc" + std::to_string(i), cfg_);
        }
        dec_blocks_.resize(static_cast<std::size_t>(cfg_.dec_blocks));
        for (int i = 0; i < cfg_.dec_blocks; ++i) {
            dec_blocks_[static_cast<std::size_t>(i)].setup("dec" + std::to_string(i), cfg_);
        }
        emb_drop_enc_.rate = emb_drop_dec_.rate = cfg_.dropout;

        patch_proj_.collect(params_);
        params_.push_back(&enc_pos_);
        for (auto& b : enc_blocks_) {
            b.collect(params_);
        }
        enc_ln_.collect(params_);
        params_.push_back(&tok_emb_);
        params_.push_back(&dec_pos_);
        for (auto& b : dec_blocks_) {
            b.collect(params_);
        }
        dec_ln_.collect(params_);
        head_.collect(params_);

        Rng rng = make_rng(init_seed);
        constexpr double init_std = 0.02;
        for (Tensor<S>* p : params_) {
            // Layer norms keep their ones/zeros; biases start at zero.
            const bool is_norm = p->name.ends_with(".gamma") || p->name.ends_with(".beta");
            const bool is_bias = p->name.ends_with(".b");
            if (!is_norm && !is_bias) {
                p->init_gaussian(rng, init_std);
            }
        }
    }

    const ModelConfig& config() const { return cfg_; }
    std::vector<Tensor<S>*>& parameters() { return params_; }
    long train_steps = 0;

    void zero_grad() {
        for (Tensor<S>* p : params_) {
            p->grad.setZero();
        }
    }

    /// Encoder: patch projection + learned positions, pre-norm blocks, final
    /// layer norm. `patches` stacks the per-sample patch matrices row-wise.
    Mat<S> encode(const Mat<S>& patches, int batch, bool training = false, Rng* rng = nullptr,
                  bool cache = false) {
        const int n = cfg_.patches();
        if (patches.cols() != cfg_.patch_dim() || patches.rows() != batch * n) {
            throw ShapeError("encode: patch matrix does not match the model config");
        }
        Mat<S> h = patch_proj_.forward(patches, cache);
        for (int b = 0; b < batch; ++b) {
            h.middleRows(b * n, n) += enc_pos_.value;
        }
        h = emb_drop_enc_.forward(std::move(h), training, rng, cache);
        for (auto& block : enc_blocks_) {
            h = block.forward(h, batch, n, training, rng, cache);
        }
        return enc_ln_.forward(h, cache);
    }

    void encode_backward(const Mat<S>& dmemory, int batch) {
        const int n = cfg_.patches();
        Mat<S> d = enc_ln_.backward(dmemory);
        for (auto it = enc_blocks_.rbegin(); it != enc_blocks_.rend(); ++it) {
            d = it->backward(d);
        }
        d = emb_drop_enc_.backward(d);
        for (int b = 0; b < batch; ++b) {
            enc_pos_.grad += d.middleRows(b * n, n);
        }
        patch_proj_.backward(d);
    }

    /// Decoder over a batch of equal-length token id rows. Causal masking
    /// keeps position t blind to positions beyond t.
    Mat<S> decode(const std::vector<std::vector<int>>& inputs, const Mat<S>& memory,
                  bool training = false, Rng* rng = nullptr, bool cache = false) {
        const int batch = static_cast<int>(inputs.size());
        const int t = static_cast<int>(inputs.front().size());
        if (t > cfg_.max_positions()) {
            throw LengthExceeded("decoder input longer than the positional table");
        }
        if (memory.rows() != batch * cfg_.patches() || memory.cols() != cfg_.dim) {
            throw ShapeError("decode: memory shape mismatch");
        }
        Mat<S> h(batch * t, cfg_.dim);
        for (int b = 0; b < batch; ++b) {
            if (static_cast<int>(inputs[static_cast<std::size_t>(b)].size()) != t) {
                throw ShapeError("decode: ragged batch");
            }
            for (int i = 0; i < t; ++i) {
                const int id = inputs[static_cast<std::size_t>(b)][static_cast<std::size_t>(i)];
                h.row(b * t + i) = tok_emb_.value.row(id) + dec_pos_.value.row(i);
            }
        }
        if (cache) {
            dec_inputs_cache_ = inputs;
        }
        h = emb_drop_dec_.forward(std::move(h), training, rng, cache);
        for (auto& block : dec_blocks_) {
            h = block.forward(h, memory, batch, t, cfg_.patches(), training, rng, cache);
        }
        h = dec_ln_.forward(h, cache);
        return head_.forward(h, cache);
    }

    /// Backward through the decoder; returns the gradient w.r.t. the memory.
    Mat<S> decode_backward(const Mat<S>& dlogits, int batch) {
        const int t = static_cast<int>(dec_inputs_cache_.front().size());
        Mat<S> d = dec_ln_.backward(head_.backward(dlogits));
        Mat<S> dmemory = Mat<S>::Zero(batch * cfg_.patches(), cfg_.dim);
        for (auto it = dec_blocks_.rbegin(); it != dec_blocks_.rend(); ++it) {
            d = it->backward(d, dmemory);
        }
        d = emb_drop_dec_.backward(d);
        for (int b = 0; b < batch; ++b) {
            for (int i = 0; i < t; ++i) {
                const int id =
                    dec_inputs_cache_[static_cast<std::size_t>(b)][static_cast<std::size_t>(i)];
                tok_emb_.grad.row(id) += d.row(b * t + i);
                dec_pos_.grad.row(i) += d.row(b * t + i);
            }
        }
        return dmemory;
    }

private:
    ModelConfig cfg_;
    Linear<S> patch_proj_;
    Tensor<S> enc_pos_;
    std::vector<detail::EncoderBlock<S>> enc_blocks_;
    LayerNorm<S> enc_ln_;
    Tensor<S> tok_emb_;
    Tensor<S> dec_pos_;
    std::vector<detail::DecoderBlock<S>> dec_blocks_;
    LayerNorm<S> dec_ln_;
    Linear<S> head_;
    Dropout<S> emb_drop_enc_;
    Dropout<S> emb_drop_dec_;
    std::vector<Tensor<S>*> params_;
    std::vector<std::vector<int>> dec_inputs_cache_;
};

// ----------------------------------------------------------------------------
// Loss
// ----------------------------------------------------------------------------

template <class S>
struct LossResult {
    double loss = 0.0;
    int token_count = 0;
    Mat<S> dlogits;
};

/// Token-level cross entropy with teacher forcing; PAD positions contribute
/// neither loss nor gradient. Labels are row-aligned with the logits.
template <class S>
LossResult<S> softmax_cross_entropy(const Mat<S>& logits, const std::vector<int>& labels) {
    if (static_cast<Eigen::Index>(labels.size()) != logits.rows()) {
        throw ShapeError("loss: labels do not align with logits");
    }
    LossResult<S> out;
    out.dlogits = Mat<S>::Zero(logits.rows(), logits.cols());
    int count = 0;
    for (int label : labels) {
        count += label != Vocabulary::pad_id ? 1 : 0;
    }
    if (count == 0) {
        return out;
    }
    out.token_count = count;
    const S inv_count = static_cast<S>(1.0 / count);
    double total = 0.0;
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        const int label = labels[static_cast<std::size_t>(r)];
        if (label == Vocabulary::pad_id) {
            continue;
        }
        Vec<S> probs = logits.row(r).transpose();
        const S peak = probs.maxCoeff();
        probs = (probs.array() - peak).exp();
        probs /= probs.sum();
        total -= std::log(std::max(static_cast<double>(probs(label)), 1e-300));
        out.dlogits.row(r) = probs.transpose() * inv_count;
        out.dlogits(r, label) -= inv_count;
    }
    out.loss = total / count;
    return out;
}

// ----------------------------------------------------------------------------
// Training
// ----------------------------------------------------------------------------

struct TrainConfig {
    long steps = 20000;
    int batch = 64;
    double lr = 3e-4;
    int warmup = 500;
    double loader_noise = 0.01;  // additive pixel noise, normalized units
    std::uint64_t seed = 1;
    long log_every = 200;
    std::ostream* log = nullptr;
};

/// Teacher-forced training on the noisy record images. Returns the per-step
/// loss history. Throws NonFiniteLoss as soon as the loss degenerates.
template <class S>
std::vector<double> train_model(SetTransformer<S>& model,
                                const std::vector<DatasetRecord>& records,
                                const TrainConfig& cfg) {
    if (records.empty()) {
        throw ConfigError("training requires a non-empty record set");
    }
    if (cfg.batch < 1 || cfg.steps < 0) {
        throw ConfigError("bad batch size or step count");
    }
    const ModelConfig& mc = model.config();
    for (const DatasetRecord& rec : records) {
        if (rec.noisy.height != mc.image_h || rec.noisy.width != mc.image_w ||
            rec.noisy.channels != mc.image_c) {
            throw ShapeError("record image does not match the model config");
        }
        if (static_cast<int>(rec.tokens.size()) > mc.max_len) {
            throw LengthExceeded("record sequence exceeds the decode window");
        }
    }

    // Patch matrices are reused every epoch; noise is re-drawn per batch.
    std::vector<Mat<S>> cached_patches;
    cached_patches.reserve(records.size());
    for (const DatasetRecord& rec : records) {
        cached_patches.push_back(patchify<S>(rec.noisy, mc.patch));
    }

    AdamOptimizer<S> adam;
    adam.lr = cfg.lr;
    adam.warmup_steps = cfg.warmup;

    Rng rng = make_rng(cfg.seed);
    std::vector<std::size_t> order(records.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::size_t cursor = order.size();  // forces an initial shuffle

    std::normal_distribution<double> pixel_noise(0.0, 1.0);
    std::vector<double> history;
    history.reserve(static_cast<std::size_t>(cfg.steps));

    const int n = mc.patches();
    const int batch = cfg.batch;

    for (long step = 0; step < cfg.steps; ++step) {
        std::vector<std::size_t> chosen(static_cast<std::size_t>(batch));
        if (static_cast<std::size_t>(batch) > records.size()) {
            std::uniform_int_distribution<std::size_t> pick(0, records.size() - 1);
            for (auto& idx : chosen) {
                idx = pick(rng);
            }
        } else {
            if (order.size() - cursor < static_cast<std::size_t>(batch)) {
                std::shuffle(order.begin(), order.end(), rng);
                cursor = 0;
            }
            for (auto& idx : chosen) {
                idx = order[cursor++];
            }
        }

        int t = 2;
        for (std::size_t idx : chosen) {
            t = std::max(t, static_cast<int>(records[idx].tokens.size()) + 1);
        }

        Mat<S> patches(batch * n, mc.patch_dim());
        std::vector<std::vector<int>> inputs(static_cast<std::size_t>(batch));
        std::vector<int> labels;
        labels.reserve(static_cast<std::size_t>(batch) * t);
        for (int b = 0; b < batch; ++b) {
            const std::size_t idx = chosen[static_cast<std::size_t>(b)];
            patches.middleRows(b * n, n) = cached_patches[idx];
            const EncodedTarget enc = encode_target(records[idx].tokens, t);
            inputs[static_cast<std::size_t>(b)] = enc.input;
            labels.insert(labels.end(), enc.labels.begin(), enc.labels.end());
        }
        if (cfg.loader_noise > 0.0) {
            for (Eigen::Index c = 0; c < patches.cols(); ++c) {
                for (Eigen::Index r = 0; r < patches.rows(); ++r) {
                    patches(r, c) += static_cast<S>(cfg.loader_noise * pixel_noise(rng));
                }
            }
        }

        model.zero_grad();
        const Mat<S> memory = model.encode(patches, batch, true, &rng, true);
        const Mat<S> logits = model.decode(inputs, memory, true, &rng, true);
        LossResult<S> loss = softmax_cross_entropy(logits, labels);
        if (!std::isfinite(loss.loss)) {
            throw NonFiniteLoss("loss became non-finite at step " + std::to_string(step) +
                                " (value " + std::to_string(loss.loss) + ")");
        }
        const Mat<S> dmemory = model.decode_backward(loss.dlogits, batch);
        model.encode_backward(dmemory, batch);
        adam.step(model.parameters());
        ++model.train_steps;
        history.push_back(loss.loss);

        if (cfg.log != nullptr && (step % cfg.log_every == 0 || step + 1 == cfg.steps)) {
            (*cfg.log) << "step " << step << " loss " << loss.loss << "\n";
        }
    }
    return history;
}

// ----------------------------------------------------------------------------
// Inference helpers
// ----------------------------------------------------------------------------

/// Encoder memory for a single image (no dropout, no caching).
template <class S>
Mat<S> encode_image(SetTransformer<S>& model, const FunctionImage& img) {
    const ModelConfig& mc = model.config();
    if (img.height != mc.image_h || img.width != mc.image_w || img.channels != mc.image_c) {
        throw ShapeError("image does not match the model config");
    }
    return model.encode(patchify<S>(img, mc.patch), 1);
}

/// Log-probabilities of the next token for each equal-length prefix, sharing
/// one encoder memory. Rows are prefixes, columns vocabulary ids.
template <class S>
Mat<double> next_token_logprobs(SetTransformer<S>& model, const Mat<S>& memory,
                                const std::vector<std::vector<int>>& prefixes) {
    const int batch = static_cast<int>(prefixes.size());
    const int t = static_cast<int>(prefixes.front().size());
    Mat<S> batched_memory(batch * memory.rows(), memory.cols());
    for (int b = 0; b < batch; ++b) {
        batched_memory.middleRows(b * memory.rows(), memory.rows()) = memory;
    }
    const Mat<S> logits = model.decode(prefixes, batched_memory);
    Mat<double> out(batch, model.config().vocab);
    for (int b = 0; b < batch; ++b) {
        Vec<double> row = logits.row(b * t + t - 1).transpose().template cast<double>();
        const double peak = row.maxCoeff();
        row = (row.array() - peak).exp();
        const double total = row.sum();
        out.row(b) = (row.array() / total).log().matrix().transpose();
    }
    return out;
}

/// Next-token distribution for one prefix (a valid probability vector).
template <class S>
std::vector<double> decode_step(SetTransformer<S>& model, const Mat<S>& memory,
                                const std::vector<int>& prefix) {
    if (prefix.empty() || prefix.front() != Vocabulary::bos_id) {
        throw ShapeError("decode_step: prefix must begin with BOS");
    }
    const Mat<double> logp = next_token_logprobs(model, memory, {prefix});
    std::vector<double> probs(static_cast<std::size_t>(logp.cols()));
    for (Eigen::Index i = 0; i < logp.cols(); ++i) {
        probs[static_cast<std::size_t>(i)] = std::exp(logp(0, i));
    }
    return probs;
}

// ----------------------------------------------------------------------------
// Checkpoint format: "SETC" magic, u8 version, config block, vocabulary, then
// named tensors as (name, rows, cols, row-major f32 little-endian payload).
// ----------------------------------------------------------------------------

namespace detail {

inline void put_u32(std::ostream& out, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) {
        b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    }
    out.write(b, 4);
}

inline void put_u64(std::ostream& out, std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) {
        b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    }
    out.write(b, 8);
}

inline void put_f32(std::ostream& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

inline std::uint32_t take_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) {
        throw FormatError("checkpoint truncated");
    }
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline std::uint64_t take_u64(std::istream& in) {
    const std::uint64_t lo = take_u32(in);
    const std::uint64_t hi = take_u32(in);
    return lo | (hi << 32);
}

inline float take_f32(std::istream& in) {
    const std::uint32_t bits = take_u32(in);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

inline void put_string(std::ostream& out, std::string_view s) {
    put_u32(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string take_string(std::istream& in) {
    const std::uint32_t len = take_u32(in);
    if (len > 4096) {
        throw FormatError("checkpoint string too long");
    }
    std::string s(len, '\0');
    in.read(s.data(), len);
    if (!in) {
        throw FormatError("checkpoint truncated");
    }
    return s;
}

}  // namespace detail

inline constexpr std::array<char, 4> checkpoint_magic{'S', 'E', 'T', 'C'};
inline constexpr std::uint8_t checkpoint_version = 1;

template <class S>
void save_checkpoint(SetTransformer<S>& model, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open for writing: " + path.string());
    }
    out.write(checkpoint_magic.data(), checkpoint_magic.size());
    out.put(static_cast<char>(checkpoint_version));

    const ModelConfig& c = model.config();
    for (int v : {c.patch, c.dim, c.heads, c.enc_blocks, c.dec_blocks, c.ffn_dim, c.vocab,
                  c.max_len, c.image_h, c.image_w, c.image_c}) {
        detail::put_u32(out, static_cast<std::uint32_t>(v));
    }
    detail::put_f32(out, static_cast<float>(c.dropout));
    detail::put_u64(out, static_cast<std::uint64_t>(model.train_steps));

    const auto names = Vocabulary::all_names();
    detail::put_u32(out, static_cast<std::uint32_t>(names.size()));
    for (const std::string& name : names) {
        detail::put_string(out, name);
    }

    auto& params = model.parameters();
    detail::put_u32(out, static_cast<std::uint32_t>(params.size()));
    for (const Tensor<S>* p : params) {
        detail::put_string(out, p->name);
        detail::put_u32(out, static_cast<std::uint32_t>(p->value.rows()));
        detail::put_u32(out, static_cast<std::uint32_t>(p->value.cols()));
        for (Eigen::Index r = 0; r < p->value.rows(); ++r) {
            for (Eigen::Index col = 0; col < p->value.cols(); ++col) {
                detail::put_f32(out, static_cast<float>(p->value(r, col)));
            }
        }
    }
    if (!out) {
        throw IoError("checkpoint write failed: " + path.string());
    }
}

template <class S>
SetTransformer<S> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open for reading: " + path.string());
    }
    std::array<char, 4> magic{};
    in.read(magic.data(), magic.size());
    if (!in || magic != checkpoint_magic) {
        throw FormatError("bad checkpoint magic");
    }
    if (in.get() != checkpoint_version) {
        throw FormatError("unsupported checkpoint version");
    }

    ModelConfig c;
    c.patch = static_cast<int>(detail::take_u32(in));
    c.dim = static_cast<int>(detail::take_u32(in));
    c.heads = static_cast<int>(detail::take_u32(in));
    c.enc_blocks = static_cast<int>(detail::take_u32(in));
    c.dec_blocks = static_cast<int>(detail::take_u32(in));
    c.ffn_dim = static_cast<int>(detail::take_u32(in));
    c.vocab = static_cast<int>(detail::take_u32(in));
    c.max_len = static_cast<int>(detail::take_u32(in));
    c.image_h = static_cast<int>(detail::take_u32(in));
    c.image_w = static_cast<int>(detail::take_u32(in));
    c.image_c = static_cast<int>(detail::take_u32(in));
    c.dropout = detail::take_f32(in);
    const std::uint64_t steps = detail::take_u64(in);

    const std::uint32_t vocab_count = detail::take_u32(in);
    const auto names = Vocabulary::all_names();
    if (vocab_count != names.size()) {
        throw FormatError("checkpoint vocabulary size mismatch");
    }
    for (const std::string& expected : names) {
        if (detail::take_string(in) != expected) {
            throw FormatError("checkpoint vocabulary id mapping mismatch");
        }
    }

    SetTransformer<S> model(c);
    model.train_steps = static_cast<long>(steps);
    std::unordered_map<std::string, Tensor<S>*> by_name;
    for (Tensor<S>* p : model.parameters()) {
        by_name.emplace(p->name, p);
    }

    const std::uint32_t tensor_count = detail::take_u32(in);
    if (tensor_count != by_name.size()) {
        throw FormatError("checkpoint tensor count mismatch");
    }
    for (std::uint32_t i = 0; i < tensor_count; ++i) {
        const std::string name = detail::take_string(in);
        const auto it = by_name.find(name);
        if (it == by_name.end()) {
            throw FormatError("unknown tensor in checkpoint: " + name);
        }
        Tensor<S>* p = it->second;
        const auto rows = static_cast<Eigen::Index>(detail::take_u32(in));
        const auto cols = static_cast<Eigen::Index>(detail::take_u32(in));
        if (rows != p->value.rows() || cols != p->value.cols()) {
            throw FormatError("tensor shape mismatch for " + name);
        }
        for (Eigen::Index r = 0; r < rows; ++r) {
            for (Eigen::Index col = 0; col < cols; ++col) {
                const float v = detail::take_f32(in);
                if (!std::isfinite(v)) {
                    throw FormatError("non-finite parameter in checkpoint: " + name);
                }
                p->value(r, col) = static_cast<S>(v);
            }
        }
    }
    return model;
}

}  // namespace setforge
