#pragma once

// Dense layers with hand-written backward passes, templated on the scalar so
// gradient checks run in double while training runs in float. Eigen supplies
// the matrix arithmetic; everything model-specific lives in transformer.hpp.

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <vector>

#include "setforge/common.hpp"

namespace setforge {

template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <class S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

// ----------------------------------------------------------------------------
// Parameters and the optimizer
// ----------------------------------------------------------------------------

template <class S>
struct Tensor {
    std::string name;
    Mat<S> value;
    Mat<S> grad;
    Mat<S> adam_m;
    Mat<S> adam_v;

    void setup(std::string tensor_name, Eigen::Index rows, Eigen::Index cols) {
        name = std::move(tensor_name);
        value = Mat<S>::Zero(rows, cols);
        grad = Mat<S>::Zero(rows, cols);
        adam_m = Mat<S>::Zero(rows, cols);
        adam_v = Mat<S>::Zero(rows, cols);
    }

    void init_gaussian(Rng& rng, double stddev) {
        std::normal_distribution<double> dist(0.0, stddev);
        for (Eigen::Index c = 0; c < value.cols(); ++c) {
            for (Eigen::Index r = 0; r < value.rows(); ++r) {
                value(r, c) = static_cast<S>(dist(rng));
            }
        }
    }
};

template <class S>
struct AdamOptimizer {
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int warmup_steps = 500;
    long step_count = 0;

    /// One update over all tensors; the learning rate warms up linearly.
    void step(std::vector<Tensor<S>*>& params) {
        ++step_count;
        const double warm =
            warmup_steps > 0 ? std::min(1.0, static_cast<double>(step_count) / warmup_steps) : 1.0;
        const double lr_t = lr * warm;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
        for (Tensor<S>* p : params) {
            p->adam_m = static_cast<S>(beta1) * p->adam_m + static_cast<S>(1.0 - beta1) * p->grad;
            p->adam_v = static_cast<S>(beta2) * p->adam_v +
                        static_cast<S>(1.0 - beta2) * p->grad.cwiseProduct(p->grad);
            const Mat<S> mhat = p->adam_m / static_cast<S>(bc1);
            const Mat<S> vhat = p->adam_v / static_cast<S>(bc2);
            p->value -= (static_cast<S>(lr_t) * mhat.array() /
                         (vhat.array().sqrt() + static_cast<S>(eps)))
                            .matrix();
        }
    }
};

// ----------------------------------------------------------------------------
// Activation and softmax helpers
// ----------------------------------------------------------------------------

template <class S>
inline S gelu(S x) {
    return static_cast<S>(0.5) * x *
           (static_cast<S>(1) + static_cast<S>(std::erf(static_cast<double>(x) / std::sqrt(2.0))));
}

template <class S>
inline S gelu_grad(S x) {
    const double xd = static_cast<double>(x);
    const double cdf = 0.5 * (1.0 + std::erf(xd / std::sqrt(2.0)));
    const double pdf = std::exp(-0.5 * xd * xd) / std::sqrt(2.0 * M_PI);
    return static_cast<S>(cdf + xd * pdf);
}

/// Row-wise softmax in place, with the usual max subtraction.
template <class S>
inline void softmax_rows(Mat<S>& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        auto row = m.row(r);
        const S peak = row.maxCoeff();
        row = (row.array() - peak).exp();
        row /= row.sum();
    }
}

/// softmax(Q K^T / sqrt(d_k)) V with an optional causal mask. Rows of the
/// weight matrix sum to one; masked positions get zero weight. The weight
/// matrix is exposed through `weights_out` for reuse in backward passes and
/// for direct inspection in tests.
template <class S>
inline Mat<S> scaled_dot_attention(const Mat<S>& q, const Mat<S>& k, const Mat<S>& v, bool causal,
                                   Mat<S>* weights_out = nullptr) {
    if (q.cols() != k.cols()) {
        throw ShapeError("attention: query/key dimension mismatch");
    }
    if (k.rows() != v.rows()) {
        throw ShapeError("attention: key/value length mismatch");
    }
    if (causal && q.rows() != k.rows()) {
        throw ShapeError("attention: causal mask needs square score matrix");
    }
    const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(q.cols())));
    Mat<S> scores = q * k.transpose() * scale;
    if (causal) {
        for (Eigen::Index i = 0; i < scores.rows(); ++i) {
            for (Eigen::Index j = i + 1; j < scores.cols(); ++j) {
                scores(i, j) = static_cast<S>(-1e30);
            }
        }
    }
    softmax_rows(scores);
    Mat<S> out = scores * v;
    if (weights_out != nullptr) {
        *weights_out = std::move(scores);
    }
    return out;
}

// ----------------------------------------------------------------------------
// Layers. forward(x, cache) leaves the layer untouched when cache is false so
// inference can run concurrently; backward consumes the cached activations
// and accumulates parameter gradients.
// ----------------------------------------------------------------------------

template <class S>
struct Linear {
    Tensor<S> w;
    Tensor<S> b;
    bool has_bias = true;
    Mat<S> x_cache;

    void setup(const std::string& name, int in, int out, bool bias = true) {
        has_bias = bias;
        w.setup(name + ".w", in, out);
        if (has_bias) {
            b.setup(name + ".b", 1, out);
        }
    }

    void collect(std::vector<Tensor<S>*>& params) {
        params.push_back(&w);
        if (has_bias) {
            params.push_back(&b);
        }
    }

    Mat<S> forward(const Mat<S>& x, bool cache) {
        if (cache) {
            x_cache = x;
        }
        Mat<S> y = x * w.value;
        if (has_bias) {
            y.rowwise() += b.value.row(0);
        }
        return y;
    }

    Mat<S> backward(const Mat<S>& dy) {
        w.grad.noalias() += x_cache.transpose() * dy;
        if (has_bias) {
            b.grad.row(0) += dy.colwise().sum();
        }
        return dy * w.value.transpose();
    }
};

template <class S>
struct LayerNorm {
    static constexpr double eps = 1e-5;
    Tensor<S> gamma;
    Tensor<S> beta;
    Mat<S> xhat_cache;
    Vec<S> inv_std_cache;

    void setup(const std::string& name, int dim) {
        gamma.setup(name + ".gamma", 1, dim);
        gamma.value.setOnes();
        beta.setup(name + ".beta", 1, dim);
    }

    void collect(std::vector<Tensor<S>*>& params) {
        params.push_back(&gamma);
        params.push_back(&beta);
    }

    Mat<S> forward(const Mat<S>& x, bool cache) {
        const S dim = static_cast<S>(x.cols());
        Mat<S> xhat(x.rows(), x.cols());
        Vec<S> inv_std(x.rows());
        for (Eigen::Index r = 0; r < x.rows(); ++r) {
            const S mean = x.row(r).mean();
            const auto centered = (x.row(r).array() - mean);
            const S var = centered.square().sum() / dim;
            const S is = static_cast<S>(1.0 / std::sqrt(static_cast<double>(var) + eps));
            xhat.row(r) = centered.matrix() * is;
            inv_std(r) = is;
        }
        Mat<S> y(x.rows(), x.cols());
        for (Eigen::Index r = 0; r < x.rows(); ++r) {
            y.row(r) =
                xhat.row(r).cwiseProduct(gamma.value.row(0)) + beta.value.row(0);
        }
        if (cache) {
            xhat_cache = std::move(xhat);
            inv_std_cache = std::move(inv_std);
        }
        return y;
    }

    Mat<S> backward(const Mat<S>& dy) {
        const S dim = static_cast<S>(dy.cols());
        Mat<S> dx(dy.rows(), dy.cols());
        for (Eigen::Index r = 0; r < dy.rows(); ++r) {
            gamma.grad.row(0) += dy.row(r).cwiseProduct(xhat_cache.row(r));
            beta.grad.row(0) += dy.row(r);
            const auto dxhat = dy.row(r).cwiseProduct(gamma.value.row(0));
            const S mean_dxhat = dxhat.mean();
            const S mean_dxhat_xhat = dxhat.cwiseProduct(xhat_cache.row(r)).sum() / dim;
            dx.row(r) = inv_std_cache(r) *
                        (dxhat.array() - mean_dxhat - xhat_cache.row(r).array() * mean_dxhat_xhat)
                            .matrix();
        }
        return dx;
    }
};

template <class S>
struct Dropout {
    double rate = 0.0;
    Mat<S> mask;

    Mat<S> forward(Mat<S> x, bool training, Rng* rng, bool cache) {
        if (!training || rate <= 0.0) {
            if (cache) {
                mask.resize(0, 0);
            }
            return x;
        }
        const S keep_scale = static_cast<S>(1.0 / (1.0 - rate));
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        Mat<S> m(x.rows(), x.cols());
        for (Eigen::Index c = 0; c < x.cols(); ++c) {
            for (Eigen::Index r = 0; r < x.rows(); ++r) {
                m(r, c) = unit(*rng) < rate ? S{0} : keep_scale;
            }
        }
        x = x.cwiseProduct(m);
        if (cache) {
            mask = std::move(m);
        }
        return x;
    }

    Mat<S> backward(const Mat<S>& dy) {
        if (mask.size() == 0) {
            return dy;
        }
        return dy.cwiseProduct(mask);
    }
};

/// Multi-head attention over row-stacked batches: inputs hold B sequences of
/// Tq (queries) and Tk (keys/values) rows each. Projections have no bias; the
/// output projection mixes the concatenated heads.
template <class S>
struct MultiHeadAttention {
    int dim = 0;
    int heads = 0;
    Tensor<S> wq, wk, wv, wo;

    // caches
    Mat<S> xq_cache, xkv_cache, q_cache, k_cache, v_cache, concat_cache;
    std::vector<Mat<S>> attn_cache;  // one weight matrix per (sample, head)
    int b_cache = 0, tq_cache = 0, tk_cache = 0;
    bool causal_cache = false;

    void setup(const std::string& name, int d, int h) {
        dim = d;
        heads = h;
        if (d % h != 0) {
            throw ShapeError("attention: dim must divide evenly into heads");
        }
        wq.setup(name + ".wq", d, d);
        wk.setup(name + ".wk", d, d);
        wv.setup(name + ".wv", d, d);
        wo.setup(name + ".wo", d, d);
    }

    void collect(std::vector<Tensor<S>*>& params) {
        params.push_back(&wq);
        params.push_back(&wk);
        params.push_back(&wv);
        params.push_back(&wo);
    }

    Mat<S> forward(const Mat<S>& xq, const Mat<S>& xkv, int batch, int tq, int tk, bool causal,
                   bool cache) {
        const int dh = dim / heads;
        Mat<S> q = xq * wq.value;
        Mat<S> k = xkv * wk.value;
        Mat<S> v = xkv * wv.value;
        Mat<S> concat(q.rows(), dim);
        std::vector<Mat<S>> attn;
        if (cache) {
            attn.resize(static_cast<std::size_t>(batch) * heads);
        }
        for (int b = 0; b < batch; ++b) {
            for (int h = 0; h < heads; ++h) {
                const Mat<S> qb = q.block(b * tq, h * dh, tq, dh);
                const Mat<S> kb = k.block(b * tk, h * dh, tk, dh);
                const Mat<S> vb = v.block(b * tk, h * dh, tk, dh);
                Mat<S> weights;
                concat.block(b * tq, h * dh, tq, dh) =
                    scaled_dot_attention(qb, kb, vb, causal, cache ? &weights : nullptr);
                if (cache) {
                    attn[static_cast<std::size_t>(b) * heads + h] = std::move(weights);
                }
            }
        }
        Mat<S> out = concat * wo.value;
        if (cache) {
            xq_cache = xq;
            xkv_cache = xkv;
            q_cache = std::move(q);
            k_cache = std::move(k);
            v_cache = std::move(v);
            concat_cache = std::move(concat);
            attn_cache = std::move(attn);
            b_cache = batch;
            tq_cache = tq;
            tk_cache = tk;
            causal_cache = causal;
        }
        return out;
    }

    /// Returns the gradient w.r.t. xq and accumulates the gradient w.r.t. xkv
    /// into dxkv (self-attention passes the same matrix for both).
    Mat<S> backward(const Mat<S>& dout, Mat<S>& dxkv) {
        const int dh = dim / heads;
        const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));

        wo.grad.noalias() += concat_cache.transpose() * dout;
        const Mat<S> dconcat = dout * wo.value.transpose();

        Mat<S> dq = Mat<S>::Zero(q_cache.rows(), dim);
        Mat<S> dk = Mat<S>::Zero(k_cache.rows(), dim);
        Mat<S> dv = Mat<S>::Zero(v_cache.rows(), dim);

        for (int b = 0; b < b_cache; ++b) {
            for (int h = 0; h < heads; ++h) {
                const Mat<S>& a = attn_cache[static_cast<std::size_t>(b) * heads + h];
                const Mat<S> dob = dconcat.block(b * tq_cache, h * dh, tq_cache, dh);
                const Mat<S> qb = q_cache.block(b * tq_cache, h * dh, tq_cache, dh);
                const Mat<S> kb = k_cache.block(b * tk_cache, h * dh, tk_cache, dh);
                const Mat<S> vb = v_cache.block(b * tk_cache, h * dh, tk_cache, dh);

                const Mat<S> da = dob * vb.transpose();
                dv.block(b * tk_cache, h * dh, tk_cache, dh).noalias() += a.transpose() * dob;

                // softmax backward per row: ds = a .* (da - rowsum(da .* a))
                Mat<S> ds = a.cwiseProduct(da);
                const Vec<S> row_dot = ds.rowwise().sum();
                ds = a.cwiseProduct(da.colwise() - row_dot);

                dq.block(b * tq_cache, h * dh, tq_cache, dh).noalias() += ds * kb * scale;
                dk.block(b * tk_cache, h * dh, tk_cache, dh).noalias() +=
                    ds.transpose() * qb * scale;
            }
        }

        wq.grad.noalias() += xq_cache.transpose() * dq;
        wk.grad.noalias() += xkv_cache.transpose() * dk;
        wv.grad.noalias() += xkv_cache.transpose() * dv;

        dxkv.noalias() += dk * wk.value.transpose();
        dxkv.noalias() += dv * wv.value.transpose();
        return dq * wq.value.transpose();
    }
};

template <class S>
struct FeedForward {
    Linear<S> fc1;
    Linear<S> fc2;
    Mat<S> pre_act_cache;

    void setup(const std::string& name, int dim, int hidden) {
        fc1.setup(name + ".fc1", dim, hidden);
        fc2.setup(name + ".fc2", hidden, dim);
    }

    void collect(std::vector<Tensor<S>*>& params) {
        fc1.collect(params);
        fc2.collect(params);
    }

    Mat<S> forward(const Mat<S>& x, bool cache) {
        Mat<S> h = fc1.forward(x, cache);
        Mat<S> a = h.unaryExpr([](S v) { return gelu(v); });
        if (cache) {
            pre_act_cache = std::move(h);
        }
        return fc2.forward(a, cache);
    }

    Mat<S> backward(const Mat<S>& dy) {
        Mat<S> da = fc2.backward(dy);
        const Mat<S> dh =
            da.cwiseProduct(pre_act_cache.unaryExpr([](S v) { return gelu_grad(v); }));
        return fc1.backward(dh);
    }
};

}  // namespace setforge
