#ifndef BAE_NN_HPP
#define BAE_NN_HPP

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <variant>
#include <vector>

#include "bae/matrix.hpp"
#include "bae/rng.hpp"

namespace bae::nn {

enum class Activation { ReLU, Sigmoid, Identity };
enum class Mode { Train, Eval };

inline double softplus(double x) {
    // stable: log(1+e^x) = max(x,0) + log1p(e^{-|x|})
    const double s = (x > 0.0 ? x : 0.0) + std::log1p(std::exp(-std::fabs(x)));
    return s < 1e-12 ? 1e-12 : s;
}

inline double sigmoid(double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

inline double activate(Activation a, double x) {
    switch (a) {
        case Activation::ReLU: return x > 0.0 ? x : 0.0;
        case Activation::Sigmoid: return sigmoid(x);
        case Activation::Identity: return x;
    }
    return x;
}

/// Derivative of the activation given pre-activation x and output y.
inline double activate_grad(Activation a, double x, double y) {
    switch (a) {
        case Activation::ReLU: return x > 0.0 ? 1.0 : 0.0;
        case Activation::Sigmoid: return y * (1.0 - y);
        case Activation::Identity: return 1.0;
    }
    return 1.0;
}

/// Fully connected layer: y = act(x W^T + b). Weights are (out x in).
struct DenseLayer {
    Matrix weights;
    Matrix bias;  // 1 x out
    Activation act = Activation::Identity;
};

/// Zeroes each unit independently with probability p. The mask is applied
/// only when forward runs in Train mode; prediction-time sampling for MCD
/// reuses Train mode. No 1/(1-p) rescaling: theta = W * eps with
/// eps ~ Ber(1-p).
struct DropoutLayer {
    double p = 0.0;
};

/// Dense layer with a factorised Gaussian over every weight and bias:
/// theta = mu + softplus(rho) * eps, eps ~ N(0,1). Eval mode uses
/// theta = mu.
struct VariationalDenseLayer {
    Matrix mu_w, rho_w;   // out x in
    Matrix mu_b, rho_b;   // 1 x out
    Activation act = Activation::Identity;

    Matrix sigma_w() const { return map_softplus(rho_w); }
    Matrix sigma_b() const { return map_softplus(rho_b); }

    static Matrix map_softplus(const Matrix& rho) {
        Matrix s(rho.rows(), rho.cols());
        for (std::size_t i = 0; i < rho.size(); ++i) s[i] = softplus(rho[i]);
        return s;
    }
};

using Layer = std::variant<DenseLayer, DropoutLayer, VariationalDenseLayer>;

/// Per-layer cache produced by a forward pass; owned by the caller so
/// concurrent read-only passes over one network never share state.
struct LayerTrace {
    Matrix input;    // post-concatenation input seen by the layer
    Matrix preact;   // dense pre-activation
    Matrix output;
    Matrix mask;           // dropout keep mask (0/1)
    Matrix sampled_w, sampled_b;  // variational draw
    Matrix eps_w, eps_b;
};

struct ForwardTrace {
    std::vector<LayerTrace> layers;
    const Matrix& output() const { return layers.back().output; }
};

/// Gradients in the same parameter order as Network::parameters().
using GradList = std::vector<Matrix>;

/// Layered feedforward network with optional concatenation skips: layer i
/// may take concat(output_{i-1}, output_{skip_from[i]}) as input.
class Network {
public:
    void add(Layer layer, int skip_from = -1) {
        layers_.push_back(std::move(layer));
        skip_from_.push_back(skip_from);
    }

    std::size_t layer_count() const { return layers_.size(); }
    Layer& layer(std::size_t i) { return layers_[i]; }
    const Layer& layer(std::size_t i) const { return layers_[i]; }
    int skip_from(std::size_t i) const { return skip_from_[i]; }

    /// Mutable views of every parameter matrix, in a fixed order.
    std::vector<Matrix*> parameters() {
        std::vector<Matrix*> out;
        for (auto& l : layers_) {
            if (auto* d = std::get_if<DenseLayer>(&l)) {
                out.push_back(&d->weights);
                out.push_back(&d->bias);
            } else if (auto* v = std::get_if<VariationalDenseLayer>(&l)) {
                out.push_back(&v->mu_w);
                out.push_back(&v->rho_w);
                out.push_back(&v->mu_b);
                out.push_back(&v->rho_b);
            }
        }
        return out;
    }

    std::vector<const Matrix*> parameters() const {
        std::vector<const Matrix*> out;
        for (auto* p : const_cast<Network*>(this)->parameters()) out.push_back(p);
        return out;
    }

    GradList zero_grads() const {
        GradList g;
        for (auto* p : parameters()) g.emplace_back(p->rows(), p->cols());
        return g;
    }

    ForwardTrace forward(const Matrix& input, Mode mode, RngStream& rng) const {
        ForwardTrace trace;
        trace.layers.resize(layers_.size());
        const Matrix* prev = &input;
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            LayerTrace& lt = trace.layers[i];
            lt.input = (skip_from_[i] >= 0)
                           ? concat_cols(*prev, trace.layers[static_cast<std::size_t>(skip_from_[i])].output)
                           : *prev;
            forward_layer(layers_[i], lt, mode, rng);
            prev = &lt.output;
        }
        if (!trace.output().all_finite())
            throw std::runtime_error("Network::forward: non-finite output");
        return trace;
    }

    /// Reverse-mode gradients of a scalar loss w.r.t. every parameter,
    /// given dL/d(output). Also returns dL/d(input) via the out-param.
    GradList backward(const ForwardTrace& trace, const Matrix& output_grad,
                      Matrix* input_grad = nullptr) const {
        if (trace.layers.size() != layers_.size())
            throw std::invalid_argument("Network::backward: trace does not match network");
        // pending[i+1] is dL/d(output of layer i); pending[0] is dL/d(input).
        std::vector<Matrix> pending(layers_.size() + 1);
        pending[layers_.size()] = output_grad;

        std::vector<GradList> per_layer(layers_.size());
        for (std::size_t ii = layers_.size(); ii-- > 0;) {
            const LayerTrace& lt = trace.layers[ii];
            if (pending[ii + 1].empty())
                pending[ii + 1] = Matrix(lt.output.rows(), lt.output.cols());
            Matrix dinput;
            per_layer[ii] = backward_layer(layers_[ii], lt, pending[ii + 1], dinput);
            if (skip_from_[ii] >= 0) {
                const std::size_t skip = static_cast<std::size_t>(skip_from_[ii]);
                const std::size_t main_cols = lt.input.cols() - trace.layers[skip].output.cols();
                Matrix dmain, dskip;
                split_cols(dinput, main_cols, dmain, dskip);
                accumulate(pending[ii], dmain);
                accumulate(pending[skip + 1], dskip);
            } else {
                accumulate(pending[ii], dinput);
            }
        }
        if (input_grad) *input_grad = std::move(pending[0]);

        GradList flat;
        for (auto& g : per_layer)
            for (auto& m : g) flat.push_back(std::move(m));
        return flat;
    }

private:
    static Matrix concat_cols(const Matrix& a, const Matrix& b) {
        if (a.rows() != b.rows())
            throw std::invalid_argument("concat_cols: row mismatch");
        Matrix out(a.rows(), a.cols() + b.cols());
        for (std::size_t r = 0; r < a.rows(); ++r) {
            for (std::size_t c = 0; c < a.cols(); ++c) out(r, c) = a(r, c);
            for (std::size_t c = 0; c < b.cols(); ++c) out(r, a.cols() + c) = b(r, c);
        }
        return out;
    }

    static void split_cols(const Matrix& m, std::size_t left_cols, Matrix& left, Matrix& right) {
        left = Matrix(m.rows(), left_cols);
        right = Matrix(m.rows(), m.cols() - left_cols);
        for (std::size_t r = 0; r < m.rows(); ++r) {
            for (std::size_t c = 0; c < left_cols; ++c) left(r, c) = m(r, c);
            for (std::size_t c = left_cols; c < m.cols(); ++c) right(r, c - left_cols) = m(r, c);
        }
    }

    static void accumulate(Matrix& target, const Matrix& g) {
        if (target.empty())
            target = g;
        else
            target += g;
    }

    static void dense_forward(const Matrix& w, const Matrix& b, Activation act,
                              LayerTrace& lt) {
        lt.preact = lt.input.matmul(w.transposed());
        for (std::size_t r = 0; r < lt.preact.rows(); ++r)
            for (std::size_t c = 0; c < lt.preact.cols(); ++c)
                lt.preact(r, c) += b(0, c);
        lt.output = Matrix(lt.preact.rows(), lt.preact.cols());
        for (std::size_t i = 0; i < lt.preact.size(); ++i)
            lt.output[i] = activate(act, lt.preact[i]);
    }

    /// Core dense backward: fills dW, db and dinput from dL/doutput.
    static void dense_backward(const Matrix& w, Activation act, const LayerTrace& lt,
                               const Matrix& dout, Matrix& dw, Matrix& db, Matrix& dinput) {
        Matrix dpre(dout.rows(), dout.cols());
        for (std::size_t i = 0; i < dout.size(); ++i)
            dpre[i] = dout[i] * activate_grad(act, lt.preact[i], lt.output[i]);
        dw = dpre.transposed().matmul(lt.input);
        db = Matrix(1, dpre.cols());
        for (std::size_t r = 0; r < dpre.rows(); ++r)
            for (std::size_t c = 0; c < dpre.cols(); ++c)
                db(0, c) += dpre(r, c);
        dinput = dpre.matmul(w);
    }

    void forward_layer(const Layer& layer, LayerTrace& lt, Mode mode, RngStream& rng) const {
        if (const auto* d = std::get_if<DenseLayer>(&layer)) {
            if (lt.input.cols() != d->weights.cols())
                throw std::invalid_argument("forward: input width " + std::to_string(lt.input.cols()) +
                                            " != layer in-size " + std::to_string(d->weights.cols()));
            dense_forward(d->weights, d->bias, d->act, lt);
        } else if (const auto* dr = std::get_if<DropoutLayer>(&layer)) {
            if (dr->p < 0.0 || dr->p > 1.0)
                throw std::invalid_argument("dropout probability outside [0,1]");
            lt.mask = Matrix(lt.input.rows(), lt.input.cols(), 1.0);
            if (mode == Mode::Train && dr->p > 0.0)
                for (std::size_t i = 0; i < lt.mask.size(); ++i)
                    lt.mask[i] = rng.bernoulli(dr->p) ? 0.0 : 1.0;
            lt.output = lt.input;
            for (std::size_t i = 0; i < lt.output.size(); ++i) lt.output[i] *= lt.mask[i];
        } else {
            const auto& v = std::get<VariationalDenseLayer>(layer);
            if (lt.input.cols() != v.mu_w.cols())
                throw std::invalid_argument("forward: input width != variational layer in-size");
            lt.eps_w = Matrix(v.mu_w.rows(), v.mu_w.cols());
            lt.eps_b = Matrix(1, v.mu_b.cols());
            if (mode == Mode::Train) {
                for (std::size_t i = 0; i < lt.eps_w.size(); ++i) lt.eps_w[i] = rng.normal();
                for (std::size_t i = 0; i < lt.eps_b.size(); ++i) lt.eps_b[i] = rng.normal();
            }
            lt.sampled_w = v.mu_w;
            for (std::size_t i = 0; i < lt.sampled_w.size(); ++i)
                lt.sampled_w[i] += softplus(v.rho_w[i]) * lt.eps_w[i];
            lt.sampled_b = v.mu_b;
            for (std::size_t i = 0; i < lt.sampled_b.size(); ++i)
                lt.sampled_b[i] += softplus(v.rho_b[i]) * lt.eps_b[i];
            dense_forward(lt.sampled_w, lt.sampled_b, v.act, lt);
        }
    }

    GradList backward_layer(const Layer& layer, const LayerTrace& lt, const Matrix& dout,
                            Matrix& dinput) const {
        GradList g;
        if (const auto* d = std::get_if<DenseLayer>(&layer)) {
            Matrix dw, db;
            dense_backward(d->weights, d->act, lt, dout, dw, db, dinput);
            g.push_back(std::move(dw));
            g.push_back(std::move(db));
        } else if (std::get_if<DropoutLayer>(&layer)) {
            dinput = dout;
            for (std::size_t i = 0; i < dinput.size(); ++i) dinput[i] *= lt.mask[i];
        } else {
            const auto& v = std::get<VariationalDenseLayer>(layer);
            if (lt.sampled_w.empty())
                throw std::invalid_argument("backward: trace has no variational sample");
            Matrix dw, db;
            dense_backward(lt.sampled_w, v.act, lt, dout, dw, db, dinput);
            // theta = mu + softplus(rho) eps: dmu = dtheta, drho = dtheta eps sigmoid(rho)
            Matrix drho_w(dw.rows(), dw.cols()), drho_b(1, db.cols());
            for (std::size_t i = 0; i < dw.size(); ++i)
                drho_w[i] = dw[i] * lt.eps_w[i] * sigmoid(v.rho_w[i]);
            for (std::size_t i = 0; i < db.size(); ++i)
                drho_b[i] = db[i] * lt.eps_b[i] * sigmoid(v.rho_b[i]);
            g.push_back(std::move(dw));
            g.push_back(std::move(drho_w));
            g.push_back(std::move(db));
            g.push_back(std::move(drho_b));
        }
        return g;
    }

    std::vector<Layer> layers_;
    std::vector<int> skip_from_;
};

/// Adam with bias correction; one (m, v) pair per parameter matrix.
struct AdamState {
    std::vector<Matrix> m, v;
    long t = 0;
    double lr = 0.001;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

    static AdamState for_parameters(const std::vector<Matrix*>& params, double lr) {
        AdamState s;
        s.lr = lr;
        for (auto* p : params) {
            s.m.emplace_back(p->rows(), p->cols());
            s.v.emplace_back(p->rows(), p->cols());
        }
        return s;
    }
};

inline void adam_step(const std::vector<Matrix*>& params, const GradList& grads, AdamState& s) {
    if (params.size() != grads.size() || params.size() != s.m.size())
        throw std::invalid_argument("adam_step: parameter/gradient/state count mismatch");
    s.t += 1;
    const double bc1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.t));
    const double bc2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.t));
    for (std::size_t k = 0; k < params.size(); ++k) {
        Matrix& p = *params[k];
        const Matrix& g = grads[k];
        if (!p.same_shape(g))
            throw std::invalid_argument("adam_step: gradient shape mismatch");
        for (std::size_t i = 0; i < p.size(); ++i) {
            s.m[k][i] = s.beta1 * s.m[k][i] + (1.0 - s.beta1) * g[i];
            s.v[k][i] = s.beta2 * s.v[k][i] + (1.0 - s.beta2) * g[i] * g[i];
            const double mhat = s.m[k][i] / bc1;
            const double vhat = s.v[k][i] / bc2;
            p[i] -= s.lr * mhat / (std::sqrt(vhat) + s.eps);
        }
    }
}

/// Zero each activation independently with probability p.
inline Matrix apply_dropout(const Matrix& activations, double p, RngStream& rng) {
    if (p < 0.0 || p > 1.0)
        throw std::invalid_argument("apply_dropout: probability outside [0,1]");
    Matrix out = activations;
    if (p > 0.0)
        for (std::size_t i = 0; i < out.size(); ++i)
            if (rng.bernoulli(p)) out[i] = 0.0;
    return out;
}

/// theta = mu + softplus(rho) * eps, eps ~ N(0,1) elementwise.
inline Matrix reparameterize(const Matrix& mu, const Matrix& rho, RngStream& rng) {
    if (!mu.same_shape(rho))
        throw std::invalid_argument("reparameterize: mu/rho shape mismatch");
    Matrix out = mu;
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] += softplus(rho[i]) * rng.normal();
    return out;
}

/// Gaussian init with std sqrt(2/(fan_in+fan_out)); biases start at zero.
inline Matrix init_weights(std::size_t out, std::size_t in, RngStream& rng) {
    const double std_dev = std::sqrt(2.0 / static_cast<double>(in + out));
    Matrix w(out, in);
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = std_dev * rng.normal();
    return w;
}

inline double init_std(std::size_t out, std::size_t in) {
    return std::sqrt(2.0 / static_cast<double>(in + out));
}

}  // namespace bae::nn

#endif  // BAE_NN_HPP
