#ifndef BAE_AUTOENCODER_HPP
#define BAE_AUTOENCODER_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "bae/matrix.hpp"
#include "bae/nn.hpp"
#include "bae/rng.hpp"

namespace bae::model {

enum class Method { Deterministic, AnchoredEnsemble, MCD, BBB, VAE };

inline const char* method_name(Method m) {
    switch (m) {
        case Method::Deterministic: return "ae";
        case Method::AnchoredEnsemble: return "bae-ensemble";
        case Method::MCD: return "bae-mcd";
        case Method::BBB: return "bae-bbb";
        case Method::VAE: return "vae";
    }
    return "?";
}

/// Mirror-symmetric encoder/decoder widths. hidden lists the encoder
/// hidden widths; the decoder reverses them. skip_connections
/// concatenates each encoder hidden activation onto the mirrored decoder
/// layer's input (off by default).
struct Architecture {
    std::size_t input_dim = 0;
    std::vector<std::size_t> hidden;
    std::size_t latent_dim = 1;
    bool skip_connections = false;

    void validate() const {
        if (input_dim < 1 || latent_dim < 1)
            throw std::invalid_argument("Architecture: widths must be >= 1");
        for (std::size_t h : hidden)
            if (h < 1) throw std::invalid_argument("Architecture: widths must be >= 1");
    }
};

struct TrainingConfig {
    std::size_t epochs = 100;
    double learning_rate = 0.001;
    double weight_decay = 1e-10;  // lambda
    std::size_t ensemble_size = 10;  // M, posterior sample count
    std::size_t batch_size = 0;      // 0 = full batch
    std::uint64_t seed = 0;

    void validate() const {
        if (epochs < 1) throw std::invalid_argument("TrainingConfig: epochs >= 1 required");
        if (weight_decay < 0.0) throw std::invalid_argument("TrainingConfig: weight_decay >= 0 required");
        if (ensemble_size < 1) throw std::invalid_argument("TrainingConfig: ensemble_size >= 1 required");
    }
};

/// Mixture-of-two-Gaussians prior for the variational method.
struct BbbPriorConfig {
    double pi = 0.5;
    double tau1 = 1.0;
    double tau2 = 0.1;

    void validate() const {
        if (pi < 0.0 || pi > 1.0 || tau1 <= 0.0 || tau2 <= 0.0)
            throw std::invalid_argument("BbbPriorConfig: need 0<=pi<=1, tau1,tau2>0");
    }
};

struct McdConfig {
    double p_dropout = 0.01;

    void validate() const {
        if (p_dropout <= 0.0 || p_dropout >= 1.0)
            throw std::invalid_argument("McdConfig: need 0 < p_dropout < 1");
    }
};

/// Per-point score: (1/D) sum_i 0.5 (x_i - xhat_i)^2. This is the
/// negative Gaussian log-likelihood with unit variance, constants dropped.
inline double nll(const std::vector<double>& x, const std::vector<double>& x_hat) {
    if (x.empty()) throw std::invalid_argument("nll: zero-dimensional input");
    if (x.size() != x_hat.size()) throw std::invalid_argument("nll: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = x[i] - x_hat[i];
        s += 0.5 * r * r;
    }
    return s / static_cast<double>(x.size());
}

inline std::vector<double> nll_rows(const Matrix& x, const Matrix& x_hat) {
    if (!x.same_shape(x_hat)) throw std::invalid_argument("nll_rows: shape mismatch");
    if (x.cols() == 0) throw std::invalid_argument("nll_rows: zero-dimensional input");
    std::vector<double> out(x.rows());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < x.cols(); ++c) {
            const double d = x(r, c) - x_hat(r, c);
            s += 0.5 * d * d;
        }
        out[r] = s / static_cast<double>(x.cols());
    }
    return out;
}

/// Per-member anchor parameters, drawn once at initialisation and fixed.
struct AnchorSet {
    std::vector<std::vector<Matrix>> members;  // one vector<Matrix> per member
};

/// Trained posterior approximation. Ensemble methods hold M parameter
/// sets; stochastic methods hold one network whose M prediction samples
/// are implicit. VAE additionally keeps the decoder separate since only
/// the latent is stochastic.
struct PosteriorEnsemble {
    Method method = Method::Deterministic;
    Architecture arch;
    std::size_t samples = 1;  // M
    std::vector<nn::Network> nets;       // members (encoder for VAE)
    std::vector<nn::Network> decoders;   // VAE only
    std::uint64_t train_seed = 0;
    std::uint64_t predict_seed = 0;
    bool trained = false;
    std::vector<std::vector<double>> loss_history;  // per member, per epoch
};

// ---------------------------------------------------------------------------
// network construction

namespace detail {

inline void add_dense(nn::Network& net, std::size_t out, std::size_t in, nn::Activation act,
                      RngStream& rng, bool variational, int skip_from = -1) {
    if (variational) {
        nn::VariationalDenseLayer v;
        v.mu_w = nn::init_weights(out, in, rng);
        v.rho_w = Matrix(out, in, -5.0);
        v.mu_b = Matrix(1, out, 0.0);
        v.rho_b = Matrix(1, out, -5.0);
        v.act = act;
        net.add(std::move(v), skip_from);
    } else {
        nn::DenseLayer d;
        d.weights = nn::init_weights(out, in, rng);
        d.bias = Matrix(1, out, 0.0);
        d.act = act;
        net.add(std::move(d), skip_from);
    }
}

struct BuildOptions {
    bool variational = false;
    double dropout_p = 0.0;  // 0 disables dropout layers
};

/// Full autoencoder stack: encoder hiddens (ReLU), latent (identity),
/// mirrored decoder hiddens (ReLU), sigmoid output. Dropout follows every
/// non-output dense layer when enabled.
inline nn::Network build_autoencoder(const Architecture& arch, RngStream& rng,
                                     const BuildOptions& opt) {
    arch.validate();
    nn::Network net;
    std::vector<int> encoder_hidden_idx;  // layer index of each encoder hidden dense
    std::size_t in = arch.input_dim;
    for (std::size_t h : arch.hidden) {
        add_dense(net, h, in, nn::Activation::ReLU, rng, opt.variational);
        encoder_hidden_idx.push_back(static_cast<int>(net.layer_count()) - 1);
        if (opt.dropout_p > 0.0) net.add(nn::DropoutLayer{opt.dropout_p});
        in = h;
    }
    add_dense(net, arch.latent_dim, in, nn::Activation::Identity, rng, opt.variational);
    if (opt.dropout_p > 0.0) net.add(nn::DropoutLayer{opt.dropout_p});
    in = arch.latent_dim;
    for (std::size_t i = arch.hidden.size(); i-- > 0;) {
        const std::size_t h = arch.hidden[i];
        const int skip = arch.skip_connections ? encoder_hidden_idx[i] : -1;
        const std::size_t width_in = in + (skip >= 0 ? h : 0);
        add_dense(net, h, width_in, nn::Activation::ReLU, rng, opt.variational, skip);
        if (opt.dropout_p > 0.0) net.add(nn::DropoutLayer{opt.dropout_p});
        in = h;
    }
    add_dense(net, arch.input_dim, in, nn::Activation::Sigmoid, rng, opt.variational);
    return net;
}

/// Encoder half emitting (mu_z, logvar_z) as 2*latent identity outputs.
inline nn::Network build_vae_encoder(const Architecture& arch, RngStream& rng) {
    arch.validate();
    nn::Network net;
    std::size_t in = arch.input_dim;
    for (std::size_t h : arch.hidden) {
        add_dense(net, h, in, nn::Activation::ReLU, rng, false);
        in = h;
    }
    add_dense(net, 2 * arch.latent_dim, in, nn::Activation::Identity, rng, false);
    return net;
}

inline nn::Network build_vae_decoder(const Architecture& arch, RngStream& rng) {
    nn::Network net;
    std::size_t in = arch.latent_dim;
    for (std::size_t i = arch.hidden.size(); i-- > 0;) {
        add_dense(net, arch.hidden[i], in, nn::Activation::ReLU, rng, false);
        in = arch.hidden[i];
    }
    add_dense(net, arch.input_dim, in, nn::Activation::Sigmoid, rng, false);
    return net;
}

inline Matrix rows_subset(const Matrix& x, const std::vector<std::size_t>& idx, std::size_t begin,
                          std::size_t end) {
    Matrix out(end - begin, x.cols());
    for (std::size_t r = begin; r < end; ++r)
        for (std::size_t c = 0; c < x.cols(); ++c) out(r - begin, c) = x(idx[r], c);
    return out;
}

inline double mean_nll_and_grad(const Matrix& x, const Matrix& x_hat, Matrix& out_grad) {
    const double n = static_cast<double>(x.rows());
    const double d = static_cast<double>(x.cols());
    out_grad = Matrix(x.rows(), x.cols());
    double loss = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = x_hat[i] - x[i];
        loss += 0.5 * r * r;
        out_grad[i] = r / (d * n);
    }
    return loss / (d * n);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// regularisers

/// lambda * sum ||theta - anchor||^2 over all parameter matrices.
inline double anchored_penalty(const std::vector<const Matrix*>& params,
                               const std::vector<Matrix>& anchors, double lambda) {
    if (params.size() != anchors.size())
        throw std::invalid_argument("anchored_penalty: anchor count mismatch");
    double s = 0.0;
    for (std::size_t k = 0; k < params.size(); ++k)
        for (std::size_t i = 0; i < params[k]->size(); ++i) {
            const double d = (*params[k])[i] - anchors[k][i];
            s += d * d;
        }
    return lambda * s;
}

/// Mixture-prior plus variational term for a sampled theta:
///   pi(||theta||^2/2 tau1^2 - log tau1) + (1-pi)(||theta||^2/2 tau2^2 - log tau2)
///   + sum_j (theta_j - mu_j)^2 / 2 sigma_j^2 - sum_j log sigma_j
inline double bbb_prior_term(const std::vector<Matrix>& theta, const std::vector<Matrix>& mu,
                             const std::vector<Matrix>& sigma, const BbbPriorConfig& prior) {
    prior.validate();
    double norm2 = 0.0, var_term = 0.0;
    for (std::size_t k = 0; k < theta.size(); ++k)
        for (std::size_t i = 0; i < theta[k].size(); ++i) {
            const double t = theta[k][i];
            norm2 += t * t;
            const double d = t - mu[k][i];
            var_term += d * d / (2.0 * sigma[k][i] * sigma[k][i]) - std::log(sigma[k][i]);
        }
    return prior.pi * (norm2 / (2.0 * prior.tau1 * prior.tau1) - std::log(prior.tau1)) +
           (1.0 - prior.pi) * (norm2 / (2.0 * prior.tau2 * prior.tau2) - std::log(prior.tau2)) +
           var_term;
}

// ---------------------------------------------------------------------------
// training

namespace detail {

struct StepHooks {
    // adds the regulariser's loss value and accumulates its parameter
    // gradients (same order as Network::parameters()) given the trace
    virtual double penalty(const nn::Network& net, const nn::ForwardTrace& trace,
                           nn::GradList& grads) const = 0;
    virtual ~StepHooks() = default;
};

struct L2Hooks : StepHooks {
    double lambda;
    explicit L2Hooks(double l) : lambda(l) {}
    double penalty(const nn::Network& net, const nn::ForwardTrace&, nn::GradList& grads) const override {
        double s = 0.0;
        auto params = const_cast<nn::Network&>(net).parameters();
        for (std::size_t k = 0; k < params.size(); ++k)
            for (std::size_t i = 0; i < params[k]->size(); ++i) {
                const double t = (*params[k])[i];
                s += t * t;
                grads[k][i] += 2.0 * lambda * t;
            }
        return lambda * s;
    }
};

struct AnchorHooks : StepHooks {
    double lambda;
    const std::vector<Matrix>* anchors;
    AnchorHooks(double l, const std::vector<Matrix>* a) : lambda(l), anchors(a) {}
    double penalty(const nn::Network& net, const nn::ForwardTrace&, nn::GradList& grads) const override {
        double s = 0.0;
        auto params = const_cast<nn::Network&>(net).parameters();
        for (std::size_t k = 0; k < params.size(); ++k)
            for (std::size_t i = 0; i < params[k]->size(); ++i) {
                const double d = (*params[k])[i] - (*anchors)[k][i];
                s += d * d;
                grads[k][i] += 2.0 * lambda * d;
            }
        return lambda * s;
    }
};

/// Gradient of the BBB prior w.r.t. (mu, rho), chained through
/// theta = mu + sigma eps with eps cached in the trace:
///   d/dmu = m'(theta),  d/dsigma = m'(theta) eps - 1/sigma
/// where m'(theta) = pi theta/tau1^2 + (1-pi) theta/tau2^2.
struct BbbHooks : StepHooks {
    double lambda;
    BbbPriorConfig prior;
    BbbHooks(double l, const BbbPriorConfig& p) : lambda(l), prior(p) {}

    double penalty(const nn::Network& net, const nn::ForwardTrace& trace,
                   nn::GradList& grads) const override {
        const double it1 = 1.0 / (prior.tau1 * prior.tau1);
        const double it2 = 1.0 / (prior.tau2 * prior.tau2);
        double norm2 = 0.0, var_term = 0.0;
        std::size_t k = 0;  // flat parameter index, [mu_w, rho_w, mu_b, rho_b] per layer
        for (std::size_t li = 0; li < net.layer_count(); ++li) {
            const auto* v = std::get_if<nn::VariationalDenseLayer>(&net.layer(li));
            if (!v) continue;
            const nn::LayerTrace& lt = trace.layers[li];
            auto handle = [&](const Matrix& mu, const Matrix& rho, const Matrix& theta,
                              const Matrix& eps, Matrix& gmu, Matrix& grho) {
                for (std::size_t i = 0; i < mu.size(); ++i) {
                    const double sig = nn::softplus(rho[i]);
                    const double t = theta[i];
                    norm2 += t * t;
                    const double d = t - mu[i];
                    var_term += d * d / (2.0 * sig * sig) - std::log(sig);
                    const double mix = prior.pi * t * it1 + (1.0 - prior.pi) * t * it2;
                    gmu[i] += lambda * mix;
                    grho[i] += lambda * (mix * eps[i] - 1.0 / sig) * nn::sigmoid(rho[i]);
                }
            };
            handle(v->mu_w, v->rho_w, lt.sampled_w, lt.eps_w, grads[k], grads[k + 1]);
            handle(v->mu_b, v->rho_b, lt.sampled_b, lt.eps_b, grads[k + 2], grads[k + 3]);
            k += 4;
        }
        const double mixture =
            prior.pi * (norm2 * 0.5 * it1 - std::log(prior.tau1)) +
            (1.0 - prior.pi) * (norm2 * 0.5 * it2 - std::log(prior.tau2));
        return lambda * (mixture + var_term);
    }
};

inline std::vector<double> train_network(nn::Network& net, const Matrix& data,
                                         const TrainingConfig& cfg, const StepHooks& hooks,
                                         RngStream& rng) {
    auto params = net.parameters();
    nn::AdamState adam = nn::AdamState::for_parameters(params, cfg.learning_rate);
    const std::size_t n = data.rows();
    const std::size_t bs = (cfg.batch_size == 0 || cfg.batch_size > n) ? n : cfg.batch_size;

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> epoch_losses;
    epoch_losses.reserve(cfg.epochs);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (bs < n)  // Fisher-Yates with the training stream
            for (std::size_t i = n - 1; i > 0; --i)
                std::swap(order[i], order[rng.index(i + 1)]);
        double epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < n; start += bs, ++batches) {
            const std::size_t end = std::min(start + bs, n);
            const Matrix batch = rows_subset(data, order, start, end);
            nn::ForwardTrace trace = net.forward(batch, nn::Mode::Train, rng);
            Matrix dout;
            double loss = mean_nll_and_grad(batch, trace.output(), dout);
            nn::GradList grads = net.backward(trace, dout);
            loss += hooks.penalty(net, trace, grads);
            if (!std::isfinite(loss))
                throw std::runtime_error("training diverged: non-finite loss");
            nn::adam_step(params, grads, adam);
            epoch_loss += loss;
        }
        epoch_losses.push_back(epoch_loss / static_cast<double>(batches));
    }
    return epoch_losses;
}

}  // namespace detail

inline PosteriorEnsemble train_deterministic(const Matrix& data, const Architecture& arch,
                                             const TrainingConfig& cfg) {
    cfg.validate();
    RngStream rng(cfg.seed);
    PosteriorEnsemble e;
    e.method = Method::Deterministic;
    e.arch = arch;
    e.samples = 1;
    e.train_seed = cfg.seed;
    e.predict_seed = RngStream::derive(cfg.seed, 0x9D);
    e.nets.push_back(detail::build_autoencoder(arch, rng, {}));
    e.loss_history.push_back(
        detail::train_network(e.nets[0], data, cfg, detail::L2Hooks(cfg.weight_decay), rng));
    e.trained = true;
    return e;
}

/// Draw anchors from the weight-initialisation distribution: zero mean,
/// std sqrt(2/(fan_in+fan_out)) for weights, zero for biases and rho.
inline AnchorSet draw_anchors(const Architecture& arch, std::size_t members, std::uint64_t seed) {
    AnchorSet anchors;
    for (std::size_t m = 0; m < members; ++m) {
        RngStream rng(RngStream::derive(seed, 0xA0C0 + m));
        nn::Network net = detail::build_autoencoder(arch, rng, {});
        std::vector<Matrix> member;
        for (const auto* p : std::as_const(net).parameters()) member.push_back(*p);
        anchors.members.push_back(std::move(member));
    }
    return anchors;
}

inline PosteriorEnsemble train_anchored_ensemble(const Matrix& data, const Architecture& arch,
                                                 const TrainingConfig& cfg,
                                                 const AnchorSet& anchors) {
    cfg.validate();
    if (anchors.members.size() != cfg.ensemble_size)
        throw std::invalid_argument("train_anchored_ensemble: anchor count != ensemble size");
    PosteriorEnsemble e;
    e.method = Method::AnchoredEnsemble;
    e.arch = arch;
    e.samples = cfg.ensemble_size;
    e.train_seed = cfg.seed;
    e.predict_seed = RngStream::derive(cfg.seed, 0x9D);
    for (std::size_t m = 0; m < cfg.ensemble_size; ++m) {
        RngStream rng(RngStream::derive(cfg.seed, m));
        e.nets.push_back(detail::build_autoencoder(arch, rng, {}));
        e.loss_history.push_back(detail::train_network(
            e.nets[m], data, cfg, detail::AnchorHooks(cfg.weight_decay, &anchors.members[m]), rng));
    }
    e.trained = true;
    return e;
}

inline PosteriorEnsemble train_mcd(const Matrix& data, const Architecture& arch,
                                   const TrainingConfig& cfg, const McdConfig& mcd) {
    cfg.validate();
    mcd.validate();
    RngStream rng(cfg.seed);
    PosteriorEnsemble e;
    e.method = Method::MCD;
    e.arch = arch;
    e.samples = cfg.ensemble_size;
    e.train_seed = cfg.seed;
    e.predict_seed = RngStream::derive(cfg.seed, 0x9D);
    detail::BuildOptions opt;
    opt.dropout_p = mcd.p_dropout;
    e.nets.push_back(detail::build_autoencoder(arch, rng, opt));
    e.loss_history.push_back(
        detail::train_network(e.nets[0], data, cfg, detail::L2Hooks(cfg.weight_decay), rng));
    e.trained = true;
    return e;
}

inline PosteriorEnsemble train_bbb(const Matrix& data, const Architecture& arch,
                                   const TrainingConfig& cfg, const BbbPriorConfig& prior) {
    cfg.validate();
    prior.validate();
    RngStream rng(cfg.seed);
    PosteriorEnsemble e;
    e.method = Method::BBB;
    e.arch = arch;
    e.samples = cfg.ensemble_size;
    e.train_seed = cfg.seed;
    e.predict_seed = RngStream::derive(cfg.seed, 0x9D);
    detail::BuildOptions opt;
    opt.variational = true;
    e.nets.push_back(detail::build_autoencoder(arch, rng, opt));
    e.loss_history.push_back(
        detail::train_network(e.nets[0], data, cfg, detail::BbbHooks(cfg.weight_decay, prior), rng));
    e.trained = true;
    return e;
}

/// Closed-form KL(N(mu, sigma^2) || N(0,1)) summed over latent dims,
/// averaged over the batch. logvar is log sigma^2.
inline double vae_kl(const Matrix& mu, const Matrix& logvar) {
    double s = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i)
        s += 0.5 * (mu[i] * mu[i] + std::exp(logvar[i]) - 1.0 - logvar[i]);
    return s / static_cast<double>(mu.rows());
}

inline PosteriorEnsemble train_vae(const Matrix& data, const Architecture& arch,
                                   const TrainingConfig& cfg) {
    cfg.validate();
    if (arch.skip_connections)
        throw std::invalid_argument("train_vae: skip connections unsupported across the latent sample");
    RngStream rng(cfg.seed);
    PosteriorEnsemble e;
    e.method = Method::VAE;
    e.arch = arch;
    e.samples = cfg.ensemble_size;
    e.train_seed = cfg.seed;
    e.predict_seed = RngStream::derive(cfg.seed, 0x9D);
    e.nets.push_back(detail::build_vae_encoder(arch, rng));
    e.decoders.push_back(detail::build_vae_decoder(arch, rng));
    nn::Network& enc = e.nets[0];
    nn::Network& dec = e.decoders[0];

    auto enc_params = enc.parameters();
    auto dec_params = dec.parameters();
    std::vector<Matrix*> all_params = enc_params;
    all_params.insert(all_params.end(), dec_params.begin(), dec_params.end());
    nn::AdamState adam = nn::AdamState::for_parameters(all_params, cfg.learning_rate);

    const std::size_t n = data.rows();
    const std::size_t bs = (cfg.batch_size == 0 || cfg.batch_size > n) ? n : cfg.batch_size;
    const std::size_t latent = arch.latent_dim;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> epoch_losses;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (bs < n)
            for (std::size_t i = n - 1; i > 0; --i)
                std::swap(order[i], order[rng.index(i + 1)]);
        double epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < n; start += bs, ++batches) {
            const std::size_t end = std::min(start + bs, n);
            const Matrix batch = detail::rows_subset(data, order, start, end);
            const std::size_t b = batch.rows();

            nn::ForwardTrace enc_trace = enc.forward(batch, nn::Mode::Train, rng);
            const Matrix& enc_out = enc_trace.output();  // b x 2L: [mu | logvar]
            Matrix mu_z(b, latent), logvar(b, latent), eps(b, latent), z(b, latent);
            for (std::size_t r = 0; r < b; ++r)
                for (std::size_t c = 0; c < latent; ++c) {
                    mu_z(r, c) = enc_out(r, c);
                    logvar(r, c) = enc_out(r, latent + c);
                    eps(r, c) = rng.normal();
                    z(r, c) = mu_z(r, c) + std::exp(0.5 * logvar(r, c)) * eps(r, c);
                }

            nn::ForwardTrace dec_trace = dec.forward(z, nn::Mode::Train, rng);
            Matrix drecon;
            double loss = detail::mean_nll_and_grad(batch, dec_trace.output(), drecon);
            loss += vae_kl(mu_z, logvar);

            Matrix dz;
            nn::GradList dec_grads = dec.backward(dec_trace, drecon, &dz);

            // chain dz to (mu, logvar) and add the KL gradients
            Matrix denc(b, 2 * latent);
            const double inv_b = 1.0 / static_cast<double>(b);
            for (std::size_t r = 0; r < b; ++r)
                for (std::size_t c = 0; c < latent; ++c) {
                    const double sig = std::exp(0.5 * logvar(r, c));
                    denc(r, c) = dz(r, c) + inv_b * mu_z(r, c);
                    denc(r, latent + c) = dz(r, c) * 0.5 * sig * eps(r, c) +
                                          inv_b * 0.5 * (sig * sig - 1.0);
                }
            nn::GradList enc_grads = enc.backward(enc_trace, denc);

            nn::GradList grads = std::move(enc_grads);
            for (auto& g : dec_grads) grads.push_back(std::move(g));
            double norm2 = 0.0;
            for (std::size_t k = 0; k < all_params.size(); ++k)
                for (std::size_t i = 0; i < all_params[k]->size(); ++i) {
                    const double t = (*all_params[k])[i];
                    norm2 += t * t;
                    grads[k][i] += 2.0 * cfg.weight_decay * t;
                }
            loss += cfg.weight_decay * norm2;
            if (!std::isfinite(loss)) throw std::runtime_error("training diverged: non-finite loss");
            nn::adam_step(all_params, grads, adam);
            epoch_loss += loss;
        }
        epoch_losses.push_back(epoch_loss / static_cast<double>(batches));
    }
    e.loss_history.push_back(std::move(epoch_losses));
    e.trained = true;
    return e;
}

// ---------------------------------------------------------------------------
// prediction

/// M x N matrix of per-point scores under each posterior sample.
/// Deterministic models give one row; MCD/BBB/VAE draw M stochastic
/// passes seeded by ensemble.predict_seed, so repeated calls agree.
inline Matrix posterior_predict(const PosteriorEnsemble& e, const Matrix& x) {
    if (!e.trained) throw std::logic_error("posterior_predict: model is not trained");
    if (x.cols() != e.arch.input_dim)
        throw std::invalid_argument("posterior_predict: input width != architecture input_dim");
    const std::size_t m_rows = (e.method == Method::Deterministic) ? 1 : e.samples;
    Matrix scores(m_rows, x.rows());
    for (std::size_t m = 0; m < m_rows; ++m) {
        RngStream rng(RngStream::derive(e.predict_seed, m));
        std::vector<double> row;
        switch (e.method) {
            case Method::Deterministic: {
                row = nll_rows(x, e.nets[0].forward(x, nn::Mode::Eval, rng).output());
                break;
            }
            case Method::AnchoredEnsemble: {
                row = nll_rows(x, e.nets[m].forward(x, nn::Mode::Eval, rng).output());
                break;
            }
            case Method::MCD:
            case Method::BBB: {
                // Train mode keeps the dropout mask / weight sample active
                row = nll_rows(x, e.nets[0].forward(x, nn::Mode::Train, rng).output());
                break;
            }
            case Method::VAE: {
                const Matrix enc_out = e.nets[0].forward(x, nn::Mode::Eval, rng).output();
                const std::size_t latent = e.arch.latent_dim;
                Matrix z(x.rows(), latent);
                for (std::size_t r = 0; r < x.rows(); ++r)
                    for (std::size_t c = 0; c < latent; ++c)
                        z(r, c) = enc_out(r, c) +
                                  std::exp(0.5 * enc_out(r, latent + c)) * rng.normal();
                row = nll_rows(x, e.decoders[0].forward(z, nn::Mode::Eval, rng).output());
                break;
            }
        }
        for (std::size_t i = 0; i < row.size(); ++i) scores(m, i) = row[i];
    }
    return scores;
}

}  // namespace bae::model

#endif  // BAE_AUTOENCODER_HPP
