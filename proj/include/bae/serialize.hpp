#ifndef BAE_SERIALIZE_HPP
#define BAE_SERIALIZE_HPP

#include <fstream>
#include <stdexcept>
#include <string>

#include "json.hpp"

#include "bae/autoencoder.hpp"

namespace bae::model {

inline constexpr const char* kModelMagic = "BAE-MODEL";
inline constexpr int kModelFormatVersion = 1;

namespace detail {

inline nlohmann::json matrix_to_json(const Matrix& m) {
    return {{"rows", m.rows()}, {"cols", m.cols()}, {"values", m.data()}};
}

inline Matrix matrix_from_json(const nlohmann::json& j) {
    Matrix m(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>());
    const auto values = j.at("values").get<std::vector<double>>();
    if (values.size() != m.size()) throw std::runtime_error("model file: matrix size mismatch");
    m.data() = values;
    return m;
}

inline nlohmann::json network_to_json(const nn::Network& net) {
    nlohmann::json layers = nlohmann::json::array();
    for (std::size_t i = 0; i < net.layer_count(); ++i) {
        nlohmann::json l;
        l["skip_from"] = net.skip_from(i);
        if (const auto* d = std::get_if<nn::DenseLayer>(&net.layer(i))) {
            l["kind"] = "dense";
            l["act"] = static_cast<int>(d->act);
            l["weights"] = matrix_to_json(d->weights);
            l["bias"] = matrix_to_json(d->bias);
        } else if (const auto* dr = std::get_if<nn::DropoutLayer>(&net.layer(i))) {
            l["kind"] = "dropout";
            l["p"] = dr->p;
        } else {
            const auto& v = std::get<nn::VariationalDenseLayer>(net.layer(i));
            l["kind"] = "variational";
            l["act"] = static_cast<int>(v.act);
            l["mu_w"] = matrix_to_json(v.mu_w);
            l["rho_w"] = matrix_to_json(v.rho_w);
            l["mu_b"] = matrix_to_json(v.mu_b);
            l["rho_b"] = matrix_to_json(v.rho_b);
        }
        layers.push_back(std::move(l));
    }
    return layers;
}

inline nn::Network network_from_json(const nlohmann::json& layers) {
    nn::Network net;
    for (const auto& l : layers) {
        const int skip = l.at("skip_from").get<int>();
        const std::string kind = l.at("kind").get<std::string>();
        if (kind == "dense") {
            nn::DenseLayer d;
            d.act = static_cast<nn::Activation>(l.at("act").get<int>());
            d.weights = matrix_from_json(l.at("weights"));
            d.bias = matrix_from_json(l.at("bias"));
            net.add(std::move(d), skip);
        } else if (kind == "dropout") {
            net.add(nn::DropoutLayer{l.at("p").get<double>()}, skip);
        } else if (kind == "variational") {
            nn::VariationalDenseLayer v;
            v.act = static_cast<nn::Activation>(l.at("act").get<int>());
            v.mu_w = matrix_from_json(l.at("mu_w"));
            v.rho_w = matrix_from_json(l.at("rho_w"));
            v.mu_b = matrix_from_json(l.at("mu_b"));
            v.rho_b = matrix_from_json(l.at("rho_b"));
            net.add(std::move(v), skip);
        } else {
            throw std::runtime_error("model file: unknown layer kind '" + kind + "'");
        }
    }
    return net;
}

}  // namespace detail

inline void save_model(const std::string& path, const PosteriorEnsemble& e) {
    nlohmann::json j;
    j["magic"] = kModelMagic;
    j["version"] = kModelFormatVersion;
    j["method"] = static_cast<int>(e.method);
    j["samples"] = e.samples;
    j["train_seed"] = e.train_seed;
    j["predict_seed"] = e.predict_seed;
    j["trained"] = e.trained;
    j["arch"] = {{"input_dim", e.arch.input_dim},
                 {"hidden", e.arch.hidden},
                 {"latent_dim", e.arch.latent_dim},
                 {"skip_connections", e.arch.skip_connections}};
    j["networks"] = nlohmann::json::array();
    for (const auto& n : e.nets) j["networks"].push_back(detail::network_to_json(n));
    j["decoders"] = nlohmann::json::array();
    for (const auto& n : e.decoders) j["decoders"].push_back(detail::network_to_json(n));
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_model: cannot open " + path);
    out << j.dump();
}

inline PosteriorEnsemble load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_model: cannot open " + path);
    nlohmann::json j;
    in >> j;
    if (j.value("magic", "") != kModelMagic)
        throw std::runtime_error("load_model: " + path + " is not a model file");
    if (j.value("version", -1) != kModelFormatVersion)
        throw std::runtime_error("load_model: unsupported format version");
    PosteriorEnsemble e;
    e.method = static_cast<Method>(j.at("method").get<int>());
    e.samples = j.at("samples").get<std::size_t>();
    e.train_seed = j.at("train_seed").get<std::uint64_t>();
    e.predict_seed = j.at("predict_seed").get<std::uint64_t>();
    e.trained = j.at("trained").get<bool>();
    e.arch.input_dim = j.at("arch").at("input_dim").get<std::size_t>();
    e.arch.hidden = j.at("arch").at("hidden").get<std::vector<std::size_t>>();
    e.arch.latent_dim = j.at("arch").at("latent_dim").get<std::size_t>();
    e.arch.skip_connections = j.at("arch").at("skip_connections").get<bool>();
    for (const auto& n : j.at("networks")) e.nets.push_back(detail::network_from_json(n));
    for (const auto& n : j.at("decoders")) e.decoders.push_back(detail::network_from_json(n));
    return e;
}

}  // namespace bae::model

#endif  // BAE_SERIALIZE_HPP
