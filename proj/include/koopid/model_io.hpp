#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "koopid/errors.hpp"
#include "koopid/model.hpp"

namespace koopid {

using json = nlohmann::json;

inline json to_json(const Mat& m) {
    json rows = json::array();
    for (std::size_t i = 0; i < m.rows; ++i) {
        json row = json::array();
        for (std::size_t j = 0; j < m.cols; ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline Mat mat_from_json(const json& j) {
    if (!j.is_array() || j.empty()) fail(ErrorCode::Parse, "matrix: expected nonempty array");
    Mat m(j.size(), j[0].size());
    for (std::size_t i = 0; i < m.rows; ++i) {
        if (j[i].size() != m.cols) fail(ErrorCode::Parse, "matrix: ragged rows");
        for (std::size_t j2 = 0; j2 < m.cols; ++j2) m(i, j2) = j[i][j2].get<double>();
    }
    return m;
}

inline json to_json(const MLPParams& p) {
    json j;
    j["layer_sizes"] = p.layer_sizes;
    j["hidden_activation"] = activation_name(p.hidden_activation);
    j["output_activation"] = activation_name(p.output_activation);
    json ws = json::array();
    for (const Mat& w : p.weights) ws.push_back(to_json(w));
    j["weights"] = std::move(ws);
    j["biases"] = p.biases;
    return j;
}

inline MLPParams mlp_from_json(const json& j) {
    MLPParams p;
    p.layer_sizes = j.at("layer_sizes").get<std::vector<std::size_t>>();
    p.hidden_activation = activation_from_name(j.at("hidden_activation").get<std::string>());
    p.output_activation = activation_from_name(j.at("output_activation").get<std::string>());
    for (const json& w : j.at("weights")) p.weights.push_back(mat_from_json(w));
    p.biases = j.at("biases").get<std::vector<Vec>>();
    if (p.weights.size() + 1 != p.layer_sizes.size() || p.biases.size() != p.weights.size())
        fail(ErrorCode::Parse, "network: inconsistent layer count");
    for (std::size_t l = 0; l < p.weights.size(); ++l)
        if (p.weights[l].rows != p.layer_sizes[l + 1] || p.weights[l].cols != p.layer_sizes[l] ||
            p.biases[l].size() != p.layer_sizes[l + 1])
            fail(ErrorCode::Parse, "network: weight/bias shapes do not match layer sizes");
    return p;
}

inline json model_to_json(const KoopmanModel& m) {
    json j;
    j["format"] = "koopid-model";
    j["version"] = 1;
    j["mode"] = encoder_mode_name(m.mode);
    j["n_z"] = m.n_z;
    j["n_u"] = m.n_u;
    j["n_y"] = m.n_y;
    j["n_x"] = m.n_x;
    j["n_a"] = m.n_a;
    j["n_b"] = m.n_b;
    j["constant_input_map"] = m.constant_input_map;
    j["A"] = to_json(m.A);
    j["C"] = to_json(m.C);
    j["b_net"] = m.b_net ? to_json(*m.b_net) : json(nullptr);
    j["encoder"] = to_json(m.encoder);
    return j;
}

inline KoopmanModel model_from_json_impl(const json& j) {
    if (j.value("format", "") != "koopid-model")
        fail(ErrorCode::Parse, "model file: missing or wrong format tag");
    KoopmanModel m;
    m.mode = encoder_mode_from_name(j.at("mode").get<std::string>());
    m.n_z = j.at("n_z").get<std::size_t>();
    m.n_u = j.at("n_u").get<std::size_t>();
    m.n_y = j.at("n_y").get<std::size_t>();
    m.n_x = j.at("n_x").get<std::size_t>();
    m.n_a = j.at("n_a").get<std::size_t>();
    m.n_b = j.at("n_b").get<std::size_t>();
    m.constant_input_map = j.at("constant_input_map").get<bool>();
    m.A = mat_from_json(j.at("A"));
    m.C = mat_from_json(j.at("C"));
    if (!j.at("b_net").is_null()) m.b_net = mlp_from_json(j.at("b_net"));
    m.encoder = mlp_from_json(j.at("encoder"));

    if (m.A.rows != m.n_z || m.A.cols != m.n_z) fail(ErrorCode::Parse, "model file: A shape");
    if (m.C.rows != m.n_y || m.C.cols != m.n_z) fail(ErrorCode::Parse, "model file: C shape");
    if (m.encoder.input_size() != m.encoder_input_size() || m.encoder.output_size() != m.n_z)
        fail(ErrorCode::Parse, "model file: encoder shape");
    if (m.n_u > 0) {
        if (!m.b_net) fail(ErrorCode::Parse, "model file: missing input network");
        if (m.b_net->input_size() != m.n_z || m.b_net->output_size() != m.n_z * m.n_u)
            fail(ErrorCode::Parse, "model file: input network shape");
    } else if (m.b_net) {
        fail(ErrorCode::Parse, "model file: input network present but n_u = 0");
    }
    return m;
}

inline KoopmanModel model_from_json(const json& j) {
    try {
        return model_from_json_impl(j);
    } catch (const json::exception& e) {
        fail(ErrorCode::Parse, std::string("model file: ") + e.what());
    }
}

inline void save_model(const KoopmanModel& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) fail(ErrorCode::Io, "cannot open '" + path + "' for writing");
    out << model_to_json(m).dump(2) << '\n';
    if (!out) fail(ErrorCode::Io, "write failed for '" + path + "'");
}

inline KoopmanModel load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::Io, "cannot open model file '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        fail(ErrorCode::Parse, "model file '" + path + "': " + e.what());
    }
    return model_from_json(j);
}

}  // namespace koopid
