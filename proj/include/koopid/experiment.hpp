#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <json.hpp>

#include "koopid/analytic.hpp"
#include "koopid/datagen.hpp"
#include "koopid/dataset.hpp"
#include "koopid/errors.hpp"
#include "koopid/metrics.hpp"
#include "koopid/model.hpp"
#include "koopid/model_io.hpp"
#include "koopid/training.hpp"

namespace koopid {

// --- experiment configuration -------------------------------------------------

// Where the data comes from: a built-in generator, an existing dataset
// directory, or an external CSV with a schema.
struct DataConfig {
    std::string source;  // "vdp" | "duffing" | "dir" | "csv"
    VdpConfig vdp;
    DuffingConfig duffing;
    std::string dir;
    std::string csv;
    std::string schema;
};

struct ExperimentConfig {
    std::string name = "experiment";
    std::uint64_t seed = 1;
    std::string data_dir;  // where generated data is written / read from
    std::string out_dir;   // training and evaluation outputs
    DataConfig data;
    ModelSpec model;
    TrainConfig train;
};

namespace detail {

template <class... Keys>
inline void reject_unknown_keys(const nlohmann::json& j, const std::string& where,
                                Keys... allowed) {
    for (const auto& item : j.items()) {
        bool ok = ((item.key() == allowed) || ...);
        if (!ok) fail(ErrorCode::Config, where + ": unknown key '" + item.key() + "'");
    }
}

}  // namespace detail

inline VdpConfig vdp_config_from_json(const nlohmann::json& j) {
    detail::reject_unknown_keys(j, "data", "generator", "n_train", "n_val", "n_test", "length",
                                "mu", "dt", "snr_db");
    VdpConfig c;
    c.n_train = j.value("n_train", c.n_train);
    c.n_val = j.value("n_val", c.n_val);
    c.n_test = j.value("n_test", c.n_test);
    c.length = j.value("length", c.length);
    c.mu = j.value("mu", c.mu);
    c.dt = j.value("dt", c.dt);
    c.snr_db = j.value("snr_db", c.snr_db);
    return c;
}

inline DuffingConfig duffing_config_from_json(const nlohmann::json& j) {
    detail::reject_unknown_keys(j, "data", "generator", "mass", "damping", "k1", "k3", "dt",
                                "substeps", "multisine_rms", "f_min", "f_max", "arrowhead_peak",
                                "arrowhead_cutoff", "n_train", "n_val", "n_test", "train_length",
                                "val_length", "test_length", "arrowhead_length", "snr_db",
                                "y_bound");
    DuffingConfig c;
    c.mass = j.value("mass", c.mass);
    c.damping = j.value("damping", c.damping);
    c.k1 = j.value("k1", c.k1);
    c.k3 = j.value("k3", c.k3);
    c.dt = j.value("dt", c.dt);
    c.substeps = j.value("substeps", c.substeps);
    c.multisine_rms = j.value("multisine_rms", c.multisine_rms);
    c.f_min = j.value("f_min", c.f_min);
    c.f_max = j.value("f_max", c.f_max);
    c.arrowhead_peak = j.value("arrowhead_peak", c.arrowhead_peak);
    c.arrowhead_cutoff = j.value("arrowhead_cutoff", c.arrowhead_cutoff);
    c.n_train = j.value("n_train", c.n_train);
    c.n_val = j.value("n_val", c.n_val);
    c.n_test = j.value("n_test", c.n_test);
    c.train_length = j.value("train_length", c.train_length);
    c.val_length = j.value("val_length", c.val_length);
    c.test_length = j.value("test_length", c.test_length);
    c.arrowhead_length = j.value("arrowhead_length", c.arrowhead_length);
    if (j.contains("snr_db") && !j.at("snr_db").is_null()) c.snr_db = j.at("snr_db").get<double>();
    c.y_bound = j.value("y_bound", c.y_bound);
    return c;
}

inline DataConfig data_config_from_json(const nlohmann::json& j) {
    DataConfig d;
    if (j.contains("generator")) {
        d.source = j.at("generator").get<std::string>();
        if (d.source == "vdp") d.vdp = vdp_config_from_json(j);
        else if (d.source == "duffing") d.duffing = duffing_config_from_json(j);
        else fail(ErrorCode::Config, "data: unknown generator '" + d.source + "'");
    } else if (j.contains("dir")) {
        detail::reject_unknown_keys(j, "data", "dir");
        d.source = "dir";
        d.dir = j.at("dir").get<std::string>();
    } else if (j.contains("csv")) {
        detail::reject_unknown_keys(j, "data", "csv", "schema");
        d.source = "csv";
        d.csv = j.at("csv").get<std::string>();
        d.schema = j.at("schema").get<std::string>();
    } else {
        fail(ErrorCode::Config, "data: need one of 'generator', 'dir' or 'csv'");
    }
    return d;
}

inline ModelSpec model_spec_from_json(const nlohmann::json& j) {
    detail::reject_unknown_keys(j, "model", "mode", "n_z", "n_u", "n_y", "n_x", "n_a", "n_b",
                                "encoder_hidden", "b_hidden", "constant_input_map");
    ModelSpec s;
    s.mode = encoder_mode_from_name(j.value("mode", "full_state"));
    s.n_z = j.value("n_z", s.n_z);
    s.n_u = j.value("n_u", s.n_u);
    s.n_y = j.value("n_y", s.n_y);
    s.n_x = j.value("n_x", s.n_x);
    s.n_a = j.value("n_a", s.n_a);
    s.n_b = j.value("n_b", s.n_b);
    s.encoder_hidden = j.value("encoder_hidden", s.encoder_hidden);
    s.b_hidden = j.value("b_hidden", s.b_hidden);
    s.constant_input_map = j.value("constant_input_map", s.constant_input_map);
    return s;
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
    detail::reject_unknown_keys(j, "train", "horizon", "batch_size", "alpha", "beta1", "beta2",
                                "epsilon", "epochs", "shuffle", "workers");
    TrainConfig c;
    c.T = j.value("horizon", c.T);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.alpha = j.value("alpha", c.alpha);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.epsilon = j.value("epsilon", c.epsilon);
    c.epochs = j.value("epochs", c.epochs);
    c.shuffle = j.value("shuffle", c.shuffle);
    c.workers = j.value("workers", c.workers);
    return c;
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
    try {
        detail::reject_unknown_keys(j, "config", "name", "seed", "data_dir", "out_dir", "data",
                                    "model", "train");
        ExperimentConfig c;
        c.name = j.value("name", c.name);
        c.seed = j.value("seed", c.seed);
        c.data = data_config_from_json(j.at("data"));
        c.model = model_spec_from_json(j.at("model"));
        c.train = train_config_from_json(j.at("train"));
        c.data_dir = j.value("data_dir", "data/" + c.name);
        c.out_dir = j.value("out_dir", "runs/" + c.name);
        return c;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::Config, std::string("config: ") + e.what());
    }
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::Io, "cannot open config file '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::Parse, "config '" + path + "': " + e.what());
    }
    return config_from_json(j);
}

inline nlohmann::json config_to_json(const ExperimentConfig& c) {
    nlohmann::json j;
    j["name"] = c.name;
    j["seed"] = c.seed;
    j["data_dir"] = c.data_dir;
    j["out_dir"] = c.out_dir;
    nlohmann::json d;
    if (c.data.source == "vdp") {
        d["generator"] = "vdp";
        d["n_train"] = c.data.vdp.n_train;
        d["n_val"] = c.data.vdp.n_val;
        d["n_test"] = c.data.vdp.n_test;
        d["length"] = c.data.vdp.length;
        d["mu"] = c.data.vdp.mu;
        d["dt"] = c.data.vdp.dt;
        d["snr_db"] = c.data.vdp.snr_db;
    } else if (c.data.source == "duffing") {
        const DuffingConfig& g = c.data.duffing;
        d["generator"] = "duffing";
        d["mass"] = g.mass;
        d["damping"] = g.damping;
        d["k1"] = g.k1;
        d["k3"] = g.k3;
        d["dt"] = g.dt;
        d["substeps"] = g.substeps;
        d["multisine_rms"] = g.multisine_rms;
        d["f_min"] = g.f_min;
        d["f_max"] = g.f_max;
        d["arrowhead_peak"] = g.arrowhead_peak;
        d["arrowhead_cutoff"] = g.arrowhead_cutoff;
        d["n_train"] = g.n_train;
        d["n_val"] = g.n_val;
        d["n_test"] = g.n_test;
        d["train_length"] = g.train_length;
        d["val_length"] = g.val_length;
        d["test_length"] = g.test_length;
        d["arrowhead_length"] = g.arrowhead_length;
        if (g.snr_db) d["snr_db"] = *g.snr_db;
        d["y_bound"] = g.y_bound;
    } else if (c.data.source == "dir") {
        d["dir"] = c.data.dir;
    } else {
        d["csv"] = c.data.csv;
        d["schema"] = c.data.schema;
    }
    j["data"] = std::move(d);
    nlohmann::json m;
    m["mode"] = encoder_mode_name(c.model.mode);
    m["n_z"] = c.model.n_z;
    m["n_u"] = c.model.n_u;
    m["n_y"] = c.model.n_y;
    m["n_x"] = c.model.n_x;
    m["n_a"] = c.model.n_a;
    m["n_b"] = c.model.n_b;
    m["encoder_hidden"] = c.model.encoder_hidden;
    m["b_hidden"] = c.model.b_hidden;
    m["constant_input_map"] = c.model.constant_input_map;
    j["model"] = std::move(m);
    nlohmann::json t;
    t["horizon"] = c.train.T;
    t["batch_size"] = c.train.batch_size;
    t["alpha"] = c.train.alpha;
    t["beta1"] = c.train.beta1;
    t["beta2"] = c.train.beta2;
    t["epsilon"] = c.train.epsilon;
    t["epochs"] = c.train.epochs;
    t["shuffle"] = c.train.shuffle;
    t["workers"] = c.train.workers;
    j["train"] = std::move(t);
    return j;
}

// --- presets --------------------------------------------------------------------

// Built-in experiment definitions; `vdp` is the full-scale oscillator run,
// `vdp-desk` a reduced version sized for a laptop-class CPU, and
// `silverbox-synthetic` the forced Duffing stand-in with multisine/arrowhead
// test records.
inline ExperimentConfig preset(const std::string& name) {
    ExperimentConfig c;
    c.name = name;
    c.seed = 1;
    if (name == "vdp" || name == "vdp-desk") {
        c.data.source = "vdp";
        c.model.mode = EncoderMode::FullState;
        c.model.n_x = 2;
        c.model.n_y = 2;
        c.model.n_u = 0;
        c.model.n_z = 100;
        c.model.encoder_hidden = {100};
        c.train.T = 149;
        c.train.batch_size = 256;
        c.train.alpha = 1e-4;
        c.train.beta1 = 0.7;
        c.train.beta2 = 0.9;
        c.train.epsilon = 1e-8;
        c.train.epochs = 300;
        if (name == "vdp-desk") {
            c.data.vdp.n_train = 20;
            c.data.vdp.n_val = 5;
            c.data.vdp.n_test = 5;
            c.model.n_z = 40;
        }
    } else if (name == "silverbox-synthetic") {
        c.data.source = "duffing";
        c.model.mode = EncoderMode::IOHistory;
        c.model.n_y = 1;
        c.model.n_u = 1;
        c.model.n_z = 20;
        c.model.n_a = 10;
        c.model.n_b = 10;
        c.model.encoder_hidden = {40, 40};
        c.model.b_hidden = {40};
        c.train.T = 49;
        c.train.batch_size = 256;
        c.train.alpha = 1e-3;
        c.train.beta1 = 0.9;
        c.train.beta2 = 0.999;
        c.train.epsilon = 1e-8;
        c.train.epochs = 300;
    } else {
        fail(ErrorCode::Config, "unknown preset '" + name + "' (have: vdp, vdp-desk, "
                                "silverbox-synthetic)");
    }
    c.data_dir = "data/" + name;
    c.out_dir = "runs/" + name;
    return c;
}

// --- commands --------------------------------------------------------------------

inline DatasetBundle make_bundle(const ExperimentConfig& cfg) {
    if (cfg.data.source == "vdp") return generate_vdp_dataset(cfg.data.vdp, cfg.seed);
    if (cfg.data.source == "duffing") return generate_duffing_dataset(cfg.data.duffing, cfg.seed);
    if (cfg.data.source == "dir") return load_dataset_dir(cfg.data.dir);
    if (cfg.data.source == "csv") return split_csv(cfg.data.csv, load_schema(cfg.data.schema));
    fail(ErrorCode::Config, "data source is not set");
}

struct GenerateResult {
    std::string dir;
    std::size_t n_trajectories = 0;
};

inline GenerateResult cmd_generate(const ExperimentConfig& cfg) {
    if (cfg.data.source != "vdp" && cfg.data.source != "duffing")
        fail(ErrorCode::Config, "generate: config must name a generator");
    const DatasetBundle bundle = make_bundle(cfg);
    nlohmann::json params = config_to_json(cfg)["data"];
    save_dataset_dir(bundle, cfg.data_dir, cfg.data.source, params, cfg.seed);
    GenerateResult res;
    res.dir = cfg.data_dir;
    res.n_trajectories = bundle.train.size() + bundle.validation.size() + bundle.test.size() +
                         bundle.arrowhead.size();
    return res;
}

struct TrainResult {
    std::string model_path;
    std::string report_path;
    std::string log_path;
    TrainReport report;
};

inline nlohmann::json train_report_to_json(const TrainReport& r) {
    nlohmann::json j;
    j["format"] = "koopid-train-report";
    j["best_epoch"] = r.best_epoch;
    j["best_val_nrms"] = r.best_val_nrms;
    j["epoch_loss"] = r.epoch_loss;
    j["epoch_val_nrms"] = r.epoch_val_nrms;
    return j;
}

// Trains from a fresh deterministic initialization (or from a saved model
// when resume_path is given), logging one line per epoch to stdout and to
// <out_dir>/train.log, and persists the best-validation snapshot.
inline TrainResult cmd_train(const ExperimentConfig& cfg, const std::string& resume_path = "",
                             bool quiet = false) {
    namespace fs = std::filesystem;
    DatasetBundle bundle = make_bundle(cfg);
    if (bundle.train.empty() || bundle.validation.empty())
        fail(ErrorCode::Config, "train: dataset has no training or validation trajectories");

    KoopmanModel model =
        resume_path.empty() ? model_init(cfg.model, cfg.seed) : load_model(resume_path);

    std::error_code ec;
    fs::create_directories(cfg.out_dir, ec);
    if (ec) fail(ErrorCode::Io, "cannot create output directory '" + cfg.out_dir + "'");

    TrainResult res;
    res.log_path = (fs::path(cfg.out_dir) / "train.log").string();
    std::ofstream log_file(res.log_path, std::ios::app);
    if (!log_file) fail(ErrorCode::Io, "cannot open log file '" + res.log_path + "'");

    const TrainLogFn log = [&](const std::string& line) {
        if (!quiet) std::cout << line << '\n' << std::flush;
        log_file << line << '\n' << std::flush;
    };

    res.report = train(model, bundle.train, bundle.validation, cfg.train, log);

    res.model_path = (fs::path(cfg.out_dir) / "model_best.json").string();
    save_model(res.report.best_model, res.model_path);
    res.report_path = (fs::path(cfg.out_dir) / "train_report.json").string();
    std::ofstream rep(res.report_path);
    if (!rep) fail(ErrorCode::Io, "cannot write train report");
    rep << train_report_to_json(res.report).dump(2) << '\n';
    return res;
}

struct EvalOptions {
    std::string role = "test";  // train | validation | test | arrowhead
    std::optional<IndexRange> mask;
    std::string csv_prefix = "sim";
};

struct EvalResult {
    std::string report_path;
    EvalReport report;
};

inline EvalResult cmd_eval(const std::string& model_path, const std::string& data_dir,
                           const EvalOptions& opt, const std::string& out_dir) {
    namespace fs = std::filesystem;
    const KoopmanModel model = load_model(model_path);
    const DatasetBundle bundle = load_dataset_dir(data_dir);
    const Dataset* ds = nullptr;
    if (opt.role == "train") ds = &bundle.train;
    else if (opt.role == "validation") ds = &bundle.validation;
    else if (opt.role == "test") ds = &bundle.test;
    else if (opt.role == "arrowhead") ds = &bundle.arrowhead;
    else fail(ErrorCode::Usage, "eval: unknown role '" + opt.role + "'");
    if (ds->empty()) fail(ErrorCode::Usage, "eval: dataset has no '" + opt.role + "' trajectories");

    EvalResult res;
    res.report = evaluate(model, *ds, opt.mask);

    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) fail(ErrorCode::Io, "cannot create output directory '" + out_dir + "'");
    res.report_path = (fs::path(out_dir) / "eval_report.json").string();
    save_report(res.report, res.report_path);
    write_eval_csvs(res.report, *ds, out_dir, opt.csv_prefix);
    return res;
}

// Side-by-side rollout of the polynomial system and its exact lifted linear
// form: first from a lifted initial condition on the constraint manifold
// (the two stay equal), then from one pushed off the manifold by psi_offset
// (the second coordinate separates immediately when c != 0).
inline void cmd_demo_embedding(double a, double b, double c, const Vec& x0, std::size_t steps,
                               double psi_offset, std::ostream& os) {
    const PolySystem sys{a, b, c};
    const Mat A = poly_koopman(sys);

    os << "system: x1+ = a x1, x2+ = b x2 - c x1^2 with a=" << a << " b=" << b << " c=" << c
       << "\n";
    os << "lift:   z = (x1, x2, x1^2), constraint psi(z) = z1^2 - z3\n\n";

    os << "on-manifold start z0 = lift(x0), psi(z0) = 0:\n";
    os << "   k          x1          x2          z1          z2          z3      psi(z)    max|x-z|\n";
    Vec x = x0;
    Vec z = poly_lift(x0);
    for (std::size_t k = 0; k <= steps; ++k) {
        const double dev = std::max(std::abs(x[0] - z[0]), std::abs(x[1] - z[1]));
        char line[160];
        std::snprintf(line, sizeof(line), "%4zu %11.4e %11.4e %11.4e %11.4e %11.4e %11.4e %11.4e\n",
                      k, x[0], x[1], z[0], z[1], z[2], constraint_psi(z), dev);
        os << line;
        x = poly_step(sys, x);
        z = matvec(A, z);
    }

    os << "\noff-manifold start z0' = lift(x0) + (0, 0, " << psi_offset
       << "), psi(z0') = " << -psi_offset << ":\n";
    os << "   k  x2(nonlinear)   z2(linear)      |diff|      psi(z)\n";
    x = x0;
    z = poly_lift(x0);
    z[2] += psi_offset;
    for (std::size_t k = 0; k <= steps; ++k) {
        char line[160];
        std::snprintf(line, sizeof(line), "%4zu %14.4e %12.4e %11.4e %11.4e\n", k, x[1], z[1],
                      std::abs(x[1] - z[1]), constraint_psi(z));
        os << line;
        x = poly_step(sys, x);
        z = matvec(A, z);
    }
}

}  // namespace koopid
