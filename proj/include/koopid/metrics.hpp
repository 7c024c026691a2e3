#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "koopid/dataset.hpp"
#include "koopid/encode.hpp"
#include "koopid/errors.hpp"
#include "koopid/model.hpp"

namespace koopid {

// Half-open window of 0-based sample indices to include when averaging
// residuals (everything outside is ignored). Used to cut the extrapolation
// region out of an arrowhead evaluation.
struct IndexRange {
    std::size_t begin = 0;
    std::size_t end = 0;
};

// Root mean squared residual over samples k = k0..M (1-based, as the error
// measure is usually quoted), with the squared 2-norm taken across channels.
inline double section_rms(const std::vector<Vec>& y_hat, const std::vector<Vec>& y,
                          std::size_t k0) {
    if (y_hat.size() != y.size()) fail(ErrorCode::Shape, "section_rms: sequences not aligned");
    const std::size_t m = y.size();
    if (k0 < 1 || k0 > m)
        fail(ErrorCode::Usage, "section_rms: k0 = " + std::to_string(k0) +
                                   " outside 1.." + std::to_string(m));
    double s = 0.0;
    for (std::size_t k = k0 - 1; k < m; ++k) {
        if (y_hat[k].size() != y[k].size()) fail(ErrorCode::Shape, "section_rms: channel mismatch");
        for (std::size_t c = 0; c < y[k].size(); ++c) {
            const double d = y_hat[k][c] - y[k][c];
            s += d * d;
        }
    }
    return std::sqrt(s / static_cast<double>(m - k0 + 1));
}

struct ChannelStats {
    double rms = 0.0;
    double sigma = 0.0;
    double nrms = 0.0;
};

// Simulation-error report for one dataset. Aggregate RMS is the mean of the
// per-section RMS; NRMS divides by the standard deviation of all outputs in
// the dataset, per channel, and channel values are averaged for multichannel
// data.
struct EvalReport {
    std::size_t k0 = 1;  // 1-based index of the first sample entering the averages
    std::optional<IndexRange> mask;
    std::vector<double> section_rms_joint;  // per section, 2-norm across channels
    double rms_joint = 0.0;
    std::vector<ChannelStats> channels;
    double rms = 0.0;   // mean of per-channel rms
    double nrms = 0.0;  // mean of per-channel nrms
    // Aligned with the dataset sections. Samples before k0 hold the measured
    // values (no prediction exists there); residuals are zero on that prefix.
    std::vector<std::vector<Vec>> predictions;
    std::vector<std::vector<Vec>> residuals;
};

// Core of the error measure, shared by the model-driven evaluation and by
// tests that feed hand-made prediction sequences.
inline EvalReport evaluate_predictions(const std::vector<std::vector<Vec>>& y_hat,
                                       const std::vector<std::vector<Vec>>& y, std::size_t k0,
                                       std::optional<IndexRange> mask = std::nullopt) {
    if (y_hat.size() != y.size() || y.empty())
        fail(ErrorCode::Usage, "evaluate: need equally many prediction and data sections");
    const std::size_t ny = y.front().front().size();

    EvalReport rep;
    rep.k0 = k0;
    rep.mask = mask;
    rep.predictions = y_hat;

    auto included = [&](std::size_t k) {
        if (k + 1 < k0) return false;
        if (mask && (k < mask->begin || k >= mask->end)) return false;
        return true;
    };

    // per-channel accumulation across sections
    std::vector<double> channel_rms_sum(ny, 0.0);
    for (std::size_t s = 0; s < y.size(); ++s) {
        const std::size_t m = y[s].size();
        if (y_hat[s].size() != m) fail(ErrorCode::Shape, "evaluate: section " + std::to_string(s) +
                                                             " predictions not aligned");
        std::vector<Vec> resid(m, Vec(ny, 0.0));
        double joint = 0.0;
        std::vector<double> per_channel(ny, 0.0);
        std::size_t count = 0;
        for (std::size_t k = 0; k < m; ++k) {
            for (std::size_t c = 0; c < ny; ++c)
                resid[k][c] = y_hat[s][k][c] - y[s][k][c];
            if (!included(k)) continue;
            ++count;
            for (std::size_t c = 0; c < ny; ++c) {
                const double d = resid[k][c];
                joint += d * d;
                per_channel[c] += d * d;
            }
        }
        if (count == 0)
            fail(ErrorCode::Evaluation, "evaluate: no samples left after k0/mask in section " +
                                            std::to_string(s));
        rep.section_rms_joint.push_back(std::sqrt(joint / static_cast<double>(count)));
        for (std::size_t c = 0; c < ny; ++c)
            channel_rms_sum[c] += std::sqrt(per_channel[c] / static_cast<double>(count));
        rep.residuals.push_back(std::move(resid));
    }

    const double ns = static_cast<double>(y.size());
    for (double v : rep.section_rms_joint) rep.rms_joint += v;
    rep.rms_joint /= ns;

    // sigma per channel over every output sample of the dataset
    for (std::size_t c = 0; c < ny; ++c) {
        double mean = 0.0;
        std::size_t n = 0;
        for (const auto& sec : y)
            for (const Vec& yk : sec) {
                mean += yk[c];
                ++n;
            }
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (const auto& sec : y)
            for (const Vec& yk : sec) {
                const double d = yk[c] - mean;
                var += d * d;
            }
        var /= static_cast<double>(n);
        if (var == 0.0)
            fail(ErrorCode::Evaluation,
                 "evaluate: output channel " + std::to_string(c + 1) + " has zero variance");
        ChannelStats st;
        st.sigma = std::sqrt(var);
        st.rms = channel_rms_sum[c] / ns;
        st.nrms = st.rms / st.sigma;
        rep.channels.push_back(st);
    }
    for (const ChannelStats& st : rep.channels) {
        rep.rms += st.rms;
        rep.nrms += st.nrms;
    }
    rep.rms /= static_cast<double>(ny);
    rep.nrms /= static_cast<double>(ny);
    return rep;
}

// Encodes each section once at the earliest valid index, simulates the rest
// of the section open loop, and scores the result.
inline EvalReport evaluate(const KoopmanModel& model, const Dataset& ds,
                           std::optional<IndexRange> mask = std::nullopt) {
    if (ds.empty()) fail(ErrorCode::Usage, "evaluate: dataset is empty");
    const std::size_t b = burn_in(model);

    std::vector<std::vector<Vec>> y_hat, y_true;
    for (const Trajectory& traj : ds.trajectories) {
        check_model_data(model, traj);
        const std::size_t m = traj.length();
        if (m < b + 1)
            fail(ErrorCode::Evaluation, "evaluate: section too short for one encoding");
        std::vector<Vec> pred(traj.outputs.begin(), traj.outputs.begin() + b);
        LiftedState z = encode_at(model, traj, b);
        pred.push_back(output(model, z));
        for (std::size_t k = b; k + 1 < m; ++k) {
            if (model.n_u > 0)
                z = step(model, z, traj.inputs[k]);
            else
                z = step(model, z);
            pred.push_back(output(model, z));
        }
        y_hat.push_back(std::move(pred));
        y_true.push_back(traj.outputs);
    }
    return evaluate_predictions(y_hat, y_true, b + 1, mask);
}

// --- serialization ----------------------------------------------------------

inline nlohmann::json report_to_json(const EvalReport& rep) {
    nlohmann::json j;
    j["format"] = "koopid-eval-report";
    j["k0"] = rep.k0;
    if (rep.mask) j["mask"] = {{"begin", rep.mask->begin}, {"end", rep.mask->end}};
    else j["mask"] = nullptr;
    j["nrms"] = rep.nrms;
    j["rms"] = rep.rms;
    j["rms_joint"] = rep.rms_joint;
    j["section_rms"] = rep.section_rms_joint;
    nlohmann::json chans = nlohmann::json::array();
    for (const ChannelStats& st : rep.channels)
        chans.push_back({{"rms", st.rms}, {"sigma", st.sigma}, {"nrms", st.nrms}});
    j["channels"] = std::move(chans);
    return j;
}

inline void save_report(const EvalReport& rep, const std::string& path) {
    std::ofstream out(path);
    if (!out) fail(ErrorCode::Io, "cannot open '" + path + "' for writing");
    out << report_to_json(rep).dump(2) << '\n';
    if (!out) fail(ErrorCode::Io, "write failed for '" + path + "'");
}

// One CSV per section: sample index, measured outputs, simulated outputs and
// residuals side by side (for two-channel state data the y/y_sim column
// pairs are exactly the phase-portrait coordinates).
inline void write_eval_csvs(const EvalReport& rep, const Dataset& ds, const std::string& dir,
                            const std::string& prefix) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) fail(ErrorCode::Io, "cannot create directory '" + dir + "'");
    for (std::size_t s = 0; s < ds.trajectories.size(); ++s) {
        char name[64];
        std::snprintf(name, sizeof(name), "%s_%03zu.csv", prefix.c_str(), s);
        std::ofstream out((fs::path(dir) / name).string());
        if (!out) fail(ErrorCode::Io, "cannot write simulation CSV in '" + dir + "'");
        const Trajectory& traj = ds.trajectories[s];
        const std::size_t ny = traj.n_y();
        out << "k";
        for (std::size_t c = 0; c < ny; ++c)
            out << ",y" << c + 1 << ",y" << c + 1 << "_sim,e" << c + 1;
        out << '\n';
        for (std::size_t k = 0; k < traj.length(); ++k) {
            out << k;
            for (std::size_t c = 0; c < ny; ++c)
                out << ',' << format_double(traj.outputs[k][c]) << ','
                    << format_double(rep.predictions[s][k][c]) << ','
                    << format_double(rep.residuals[s][k][c]);
            out << '\n';
        }
    }
}

}  // namespace koopid
