#pragma once

#include <algorithm>
#include <string>

#include "koopid/dataset.hpp"
#include "koopid/errors.hpp"
#include "koopid/model.hpp"

namespace koopid {

// Earliest sample index of a trajectory at which the encoder can be applied:
// one past sample in full-state mode, the longest lag window otherwise.
inline std::size_t burn_in(const KoopmanModel& m) {
    return m.mode == EncoderMode::FullState ? 1 : std::max(m.n_a, m.n_b);
}

inline void check_model_data(const KoopmanModel& m, const Trajectory& traj) {
    if (traj.n_y() != m.n_y)
        fail(ErrorCode::Usage, "trajectory has " + std::to_string(traj.n_y()) +
                                   " output channels, model expects " + std::to_string(m.n_y));
    if (m.n_u > 0 && traj.inputs.size() != traj.length())
        fail(ErrorCode::Usage, "model expects inputs but the trajectory has none");
    if (m.n_u > 0 && traj.n_u() != m.n_u)
        fail(ErrorCode::Usage, "trajectory has " + std::to_string(traj.n_u()) +
                                   " input channels, model expects " + std::to_string(m.n_u));
    if (m.mode == EncoderMode::FullState && state_series(traj).front().size() != m.n_x)
        fail(ErrorCode::Usage, "trajectory state width does not match the model's n_x");
}

// Assembles the encoder input for an encoding at sample k of a trajectory:
// (x_{k-1}, u_{k-1}) in full-state mode, flattened past output/input windows
// (oldest first, outputs before inputs) in IO-history mode.
inline void build_encoder_input(const KoopmanModel& m, const Trajectory& traj, std::size_t k,
                                Vec& in) {
    if (k < burn_in(m) || k >= traj.length())
        fail(ErrorCode::Usage, "encode: index " + std::to_string(k) +
                                   " outside the encodable range of a trajectory of length " +
                                   std::to_string(traj.length()));
    in.clear();
    if (m.mode == EncoderMode::FullState) {
        const std::vector<Vec>& xs = state_series(traj);
        const Vec& x = xs[k - 1];
        if (x.size() != m.n_x) fail(ErrorCode::Usage, "encode: trajectory state width mismatch");
        in.insert(in.end(), x.begin(), x.end());
        if (m.n_u > 0) {
            const Vec& u = traj.inputs[k - 1];
            if (u.size() != m.n_u) fail(ErrorCode::Usage, "encode: trajectory input width mismatch");
            in.insert(in.end(), u.begin(), u.end());
        }
    } else {
        for (std::size_t i = k - m.n_a; i < k; ++i) {
            const Vec& y = traj.outputs[i];
            if (y.size() != m.n_y) fail(ErrorCode::Usage, "encode: trajectory output width mismatch");
            in.insert(in.end(), y.begin(), y.end());
        }
        for (std::size_t i = k - m.n_b; i < k; ++i) {
            const Vec& u = traj.inputs[i];
            if (u.size() != m.n_u) fail(ErrorCode::Usage, "encode: trajectory input width mismatch");
            in.insert(in.end(), u.begin(), u.end());
        }
    }
}

inline LiftedState encode_at(const KoopmanModel& m, const Trajectory& traj, std::size_t k) {
    Vec in;
    build_encoder_input(m, traj, k, in);
    return LiftedState{mlp_forward(m.encoder, in)};
}

}  // namespace koopid
