#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "koopid/errors.hpp"
#include "koopid/linalg.hpp"
#include "koopid/mlp.hpp"
#include "koopid/rng.hpp"

namespace koopid {

// How the lifted state is reconstructed from data at the start of a rollout:
// from the previous full state (plus previous input), or from windows of
// past outputs and inputs.
enum class EncoderMode { FullState, IOHistory };

inline const char* encoder_mode_name(EncoderMode m) {
    return m == EncoderMode::FullState ? "full_state" : "io_history";
}

inline EncoderMode encoder_mode_from_name(const std::string& s) {
    if (s == "full_state") return EncoderMode::FullState;
    if (s == "io_history") return EncoderMode::IOHistory;
    fail(ErrorCode::Parse, "unknown encoder mode '" + s + "'");
}

struct LiftedState {
    Vec z;
};

// Lifted linear model with a state-dependent input gain:
//   z_{k+1} = A z_k + B(z_k) u_k,     y_k = C z_k
// where B(z) is a feedforward net whose n_z*n_u outputs are reshaped
// row-major, and the encoder net maps past measurements to z. When
// constant_input_map is set, b_net is a single affine layer whose weights are
// structural zeros, so B(z) = reshape(bias) is an ordinary constant matrix
// (the LTI-input baseline); only the bias is a trainable parameter then.
struct KoopmanModel {
    EncoderMode mode = EncoderMode::FullState;
    std::size_t n_z = 0;
    std::size_t n_u = 0;
    std::size_t n_y = 0;
    std::size_t n_x = 0;  // FullState only
    std::size_t n_a = 0;  // IOHistory only: output lags
    std::size_t n_b = 0;  // IOHistory only: input lags

    Mat A;  // n_z x n_z
    Mat C;  // n_y x n_z
    std::optional<MLPParams> b_net;  // absent when n_u == 0
    MLPParams encoder;
    bool constant_input_map = false;

    bool autonomous() const { return n_u == 0; }

    std::size_t encoder_input_size() const {
        if (mode == EncoderMode::FullState) return n_x + n_u;
        return n_a * n_y + n_b * n_u;
    }
};

struct ModelSpec {
    EncoderMode mode = EncoderMode::FullState;
    std::size_t n_z = 0;
    std::size_t n_u = 0;
    std::size_t n_y = 0;
    std::size_t n_x = 0;
    std::size_t n_a = 0;
    std::size_t n_b = 0;
    std::vector<std::size_t> encoder_hidden;  // hidden layer widths of e
    std::vector<std::size_t> b_hidden;        // hidden layer widths of B(z)
    bool constant_input_map = false;
};

inline void validate(const ModelSpec& s) {
    if (s.n_z == 0 || s.n_y == 0) fail(ErrorCode::Config, "model: n_z and n_y must be positive");
    if (s.mode == EncoderMode::FullState) {
        if (s.n_x == 0) fail(ErrorCode::Config, "model: full_state mode needs n_x > 0");
    } else {
        if (s.n_a == 0 && s.n_b == 0)
            fail(ErrorCode::Config, "model: io_history mode needs n_a or n_b > 0");
        if (s.n_b > 0 && s.n_u == 0)
            fail(ErrorCode::Config, "model: input lags given but n_u = 0");
        if (s.n_a * s.n_y + s.n_b * s.n_u == 0)
            fail(ErrorCode::Config, "model: encoder would have an empty input");
    }
    if (s.constant_input_map && s.n_u == 0)
        fail(ErrorCode::Config, "model: constant input map requires n_u > 0");
}

// In-place modified Gram-Schmidt: columns of a become orthonormal. Returns
// false when a column degenerates (numerically rank-deficient draw).
inline bool orthonormalize_columns(Mat& a) {
    const std::size_t n = a.rows;
    for (std::size_t j = 0; j < a.cols; ++j) {
        for (std::size_t p = 0; p < j; ++p) {
            double dot = 0.0;
            for (std::size_t i = 0; i < n; ++i) dot += a(i, p) * a(i, j);
            for (std::size_t i = 0; i < n; ++i) a(i, j) -= dot * a(i, p);
        }
        double norm = 0.0;
        for (std::size_t i = 0; i < n; ++i) norm += a(i, j) * a(i, j);
        norm = std::sqrt(norm);
        if (norm < 1e-12) return false;
        for (std::size_t i = 0; i < n; ++i) a(i, j) /= norm;
    }
    return true;
}

// All parameters (C, input net, encoder) follow the same uniform
// initialization rule as mlp_init, with n_in = n_z for C. The state
// transition A is treated differently: a raw uniform draw has spectral
// radius near 1.45 (circular law), which makes a 150-step rollout explode
// by ~1e24 and strands the optimizer for hundreds of epochs, while shrinking
// the same draw leaves almost every mode dead after a few dozen steps. A is
// therefore initialized as 0.99 times an orthogonalized uniform draw: every
// mode starts alive, marginally contractive, and free to rotate. Component
// streams are forked from the seed so layouts can change without
// reshuffling unrelated parameters.
inline KoopmanModel model_init(const ModelSpec& spec, std::uint64_t seed) {
    validate(spec);
    KoopmanModel m;
    m.mode = spec.mode;
    m.n_z = spec.n_z;
    m.n_u = spec.n_u;
    m.n_y = spec.n_y;
    m.n_x = spec.mode == EncoderMode::FullState ? spec.n_x : 0;
    m.n_a = spec.mode == EncoderMode::IOHistory ? spec.n_a : 0;
    m.n_b = spec.mode == EncoderMode::IOHistory ? spec.n_b : 0;
    m.constant_input_map = spec.constant_input_map;

    // "model" stream domain; keeps parameter draws disjoint from any data
    // generation that shares the experiment seed
    Rng root = Rng(seed).fork(0x6D6F64656CULL);
    const double bound = std::sqrt(1.0 / std::sqrt(static_cast<double>(spec.n_z)));

    Rng rng_a = root.fork(0);
    m.A = Mat(spec.n_z, spec.n_z);
    do {
        for (double& v : m.A.a) v = rng_a.uniform(-bound, bound);
    } while (!orthonormalize_columns(m.A));
    for (double& v : m.A.a) v *= 0.99;

    Rng rng_c = root.fork(1);
    m.C = Mat(spec.n_y, spec.n_z);
    for (double& v : m.C.a) v = rng_c.uniform(-bound, bound);

    if (spec.n_u > 0) {
        Rng rng_b = root.fork(2);
        std::vector<std::size_t> sizes;
        sizes.push_back(spec.n_z);
        if (!spec.constant_input_map)
            for (std::size_t h : spec.b_hidden) sizes.push_back(h);
        sizes.push_back(spec.n_z * spec.n_u);
        MLPParams b = mlp_init(sizes, Activation::Tanh, Activation::Linear, rng_b);
        // The input gain starts near zero: a full-strength random B(z)
        // perturbs the stable A enough to blow up open-loop rollouts, and the
        // resulting gradient spikes leave the optimizer digging itself out
        // for most of the epoch budget. The coupling grows during training.
        for (double& v : b.weights.back().a) v *= 0.01;
        for (double& v : b.biases.back()) v *= 0.01;
        if (spec.constant_input_map)
            for (double& v : b.weights[0].a) v = 0.0;  // structural zeros, never trained
        m.b_net = std::move(b);
    }

    Rng rng_e = root.fork(3);
    std::vector<std::size_t> esizes;
    esizes.push_back(m.encoder_input_size());
    for (std::size_t h : spec.encoder_hidden) esizes.push_back(h);
    esizes.push_back(spec.n_z);
    m.encoder = mlp_init(esizes, Activation::Tanh, Activation::Linear, rng_e);
    return m;
}

// --- encoding -------------------------------------------------------------

inline LiftedState encode_full_state(const KoopmanModel& m, const Vec& x_prev, const Vec& u_prev) {
    if (m.mode != EncoderMode::FullState)
        fail(ErrorCode::Usage, "encode_full_state: model is not in full_state mode");
    if (x_prev.size() != m.n_x)
        fail(ErrorCode::Usage, "encode_full_state: state has length " +
                                   std::to_string(x_prev.size()) + ", expected " +
                                   std::to_string(m.n_x));
    if (u_prev.size() != m.n_u)
        fail(ErrorCode::Usage, "encode_full_state: input has length " +
                                   std::to_string(u_prev.size()) + ", expected " +
                                   std::to_string(m.n_u));
    Vec in;
    in.reserve(m.n_x + m.n_u);
    in.insert(in.end(), x_prev.begin(), x_prev.end());
    in.insert(in.end(), u_prev.begin(), u_prev.end());
    return LiftedState{mlp_forward(m.encoder, in)};
}

inline LiftedState encode_full_state(const KoopmanModel& m, const Vec& x_prev) {
    return encode_full_state(m, x_prev, Vec{});
}

// Histories are flattened oldest-to-newest, outputs before inputs. The
// flattening order is observable (tests pin it), so it must never change.
inline Vec flatten_history(const KoopmanModel& m, const std::vector<Vec>& y_hist,
                           const std::vector<Vec>& u_hist) {
    if (y_hist.size() != m.n_a)
        fail(ErrorCode::Usage, "encode_io_history: expected " + std::to_string(m.n_a) +
                                   " past outputs, got " + std::to_string(y_hist.size()));
    if (u_hist.size() != m.n_b)
        fail(ErrorCode::Usage, "encode_io_history: expected " + std::to_string(m.n_b) +
                                   " past inputs, got " + std::to_string(u_hist.size()));
    Vec in;
    in.reserve(m.n_a * m.n_y + m.n_b * m.n_u);
    for (const Vec& y : y_hist) {
        if (y.size() != m.n_y) fail(ErrorCode::Usage, "encode_io_history: bad output width");
        in.insert(in.end(), y.begin(), y.end());
    }
    for (const Vec& u : u_hist) {
        if (u.size() != m.n_u) fail(ErrorCode::Usage, "encode_io_history: bad input width");
        in.insert(in.end(), u.begin(), u.end());
    }
    return in;
}

inline LiftedState encode_io_history(const KoopmanModel& m, const std::vector<Vec>& y_hist,
                                     const std::vector<Vec>& u_hist) {
    if (m.mode != EncoderMode::IOHistory)
        fail(ErrorCode::Usage, "encode_io_history: model is not in io_history mode");
    return LiftedState{mlp_forward(m.encoder, flatten_history(m, y_hist, u_hist))};
}

// --- propagation ----------------------------------------------------------

// B(z): the n_z*n_u network outputs reshaped row-major, entry (i,j) taken
// from output index i*n_u + j.
inline Mat input_matrix(const KoopmanModel& m, const LiftedState& z) {
    if (m.autonomous()) fail(ErrorCode::Usage, "input_matrix: model has no input");
    if (z.z.size() != m.n_z) fail(ErrorCode::Shape, "input_matrix: lifted state has wrong length");
    Vec flat = mlp_forward(*m.b_net, z.z);
    Mat b(m.n_z, m.n_u);
    b.a = std::move(flat);
    return b;
}

inline LiftedState step(const KoopmanModel& m, const LiftedState& z, const Vec& u) {
    if (z.z.size() != m.n_z) fail(ErrorCode::Shape, "step: lifted state has wrong length");
    if (u.size() != m.n_u)
        fail(ErrorCode::Shape, "step: input has length " + std::to_string(u.size()) +
                                   ", expected " + std::to_string(m.n_u));
    Vec next = matvec(m.A, z.z);
    if (m.n_u > 0) {
        const Mat b = input_matrix(m, z);
        for (std::size_t i = 0; i < m.n_z; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < m.n_u; ++j) s += b(i, j) * u[j];
            next[i] += s;
        }
    }
    return LiftedState{std::move(next)};
}

inline LiftedState step(const KoopmanModel& m, const LiftedState& z) {
    return step(m, z, Vec{});
}

inline Vec output(const KoopmanModel& m, const LiftedState& z) {
    if (z.z.size() != m.n_z) fail(ErrorCode::Shape, "output: lifted state has wrong length");
    return matvec(m.C, z.z);
}

// Outputs y_0..y_T for a rollout of T = u_seq.size() steps from z0.
inline std::vector<Vec> simulate(const KoopmanModel& m, const LiftedState& z0,
                                 const std::vector<Vec>& u_seq) {
    std::vector<Vec> ys;
    ys.reserve(u_seq.size() + 1);
    LiftedState z = z0;
    ys.push_back(output(m, z));
    for (const Vec& u : u_seq) {
        z = step(m, z, u);
        ys.push_back(output(m, z));
    }
    return ys;
}

inline std::vector<Vec> simulate(const KoopmanModel& m, const LiftedState& z0, std::size_t steps) {
    if (!m.autonomous())
        fail(ErrorCode::Usage, "simulate: model has inputs, pass an input sequence");
    std::vector<Vec> ys;
    ys.reserve(steps + 1);
    LiftedState z = z0;
    ys.push_back(output(m, z));
    for (std::size_t k = 0; k < steps; ++k) {
        z = step(m, z);
        ys.push_back(output(m, z));
    }
    return ys;
}

}  // namespace koopid
