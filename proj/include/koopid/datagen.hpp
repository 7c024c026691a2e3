#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "koopid/dataset.hpp"
#include "koopid/errors.hpp"
#include "koopid/linalg.hpp"
#include "koopid/rng.hpp"

namespace koopid {

// --- integrators ------------------------------------------------------------

// Classical fourth-order Runge-Kutta, one fixed step. f(x) -> dx/dt.
template <class F>
Vec rk4_step(F&& f, const Vec& x, double dt) {
    if (dt <= 0.0) fail(ErrorCode::Config, "rk4_step: dt must be positive");
    const Vec k1 = f(x);
    Vec xt(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) xt[i] = x[i] + 0.5 * dt * k1[i];
    const Vec k2 = f(xt);
    for (std::size_t i = 0; i < x.size(); ++i) xt[i] = x[i] + 0.5 * dt * k2[i];
    const Vec k3 = f(xt);
    for (std::size_t i = 0; i < x.size(); ++i) xt[i] = x[i] + dt * k3[i];
    const Vec k4 = f(xt);
    Vec next(x.size());
    for (std::size_t i = 0; i < x.size(); ++i)
        next[i] = x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    if (!all_finite(next)) fail(ErrorCode::Numeric, "rk4_step: non-finite state");
    return next;
}

// Same, with an input held constant over the step (zero-order hold).
template <class F>
Vec rk4_step(F&& f, const Vec& x, const Vec& u, double dt) {
    return rk4_step([&](const Vec& s) { return f(s, u); }, x, dt);
}

// --- Van der Pol ------------------------------------------------------------

// Unforced Van der Pol oscillator: x1' = x2, x2' = mu (1 - x1^2) x2 - x1.
inline Vec vdp_derivative(const Vec& x, double mu) {
    if (x.size() != 2) fail(ErrorCode::Shape, "vdp_derivative: state must have length 2");
    return Vec{x[1], mu * (1.0 - x[0] * x[0]) * x[1] - x[0]};
}

inline std::vector<Vec> simulate_vdp(const Vec& x0, std::size_t steps, double dt, double mu) {
    std::vector<Vec> xs;
    xs.reserve(steps + 1);
    xs.push_back(x0);
    for (std::size_t k = 0; k < steps; ++k)
        xs.push_back(rk4_step([mu](const Vec& x) { return vdp_derivative(x, mu); },
                              xs.back(), dt));
    return xs;
}

// --- noise ------------------------------------------------------------------

// Adds white Gaussian noise to every output channel, scaled so the ratio of
// the channel's empirical signal variance to the noise variance equals
// 10^(snr_db/10). Pass the clean trajectory; states/inputs are untouched.
inline Trajectory add_noise_snr(const Trajectory& clean, double snr_db, Rng& rng) {
    if (!std::isfinite(snr_db)) fail(ErrorCode::Config, "add_noise_snr: snr_db must be finite");
    const std::size_t n = clean.length();
    const std::size_t ny = clean.n_y();
    if (n == 0) fail(ErrorCode::Generation, "add_noise_snr: empty trajectory");

    Vec sigma(ny);
    for (std::size_t c = 0; c < ny; ++c) {
        double mean = 0.0;
        for (std::size_t k = 0; k < n; ++k) mean += clean.outputs[k][c];
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            const double d = clean.outputs[k][c] - mean;
            var += d * d;
        }
        var /= static_cast<double>(n);
        if (var == 0.0)
            fail(ErrorCode::Generation,
                 "add_noise_snr: channel " + std::to_string(c + 1) +
                     " has zero variance, SNR undefined");
        sigma[c] = std::sqrt(var / std::pow(10.0, snr_db / 10.0));
    }

    Trajectory noisy = clean;
    for (std::size_t k = 0; k < n; ++k)
        for (std::size_t c = 0; c < ny; ++c) noisy.outputs[k][c] += sigma[c] * rng.normal();
    return noisy;
}

// --- Van der Pol dataset ------------------------------------------------------

struct VdpConfig {
    std::size_t n_train = 80;
    std::size_t n_val = 20;
    std::size_t n_test = 10;
    std::size_t length = 501;  // samples per trajectory
    double mu = 1.0;
    double dt = 0.05;      // 20 Hz sampling
    double snr_db = 20.0;  // train/validation only; test stays noiseless
};

// Trajectories start from x0 ~ U(-2,2)^2 and record the states as outputs
// (identity output map). Each trajectory draws from its own forked stream,
// so generation is reproducible regardless of generation order.
inline DatasetBundle generate_vdp_dataset(const VdpConfig& cfg, std::uint64_t seed) {
    if (cfg.length < 2) fail(ErrorCode::Config, "vdp: trajectory length must be >= 2");
    Rng root = Rng(seed).fork(0x64617461ULL);  // "data" stream domain

    auto make = [&](std::size_t count, std::uint64_t stream_base, bool noisy, Dataset& out) {
        for (std::size_t i = 0; i < count; ++i) {
            Rng rng = root.fork(stream_base + i);
            Vec x0{rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)};
            Trajectory t;
            t.dt = cfg.dt;
            t.outputs = simulate_vdp(x0, cfg.length - 1, cfg.dt, cfg.mu);
            if (noisy) t = add_noise_snr(t, cfg.snr_db, rng);
            out.trajectories.push_back(std::move(t));
        }
    };

    DatasetBundle bundle;
    make(cfg.n_train, 0, true, bundle.train);
    make(cfg.n_val, 100000, true, bundle.validation);
    make(cfg.n_test, 200000, false, bundle.test);
    return bundle;
}

// --- excitation signals -------------------------------------------------------

// Random-phase multisine: flat-amplitude cosine lines on the frequency grid
// j / (length*dt) restricted to [f_min, f_max], scaled to the requested RMS.
inline Vec multisine(std::size_t length, double dt, double f_min, double f_max, double rms,
                     Rng& rng) {
    if (length == 0) fail(ErrorCode::Config, "multisine: empty signal");
    const double f0 = 1.0 / (static_cast<double>(length) * dt);
    std::vector<double> freqs, phases;
    for (std::size_t j = 1; j * f0 <= f_max; ++j) {
        const double f = j * f0;
        if (f + 1e-12 < f_min) continue;
        if (f > 0.5 / dt) break;  // stay below Nyquist
        freqs.push_back(f);
        phases.push_back(rng.uniform(0.0, 6.283185307179586));
    }
    if (freqs.empty()) fail(ErrorCode::Config, "multisine: no frequency lines in band");
    const double scale = rms / std::sqrt(static_cast<double>(freqs.size()) / 2.0);
    Vec u(length);
    for (std::size_t k = 0; k < length; ++k) {
        double s = 0.0;
        const double t = static_cast<double>(k) * dt;
        for (std::size_t j = 0; j < freqs.size(); ++j)
            s += std::cos(6.283185307179586 * freqs[j] * t + phases[j]);
        u[k] = scale * s;
    }
    return u;
}

// Low-pass filtered Gaussian noise under a linearly increasing envelope:
// quiet at the start, peak amplitude at the end. Drives a model into the
// amplitude region it never saw during training.
inline Vec arrowhead_signal(std::size_t length, double dt, double cutoff_hz, double peak,
                            Rng& rng) {
    if (length < 2) fail(ErrorCode::Config, "arrowhead: signal too short");
    const double a = std::exp(-6.283185307179586 * cutoff_hz * dt);
    Vec g(length);
    double state = 0.0;
    for (std::size_t k = 0; k < length; ++k) {
        state = a * state + (1.0 - a) * rng.normal();
        g[k] = state;
    }
    double var = 0.0;
    for (double v : g) var += v * v;
    const double sd = std::sqrt(var / static_cast<double>(length));
    if (sd == 0.0) fail(ErrorCode::Generation, "arrowhead: degenerate filtered noise");
    Vec u(length);
    for (std::size_t k = 0; k < length; ++k) {
        const double ramp = static_cast<double>(k) / static_cast<double>(length - 1);
        u[k] = peak * ramp * (g[k] / sd);
    }
    return u;
}

// --- forced Duffing-type oscillator -------------------------------------------

// m y'' + d y' + k1 y + k3 y^3 = u, measured output y. A synthetic stand-in
// with the same character as a cubic-spring electrical benchmark: lightly
// damped, sampled so one resonance period covers about ten samples, cubic
// force comparable to the linear one at the driven amplitude. Mostly driven
// by multisine, plus an "arrowhead" record for extrapolation tests. The
// input is held over each sample period; integration refines each period
// with `substeps` RK4 steps.
struct DuffingConfig {
    double mass = 1.0;
    double damping = 0.2;
    double k1 = 1.0;
    double k3 = 2.0;
    double dt = 0.6;
    std::size_t substeps = 12;

    double multisine_rms = 0.3;
    double f_min = 0.01;  // Hz
    double f_max = 0.4;   // Hz

    double arrowhead_peak = 1.0;      // input amplitude at the end of the ramp
    double arrowhead_cutoff = 0.25;   // Hz

    std::size_t n_train = 1;
    std::size_t n_val = 1;
    std::size_t n_test = 1;
    std::size_t train_length = 12000;
    std::size_t val_length = 2000;
    std::size_t test_length = 2000;
    std::size_t arrowhead_length = 2000;

    std::optional<double> snr_db;  // noise on train/validation outputs; none by default
    double y_bound = 100.0;        // divergence guard
};

inline Vec duffing_derivative(const Vec& x, double u, const DuffingConfig& cfg) {
    return Vec{x[1],
               (u - cfg.damping * x[1] - cfg.k1 * x[0] - cfg.k3 * x[0] * x[0] * x[0]) / cfg.mass};
}

inline Trajectory simulate_duffing(const Vec& u_signal, const DuffingConfig& cfg) {
    if (cfg.substeps == 0) fail(ErrorCode::Config, "duffing: substeps must be >= 1");
    Trajectory t;
    t.dt = cfg.dt;
    const double h = cfg.dt / static_cast<double>(cfg.substeps);
    Vec x{0.0, 0.0};
    for (std::size_t k = 0; k < u_signal.size(); ++k) {
        t.inputs.push_back(Vec{u_signal[k]});
        t.outputs.push_back(Vec{x[0]});
        if (std::abs(x[0]) > cfg.y_bound)
            fail(ErrorCode::Generation,
                 "duffing: |y| exceeded " + std::to_string(cfg.y_bound) + " at sample " +
                     std::to_string(k) + "; parameter set looks unstable");
        const double u = u_signal[k];
        for (std::size_t s = 0; s < cfg.substeps; ++s)
            x = rk4_step([&](const Vec& st) { return duffing_derivative(st, u, cfg); }, x, h);
    }
    return t;
}

inline DatasetBundle generate_duffing_dataset(const DuffingConfig& cfg, std::uint64_t seed) {
    Rng root = Rng(seed).fork(0x64617461ULL);  // "data" stream domain

    auto make_multisine = [&](std::size_t count, std::size_t length, std::uint64_t stream_base,
                              bool noisy, Dataset& out) {
        for (std::size_t i = 0; i < count; ++i) {
            Rng rng = root.fork(stream_base + i);
            const Vec u = multisine(length, cfg.dt, cfg.f_min, cfg.f_max, cfg.multisine_rms, rng);
            Trajectory t = simulate_duffing(u, cfg);
            if (noisy && cfg.snr_db) t = add_noise_snr(t, *cfg.snr_db, rng);
            out.trajectories.push_back(std::move(t));
        }
    };

    DatasetBundle bundle;
    make_multisine(cfg.n_train, cfg.train_length, 0, true, bundle.train);
    make_multisine(cfg.n_val, cfg.val_length, 100000, true, bundle.validation);
    make_multisine(cfg.n_test, cfg.test_length, 200000, false, bundle.test);

    Rng rng = root.fork(300000);
    const Vec u = arrowhead_signal(cfg.arrowhead_length, cfg.dt, cfg.arrowhead_cutoff,
                                   cfg.arrowhead_peak, rng);
    bundle.arrowhead.trajectories.push_back(simulate_duffing(u, cfg));
    return bundle;
}

}  // namespace koopid
