#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "koopid/encode.hpp"
#include "koopid/errors.hpp"
#include "koopid/metrics.hpp"
#include "koopid/model.hpp"
#include "koopid/rng.hpp"

namespace koopid {

struct TrainConfig {
    std::size_t T = 1;            // prediction horizon (steps ahead)
    std::size_t batch_size = 256;
    double alpha = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::size_t epochs = 0;
    std::uint64_t seed = 0;
    bool shuffle = true;
    std::size_t workers = 1;  // section losses within a batch run in parallel
};

// Start of one T-step subsection: trajectory id and the index of the first
// predicted sample within it.
struct SectionIndex {
    std::size_t traj = 0;
    std::size_t k = 0;
};

// All valid subsection starts, stride 1, in trajectory order: the encoder
// window must fit before k and the horizon must fit after it.
inline std::vector<SectionIndex> enumerate_sections(const Dataset& ds, const KoopmanModel& model,
                                                    std::size_t T) {
    if (T < 1) fail(ErrorCode::Config, "enumerate_sections: horizon must be >= 1");
    const std::size_t b = burn_in(model);
    std::vector<SectionIndex> out;
    for (std::size_t s = 0; s < ds.trajectories.size(); ++s) {
        check_model_data(model, ds.trajectories[s]);
        const std::size_t len = ds.trajectories[s].length();
        if (len < b + T + 1) continue;
        for (std::size_t k = b; k + T <= len - 1; ++k) out.push_back({s, k});
    }
    if (out.empty())
        fail(ErrorCode::Config,
             "enumerate_sections: no trajectory admits a horizon of " + std::to_string(T) +
                 " with burn-in " + std::to_string(b));
    return out;
}

// --- rollout workspace -------------------------------------------------------

// Everything one section evaluation touches, reused across sections so the
// training loop does not allocate in its hot path.
struct SectionWork {
    Vec enc_in;
    MlpCache enc_cache;
    std::vector<Vec> zs;              // lifted states z_0..z_T
    std::vector<MlpCache> b_caches;   // input-net caches per step (when inputs exist)
    Vec resid;                        // scratch: 2*(y_hat - y)
    Vec lam;                          // adjoint dS/dz_p
    Vec lam_next;
    Vec b_upstream;
};

// Gradient of the loss with respect to every model parameter.
struct KoopmanGrad {
    Mat dA;
    Mat dC;
    MlpGrad dB;  // unused when the model is autonomous
    MlpGrad dEnc;
};

inline KoopmanGrad make_zero_grad(const KoopmanModel& m) {
    KoopmanGrad g;
    g.dA = Mat(m.n_z, m.n_z);
    g.dC = Mat(m.n_y, m.n_z);
    if (m.b_net) g.dB = make_zero_grad(*m.b_net);
    g.dEnc = make_zero_grad(m.encoder);
    return g;
}

inline void zero_out(KoopmanGrad& g) {
    auto clear_mlp = [](MlpGrad& mg) {
        for (Mat& w : mg.d_weights) std::fill(w.a.begin(), w.a.end(), 0.0);
        for (Vec& b : mg.d_biases) std::fill(b.begin(), b.end(), 0.0);
    };
    std::fill(g.dA.a.begin(), g.dA.a.end(), 0.0);
    std::fill(g.dC.a.begin(), g.dC.a.end(), 0.0);
    clear_mlp(g.dB);
    clear_mlp(g.dEnc);
}

inline void accumulate(KoopmanGrad& into, const KoopmanGrad& from) {
    auto acc_mlp = [](MlpGrad& a, const MlpGrad& b) {
        for (std::size_t l = 0; l < a.d_weights.size(); ++l) {
            for (std::size_t i = 0; i < a.d_weights[l].a.size(); ++i)
                a.d_weights[l].a[i] += b.d_weights[l].a[i];
            for (std::size_t i = 0; i < a.d_biases[l].size(); ++i)
                a.d_biases[l][i] += b.d_biases[l][i];
        }
    };
    for (std::size_t i = 0; i < into.dA.a.size(); ++i) into.dA.a[i] += from.dA.a[i];
    for (std::size_t i = 0; i < into.dC.a.size(); ++i) into.dC.a[i] += from.dC.a[i];
    acc_mlp(into.dB, from.dB);
    acc_mlp(into.dEnc, from.dEnc);
}

inline void scale(KoopmanGrad& g, double s) {
    auto scale_mlp = [s](MlpGrad& mg) {
        for (Mat& w : mg.d_weights)
            for (double& v : w.a) v *= s;
        for (Vec& b : mg.d_biases)
            for (double& v : b) v *= s;
    };
    for (double& v : g.dA.a) v *= s;
    for (double& v : g.dC.a) v *= s;
    scale_mlp(g.dB);
    scale_mlp(g.dEnc);
}

// --- section rollout -----------------------------------------------------------

// Lifts at index k and propagates T steps, caching everything the reverse
// pass needs. zs[p] is the lifted state whose output is compared to sample
// k+p.
inline void rollout_forward(const KoopmanModel& m, const Trajectory& traj, std::size_t k,
                            std::size_t T, SectionWork& w) {
    build_encoder_input(m, traj, k, w.enc_in);
    mlp_forward_cached(m.encoder, w.enc_in, w.enc_cache);
    w.zs.resize(T + 1);
    w.zs[0] = w.enc_cache.act.back();
    if (m.n_u > 0) w.b_caches.resize(T);
    for (std::size_t p = 0; p < T; ++p) {
        matvec_into(m.A, w.zs[p], w.zs[p + 1]);
        if (m.n_u > 0) {
            mlp_forward_cached(*m.b_net, w.zs[p], w.b_caches[p]);
            const Vec& bflat = w.b_caches[p].act.back();
            const Vec& u = traj.inputs[k + p];
            Vec& zn = w.zs[p + 1];
            for (std::size_t i = 0; i < m.n_z; ++i) {
                double s = 0.0;
                for (std::size_t j = 0; j < m.n_u; ++j) s += bflat[i * m.n_u + j] * u[j];
                zn[i] += s;
            }
        }
    }
}

// Sum of squared output residuals over the rollout (unnormalized).
inline double rollout_residual_sum(const KoopmanModel& m, const Trajectory& traj, std::size_t k,
                                   std::size_t T, SectionWork& w) {
    double s = 0.0;
    Vec yhat;
    for (std::size_t p = 0; p <= T; ++p) {
        matvec_into(m.C, w.zs[p], yhat);
        const Vec& y = traj.outputs[k + p];
        for (std::size_t c = 0; c < m.n_y; ++c) {
            const double d = yhat[c] - y[c];
            s += d * d;
        }
    }
    return s;
}

// Reverse pass accumulating d(sum of squared residuals)/d(theta) into g.
// Walks the rollout backwards with the adjoint of the lifted state.
inline void rollout_backward(const KoopmanModel& m, const Trajectory& traj, std::size_t k,
                             std::size_t T, SectionWork& w, KoopmanGrad& g) {
    w.lam.assign(m.n_z, 0.0);
    Vec yhat;
    for (std::size_t pp = 0; pp <= T; ++pp) {
        const std::size_t p = T - pp;
        matvec_into(m.C, w.zs[p], yhat);
        const Vec& y = traj.outputs[k + p];
        w.resid.resize(m.n_y);
        for (std::size_t c = 0; c < m.n_y; ++c) w.resid[c] = 2.0 * (yhat[c] - y[c]);

        // dC += resid z_p^T ; lam_p starts as C^T resid
        add_outer(g.dC, w.resid, w.zs[p]);
        w.lam_next.assign(m.n_z, 0.0);
        matvec_t_acc(m.C, w.resid, w.lam_next);

        if (p < T) {
            // w.lam currently holds dS/dz_{p+1}
            add_outer(g.dA, w.lam, w.zs[p]);
            matvec_t_acc(m.A, w.lam, w.lam_next);
            if (m.n_u > 0) {
                const Vec& u = traj.inputs[k + p];
                w.b_upstream.resize(m.n_z * m.n_u);
                for (std::size_t i = 0; i < m.n_z; ++i)
                    for (std::size_t j = 0; j < m.n_u; ++j)
                        w.b_upstream[i * m.n_u + j] = w.lam[i] * u[j];
                mlp_backward_cached(*m.b_net, w.b_caches[p], w.b_upstream, g.dB);
                for (std::size_t i = 0; i < m.n_z; ++i) w.lam_next[i] += g.dB.d_input[i];
            }
        }
        std::swap(w.lam, w.lam_next);
    }
    mlp_backward_cached(m.encoder, w.enc_cache, w.lam, g.dEnc);
}

// --- spec'd loss surfaces -----------------------------------------------------

// Mean squared output error of one T-step rollout: sum over p = 0..T of
// ||y_hat - y||^2, divided by T+1.
inline double section_loss(const KoopmanModel& m, const Dataset& ds, SectionIndex idx,
                           std::size_t T) {
    const Trajectory& traj = ds.trajectories.at(idx.traj);
    check_model_data(m, traj);
    if (idx.k < burn_in(m) || idx.k + T > traj.length() - 1)
        fail(ErrorCode::Usage, "section_loss: section start " + std::to_string(idx.k) +
                                   " invalid for horizon " + std::to_string(T));
    SectionWork w;
    rollout_forward(m, traj, idx.k, T, w);
    return rollout_residual_sum(m, traj, idx.k, T, w) / static_cast<double>(T + 1);
}

// Batch cost: 1/(2 N (T+1)) * sum over the batch of residual-square sums,
// i.e. half the mean of the section losses.
inline double batch_loss(const KoopmanModel& m, const Dataset& ds,
                         const std::vector<SectionIndex>& batch, std::size_t T) {
    if (batch.empty()) fail(ErrorCode::Usage, "batch_loss: empty batch");
    for (const Trajectory& traj : ds.trajectories) check_model_data(m, traj);
    SectionWork w;
    double s = 0.0;
    for (const SectionIndex& idx : batch) {
        const Trajectory& traj = ds.trajectories.at(idx.traj);
        rollout_forward(m, traj, idx.k, T, w);
        s += rollout_residual_sum(m, traj, idx.k, T, w);
    }
    return s / (2.0 * static_cast<double>(batch.size()) * static_cast<double>(T + 1));
}

namespace detail {

// Sections are grouped into fixed blocks; a block is always accumulated
// sequentially into its own bundle and the bundles are merged in block
// order, so the floating-point result never depends on the worker count.
constexpr std::size_t kGradBlock = 32;

template <class Fn>
void parallel_blocks(std::size_t n_blocks, std::size_t workers, Fn&& fn) {
    if (workers <= 1 || n_blocks <= 1) {
        for (std::size_t b = 0; b < n_blocks; ++b) fn(b, 0);
        return;
    }
    const std::size_t nw = std::min(workers, n_blocks);
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> threads;
    std::exception_ptr first_error;
    std::mutex err_mutex;
    threads.reserve(nw);
    for (std::size_t t = 0; t < nw; ++t)
        threads.emplace_back([&, t] {
            try {
                for (std::size_t b = next.fetch_add(1); b < n_blocks; b = next.fetch_add(1))
                    fn(b, t);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        });
    for (std::thread& th : threads) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace detail

// Batch loss and its exact gradient in one pass. Per-section work may run on
// multiple workers; results are bitwise independent of the worker count.
inline double batch_loss_and_gradient(const KoopmanModel& m, const Dataset& ds,
                                      const std::vector<SectionIndex>& batch, std::size_t T,
                                      KoopmanGrad& grad, std::size_t workers = 1) {
    if (batch.empty()) fail(ErrorCode::Usage, "batch_gradient: empty batch");
    for (const Trajectory& traj : ds.trajectories) check_model_data(m, traj);
    const std::size_t n_blocks = (batch.size() + detail::kGradBlock - 1) / detail::kGradBlock;
    const std::size_t nw = std::max<std::size_t>(1, std::min(workers, n_blocks));

    std::vector<KoopmanGrad> block_grads;
    block_grads.reserve(n_blocks);
    for (std::size_t b = 0; b < n_blocks; ++b) block_grads.push_back(make_zero_grad(m));
    std::vector<double> block_loss(n_blocks, 0.0);
    std::vector<SectionWork> works(nw);

    detail::parallel_blocks(n_blocks, nw, [&](std::size_t b, std::size_t worker) {
        SectionWork& w = works[worker];
        const std::size_t lo = b * detail::kGradBlock;
        const std::size_t hi = std::min(batch.size(), lo + detail::kGradBlock);
        for (std::size_t i = lo; i < hi; ++i) {
            const SectionIndex idx = batch[i];
            const Trajectory& traj = ds.trajectories.at(idx.traj);
            rollout_forward(m, traj, idx.k, T, w);
            block_loss[b] += rollout_residual_sum(m, traj, idx.k, T, w);
            rollout_backward(m, traj, idx.k, T, w, block_grads[b]);
        }
    });

    grad = std::move(block_grads[0]);
    double loss = block_loss[0];
    for (std::size_t b = 1; b < n_blocks; ++b) {
        accumulate(grad, block_grads[b]);
        loss += block_loss[b];
    }
    const double norm = 1.0 / (2.0 * static_cast<double>(batch.size()) *
                               static_cast<double>(T + 1));
    scale(grad, norm);
    if (m.constant_input_map && m.b_net)
        std::fill(grad.dB.d_weights[0].a.begin(), grad.dB.d_weights[0].a.end(), 0.0);
    return loss * norm;
}

inline KoopmanGrad batch_gradient(const KoopmanModel& m, const Dataset& ds,
                                  const std::vector<SectionIndex>& batch, std::size_t T,
                                  std::size_t workers = 1) {
    KoopmanGrad g;
    batch_loss_and_gradient(m, ds, batch, T, g, workers);
    return g;
}

// --- flat parameter views -------------------------------------------------------

// Fixed flattening order (A, C, input net, encoder) shared by the optimizer
// state, parameter snapshots and gradient vectors.
template <class ModelT, class Fn>
void for_each_param_chunk(ModelT& m, Fn&& fn) {
    fn(m.A.a);
    fn(m.C.a);
    if (m.b_net) {
        for (auto& w : m.b_net->weights) fn(w.a);
        for (auto& b : m.b_net->biases) fn(b);
    }
    for (auto& w : m.encoder.weights) fn(w.a);
    for (auto& b : m.encoder.biases) fn(b);
}

inline std::size_t param_count(const KoopmanModel& m) {
    std::size_t n = 0;
    for_each_param_chunk(m, [&](const Vec& v) { n += v.size(); });
    return n;
}

inline Vec get_params(const KoopmanModel& m) {
    Vec out;
    out.reserve(param_count(m));
    for_each_param_chunk(m, [&](const Vec& v) { out.insert(out.end(), v.begin(), v.end()); });
    return out;
}

inline void set_params(KoopmanModel& m, const Vec& theta) {
    std::size_t pos = 0;
    for_each_param_chunk(m, [&](Vec& v) {
        if (pos + v.size() > theta.size()) fail(ErrorCode::Shape, "set_params: vector too short");
        std::copy(theta.begin() + pos, theta.begin() + pos + v.size(), v.begin());
        pos += v.size();
    });
    if (pos != theta.size()) fail(ErrorCode::Shape, "set_params: vector too long");
}

inline Vec flatten_grad(const KoopmanModel& m, const KoopmanGrad& g) {
    Vec out;
    out.reserve(param_count(m));
    auto push = [&](const Vec& v) { out.insert(out.end(), v.begin(), v.end()); };
    push(g.dA.a);
    push(g.dC.a);
    if (m.b_net) {
        for (const Mat& w : g.dB.d_weights) push(w.a);
        for (const Vec& b : g.dB.d_biases) push(b);
    }
    for (const Mat& w : g.dEnc.d_weights) push(w.a);
    for (const Vec& b : g.dEnc.d_biases) push(b);
    return out;
}

// --- Adam ---------------------------------------------------------------------

struct AdamState {
    Vec m;
    Vec v;
    std::uint64_t t = 0;
};

inline AdamState adam_init(std::size_t n) { return AdamState{Vec(n, 0.0), Vec(n, 0.0), 0}; }

// One bias-corrected Adam update:
//   m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2
//   theta <- theta - alpha * m_hat / (sqrt(v_hat) + eps)
inline void adam_step(AdamState& st, Vec& theta, const Vec& grad, const TrainConfig& cfg) {
    if (theta.size() != st.m.size() || grad.size() != st.m.size())
        fail(ErrorCode::Shape, "adam_step: parameter/gradient/state sizes differ");
    if (!all_finite(grad)) fail(ErrorCode::Numeric, "adam_step: gradient has non-finite entries");
    st.t += 1;
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.t));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.t));
    for (std::size_t i = 0; i < theta.size(); ++i) {
        st.m[i] = cfg.beta1 * st.m[i] + (1.0 - cfg.beta1) * grad[i];
        st.v[i] = cfg.beta2 * st.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
        const double m_hat = st.m[i] / c1;
        const double v_hat = st.v[i] / c2;
        theta[i] -= cfg.alpha * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
}

// --- training loop ---------------------------------------------------------------

// Open-loop simulation error on a dataset; the early-stopping criterion.
inline double validation_score(const KoopmanModel& m, const Dataset& val) {
    return evaluate(m, val).nrms;
}

struct TrainReport {
    std::vector<double> epoch_loss;      // mean batch loss per epoch
    std::vector<double> epoch_val_nrms;  // validation simulation error per epoch
    std::size_t best_epoch = 0;          // 1-based; 0 means the initial model
    double best_val_nrms = std::numeric_limits<double>::quiet_NaN();
    KoopmanModel best_model;
};

using TrainLogFn = std::function<void(const std::string& line)>;

inline void fisher_yates(std::vector<std::size_t>& idx, Rng& rng) {
    for (std::size_t i = idx.size(); i > 1; --i)
        std::swap(idx[i - 1], idx[rng.next_u64() % i]);
}

// Epoch = one pass over a shuffled permutation of all sections, chopped into
// batches (the final short batch is kept). After each epoch the validation
// simulation error is computed and the best parameters are snapshotted.
inline TrainReport train(const KoopmanModel& initial, const Dataset& train_ds,
                         const Dataset& val_ds, const TrainConfig& cfg,
                         const TrainLogFn& log = {}) {
    if (cfg.batch_size == 0) fail(ErrorCode::Config, "train: batch_size must be positive");
    KoopmanModel model = initial;
    const std::vector<SectionIndex> sections = enumerate_sections(train_ds, model, cfg.T);

    TrainReport report;
    report.best_model = model;
    if (cfg.epochs == 0) return report;

    Rng shuffle_rng = Rng(cfg.seed).fork(0xC0FFEE);
    std::vector<std::size_t> order(sections.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    AdamState adam = adam_init(param_count(model));
    Vec theta = get_params(model);
    KoopmanGrad grad = make_zero_grad(model);
    std::vector<SectionIndex> batch;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        if (cfg.shuffle) fisher_yates(order, shuffle_rng);

        double loss_sum = 0.0;
        std::size_t n_batches = 0;
        for (std::size_t pos = 0; pos < order.size(); pos += cfg.batch_size) {
            const std::size_t hi = std::min(order.size(), pos + cfg.batch_size);
            batch.clear();
            for (std::size_t i = pos; i < hi; ++i) batch.push_back(sections[order[i]]);

            const double loss =
                batch_loss_and_gradient(model, train_ds, batch, cfg.T, grad, cfg.workers);
            ++n_batches;
            if (!std::isfinite(loss))
                fail(ErrorCode::Numeric, "train: loss is not finite at epoch " +
                                             std::to_string(epoch) + ", batch " +
                                             std::to_string(n_batches));
            loss_sum += loss;

            const Vec g = flatten_grad(model, grad);
            if (!all_finite(g))
                fail(ErrorCode::Numeric, "train: gradient is not finite at epoch " +
                                             std::to_string(epoch) + ", batch " +
                                             std::to_string(n_batches));
            adam_step(adam, theta, g, cfg);
            set_params(model, theta);
        }

        const double mean_loss = loss_sum / static_cast<double>(n_batches);
        const double val_nrms = validation_score(model, val_ds);
        report.epoch_loss.push_back(mean_loss);
        report.epoch_val_nrms.push_back(val_nrms);
        if (report.best_epoch == 0 || val_nrms < report.best_val_nrms) {
            report.best_epoch = epoch;
            report.best_val_nrms = val_nrms;
            report.best_model = model;
        }
        if (log) {
            const double secs =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            char line[160];
            std::snprintf(line, sizeof(line), "epoch %4zu  loss %.6e  val_nrms %.6e  wall %.2fs",
                          epoch, mean_loss, val_nrms, secs);
            log(line);
        }
    }
    return report;
}

}  // namespace koopid
