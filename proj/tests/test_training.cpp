#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "koopid/encode.hpp"
#include "koopid/model.hpp"
#include "koopid/rng.hpp"
#include "koopid/training.hpp"

using namespace koopid;

namespace {

ModelSpec tiny_fs(std::size_t n_z = 3) {
    ModelSpec s;
    s.mode = EncoderMode::FullState;
    s.n_x = 2;
    s.n_y = 2;
    s.n_z = n_z;
    s.encoder_hidden = {4};
    return s;
}

ModelSpec tiny_io(std::size_t n_z = 3) {
    ModelSpec s;
    s.mode = EncoderMode::IOHistory;
    s.n_y = 1;
    s.n_u = 1;
    s.n_z = n_z;
    s.n_a = 2;
    s.n_b = 2;
    s.encoder_hidden = {4};
    s.b_hidden = {3};
    return s;
}

Dataset random_dataset(const ModelSpec& spec, std::size_t n_traj, std::size_t length,
                       std::uint64_t seed) {
    Rng rng(seed);
    Dataset ds;
    for (std::size_t t = 0; t < n_traj; ++t) {
        Trajectory traj;
        traj.dt = 0.1;
        for (std::size_t k = 0; k < length; ++k) {
            Vec y(spec.n_y);
            for (double& v : y) v = rng.uniform(-1.0, 1.0);
            traj.outputs.push_back(std::move(y));
            if (spec.n_u > 0) {
                Vec u(spec.n_u);
                for (double& v : u) v = rng.uniform(-1.0, 1.0);
                traj.inputs.push_back(std::move(u));
            }
        }
        ds.trajectories.push_back(std::move(traj));
    }
    return ds;
}

// central finite differences of batch_loss over every model parameter
void check_gradient_fd(const KoopmanModel& model, const Dataset& ds,
                       const std::vector<SectionIndex>& batch, std::size_t T) {
    const KoopmanGrad grad = batch_gradient(model, ds, batch, T);
    const Vec g = flatten_grad(model, grad);
    KoopmanModel work = model;
    Vec theta = get_params(work);
    const double h = 1e-6;
    for (std::size_t i = 0; i < theta.size(); ++i) {
        const double keep = theta[i];
        theta[i] = keep + h;
        set_params(work, theta);
        const double fp = batch_loss(work, ds, batch, T);
        theta[i] = keep - h;
        set_params(work, theta);
        const double fm = batch_loss(work, ds, batch, T);
        theta[i] = keep;
        const double fd = (fp - fm) / (2.0 * h);
        const double err = std::abs(fd - g[i]);
        const bool ok = err < 1e-8 || err / std::max(std::abs(fd), std::abs(g[i])) < 1e-4;
        if (!ok) {
            CAPTURE(i);
            CAPTURE(fd);
            CAPTURE(g[i]);
            CHECK(ok);
        }
    }
    set_params(work, theta);
}

}  // namespace

TEST_CASE("enumerate_sections: dense stride-1 counting") {
    // full-state, 501 samples, horizon 149 -> starts 1..351
    const KoopmanModel fs = model_init(tiny_fs(), 1);
    const Dataset ds = random_dataset(tiny_fs(), 1, 501, 1);
    const auto secs = enumerate_sections(ds, fs, 149);
    REQUIRE(secs.size() == 351);
    CHECK(secs.front().k == 1);
    CHECK(secs.back().k == 351);

    // io-history with 10/10 lags, 100 samples, horizon 49 -> starts 10..50
    ModelSpec iospec = tiny_io();
    iospec.n_a = 10;
    iospec.n_b = 10;
    const KoopmanModel io = model_init(iospec, 2);
    const Dataset ds2 = random_dataset(iospec, 1, 100, 2);
    const auto secs2 = enumerate_sections(ds2, io, 49);
    REQUIRE(secs2.size() == 41);
    CHECK(secs2.front().k == 10);
    CHECK(secs2.back().k == 50);

    // boundary horizons
    const Dataset short_ds = random_dataset(tiny_fs(), 1, 10, 3);
    CHECK_THROWS_AS(enumerate_sections(short_ds, fs, 9), Error);  // none fit
    const auto one = enumerate_sections(short_ds, fs, 8);
    REQUIRE(one.size() == 1);
    CHECK(one[0].k == 1);
}

TEST_CASE("section_loss: zero residuals, single-sample arithmetic, manual unroll") {
    // zeroed output map on zero outputs: exact zero loss
    KoopmanModel m = model_init(tiny_fs(), 5);
    std::fill(m.C.a.begin(), m.C.a.end(), 0.0);
    Dataset zeros = random_dataset(tiny_fs(), 1, 10, 5);
    for (auto& traj : zeros.trajectories)
        for (auto& y : traj.outputs) std::fill(y.begin(), y.end(), 0.0);
    CHECK(section_loss(m, zeros, {0, 1}, 3) == 0.0);

    // horizon 0 with residual (3,4): squared 2-norm is 25
    Dataset d34 = zeros;
    d34.trajectories[0].outputs[1] = Vec{3.0, 4.0};
    CHECK(section_loss(m, d34, {0, 1}, 0) == doctest::Approx(25.0).epsilon(1e-14));

    // horizon 2 equals a by-hand composition of encode/step/output
    const KoopmanModel r = model_init(tiny_fs(), 6);
    const Dataset ds = random_dataset(tiny_fs(), 1, 10, 6);
    const std::size_t k = 2, T = 2;
    LiftedState z = encode_at(r, ds.trajectories[0], k);
    double want = 0.0;
    for (std::size_t p = 0; p <= T; ++p) {
        const Vec yhat = output(r, z);
        const Vec& y = ds.trajectories[0].outputs[k + p];
        for (std::size_t c = 0; c < y.size(); ++c) want += (yhat[c] - y[c]) * (yhat[c] - y[c]);
        if (p < T) z = step(r, z);
    }
    want /= static_cast<double>(T + 1);
    CHECK(section_loss(r, ds, {0, k}, T) == doctest::Approx(want).epsilon(1e-12));

    CHECK_THROWS_AS(section_loss(r, ds, {0, 0}, 2), Error);   // before burn-in
    CHECK_THROWS_AS(section_loss(r, ds, {0, 8}, 2), Error);   // horizon overruns
}

TEST_CASE("batch_loss: half the mean of section losses") {
    const KoopmanModel m = model_init(tiny_io(), 7);
    const Dataset ds = random_dataset(tiny_io(), 2, 30, 7);
    const auto secs = enumerate_sections(ds, m, 4);
    REQUIRE(secs.size() >= 6);

    const double l1 = section_loss(m, ds, secs[0], 4);
    const double l2 = section_loss(m, ds, secs[3], 4);
    const double bl = batch_loss(m, ds, {secs[0], secs[3]}, 4);
    CHECK(bl == doctest::Approx((l1 + l2) / 4.0).epsilon(1e-12));

    // normalized-sum identity over the full section set (the whole-data cost)
    double sum = 0.0;
    for (const auto& s : secs) sum += section_loss(m, ds, s, 4);
    const double full = batch_loss(m, ds, secs, 4);
    CHECK(full == doctest::Approx(sum / (2.0 * secs.size())).epsilon(1e-12));

    CHECK_THROWS_AS(batch_loss(m, ds, {}, 4), Error);
}

TEST_CASE("batch_gradient: zero residuals give a zero gradient") {
    KoopmanModel m = model_init(tiny_fs(), 8);
    std::fill(m.C.a.begin(), m.C.a.end(), 0.0);
    Dataset zeros = random_dataset(tiny_fs(), 1, 12, 8);
    for (auto& traj : zeros.trajectories)
        for (auto& y : traj.outputs) std::fill(y.begin(), y.end(), 0.0);
    const auto secs = enumerate_sections(zeros, m, 3);
    const KoopmanGrad g = batch_gradient(m, zeros, secs, 3);
    for (double v : flatten_grad(m, g)) CHECK(v == 0.0);
}

TEST_CASE("batch_gradient: finite differences, full-state rollout") {
    const KoopmanModel m = model_init(tiny_fs(), 9);
    const Dataset ds = random_dataset(tiny_fs(), 2, 8, 9);
    const auto secs = enumerate_sections(ds, m, 2);
    check_gradient_fd(m, ds, {secs[0], secs[2]}, 2);
}

TEST_CASE("batch_gradient: finite differences, io-history rollout with input net") {
    const KoopmanModel m = model_init(tiny_io(), 10);
    const Dataset ds = random_dataset(tiny_io(), 1, 12, 10);
    const auto secs = enumerate_sections(ds, m, 3);
    check_gradient_fd(m, ds, {secs[0], secs[1]}, 3);
}

TEST_CASE("batch_gradient: constant input map trains only the bias of B") {
    ModelSpec spec = tiny_io();
    spec.constant_input_map = true;
    spec.b_hidden.clear();
    const KoopmanModel m = model_init(spec, 11);
    REQUIRE(m.b_net->num_transitions() == 1);
    for (double v : m.b_net->weights[0].a) CHECK(v == 0.0);

    const Dataset ds = random_dataset(spec, 1, 12, 11);
    const auto secs = enumerate_sections(ds, m, 3);
    const KoopmanGrad g = batch_gradient(m, ds, secs, 3);
    for (double v : g.dB.d_weights[0].a) CHECK(v == 0.0);  // structural zeros stay put

    // bias coordinates still follow finite differences
    KoopmanModel work = m;
    const double h = 1e-6;
    for (std::size_t i = 0; i < work.b_net->biases[0].size(); ++i) {
        const double keep = work.b_net->biases[0][i];
        work.b_net->biases[0][i] = keep + h;
        const double fp = batch_loss(work, ds, secs, 3);
        work.b_net->biases[0][i] = keep - h;
        const double fm = batch_loss(work, ds, secs, 3);
        work.b_net->biases[0][i] = keep;
        const double fd = (fp - fm) / (2.0 * h);
        const double err = std::abs(fd - g.dB.d_biases[0][i]);
        CHECK((err < 1e-8 || err / std::abs(fd) < 1e-4));
    }
}

TEST_CASE("batch_gradient: two-section batch equals the mean of single-section batches") {
    const KoopmanModel m = model_init(tiny_io(), 12);
    const Dataset ds = random_dataset(tiny_io(), 1, 14, 12);
    const auto secs = enumerate_sections(ds, m, 3);
    const Vec g12 = flatten_grad(m, batch_gradient(m, ds, {secs[0], secs[4]}, 3));
    const Vec g1 = flatten_grad(m, batch_gradient(m, ds, {secs[0]}, 3));
    const Vec g2 = flatten_grad(m, batch_gradient(m, ds, {secs[4]}, 3));
    for (std::size_t i = 0; i < g12.size(); ++i) {
        const double want = 0.5 * (g1[i] + g2[i]);
        CHECK(std::abs(g12[i] - want) <= 1e-12 * std::max(1.0, std::abs(want)));
    }
}

TEST_CASE("batch_gradient: bitwise independent of the worker count") {
    const KoopmanModel m = model_init(tiny_io(), 13);
    const Dataset ds = random_dataset(tiny_io(), 2, 60, 13);
    const auto secs = enumerate_sections(ds, m, 5);
    const Vec g1 = flatten_grad(m, batch_gradient(m, ds, secs, 5, 1));
    const Vec g2 = flatten_grad(m, batch_gradient(m, ds, secs, 5, 2));
    const Vec g4 = flatten_grad(m, batch_gradient(m, ds, secs, 5, 4));
    CHECK(g1 == g2);
    CHECK(g1 == g4);
}

TEST_CASE("adam_step: first-step normalization and zero-gradient fixpoint") {
    TrainConfig cfg;
    cfg.alpha = 0.05;
    cfg.beta1 = 0.9;
    cfg.beta2 = 0.999;
    cfg.epsilon = 1e-8;

    AdamState st = adam_init(2);
    Vec theta{1.0, -2.0};
    adam_step(st, theta, Vec{0.5, -3.0}, cfg);
    // bias correction makes the first update -alpha * g / (|g| + eps)
    CHECK(theta[0] == doctest::Approx(1.0 - 0.05 * 0.5 / (0.5 + 1e-8)).epsilon(1e-12));
    CHECK(theta[1] == doctest::Approx(-2.0 + 0.05 * 3.0 / (3.0 + 1e-8)).epsilon(1e-12));

    AdamState st0 = adam_init(2);
    Vec keep{0.7, 0.9};
    adam_step(st0, keep, Vec{0.0, 0.0}, cfg);
    CHECK(keep == Vec{0.7, 0.9});

    CHECK_THROWS_AS(adam_step(st, theta, Vec{1.0, std::nan("")}, cfg), Error);
}

TEST_CASE("adam_step: three scripted steps match the hand recursion") {
    TrainConfig cfg;
    cfg.alpha = 0.1;
    cfg.beta1 = 0.9;
    cfg.beta2 = 0.999;
    cfg.epsilon = 1e-8;
    const Vec grads{1.0, -2.0, 0.3};

    AdamState st = adam_init(1);
    Vec theta{0.5};

    // independent scalar recursion, written out term by term
    double m = 0.0, v = 0.0, x = 0.5;
    for (std::size_t t = 1; t <= 3; ++t) {
        const double g = grads[t - 1];
        m = 0.9 * m + 0.1 * g;
        v = 0.999 * v + 0.001 * g * g;
        const double mh = m / (1.0 - std::pow(0.9, static_cast<double>(t)));
        const double vh = v / (1.0 - std::pow(0.999, static_cast<double>(t)));
        x -= 0.1 * mh / (std::sqrt(vh) + 1e-8);

        adam_step(st, theta, Vec{g}, cfg);
        CHECK(theta[0] == doctest::Approx(x).epsilon(1e-15));
    }
}

TEST_CASE("validation_score: exact model scores zero, zero model scores about one") {
    // linear system x+ = A x with an encoder that reproduces the one-step map
    ModelSpec spec;
    spec.mode = EncoderMode::FullState;
    spec.n_x = 2;
    spec.n_y = 2;
    spec.n_z = 2;
    KoopmanModel m = model_init(spec, 21);
    m.A = Mat(2, 2);
    m.A(0, 0) = 0.9; m.A(0, 1) = 0.2;
    m.A(1, 0) = -0.2; m.A(1, 1) = 0.85;
    m.C = identity(2);
    m.encoder.weights[0] = m.A;  // e(x_{k-1}) = A x_{k-1} = x_k
    std::fill(m.encoder.biases[0].begin(), m.encoder.biases[0].end(), 0.0);

    Dataset val;
    Trajectory traj;
    traj.dt = 1.0;
    Vec x{1.0, -0.5};
    for (int k = 0; k < 40; ++k) {
        traj.outputs.push_back(x);
        x = matvec(m.A, x);
    }
    val.trajectories.push_back(traj);
    CHECK(validation_score(m, val) == doctest::Approx(0.0).epsilon(1e-12));

    // single-section dataset: the aggregate equals that section's score
    const EvalReport rep = evaluate(m, val);
    CHECK(rep.rms_joint == rep.section_rms_joint[0]);

    // zeroed output map on zero-mean data scores about 1
    KoopmanModel zero_model = model_init(tiny_fs(), 22);
    std::fill(zero_model.C.a.begin(), zero_model.C.a.end(), 0.0);
    const Dataset big = random_dataset(tiny_fs(), 1, 4000, 22);
    CHECK(validation_score(zero_model, big) == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("train: zero epochs returns the initial model") {
    const KoopmanModel m = model_init(tiny_io(), 31);
    const Dataset tr = random_dataset(tiny_io(), 1, 20, 31);
    const Dataset va = random_dataset(tiny_io(), 1, 20, 32);
    TrainConfig cfg;
    cfg.T = 3;
    cfg.epochs = 0;
    const TrainReport rep = train(m, tr, va, cfg);
    CHECK(rep.best_epoch == 0);
    CHECK(rep.epoch_loss.empty());
    CHECK(get_params(rep.best_model) == get_params(m));
}

TEST_CASE("train: one epoch, one batch replays a single hand-applied update") {
    const KoopmanModel m = model_init(tiny_io(), 33);
    const Dataset tr = random_dataset(tiny_io(), 1, 16, 33);
    const Dataset va = random_dataset(tiny_io(), 1, 16, 34);

    TrainConfig cfg;
    cfg.T = 3;
    cfg.batch_size = 1000;  // single batch
    cfg.epochs = 1;
    cfg.shuffle = false;    // keep enumeration order so the replay is exact
    cfg.alpha = 1e-3;
    cfg.beta1 = 0.9;
    cfg.beta2 = 0.999;
    cfg.seed = 5;

    const TrainReport rep = train(m, tr, va, cfg);

    const auto secs = enumerate_sections(tr, m, cfg.T);
    KoopmanGrad grad = make_zero_grad(m);
    const double loss = batch_loss_and_gradient(m, tr, secs, cfg.T, grad);
    AdamState st = adam_init(param_count(m));
    Vec theta = get_params(m);
    adam_step(st, theta, flatten_grad(m, grad), cfg);

    CHECK(rep.epoch_loss[0] == loss);
    CHECK(get_params(rep.best_model) == theta);
    CHECK(rep.best_epoch == 1);
}

TEST_CASE("train: deterministic across runs and worker counts; best epoch is the minimum") {
    const KoopmanModel m = model_init(tiny_io(), 35);
    const Dataset tr = random_dataset(tiny_io(), 2, 30, 35);
    const Dataset va = random_dataset(tiny_io(), 1, 25, 36);

    TrainConfig cfg;
    cfg.T = 4;
    cfg.batch_size = 8;
    cfg.epochs = 4;
    cfg.seed = 9;
    cfg.alpha = 1e-3;

    const TrainReport a = train(m, tr, va, cfg);
    const TrainReport b = train(m, tr, va, cfg);
    TrainConfig cfg2 = cfg;
    cfg2.workers = 3;
    const TrainReport c = train(m, tr, va, cfg2);

    CHECK(a.epoch_loss == b.epoch_loss);
    CHECK(a.epoch_val_nrms == b.epoch_val_nrms);
    CHECK(get_params(a.best_model) == get_params(b.best_model));
    CHECK(a.epoch_loss == c.epoch_loss);
    CHECK(get_params(a.best_model) == get_params(c.best_model));

    REQUIRE(a.best_epoch >= 1);
    for (double v : a.epoch_val_nrms) CHECK(a.best_val_nrms <= v);
    CHECK(a.best_val_nrms == a.epoch_val_nrms[a.best_epoch - 1]);
}

TEST_CASE("train: divergence aborts with a numeric error naming the epoch") {
    const KoopmanModel m = model_init(tiny_io(), 37);
    const Dataset tr = random_dataset(tiny_io(), 1, 20, 37);
    const Dataset va = random_dataset(tiny_io(), 1, 20, 38);
    TrainConfig cfg;
    cfg.T = 3;
    cfg.epochs = 5;
    cfg.alpha = 1e200;  // guaranteed blow-up on the next rollout
    try {
        train(m, tr, va, cfg);
        FAIL("expected a numeric error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::Numeric);
        CHECK(std::string(e.what()).find("epoch") != std::string::npos);
    }
}
