#include <doctest.h>

#include <claimcast/errors.hpp>
#include <claimcast/nn.hpp>

#include "test_util.hpp"

#include <cmath>

using namespace claimcast;

TEST_CASE("dense_forward: identity weights plus ReLU clamp") {
    Vec z(2);
    z << -1.0, 2.0;
    const Mat W = Mat::Identity(2, 2);
    const Vec b = Vec::Zero(2);
    const Vec out = dense_forward(z, W, b, Activation::ReLU);
    CHECK(out(0) == 0.0);
    CHECK(out(1) == 2.0);
}

TEST_CASE("dense_forward: zero input returns the bias under linear activation") {
    RngStream rng(1);
    Mat W(3, 4);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 4; ++c) W(r, c) = rng.normal();
    Vec b(3);
    b << 1.0, -2.0, 0.5;
    const Vec out = dense_forward(Vec::Zero(4), W, b, Activation::Linear);
    CHECK(out.isApprox(b));
}

TEST_CASE("dense_forward matches a hand-rolled matrix multiply") {
    RngStream rng(2);
    Mat W(3, 2);
    Vec b(3), z(2);
    for (int r = 0; r < 3; ++r) {
        b(r) = rng.normal();
        for (int c = 0; c < 2; ++c) W(r, c) = rng.normal();
    }
    z << rng.normal(), rng.normal();
    const Vec out = dense_forward(z, W, b, Activation::Linear);
    for (int r = 0; r < 3; ++r) {
        double acc = b(r);
        for (int c = 0; c < 2; ++c) acc += W(r, c) * z(c);
        CHECK(std::abs(out(r) - acc) < 1e-12);
    }
    CHECK_THROWS_AS(dense_forward(Vec::Zero(5), W, b, Activation::Linear), shape_error);
}

TEST_CASE("rnn_cell_forward: zero weights give a zero state") {
    const Vec h = rnn_cell_forward(Vec::Ones(3), Vec::Ones(2), Mat::Zero(3, 3), Mat::Zero(3, 2),
                                   Vec::Zero(3), Activation::Tanh);
    CHECK(h.isZero());
}

TEST_CASE("rnn_cell_forward: zero recurrent matrix decouples from the previous state") {
    RngStream rng(3);
    Mat W_xh(3, 2);
    Vec b(3), x(2);
    for (int r = 0; r < 3; ++r) {
        b(r) = rng.normal();
        for (int c = 0; c < 2; ++c) W_xh(r, c) = rng.normal();
    }
    x << 0.3, -0.7;
    const Vec h1 = rnn_cell_forward(Vec::Ones(3), x, Mat::Zero(3, 3), W_xh, b, Activation::Tanh);
    const Vec h2 =
        rnn_cell_forward(-5.0 * Vec::Ones(3), x, Mat::Zero(3, 3), W_xh, b, Activation::Tanh);
    CHECK(h1.isApprox(h2));
}

TEST_CASE("rnn_cell_forward equals two dense maps summed before activation") {
    RngStream rng(4);
    const int u = 3, in = 2;
    Mat W_hh(u, u), W_xh(u, in);
    Vec b(u), h_prev(u), x(in);
    for (int r = 0; r < u; ++r) {
        b(r) = rng.normal();
        h_prev(r) = rng.normal();
        for (int c = 0; c < u; ++c) W_hh(r, c) = rng.normal();
        for (int c = 0; c < in; ++c) W_xh(r, c) = rng.normal();
    }
    for (int c = 0; c < in; ++c) x(c) = rng.normal();
    const Vec got = rnn_cell_forward(h_prev, x, W_hh, W_xh, b, Activation::Tanh);
    const Vec a = dense_forward(h_prev, W_hh, Vec::Zero(u), Activation::Linear);
    const Vec bb = dense_forward(x, W_xh, b, Activation::Linear);
    for (int r = 0; r < u; ++r) CHECK(std::abs(got(r) - std::tanh(a(r) + bb(r))) < 1e-12);
}

namespace {

LstmGates random_gates(RngStream& rng, int units, int in) {
    LstmGates g;
    auto fill = [&](Mat& m, int r, int c) {
        m.resize(r, c);
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j) m(i, j) = rng.normal();
    };
    fill(g.W_xf, units, in);
    fill(g.W_hf, units, units);
    fill(g.W_xi, units, in);
    fill(g.W_hi, units, units);
    fill(g.W_xg, units, in);
    fill(g.W_hg, units, units);
    fill(g.W_xo, units, in);
    fill(g.W_ho, units, units);
    g.b_f.resize(units);
    g.b_i.resize(units);
    g.b_g.resize(units);
    g.b_o.resize(units);
    for (int i = 0; i < units; ++i) {
        g.b_f(i) = rng.normal();
        g.b_i(i) = rng.normal();
        g.b_g(i) = rng.normal();
        g.b_o(i) = rng.normal();
    }
    return g;
}

LstmGates zero_gates(int units, int in) {
    LstmGates g;
    g.W_xf = g.W_xi = g.W_xg = g.W_xo = Mat::Zero(units, in);
    g.W_hf = g.W_hi = g.W_hg = g.W_ho = Mat::Zero(units, units);
    g.b_f = g.b_i = g.b_g = g.b_o = Vec::Zero(units);
    return g;
}

}  // namespace

TEST_CASE("lstm_cell_forward: all-zero parameters give half-open gates and zero state") {
    const auto g = zero_gates(3, 2);
    const LstmState s = lstm_cell_forward(Vec::Zero(3), Vec::Zero(3), Vec::Ones(2), g);
    CHECK(s.c.isZero());
    CHECK(s.h.isZero());
    // sigmoid(0) = 0.5 gates, tanh(0) = 0 candidate: c = 0.5*0 + 0.5*0.
}

TEST_CASE("lstm_cell_forward: saturated forget gate preserves the cell state") {
    auto g = zero_gates(3, 2);
    g.b_f.setConstant(40.0);  // sigmoid saturates to 1
    Vec c_prev(3);
    c_prev << 0.2, -1.4, 3.0;
    const LstmState s = lstm_cell_forward(Vec::Zero(3), c_prev, Vec::Zero(2), g);
    CHECK(s.c.isApprox(c_prev, 1e-12));
}

TEST_CASE("lstm_cell_forward matches a scalar transcription of the gate equations") {
    RngStream rng(5);
    for (int trial = 0; trial < 25; ++trial) {
        const int units = 2 + static_cast<int>(rng.uniform_int(3));
        const int in = 1 + static_cast<int>(rng.uniform_int(3));
        const LstmGates g = random_gates(rng, units, in);
        Vec h_prev(units), c_prev(units), x(in);
        for (int i = 0; i < units; ++i) {
            h_prev(i) = rng.normal();
            c_prev(i) = rng.normal();
        }
        for (int i = 0; i < in; ++i) x(i) = rng.normal();

        const LstmState got = lstm_cell_forward(h_prev, c_prev, x, g);

        for (int r = 0; r < units; ++r) {
            auto dot = [&](const Mat& W, const Vec& v) {
                double acc = 0.0;
                for (int c = 0; c < v.size(); ++c) acc += W(r, c) * v(c);
                return acc;
            };
            const double f = 1.0 / (1.0 + std::exp(-(dot(g.W_hf, h_prev) + dot(g.W_xf, x) + g.b_f(r))));
            const double i = 1.0 / (1.0 + std::exp(-(dot(g.W_hi, h_prev) + dot(g.W_xi, x) + g.b_i(r))));
            const double gg = std::tanh(dot(g.W_hg, h_prev) + dot(g.W_xg, x) + g.b_g(r));
            const double o = 1.0 / (1.0 + std::exp(-(dot(g.W_ho, h_prev) + dot(g.W_xo, x) + g.b_o(r))));
            const double c = f * c_prev(r) + i * gg;
            const double h = o * std::tanh(c);
            CHECK(std::abs(got.c(r) - c) < 1e-12);
            CHECK(std::abs(got.h(r) - h) < 1e-12);
        }
    }
}

TEST_CASE("embedding_lookup returns the row, unknown maps to the reserved row") {
    Mat table(3, 2);
    table << 1, 2, 3, 4, 5, 6;
    CHECK(embedding_lookup(0, table) == Vec(table.row(0).transpose()));
    CHECK(embedding_lookup(7, table) == Vec(table.row(2).transpose()));
    CHECK(embedding_lookup(-1, table) == Vec(table.row(2).transpose()));
}

TEST_CASE("batch norm: training standardises the batch") {
    RngStream rng(6);
    Mat x(64, 3);
    for (int r = 0; r < 64; ++r)
        for (int c = 0; c < 3; ++c) x(r, c) = 5.0 + 2.0 * rng.normal();
    BatchNormState state{Vec::Zero(3), Vec::Ones(3)};
    const Mat out = batch_norm_forward(x, Vec::Ones(3), Vec::Zero(3), state, true);
    for (int c = 0; c < 3; ++c) {
        CHECK(std::abs(out.col(c).mean()) < 1e-10);
        const double var = (out.col(c).array() - out.col(c).mean()).square().mean();
        CHECK(var == doctest::Approx(1.0).epsilon(1e-3));  // eps shifts it slightly
    }
}

TEST_CASE("batch norm: eval with unit running stats is the identity") {
    RngStream rng(7);
    Mat x(4, 2);
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 2; ++c) x(r, c) = rng.normal();
    BatchNormState state{Vec::Zero(2), Vec::Ones(2)};
    const Mat out = batch_norm_forward(x, Vec::Ones(2), Vec::Zero(2), state, false);
    CHECK(out.isApprox(x * (1.0 / std::sqrt(1.0 + 1e-5)), 1e-9));
}

TEST_CASE("batch norm: training on one batch repeatedly converges eval to train output") {
    RngStream rng(8);
    Mat x(32, 2);
    for (int r = 0; r < 32; ++r)
        for (int c = 0; c < 2; ++c) x(r, c) = 3.0 + 0.5 * rng.normal();
    BatchNormState state{Vec::Zero(2), Vec::Ones(2)};
    Mat train_out;
    for (int pass = 0; pass < 200; ++pass)
        train_out = batch_norm_forward(x, Vec::Ones(2), Vec::Zero(2), state, true);
    const Mat eval_out = batch_norm_forward(x, Vec::Ones(2), Vec::Zero(2), state, false);
    CHECK((eval_out - train_out).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("batch norm: training requires at least two rows") {
    BatchNormState state{Vec::Zero(2), Vec::Ones(2)};
    CHECK_THROWS_AS(batch_norm_forward(Mat::Ones(1, 2), Vec::Ones(2), Vec::Zero(2), state, true),
                    config_error);
}

TEST_CASE("layer norm identities") {
    const Vec constant = layer_norm_forward(Vec::Constant(4, 3.0), Vec::Ones(4), Vec::Zero(4));
    CHECK(constant.cwiseAbs().maxCoeff() < 1e-9);

    Vec pm(2);
    pm << 1.0, -1.0;
    const Vec kept = layer_norm_forward(pm, Vec::Ones(2), Vec::Zero(2));
    CHECK(kept(0) == doctest::Approx(1.0).epsilon(1e-4));
    CHECK(kept(1) == doctest::Approx(-1.0).epsilon(1e-4));

    RngStream rng(9);
    Vec h(16);
    for (int i = 0; i < 16; ++i) h(i) = 2.0 + 3.0 * rng.normal();
    const Vec out = layer_norm_forward(h, Vec::Ones(16), Vec::Zero(16));
    CHECK(std::abs(out.mean()) < 1e-10);
    CHECK(out.array().square().mean() == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("dropout: rate zero and eval mode are identities; rate is honoured") {
    RngStream rng(10);
    Vec x = Vec::Ones(100000);
    CHECK(dropout_forward(x, 0.0, true, rng) == x);
    CHECK(dropout_forward(x, 0.7, false, rng) == x);

    const Vec dropped = dropout_forward(x, 0.5, true, rng);
    std::size_t zeros = 0;
    double sum = 0.0;
    for (Eigen::Index i = 0; i < dropped.size(); ++i) {
        if (dropped(i) == 0.0) ++zeros;
        sum += dropped(i);
    }
    const double drop_frac = static_cast<double>(zeros) / static_cast<double>(x.size());
    CHECK(std::abs(drop_frac - 0.5) < 0.01);
    CHECK(std::abs(sum / static_cast<double>(x.size()) - 1.0) < 0.02);  // expectation kept
}

TEST_CASE("mse loss examples") {
    Vec a(2), b(2);
    a << 1.0, 3.0;
    b << 0.0, 0.0;
    CHECK(mse_loss(a, a) == 0.0);
    CHECK(mse_loss(a, b) == doctest::Approx(5.0));
    CHECK(mse_loss(3.0 * a, 3.0 * b) == doctest::Approx(45.0));  // c^2 scaling
    Vec c(3);
    CHECK_THROWS_AS(mse_loss(a, c), shape_error);
}

TEST_CASE("model LSTM forward equals chained single-step cell evaluations") {
    ModelSpec spec = ModelSpec::for_variant(Variant::LSTMPlus, 1, 4, 3, 4);
    spec.layer_norm = false;  // compare the raw recurrence
    Model model(spec);
    RngStream init(11);
    model.init_params(init);

    RngStream rng(12);
    Batch batch = testutil::random_batch(rng, 3, 3, 4, 5);
    ForwardCache cache;
    model.forward(batch, false, cache);

    // Re-evaluate the recurrence one step at a time via the cell primitive.
    const ParamStore& params = model.params();
    LstmGates gates;
    auto block = [&](const char* name) {
        for (const ParamBlock& b : params.blocks())
            if (b.name == std::string("recurrent.0.") + name)
                return Mat(params.value(static_cast<int>(&b - params.blocks().data())));
        throw std::runtime_error("missing block");
    };
    gates.W_xf = block("Wxf");
    gates.W_hf = block("Whf");
    gates.W_xi = block("Wxi");
    gates.W_hi = block("Whi");
    gates.W_xg = block("Wxg");
    gates.W_hg = block("Whg");
    gates.W_xo = block("Wxo");
    gates.W_ho = block("Who");
    gates.b_f = block("bf").col(0);
    gates.b_i = block("bi").col(0);
    gates.b_g = block("bg").col(0);
    gates.b_o = block("bo").col(0);

    for (int r = 0; r < 3; ++r) {
        LstmState state{Vec::Zero(4), Vec::Zero(4)};
        for (int t = 0; t < batch.seq_len[static_cast<std::size_t>(r)]; ++t) {
            const Vec x = batch.steps[static_cast<std::size_t>(t)].row(r).transpose();
            state = lstm_cell_forward(state.h, state.c, x, gates);
        }
        const Vec from_model = cache.head_recurrent.row(r).transpose();
        CHECK((from_model - state.h).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("perturbing the first step changes the final hidden state") {
    ModelSpec spec = ModelSpec::for_variant(Variant::LSTMPlus, 2, 6, 3, 4);
    Model model(spec);
    RngStream init(13);
    model.init_params(init);

    RngStream rng(14);
    Batch batch = testutil::random_batch(rng, 4, 3, 4, 6);
    for (std::size_t r = 0; r < 4; ++r) batch.seq_len[r] = 6;  // full-length sequences
    ForwardCache cache;
    const Vec before = model.forward(batch, false, cache);
    batch.steps[0](0, 0) += 0.5;
    const Vec after = model.forward(batch, false, cache);
    CHECK(std::abs(before(0) - after(0)) > 1e-12);
    for (int r = 1; r < 4; ++r) CHECK(before(r) == after(r));
}

TEST_CASE("eval predictions are batch invariant") {
    ModelSpec spec = ModelSpec::for_variant(Variant::LSTMPlus, 2, 5, 3, 4);
    Model model(spec);
    RngStream init(15);
    model.init_params(init);

    RngStream rng(16);
    const Batch full = testutil::random_batch(rng, 7, 3, 4, 5);
    ForwardCache cache;
    const Vec all = model.forward(full, false, cache);

    for (int r = 0; r < 7; ++r) {
        Batch one;
        one.static_cont = full.static_cont.row(r);
        one.severity_idx = {full.severity_idx[static_cast<std::size_t>(r)]};
        one.age_idx = {full.age_idx[static_cast<std::size_t>(r)]};
        one.targets = full.targets.segment(r, 1);
        one.seq_len = {full.seq_len[static_cast<std::size_t>(r)]};
        one.steps.clear();
        for (int t = 0; t < one.seq_len[0]; ++t)
            one.steps.push_back(full.steps[static_cast<std::size_t>(t)].row(r));
        const Vec single = model.forward(one, false, cache);
        CHECK(std::abs(single(0) - all(r)) < 1e-10);
    }
}

TEST_CASE("padding beyond the true length does not change outputs or gradients") {
    ModelSpec spec = ModelSpec::for_variant(Variant::LSTM, 1, 4, 2, 3);
    Model model(spec);
    RngStream init(17);
    model.init_params(init);

    RngStream rng(18);
    Batch batch = testutil::random_batch(rng, 3, 2, 3, 4);
    Batch padded = batch;
    padded.steps.push_back(Mat::Zero(3, 3));
    padded.steps.push_back(Mat::Zero(3, 3));

    ForwardCache cache;
    const Vec a = model.forward(batch, false, cache);
    const Vec b = model.forward(padded, false, cache);
    CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);

    auto grads_for = [&](const Batch& bt) {
        model.params().zero_grads();
        ForwardCache c2;
        const Vec pred = model.forward(bt, true, c2);
        const Vec dpred = 2.0 * (pred - bt.targets) / 3.0;
        model.backward(bt, c2, dpred);
        return model.params().grads();
    };
    CHECK(grads_for(batch) == grads_for(padded));
}
