#include "claimcast/nn.hpp"

#include <algorithm>
#include <cmath>

#include "claimcast/errors.hpp"

namespace claimcast {

namespace {

constexpr double kBnEps = 1e-5;
constexpr double kLnEps = 1e-5;
constexpr double kBnMomentum = 0.1;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Mat apply_activation(Activation act, const Mat& x) {
    switch (act) {
        case Activation::Linear: return x;
        case Activation::ReLU: return x.cwiseMax(0.0);
        case Activation::Tanh: return x.array().tanh().matrix();
        case Activation::Sigmoid: return (1.0 / (1.0 + (-x.array()).exp())).matrix();
    }
    throw config_error("unknown activation");
}

Mat activation_backward(Activation act, const Mat& act_in, const Mat& act_out, const Mat& dout) {
    switch (act) {
        case Activation::Linear: return dout;
        case Activation::ReLU:
            return (act_in.array() > 0.0).select(dout, Mat::Zero(dout.rows(), dout.cols()));
        case Activation::Tanh:
            return (dout.array() * (1.0 - act_out.array().square())).matrix();
        case Activation::Sigmoid:
            return (dout.array() * act_out.array() * (1.0 - act_out.array())).matrix();
    }
    throw config_error("unknown activation");
}

}  // namespace

double activate_scalar(Activation a, double x) {
    switch (a) {
        case Activation::Linear: return x;
        case Activation::ReLU: return x > 0.0 ? x : 0.0;
        case Activation::Tanh: return std::tanh(x);
        case Activation::Sigmoid: return sigmoid(x);
    }
    throw config_error("unknown activation");
}

// ---------------------------------------------------------------------------
// Single-observation primitives
// ---------------------------------------------------------------------------

Vec dense_forward(const Vec& z, const Mat& W, const Vec& b, Activation act) {
    if (z.size() != W.cols() || W.rows() != b.size())
        throw shape_error("dense_forward: weight shape does not match input");
    Vec pre = W * z + b;
    for (Eigen::Index i = 0; i < pre.size(); ++i) pre(i) = activate_scalar(act, pre(i));
    return pre;
}

Vec rnn_cell_forward(const Vec& h_prev, const Vec& x_t, const Mat& W_hh, const Mat& W_xh,
                     const Vec& b, Activation act) {
    if (W_hh.rows() != W_hh.cols() || W_hh.cols() != h_prev.size() ||
        W_xh.cols() != x_t.size() || W_xh.rows() != W_hh.rows() || b.size() != W_hh.rows())
        throw shape_error("rnn_cell_forward: inconsistent shapes");
    Vec pre = W_hh * h_prev + W_xh * x_t + b;
    for (Eigen::Index i = 0; i < pre.size(); ++i) pre(i) = activate_scalar(act, pre(i));
    return pre;
}

LstmState lstm_cell_forward(const Vec& h_prev, const Vec& c_prev, const Vec& x_t,
                            const LstmGates& g) {
    const Eigen::Index u = h_prev.size();
    if (c_prev.size() != u || g.W_hf.rows() != u || g.W_hf.cols() != u ||
        g.W_xf.rows() != u || g.W_xf.cols() != x_t.size() || g.b_f.size() != u)
        throw shape_error("lstm_cell_forward: inconsistent shapes");

    const Vec f = (g.W_hf * h_prev + g.W_xf * x_t + g.b_f).unaryExpr([](double v) {
        return sigmoid(v);
    });
    const Vec i = (g.W_hi * h_prev + g.W_xi * x_t + g.b_i).unaryExpr([](double v) {
        return sigmoid(v);
    });
    const Vec gg = (g.W_hg * h_prev + g.W_xg * x_t + g.b_g).array().tanh().matrix();
    const Vec o = (g.W_ho * h_prev + g.W_xo * x_t + g.b_o).unaryExpr([](double v) {
        return sigmoid(v);
    });

    LstmState out;
    out.c = f.cwiseProduct(c_prev) + i.cwiseProduct(gg);
    out.h = o.cwiseProduct(out.c.array().tanh().matrix());
    return out;
}

Vec embedding_lookup(int index, const Mat& table) {
    Eigen::Index row = static_cast<Eigen::Index>(index);
    if (row < 0 || row >= table.rows()) row = table.rows() - 1;  // reserved row
    return table.row(row).transpose();
}

Mat batch_norm_forward(const Mat& x, const Vec& gamma, const Vec& beta, BatchNormState& state,
                       bool training, double momentum, double eps) {
    if (gamma.size() != x.cols() || beta.size() != x.cols())
        throw shape_error("batch_norm_forward: parameter size mismatch");
    if (training && x.rows() < 2)
        throw config_error("batch_norm_forward: training mode requires a batch of at least 2");

    Vec mean, var;
    if (training) {
        mean = x.colwise().mean();
        var = (x.rowwise() - mean.transpose()).array().square().colwise().mean();
        state.running_mean = (1.0 - momentum) * state.running_mean + momentum * mean;
        state.running_var = (1.0 - momentum) * state.running_var + momentum * var;
    } else {
        mean = state.running_mean;
        var = state.running_var;
    }
    const Vec invstd = (var.array() + eps).rsqrt();
    Mat xhat = (x.rowwise() - mean.transpose()).array().rowwise() * invstd.transpose().array();
    return (xhat.array().rowwise() * gamma.transpose().array()).rowwise() +
           beta.transpose().array();
}

Vec layer_norm_forward(const Vec& h, const Vec& gamma, const Vec& beta, double eps) {
    if (gamma.size() != h.size() || beta.size() != h.size())
        throw shape_error("layer_norm_forward: parameter size mismatch");
    const double mean = h.mean();
    const double var = (h.array() - mean).square().mean();
    const double invstd = 1.0 / std::sqrt(var + eps);
    return (((h.array() - mean) * invstd) * gamma.array() + beta.array()).matrix();
}

Vec dropout_forward(const Vec& x, double rate, bool training, RngStream& rng) {
    if (rate < 0.0 || rate >= 1.0) throw config_error("dropout rate must be in [0, 1)");
    if (!training || rate == 0.0) return x;
    Vec out = x;
    const double scale = 1.0 / (1.0 - rate);
    for (Eigen::Index i = 0; i < out.size(); ++i)
        out(i) = rng.uniform01() < rate ? 0.0 : out(i) * scale;
    return out;
}

double mse_loss(const Vec& predictions, const Vec& targets) {
    if (predictions.size() != targets.size() || predictions.size() == 0)
        throw shape_error("mse_loss: length mismatch or empty input");
    return (predictions - targets).squaredNorm() / static_cast<double>(predictions.size());
}

// ---------------------------------------------------------------------------
// ParamStore
// ---------------------------------------------------------------------------

int ParamStore::add(std::string name, Eigen::Index rows, Eigen::Index cols) {
    ParamBlock block;
    block.name = std::move(name);
    block.offset = values_.size();
    block.rows = rows;
    block.cols = cols;
    values_.resize(values_.size() + block.size(), 0.0);
    grads_.resize(values_.size(), 0.0);
    blocks_.push_back(std::move(block));
    return static_cast<int>(blocks_.size()) - 1;
}

Eigen::Map<Mat> ParamStore::value(int block) {
    const ParamBlock& b = blocks_[static_cast<std::size_t>(block)];
    return Eigen::Map<Mat>(values_.data() + b.offset, b.rows, b.cols);
}

Eigen::Map<const Mat> ParamStore::value(int block) const {
    const ParamBlock& b = blocks_[static_cast<std::size_t>(block)];
    return Eigen::Map<const Mat>(values_.data() + b.offset, b.rows, b.cols);
}

Eigen::Map<Mat> ParamStore::grad(int block) {
    const ParamBlock& b = blocks_[static_cast<std::size_t>(block)];
    return Eigen::Map<Mat>(grads_.data() + b.offset, b.rows, b.cols);
}

void ParamStore::zero_grads() { std::fill(grads_.begin(), grads_.end(), 0.0); }

// ---------------------------------------------------------------------------
// ModelSpec
// ---------------------------------------------------------------------------

void ModelSpec::validate() const {
    if (dense_layers < 1) throw config_error("dense_layers must be >= 1");
    if (dense_layers > 1 && dense_units < 2)
        throw config_error("dense_units must be >= 2");
    if (variant_is_recurrent(variant)) {
        if (recurrent_layers < 1) throw config_error("recurrent variants need recurrent_layers >= 1");
        if (recurrent_units < 2) throw config_error("recurrent_units must be >= 2");
        if (n_seq_channels < 1) throw config_error("recurrent variants need sequence channels");
    } else if (recurrent_layers != 0) {
        throw config_error("FNN variants must have recurrent_layers == 0");
    }
    if (n_static_features < 1) throw config_error("n_static_features must be >= 1");
    if (embedding_dim < 1) throw config_error("embedding_dim must be >= 1");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0)
        throw config_error("dropout_rate must be in [0, 1)");
    if (severity_vocab < 1 || age_vocab < 1) throw config_error("embedding vocab must be >= 1");
}

ModelSpec ModelSpec::for_variant(Variant v, int layers, int units, int n_static_features,
                                 int n_seq_channels) {
    ModelSpec spec;
    spec.variant = v;
    spec.n_static_features = n_static_features;
    spec.n_seq_channels = n_seq_channels;
    if (variant_is_recurrent(v)) {
        spec.recurrent_layers = layers;
        spec.recurrent_units = units;
        spec.dense_layers = 2;  // hidden + linear output head
        spec.dense_units = units;
    } else {
        spec.recurrent_layers = 0;
        spec.recurrent_units = 0;
        spec.dense_layers = layers;
        spec.dense_units = units;
    }
    spec.validate();
    return spec;
}

// ---------------------------------------------------------------------------
// Batch assembly
// ---------------------------------------------------------------------------

Batch make_batch(const EncodedDataset& ds, std::span<const std::size_t> indices) {
    Batch batch;
    const Eigen::Index b = static_cast<Eigen::Index>(indices.size());
    batch.static_cont.resize(b, ds.static_cont.cols());
    batch.severity_idx.resize(indices.size());
    batch.age_idx.resize(indices.size());
    batch.targets.resize(b);
    for (Eigen::Index r = 0; r < b; ++r) {
        const std::size_t i = indices[static_cast<std::size_t>(r)];
        batch.static_cont.row(r) = ds.static_cont.row(static_cast<Eigen::Index>(i));
        batch.severity_idx[static_cast<std::size_t>(r)] = ds.severity_idx[i];
        batch.age_idx[static_cast<std::size_t>(r)] = ds.age_idx[i];
        batch.targets(r) = ds.targets(static_cast<Eigen::Index>(i));
    }
    if (!ds.sequences.empty()) {
        const int channels = ds.n_channels();
        batch.seq_len.resize(indices.size());
        int t_max = 0;
        for (std::size_t r = 0; r < indices.size(); ++r) {
            batch.seq_len[r] = ds.seq_len[indices[r]];
            t_max = std::max(t_max, batch.seq_len[r]);
        }
        batch.steps.assign(static_cast<std::size_t>(t_max), Mat::Zero(b, channels));
        for (std::size_t r = 0; r < indices.size(); ++r) {
            const std::vector<double>& seq = ds.sequences[indices[r]];
            for (int t = 0; t < batch.seq_len[r]; ++t)
                for (int ch = 0; ch < channels; ++ch)
                    batch.steps[static_cast<std::size_t>(t)](static_cast<Eigen::Index>(r), ch) =
                        seq[static_cast<std::size_t>(t * channels + ch)];
        }
    }
    return batch;
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

Model::Model(ModelSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    build();
}

void Model::build() {
    emb_severity_ = params_.add("embedding.severity", spec_.severity_vocab + 1, spec_.embedding_dim);
    emb_age_ = params_.add("embedding.age", spec_.age_vocab + 1, spec_.embedding_dim);

    Eigen::Index in = spec_.n_seq_channels;
    for (int l = 0; l < spec_.recurrent_layers; ++l) {
        RecurrentLayer layer;
        layer.in = in;
        layer.units = spec_.recurrent_units;
        const std::string p = "recurrent." + std::to_string(l) + ".";
        layer.Wxf = params_.add(p + "Wxf", layer.units, layer.in);
        layer.Whf = params_.add(p + "Whf", layer.units, layer.units);
        layer.bf = params_.add(p + "bf", layer.units, 1);
        if (spec_.cell == CellKind::Lstm) {
            layer.Wxi = params_.add(p + "Wxi", layer.units, layer.in);
            layer.Whi = params_.add(p + "Whi", layer.units, layer.units);
            layer.bi = params_.add(p + "bi", layer.units, 1);
            layer.Wxg = params_.add(p + "Wxg", layer.units, layer.in);
            layer.Whg = params_.add(p + "Whg", layer.units, layer.units);
            layer.bg = params_.add(p + "bg", layer.units, 1);
            layer.Wxo = params_.add(p + "Wxo", layer.units, layer.in);
            layer.Who = params_.add(p + "Who", layer.units, layer.units);
            layer.bo = params_.add(p + "bo", layer.units, 1);
        }
        if (spec_.layer_norm) {
            layer.ln_gamma = params_.add(p + "ln_gamma", layer.units, 1);
            layer.ln_beta = params_.add(p + "ln_beta", layer.units, 1);
        }
        recurrent_.push_back(layer);
        in = layer.units;
    }

    Eigen::Index dense_in = spec_.n_static_features + 2 * spec_.embedding_dim;
    if (spec_.recurrent_layers > 0) dense_in += spec_.recurrent_units;
    for (int l = 0; l < spec_.dense_layers; ++l) {
        DenseLayer layer;
        const bool final_layer = (l == spec_.dense_layers - 1);
        layer.in = dense_in;
        layer.out = final_layer ? 1 : spec_.dense_units;
        layer.act = final_layer ? Activation::Linear : Activation::ReLU;
        const std::string p = "dense." + std::to_string(l) + ".";
        layer.W = params_.add(p + "W", layer.out, layer.in);
        layer.b = params_.add(p + "b", layer.out, 1);
        if (spec_.batch_norm && !final_layer) {
            layer.bn_gamma = params_.add(p + "bn_gamma", layer.out, 1);
            layer.bn_beta = params_.add(p + "bn_beta", layer.out, 1);
            layer.bn_state = static_cast<int>(bn_states_.size());
            BatchNormState state;
            state.running_mean = Vec::Zero(layer.out);
            state.running_var = Vec::Ones(layer.out);
            bn_states_.push_back(std::move(state));
        }
        dense_.push_back(layer);
        dense_in = layer.out;
    }
}

void Model::init_params(RngStream& rng) {
    auto fill_uniform = [&](int block, double bound) {
        auto m = params_.value(block);
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = rng.uniform(-bound, bound);
    };
    fill_uniform(emb_severity_, 0.1);
    fill_uniform(emb_age_, 0.1);

    for (const RecurrentLayer& layer : recurrent_) {
        const double sx = 1.0 / std::sqrt(static_cast<double>(layer.in));
        const double sh = 1.0 / std::sqrt(static_cast<double>(layer.units));
        fill_uniform(layer.Wxf, sx);
        fill_uniform(layer.Whf, sh);
        if (spec_.cell == CellKind::Lstm) {
            params_.value(layer.bf).setOnes();  // remember-by-default at the start
            fill_uniform(layer.Wxi, sx);
            fill_uniform(layer.Whi, sh);
            params_.value(layer.bi).setZero();
            fill_uniform(layer.Wxg, sx);
            fill_uniform(layer.Whg, sh);
            params_.value(layer.bg).setZero();
            fill_uniform(layer.Wxo, sx);
            fill_uniform(layer.Who, sh);
            params_.value(layer.bo).setZero();
        } else {
            params_.value(layer.bf).setZero();
        }
        if (layer.ln_gamma >= 0) {
            params_.value(layer.ln_gamma).setOnes();
            params_.value(layer.ln_beta).setZero();
        }
    }

    for (const DenseLayer& layer : dense_) {
        fill_uniform(layer.W, 1.0 / std::sqrt(static_cast<double>(layer.in)));
        params_.value(layer.b).setZero();
        if (layer.bn_gamma >= 0) {
            params_.value(layer.bn_gamma).setOnes();
            params_.value(layer.bn_beta).setZero();
            bn_states_[static_cast<std::size_t>(layer.bn_state)].running_mean.setZero();
            bn_states_[static_cast<std::size_t>(layer.bn_state)].running_var.setOnes();
        }
    }
}

Mat Model::assemble_dense_input(const Batch& batch, const Mat* recurrent_out) const {
    const Eigen::Index b = batch.size();
    Eigen::Index cols = spec_.n_static_features + 2 * spec_.embedding_dim;
    if (recurrent_out != nullptr) cols += recurrent_out->cols();
    Mat input(b, cols);
    Eigen::Index offset = 0;
    if (recurrent_out != nullptr) {
        input.leftCols(recurrent_out->cols()) = *recurrent_out;
        offset += recurrent_out->cols();
    }
    input.middleCols(offset, spec_.n_static_features) = batch.static_cont;
    offset += spec_.n_static_features;

    const auto sev = params_.value(emb_severity_);
    const auto age = params_.value(emb_age_);
    for (Eigen::Index r = 0; r < b; ++r) {
        Eigen::Index si = batch.severity_idx[static_cast<std::size_t>(r)];
        if (si < 0 || si >= sev.rows()) si = sev.rows() - 1;
        Eigen::Index ai = batch.age_idx[static_cast<std::size_t>(r)];
        if (ai < 0 || ai >= age.rows()) ai = age.rows() - 1;
        input.block(r, offset, 1, spec_.embedding_dim) = sev.row(si);
        input.block(r, offset + spec_.embedding_dim, 1, spec_.embedding_dim) = age.row(ai);
    }
    return input;
}

Vec Model::forward(const Batch& batch, bool training, ForwardCache& cache,
                   RngStream* dropout_rng) const {
    const Eigen::Index b = batch.size();
    if (b == 0) throw shape_error("forward: empty batch");
    if (batch.static_cont.cols() != spec_.n_static_features)
        throw shape_error("forward: static feature width mismatch");
    cache.training = training;
    cache.dense.clear();
    cache.recurrent.clear();

    const Mat* head_rec = nullptr;
    if (!recurrent_.empty()) {
        if (batch.steps.empty()) throw shape_error("forward: recurrent model needs sequences");
        const std::size_t t_max = batch.steps.size();
        cache.recurrent.resize(recurrent_.size());

        const std::vector<Mat>* layer_in = &batch.steps;
        for (std::size_t l = 0; l < recurrent_.size(); ++l) {
            const RecurrentLayer& layer = recurrent_[l];
            ForwardCache::RecurrentCache& rc = cache.recurrent[l];
            rc.x = *layer_in;
            rc.f.resize(t_max);
            rc.c.resize(t_max);
            rc.h.resize(t_max);
            rc.out.resize(t_max);
            if (spec_.cell == CellKind::Lstm) {
                rc.i.resize(t_max);
                rc.g.resize(t_max);
                rc.o.resize(t_max);
                rc.tanhc.resize(t_max);
            }
            if (spec_.layer_norm) {
                rc.ln_xhat.resize(t_max);
                rc.ln_invstd.resize(t_max);
            }

            const auto Wxf = params_.value(layer.Wxf);
            const auto Whf = params_.value(layer.Whf);
            const Vec bf = params_.value(layer.bf).col(0);
            Mat h_prev = Mat::Zero(b, layer.units);
            Mat c_prev = Mat::Zero(b, layer.units);
            for (std::size_t t = 0; t < t_max; ++t) {
                const Mat& x_t = rc.x[t];
                if (spec_.cell == CellKind::Lstm) {
                    const auto Wxi = params_.value(layer.Wxi);
                    const auto Whi = params_.value(layer.Whi);
                    const Vec bi = params_.value(layer.bi).col(0);
                    const auto Wxg = params_.value(layer.Wxg);
                    const auto Whg = params_.value(layer.Whg);
                    const Vec bg = params_.value(layer.bg).col(0);
                    const auto Wxo = params_.value(layer.Wxo);
                    const auto Who = params_.value(layer.Who);
                    const Vec bo = params_.value(layer.bo).col(0);

                    Mat f = ((h_prev * Whf.transpose() + x_t * Wxf.transpose()).rowwise() +
                             bf.transpose());
                    f = (1.0 / (1.0 + (-f.array()).exp())).matrix();
                    Mat i = ((h_prev * Whi.transpose() + x_t * Wxi.transpose()).rowwise() +
                             bi.transpose());
                    i = (1.0 / (1.0 + (-i.array()).exp())).matrix();
                    Mat g = ((h_prev * Whg.transpose() + x_t * Wxg.transpose()).rowwise() +
                             bg.transpose());
                    g = g.array().tanh().matrix();
                    Mat o = ((h_prev * Who.transpose() + x_t * Wxo.transpose()).rowwise() +
                             bo.transpose());
                    o = (1.0 / (1.0 + (-o.array()).exp())).matrix();

                    Mat c = f.cwiseProduct(c_prev) + i.cwiseProduct(g);
                    Mat tanhc = c.array().tanh().matrix();
                    Mat h = o.cwiseProduct(tanhc);

                    rc.f[t] = std::move(f);
                    rc.i[t] = std::move(i);
                    rc.g[t] = std::move(g);
                    rc.o[t] = std::move(o);
                    rc.c[t] = c;
                    rc.tanhc[t] = std::move(tanhc);
                    rc.h[t] = h;
                    h_prev = std::move(h);
                    c_prev = std::move(c);
                } else {
                    Mat pre = ((h_prev * Whf.transpose() + x_t * Wxf.transpose()).rowwise() +
                               bf.transpose());
                    Mat h = pre.array().tanh().matrix();
                    rc.h[t] = h;
                    h_prev = std::move(h);
                }

                if (spec_.layer_norm) {
                    const Vec gamma = params_.value(layer.ln_gamma).col(0);
                    const Vec beta = params_.value(layer.ln_beta).col(0);
                    const Mat& h = rc.h[t];
                    const Vec mean = h.rowwise().mean();
                    Mat centered = h.colwise() - mean;
                    const Vec var = centered.array().square().rowwise().mean();
                    const Vec invstd = (var.array() + kLnEps).rsqrt();
                    Mat xhat = centered.array().colwise() * invstd.array();
                    rc.out[t] = ((xhat.array().rowwise() * gamma.transpose().array()).rowwise() +
                                 beta.transpose().array())
                                    .matrix();
                    rc.ln_xhat[t] = std::move(xhat);
                    rc.ln_invstd[t] = invstd;
                } else {
                    rc.out[t] = rc.h[t];
                }
            }
            layer_in = &rc.out;
        }

        // Read the final recurrent layer at each sequence's true last step.
        const std::vector<Mat>& top = cache.recurrent.back().out;
        cache.head_recurrent.resize(b, spec_.recurrent_units);
        for (Eigen::Index r = 0; r < b; ++r) {
            const int len = batch.seq_len[static_cast<std::size_t>(r)];
            if (len < 1 || static_cast<std::size_t>(len) > top.size())
                throw shape_error("forward: sequence length out of range");
            cache.head_recurrent.row(r) = top[static_cast<std::size_t>(len - 1)].row(r);
        }
        head_rec = &cache.head_recurrent;
    }

    Mat x = assemble_dense_input(batch, head_rec);
    cache.dense.resize(dense_.size());
    for (std::size_t l = 0; l < dense_.size(); ++l) {
        const DenseLayer& layer = dense_[l];
        ForwardCache::DenseCache& dc = cache.dense[l];
        dc.input = x;

        Mat pre = (x * params_.value(layer.W).transpose()).rowwise() +
                  params_.value(layer.b).col(0).transpose();

        if (layer.bn_gamma >= 0) {
            BatchNormState& state = bn_states_[static_cast<std::size_t>(layer.bn_state)];
            const Vec gamma = params_.value(layer.bn_gamma).col(0);
            const Vec beta = params_.value(layer.bn_beta).col(0);
            if (training && pre.rows() < 2)
                throw config_error("batch norm: training mode requires a batch of at least 2");
            Vec mean, var;
            if (training) {
                mean = pre.colwise().mean();
                var = (pre.rowwise() - mean.transpose()).array().square().colwise().mean();
                state.running_mean = (1.0 - kBnMomentum) * state.running_mean + kBnMomentum * mean;
                state.running_var = (1.0 - kBnMomentum) * state.running_var + kBnMomentum * var;
            } else {
                mean = state.running_mean;
                var = state.running_var;
            }
            dc.bn_invstd = (var.array() + kBnEps).rsqrt();
            dc.bn_xhat = (pre.rowwise() - mean.transpose()).array().rowwise() *
                         dc.bn_invstd.transpose().array();
            dc.act_in = ((dc.bn_xhat.array().rowwise() * gamma.transpose().array()).rowwise() +
                         beta.transpose().array())
                            .matrix();
        } else {
            dc.act_in = std::move(pre);
        }

        dc.out = apply_activation(layer.act, dc.act_in);

        if (spec_.dropout_rate > 0.0 && training && layer.act != Activation::Linear) {
            if (dropout_rng == nullptr)
                throw config_error("dropout requires an rng in training mode");
            const double keep_scale = 1.0 / (1.0 - spec_.dropout_rate);
            dc.dropout_mask.resize(dc.out.rows(), dc.out.cols());
            for (Eigen::Index c = 0; c < dc.out.cols(); ++c)
                for (Eigen::Index r = 0; r < dc.out.rows(); ++r)
                    dc.dropout_mask(r, c) =
                        dropout_rng->uniform01() < spec_.dropout_rate ? 0.0 : keep_scale;
            dc.out = dc.out.cwiseProduct(dc.dropout_mask);
        }
        x = dc.out;
    }

    cache.pred = x.col(0);
    return cache.pred;
}

void Model::backward(const Batch& batch, const ForwardCache& cache, const Vec& dpred) {
    const Eigen::Index b = batch.size();
    if (dpred.size() != b) throw shape_error("backward: dpred size mismatch");

    Mat dout = dpred;  // B x 1
    for (std::size_t li = dense_.size(); li-- > 0;) {
        const DenseLayer& layer = dense_[li];
        const ForwardCache::DenseCache& dc = cache.dense[li];

        Mat dact = dout;
        if (dc.dropout_mask.size() > 0) dact = dact.cwiseProduct(dc.dropout_mask);
        Mat dpre_act = activation_backward(layer.act, dc.act_in, dc.out, dact);

        Mat dpre;
        if (layer.bn_gamma >= 0) {
            const Vec gamma = params_.value(layer.bn_gamma).col(0);
            params_.grad(layer.bn_gamma).col(0) +=
                dc.bn_xhat.cwiseProduct(dpre_act).colwise().sum().transpose();
            params_.grad(layer.bn_beta).col(0) += dpre_act.colwise().sum().transpose();
            Mat dxhat = dpre_act.array().rowwise() * gamma.transpose().array();
            if (cache.training) {
                const double n = static_cast<double>(dxhat.rows());
                const Vec sum_dxhat = dxhat.colwise().sum();
                const Vec sum_dxhat_xhat = dxhat.cwiseProduct(dc.bn_xhat).colwise().sum();
                dpre = (((dxhat * n).rowwise() - sum_dxhat.transpose()).array() -
                        dc.bn_xhat.array().rowwise() * sum_dxhat_xhat.transpose().array())
                           .rowwise() *
                       (dc.bn_invstd.transpose().array() / n);
            } else {
                dpre = dxhat.array().rowwise() * dc.bn_invstd.transpose().array();
            }
        } else {
            dpre = std::move(dpre_act);
        }

        params_.grad(layer.W) += dpre.transpose() * dc.input;
        params_.grad(layer.b).col(0) += dpre.colwise().sum().transpose();
        dout = dpre * params_.value(layer.W);
    }

    // Split the head-input gradient into its parts.
    Eigen::Index offset = 0;
    Mat dhead_rec;
    if (!recurrent_.empty()) {
        dhead_rec = dout.leftCols(spec_.recurrent_units);
        offset += spec_.recurrent_units;
    }
    offset += spec_.n_static_features;  // raw features receive no gradient
    {
        auto dsev = params_.grad(emb_severity_);
        auto dage = params_.grad(emb_age_);
        const auto sev = params_.value(emb_severity_);
        const auto age = params_.value(emb_age_);
        for (Eigen::Index r = 0; r < b; ++r) {
            Eigen::Index si = batch.severity_idx[static_cast<std::size_t>(r)];
            if (si < 0 || si >= sev.rows()) si = sev.rows() - 1;
            Eigen::Index ai = batch.age_idx[static_cast<std::size_t>(r)];
            if (ai < 0 || ai >= age.rows()) ai = age.rows() - 1;
            dsev.row(si) += dout.block(r, offset, 1, spec_.embedding_dim);
            dage.row(ai) += dout.block(r, offset + spec_.embedding_dim, 1, spec_.embedding_dim);
        }
    }

    if (recurrent_.empty()) return;

    // Inject the head gradient at each sequence's true last step, then run
    // backpropagation through time, layer by layer from the top.
    const std::size_t t_max = batch.steps.size();
    std::vector<Mat> dout_steps(t_max,
                                Mat::Zero(b, spec_.recurrent_units));
    for (Eigen::Index r = 0; r < b; ++r) {
        const int len = batch.seq_len[static_cast<std::size_t>(r)];
        dout_steps[static_cast<std::size_t>(len - 1)].row(r) += dhead_rec.row(r);
    }

    for (std::size_t li = recurrent_.size(); li-- > 0;) {
        const RecurrentLayer& layer = recurrent_[li];
        const ForwardCache::RecurrentCache& rc = cache.recurrent[li];

        // Layer norm backward per step.
        std::vector<Mat> dh_steps(t_max);
        if (spec_.layer_norm) {
            const Vec gamma = params_.value(layer.ln_gamma).col(0);
            auto dgamma = params_.grad(layer.ln_gamma);
            auto dbeta = params_.grad(layer.ln_beta);
            const double u = static_cast<double>(layer.units);
            for (std::size_t t = 0; t < t_max; ++t) {
                const Mat& dy = dout_steps[t];
                dgamma.col(0) += rc.ln_xhat[t].cwiseProduct(dy).colwise().sum().transpose();
                dbeta.col(0) += dy.colwise().sum().transpose();
                Mat dxhat = dy.array().rowwise() * gamma.transpose().array();
                const Vec sum_dxhat = dxhat.rowwise().sum();
                const Vec sum_dxhat_xhat = dxhat.cwiseProduct(rc.ln_xhat[t]).rowwise().sum();
                dh_steps[t] = (((dxhat * u).colwise() - sum_dxhat).array() -
                               rc.ln_xhat[t].array().colwise() * sum_dxhat_xhat.array())
                                  .colwise() *
                              (rc.ln_invstd[t].array() / u);
            }
        } else {
            for (std::size_t t = 0; t < t_max; ++t) dh_steps[t] = dout_steps[t];
        }

        std::vector<Mat> dx_steps(t_max);
        const auto Wxf = params_.value(layer.Wxf);
        const auto Whf = params_.value(layer.Whf);
        auto gWxf = params_.grad(layer.Wxf);
        auto gWhf = params_.grad(layer.Whf);
        auto gbf = params_.grad(layer.bf);

        Mat dh_carry = Mat::Zero(b, layer.units);
        Mat dc_carry = Mat::Zero(b, layer.units);
        for (std::size_t t = t_max; t-- > 0;) {
            const Mat h_prev =
                t > 0 ? rc.h[t - 1] : Mat::Zero(b, layer.units);
            Mat dh = dh_steps[t] + dh_carry;

            if (spec_.cell == CellKind::Lstm) {
                const Mat c_prev = t > 0 ? rc.c[t - 1] : Mat::Zero(b, layer.units);
                const Mat& f = rc.f[t];
                const Mat& i = rc.i[t];
                const Mat& g = rc.g[t];
                const Mat& o = rc.o[t];
                const Mat& tanhc = rc.tanhc[t];

                Mat do_ = dh.cwiseProduct(tanhc);
                Mat dc = (dh.array() * o.array() * (1.0 - tanhc.array().square())).matrix() +
                         dc_carry;
                Mat df = dc.cwiseProduct(c_prev);
                Mat di = dc.cwiseProduct(g);
                Mat dg = dc.cwiseProduct(i);
                dc_carry = dc.cwiseProduct(f);

                Mat daf = (df.array() * f.array() * (1.0 - f.array())).matrix();
                Mat dai = (di.array() * i.array() * (1.0 - i.array())).matrix();
                Mat dag = (dg.array() * (1.0 - g.array().square())).matrix();
                Mat dao = (do_.array() * o.array() * (1.0 - o.array())).matrix();

                const Mat& x_t = rc.x[t];
                gWxf += daf.transpose() * x_t;
                gWhf += daf.transpose() * h_prev;
                gbf.col(0) += daf.colwise().sum().transpose();
                params_.grad(layer.Wxi) += dai.transpose() * x_t;
                params_.grad(layer.Whi) += dai.transpose() * h_prev;
                params_.grad(layer.bi).col(0) += dai.colwise().sum().transpose();
                params_.grad(layer.Wxg) += dag.transpose() * x_t;
                params_.grad(layer.Whg) += dag.transpose() * h_prev;
                params_.grad(layer.bg).col(0) += dag.colwise().sum().transpose();
                params_.grad(layer.Wxo) += dao.transpose() * x_t;
                params_.grad(layer.Who) += dao.transpose() * h_prev;
                params_.grad(layer.bo).col(0) += dao.colwise().sum().transpose();

                dh_carry = daf * Whf + dai * params_.value(layer.Whi) +
                           dag * params_.value(layer.Whg) + dao * params_.value(layer.Who);
                dx_steps[t] = daf * Wxf + dai * params_.value(layer.Wxi) +
                              dag * params_.value(layer.Wxg) + dao * params_.value(layer.Wxo);
            } else {
                const Mat& h = rc.h[t];
                Mat dpre = (dh.array() * (1.0 - h.array().square())).matrix();
                const Mat& x_t = rc.x[t];
                gWxf += dpre.transpose() * x_t;
                gWhf += dpre.transpose() * h_prev;
                gbf.col(0) += dpre.colwise().sum().transpose();
                dh_carry = dpre * Whf;
                dx_steps[t] = dpre * Wxf;
            }
        }
        dout_steps = std::move(dx_steps);
    }
}

Vec Model::predict(const EncodedDataset& ds, std::size_t batch_size) const {
    const std::size_t n = static_cast<std::size_t>(ds.size());
    Vec out(static_cast<Eigen::Index>(n));
    ForwardCache cache;
    std::vector<std::size_t> indices;
    for (std::size_t start = 0; start < n; start += batch_size) {
        const std::size_t stop = std::min(n, start + batch_size);
        indices.resize(stop - start);
        for (std::size_t i = start; i < stop; ++i) indices[i - start] = i;
        const Batch batch = make_batch(ds, indices);
        const Vec pred = forward(batch, false, cache, nullptr);
        for (std::size_t i = start; i < stop; ++i)
            out(static_cast<Eigen::Index>(i)) = pred(static_cast<Eigen::Index>(i - start));
    }
    return out;
}

}  // namespace claimcast
