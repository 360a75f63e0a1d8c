#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "claimcast/features.hpp"
#include "claimcast/rng.hpp"

namespace claimcast {

enum class Activation { Linear, ReLU, Tanh, Sigmoid };

enum class CellKind { Lstm, VanillaRnn };

double activate_scalar(Activation a, double x);

// ---------------------------------------------------------------------------
// Single-observation layer primitives. The batched model kernels below are
// independent implementations; the test suites cross-check the two paths.
// ---------------------------------------------------------------------------

// phi(W z + b); W is (out x in).
Vec dense_forward(const Vec& z, const Mat& W, const Vec& b, Activation act);

// h_t = phi(W_hh h_prev + W_xh x_t + b).
Vec rnn_cell_forward(const Vec& h_prev, const Vec& x_t, const Mat& W_hh, const Mat& W_xh,
                     const Vec& b, Activation act);

struct LstmGates {
    Mat W_xf, W_hf;
    Mat W_xi, W_hi;
    Mat W_xg, W_hg;
    Mat W_xo, W_ho;
    Vec b_f, b_i, b_g, b_o;
};

struct LstmState {
    Vec h, c;
};

// f = sig(.), i = sig(.), g = tanh(.), o = sig(.); c_t = f.c_prev + i.g;
// h_t = o.tanh(c_t).
LstmState lstm_cell_forward(const Vec& h_prev, const Vec& c_prev, const Vec& x_t,
                            const LstmGates& gates);

// Row lookup with gradient routed only to that row; out-of-range indices map
// to the reserved last row.
Vec embedding_lookup(int index, const Mat& table);

struct BatchNormState {
    Vec running_mean, running_var;
};

// Training mode normalises with batch statistics (biased variance) and folds
// them into the running averages; eval mode uses the running statistics.
// Training requires a batch of at least 2.
Mat batch_norm_forward(const Mat& x, const Vec& gamma, const Vec& beta, BatchNormState& state,
                       bool training, double momentum = 0.1, double eps = 1e-5);

// Normalises one vector across the feature dimension; no running statistics.
Vec layer_norm_forward(const Vec& h, const Vec& gamma, const Vec& beta, double eps = 1e-5);

// Training mode zeroes units with probability `rate` and rescales survivors
// by 1/(1-rate); eval mode is the identity.
Vec dropout_forward(const Vec& x, double rate, bool training, RngStream& rng);

double mse_loss(const Vec& predictions, const Vec& targets);

// ---------------------------------------------------------------------------
// Flat parameter storage: every trainable tensor is a named block inside one
// contiguous array, which keeps the optimiser, finite-difference checks and
// serialization trivial.
// ---------------------------------------------------------------------------

struct ParamBlock {
    std::string name;
    std::size_t offset = 0;
    Eigen::Index rows = 0, cols = 0;
    std::size_t size() const { return static_cast<std::size_t>(rows * cols); }
};

class ParamStore {
public:
    int add(std::string name, Eigen::Index rows, Eigen::Index cols);

    Eigen::Map<Mat> value(int block);
    Eigen::Map<const Mat> value(int block) const;
    Eigen::Map<Mat> grad(int block);

    std::vector<double>& values() { return values_; }
    const std::vector<double>& values() const { return values_; }
    std::vector<double>& grads() { return grads_; }
    const std::vector<ParamBlock>& blocks() const { return blocks_; }
    std::size_t size() const { return values_.size(); }
    void zero_grads();

private:
    std::vector<ParamBlock> blocks_;
    std::vector<double> values_;
    std::vector<double> grads_;
};

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

struct ModelSpec {
    Variant variant = Variant::FNN;
    CellKind cell = CellKind::Lstm;
    int recurrent_layers = 0;  // 0 for FNN variants
    int recurrent_units = 0;
    int dense_layers = 2;  // total, including the linear 1-unit output layer
    int dense_units = 16;
    int n_static_features = 0;  // continuous static inputs
    int n_seq_channels = 0;     // 0 for FNN variants
    int severity_vocab = kSeverityVocab;
    int age_vocab = kAgeVocab;
    int embedding_dim = 2;
    double dropout_rate = 0.0;
    bool batch_norm = true;  // before activation in each non-final dense layer
    bool layer_norm = true;  // after each recurrent layer

    void validate() const;

    // Architecture for one grid point: FNN variants interpret `layers` as the
    // total dense depth; LSTM variants as the recurrent depth with a fixed
    // two-layer dense head of the same width.
    static ModelSpec for_variant(Variant v, int layers, int units, int n_static_features,
                                 int n_seq_channels);
};

// One mini-batch in model-ready form. Sequence steps are zero-padded to the
// batch maximum; `seq_len` holds true lengths and every read happens at the
// true last step.
struct Batch {
    Mat static_cont;  // B x n_static
    std::vector<int> severity_idx, age_idx;
    std::vector<Mat> steps;  // T_max matrices of B x n_channels
    std::vector<int> seq_len;
    Vec targets;

    Eigen::Index size() const { return static_cont.rows(); }
};

Batch make_batch(const EncodedDataset& ds, std::span<const std::size_t> indices);

// Per-forward activations; produced by forward(), consumed by backward().
// Lives outside the model so eval-mode inference can share one model across
// threads, each with its own cache.
struct ForwardCache {
    struct DenseCache {
        Mat input;         // layer input
        Mat act_in;        // post-norm pre-activation
        Mat out;           // post activation (and dropout)
        Mat bn_xhat;       // training-mode batch norm cache
        Vec bn_invstd;
        Mat dropout_mask;  // empty when dropout is off
    };
    struct RecurrentCache {
        std::vector<Mat> x, f, i, g, o, c, tanhc, h;  // per step
        std::vector<Mat> ln_xhat;                     // per step (layer norm)
        std::vector<Vec> ln_invstd;                   // per step, one per row
        std::vector<Mat> out;                         // post layer norm
    };
    std::vector<DenseCache> dense;
    std::vector<RecurrentCache> recurrent;
    Mat head_recurrent;  // final recurrent output read at each true last step
    Vec pred;
    bool training = false;
};

class Model {
public:
    explicit Model(ModelSpec spec);

    const ModelSpec& spec() const { return spec_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }

    // Uniform fan-in initialisation; forget-gate biases start at 1.
    void init_params(RngStream& rng);

    // Returns one prediction per batch row (normalised log scale). Training
    // mode uses batch statistics, updates running averages and applies
    // dropout; `dropout_rng` may be null when the dropout rate is zero.
    // Eval-mode forward mutates nothing and is safe to share across threads.
    Vec forward(const Batch& batch, bool training, ForwardCache& cache,
                RngStream* dropout_rng = nullptr) const;

    // Gradient of the mean batch loss for every parameter, accumulated into
    // the store. `dpred` is dLoss/dprediction per row.
    void backward(const Batch& batch, const ForwardCache& cache, const Vec& dpred);

    // Eval-mode predictions, batched internally.
    Vec predict(const EncodedDataset& ds, std::size_t batch_size = 1024) const;

    // Running statistics (batch norm); serialized with checkpoints. Updated
    // only by training-mode forwards.
    std::vector<BatchNormState>& bn_states() { return bn_states_; }
    const std::vector<BatchNormState>& bn_states() const { return bn_states_; }

private:
    struct DenseLayer {
        int W = -1, b = -1;
        int bn_gamma = -1, bn_beta = -1;
        int bn_state = -1;  // index into bn_states_
        Activation act = Activation::ReLU;
        Eigen::Index in = 0, out = 0;
    };
    struct RecurrentLayer {
        // Vanilla cells use the f-gate slots for W_xh/W_hh/b.
        int Wxf = -1, Whf = -1, bf = -1;
        int Wxi = -1, Whi = -1, bi = -1;
        int Wxg = -1, Whg = -1, bg = -1;
        int Wxo = -1, Who = -1, bo = -1;
        int ln_gamma = -1, ln_beta = -1;
        Eigen::Index in = 0, units = 0;
    };

    void build();
    Mat assemble_dense_input(const Batch& batch, const Mat* recurrent_out) const;

    ModelSpec spec_;
    ParamStore params_;
    mutable std::vector<BatchNormState> bn_states_;
    int emb_severity_ = -1, emb_age_ = -1;
    std::vector<RecurrentLayer> recurrent_;
    std::vector<DenseLayer> dense_;
};

}  // namespace claimcast
