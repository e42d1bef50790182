#pragma once

#include <Eigen/Core>
#include <json.hpp>

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace orbcorr::nn {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class CellType { Lstm, Gru };

std::string to_string(CellType c);
CellType cell_from_string(const std::string& s);

struct Dims {
    int input = 17;
    int hidden = 128;
    int layers = 3;
    int output = 4;
    CellType cell = CellType::Lstm;

    int gates() const { return cell == CellType::Lstm ? 4 : 3; }
    void validate() const;
};

/// Recurrent layer weights with gate blocks stacked row-wise.
/// LSTM order: forget, input, candidate, output. GRU order: update, reset, candidate.
struct RecurrentParams {
    MatrixXd W;  // (gates*hidden) x input
    MatrixXd U;  // (gates*hidden) x hidden
    VectorXd b;  // gates*hidden

    int hidden() const { return static_cast<int>(U.cols()); }
    auto W_gate(int g) { return W.middleRows(g * hidden(), hidden()); }
    auto U_gate(int g) { return U.middleRows(g * hidden(), hidden()); }
    auto b_gate(int g) { return b.segment(g * hidden(), hidden()); }
};

/// Every trainable tensor. Gradients and Adam moments use the same container.
struct Params {
    std::vector<RecurrentParams> layers;
    MatrixXd Wd;  // ReLU dense layer, hidden x hidden
    VectorXd bd;
    MatrixXd Wy;  // head, output x hidden
    VectorXd by;

    static Params zeros(const Dims& d);
    /// Raw (pointer, size) views in a fixed order.
    std::vector<std::pair<double*, Eigen::Index>> tensors();
    std::vector<std::pair<const double*, Eigen::Index>> tensors() const;
    Eigen::Index size() const;
    double norm() const;
    void scale(double s);
    void set_zero();
};

struct Normalization {
    VectorXd in_mean, in_std, out_mean, out_std;

    static Normalization identity(const Dims& d);
    void validate(const Dims& d) const;
};

struct LstmCache {
    MatrixXd f, i, g, o, c, tanh_c, h;
};

struct GruCache {
    MatrixXd z, r, n, h;
};

/// One LSTM step on a batch (columns). Returns h and c; the gate activations land in `cache`.
void lstm_cell_forward(const RecurrentParams& p, const MatrixXd& x, const MatrixXd& h_prev,
                       const MatrixXd& c_prev, LstmCache& cache);
/// One GRU step: h = (1 - z) h_prev + z n, n = tanh(W_n x + U_n (r h_prev) + b_n).
void gru_cell_forward(const RecurrentParams& p, const MatrixXd& x, const MatrixXd& h_prev,
                      GruCache& cache);

/// Weighted squared error: mean over (sequence, step) samples of sum_j lambda_j d_j^2.
/// Each element of pred/target is one step, output x batch.
double loss(const std::vector<MatrixXd>& pred, const std::vector<MatrixXd>& target,
            const VectorXd& lambda);

class Model {
public:
    Model() = default;
    explicit Model(const Dims& d);

    /// Xavier-uniform weights, zero biases, LSTM forget bias 1.
    void init(std::uint64_t seed);

    const Dims& dims() const { return dims_; }
    Params& params() { return params_; }
    const Params& params() const { return params_; }
    Normalization& norm() { return norm_; }
    const Normalization& norm() const { return norm_; }
    std::string config_hash;

    /// Inference on raw features (T x input) -> raw outputs (T x output).
    MatrixXd predict(const MatrixXd& seq) const;

    /// Forward pass on normalized batched inputs; returns normalized outputs.
    /// `dropout` > 0 with an rng draws inverted-dropout masks between layers.
    std::vector<MatrixXd> forward(const std::vector<MatrixXd>& x, double dropout = 0.0,
                                  std::mt19937_64* rng = nullptr) const;

    /// Loss on normalized targets and its exact BPTT gradient (accumulated into `grad`).
    double loss_and_gradient(const std::vector<MatrixXd>& x, const std::vector<MatrixXd>& y,
                             const VectorXd& lambda, Params& grad, double dropout = 0.0,
                             std::mt19937_64* rng = nullptr) const;

    nlohmann::json to_json() const;
    static Model from_json(const nlohmann::json& j);
    void save(const std::string& path) const;
    static Model load(const std::string& path);

private:
    struct Tape;
    std::vector<MatrixXd> run(const std::vector<MatrixXd>& x, double dropout,
                              std::mt19937_64* rng, Tape* tape) const;

    Dims dims_;
    Params params_;
    Normalization norm_;
};

/// Scales every gradient by max_norm / g when the global L2 norm g exceeds max_norm.
/// Returns the norm before clipping.
double clip_gradients(Params& grads, double max_norm);

struct AdamState {
    Params m, v;
    long step = 0;
};

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

AdamState adam_init(const Params& like);
/// One bias-corrected Adam update; advances state.step.
void adam_step(Params& params, const Params& grads, AdamState& state, const AdamConfig& cfg);

}  // namespace orbcorr::nn
