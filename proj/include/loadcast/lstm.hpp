#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace loadcast::lstm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Gate order used for storage and serialization.
enum class Gate : std::size_t { Forget = 0, Input = 1, Candidate = 2, Output = 3 };
inline constexpr std::size_t kGates = 4;

struct GateWeights {
    Matrix input;      ///< H x d  (W_*)
    Matrix recurrent;  ///< H x H  (U_*)
    Vector bias;       ///< H      (b_*)
};

/// Single-layer LSTM weights. The forget gate is the one that scales the
/// previous cell state.
struct LstmParameters {
    std::array<GateWeights, kGates> gates;

    GateWeights& operator[](Gate g) { return gates[static_cast<std::size_t>(g)]; }
    const GateWeights& operator[](Gate g) const { return gates[static_cast<std::size_t>(g)]; }
    int input_dim() const { return static_cast<int>(gates[0].input.cols()); }
    int hidden_dim() const { return static_cast<int>(gates[0].input.rows()); }

    static LstmParameters zeros(int input_dim, int hidden_dim);
};

/// Dense map from the final hidden state to the K forecast values.
struct RegressorHead {
    Matrix weight;  ///< K x H
    Vector bias;    ///< K

    int horizon() const { return static_cast<int>(weight.rows()); }
    static RegressorHead zeros(int hidden_dim, int horizon);
};

struct Model {
    LstmParameters lstm;
    RegressorHead head;

    /// Every trainable tensor as a flat view, in serialization order:
    /// per gate (W, U, b), then head (W_y, b_y).
    std::vector<std::span<double>> tensors();
    std::vector<std::span<const double>> tensors() const;
    std::size_t parameter_count() const;
};

/// Gradients share the model's shapes.
using Gradients = Model;

struct LstmState {
    Vector c;
    Vector h;

    static LstmState zeros(int hidden_dim) { return {Vector::Zero(hidden_dim), Vector::Zero(hidden_dim)}; }
};

/// Intermediates of one cell step. Columns index batch members.
struct StepCache {
    Matrix x, h_prev, c_prev;
    Matrix f, i, g, o;
    Matrix c, tanh_c, h;
};

struct SequenceCache {
    std::vector<StepCache> steps;
    Matrix yhat;  ///< K x B
    std::uint64_t fingerprint = 0;
};

/// Throws ValidationError on non-positive dimensions. W, U and W_y entries
/// are uniform in [-1/sqrt(H), 1/sqrt(H)]; biases are zero except the forget
/// bias, which is 1.
Model init_parameters(std::uint64_t seed, int input_dim, int hidden_dim, int horizon);

double sigmoid(double z);

std::pair<LstmState, StepCache> cell_forward(const LstmParameters& p, const Vector& x, const LstmState& s);

/// Batched step: x is d x B, h and c are H x B.
StepCache cell_forward_batch(const LstmParameters& p, const Matrix& x, const Matrix& h, const Matrix& c);

/// Runs the cell over the rows of `x` (L x d) from a zero state and applies the head.
std::pair<Vector, SequenceCache> sequence_forward(const LstmParameters& p, const RegressorHead& head, const Matrix& x);

/// Batched form: `steps[t]` is the d x B input at time t.
SequenceCache sequence_forward_batch(const LstmParameters& p, const RegressorHead& head,
                                     std::span<const Matrix> steps);

/// Mean squared error; throws on length mismatch or empty input.
double mse(std::span<const double> actual, std::span<const double> predicted);
inline double mse(const Vector& actual, const Vector& predicted) {
    return mse(std::span<const double>(actual.data(), static_cast<std::size_t>(actual.size())),
               std::span<const double>(predicted.data(), static_cast<std::size_t>(predicted.size())));
}

/// Gradient of the per-example MSE, summed over the batch columns of
/// `target` (K x B). Throws ValidationError when the cache was not produced
/// by these parameters or the shapes disagree.
Gradients backward(const LstmParameters& p, const RegressorHead& head, const SequenceCache& cache,
                   const Matrix& target);
Gradients backward(const LstmParameters& p, const RegressorHead& head, const SequenceCache& cache,
                   const Vector& target);

/// MSE of one sequence against its target.
double sequence_loss(const LstmParameters& p, const RegressorHead& head, const Matrix& x, const Vector& target);

/// Central differences of sequence_loss for every scalar parameter.
Gradients finite_diff_grad(const LstmParameters& p, const RegressorHead& head, const Matrix& x, const Vector& target,
                           double eps);

/// Central difference of an arbitrary scalar function.
double finite_diff(const std::function<double(double)>& fn, double at, double eps);

/// Global L2 norm over every entry.
double global_norm(const Gradients& g);

/// Hash of the parameter bytes; ties a SequenceCache to its parameters.
std::uint64_t fingerprint(const LstmParameters& p, const RegressorHead& head);

enum class Optimizer { Adam, Sgd };

struct TrainConfig {
    int epochs = 200;
    double learning_rate = 1e-3;
    Optimizer optimizer = Optimizer::Adam;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    int batch_size = 32;
    int lookback = 24;
    double grad_clip_norm = 5.0;
    std::uint64_t seed = 0;
    int hidden_dim = 8;
    int horizon = 18;

    /// Throws ValidationError when any field is out of range.
    void validate() const;
};

struct LossPoint {
    int epoch = 0;
    double train_mse = 0.0;
    double test_mse = 0.0;

    friend bool operator==(const LossPoint&, const LossPoint&) = default;
};

struct LossCurve {
    std::vector<LossPoint> points;

    std::string to_csv() const;
    friend bool operator==(const LossCurve&, const LossCurve&) = default;
};

/// One supervised pair: `x` is L x d, `target` has K entries.
struct Example {
    Matrix x;
    Vector target;
};

/// Reported once per optimizer step.
struct StepInfo {
    int epoch = 0;
    double raw_grad_norm = 0.0;
    double clipped_grad_norm = 0.0;
    double update_norm = 0.0;
};

struct TrainResult {
    Model model;
    LossCurve curve;
};

/// Mini-batch training. Each epoch shuffles the training set with the run
/// seed, clips the mean batch gradient to `grad_clip_norm`, and records the
/// example-weighted mean training loss seen during the epoch alongside the
/// end-of-epoch test loss. `warm_start` continues from existing weights.
/// Throws DivergenceError when the training loss stops being finite.
TrainResult train(std::span<const Example> train_set, std::span<const Example> test_set, const TrainConfig& cfg,
                  const std::optional<Model>& warm_start = std::nullopt,
                  const std::function<void(const StepInfo&)>& observer = {});

/// Forward-only predictions, one column per example (K x N).
Matrix predict(const Model& model, std::span<const Example> examples);

/// Mean over examples of per-example MSE.
double dataset_mse(const Model& model, std::span<const Example> examples);

}  // namespace loadcast::lstm
