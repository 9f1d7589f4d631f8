#include "loadcast/lstm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "loadcast/checksum.hpp"
#include "loadcast/error.hpp"

namespace loadcast::lstm {

LstmParameters LstmParameters::zeros(int input_dim, int hidden_dim) {
    LstmParameters p;
    for (auto& g : p.gates) {
        g.input = Matrix::Zero(hidden_dim, input_dim);
        g.recurrent = Matrix::Zero(hidden_dim, hidden_dim);
        g.bias = Vector::Zero(hidden_dim);
    }
    return p;
}

RegressorHead RegressorHead::zeros(int hidden_dim, int horizon) {
    return {Matrix::Zero(horizon, hidden_dim), Vector::Zero(horizon)};
}

namespace {

template <class M>
std::span<double> view(M& m) {
    return {m.data(), static_cast<std::size_t>(m.size())};
}
template <class M>
std::span<const double> view(const M& m) {
    return {m.data(), static_cast<std::size_t>(m.size())};
}

}  // namespace

std::vector<std::span<double>> Model::tensors() {
    std::vector<std::span<double>> out;
    for (auto& g : lstm.gates) {
        out.push_back(view(g.input));
        out.push_back(view(g.recurrent));
        out.push_back(view(g.bias));
    }
    out.push_back(view(head.weight));
    out.push_back(view(head.bias));
    return out;
}

std::vector<std::span<const double>> Model::tensors() const {
    std::vector<std::span<const double>> out;
    for (const auto& g : lstm.gates) {
        out.push_back(view(g.input));
        out.push_back(view(g.recurrent));
        out.push_back(view(g.bias));
    }
    out.push_back(view(head.weight));
    out.push_back(view(head.bias));
    return out;
}

std::size_t Model::parameter_count() const {
    std::size_t n = 0;
    for (auto t : tensors()) n += t.size();
    return n;
}

Model init_parameters(std::uint64_t seed, int input_dim, int hidden_dim, int horizon) {
    if (input_dim < 1 || hidden_dim < 1 || horizon < 1)
        throw ValidationError("init_parameters: dimensions must be >= 1 (d=" + std::to_string(input_dim) +
                              ", H=" + std::to_string(hidden_dim) + ", K=" + std::to_string(horizon) + ")");
    std::mt19937_64 rng(seed);
    const double bound = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
    std::uniform_real_distribution<double> uniform(-bound, bound);
    auto fill = [&](Matrix& m) {
        // Row-major draw order so the layout does not depend on Eigen's storage order.
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = uniform(rng);
    };
    Model model{LstmParameters::zeros(input_dim, hidden_dim), RegressorHead::zeros(hidden_dim, horizon)};
    for (auto& g : model.lstm.gates) {
        fill(g.input);
        fill(g.recurrent);
    }
    model.lstm[Gate::Forget].bias.setOnes();
    fill(model.head.weight);
    return model;
}

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

StepCache cell_forward_batch(const LstmParameters& p, const Matrix& x, const Matrix& h, const Matrix& c) {
    const auto pre = [&](Gate gate) -> Matrix {
        const GateWeights& w = p[gate];
        Matrix z = w.input * x;
        z.noalias() += w.recurrent * h;
        z.colwise() += w.bias;
        return z;
    };
    StepCache s;
    s.x = x;
    s.h_prev = h;
    s.c_prev = c;
    s.f = pre(Gate::Forget).unaryExpr(&sigmoid);
    s.i = pre(Gate::Input).unaryExpr(&sigmoid);
    s.g = pre(Gate::Candidate).array().tanh().matrix();
    s.o = pre(Gate::Output).unaryExpr(&sigmoid);
    s.c = s.f.cwiseProduct(c) + s.i.cwiseProduct(s.g);
    s.tanh_c = s.c.array().tanh().matrix();
    s.h = s.o.cwiseProduct(s.tanh_c);
    return s;
}

std::pair<LstmState, StepCache> cell_forward(const LstmParameters& p, const Vector& x, const LstmState& s) {
    const int d = p.input_dim();
    const int hd = p.hidden_dim();
    if (x.size() != d || s.c.size() != hd || s.h.size() != hd)
        throw ValidationError("cell_forward: dimension mismatch (x=" + std::to_string(x.size()) +
                              ", d=" + std::to_string(d) + ", state=" + std::to_string(s.h.size()) +
                              ", H=" + std::to_string(hd) + ")");
    StepCache cache = cell_forward_batch(p, x, s.h, s.c);
    LstmState next{cache.c.col(0), cache.h.col(0)};
    return {std::move(next), std::move(cache)};
}

std::uint64_t fingerprint(const LstmParameters& p, const RegressorHead& head) {
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    auto mix = [&](std::span<const double> t) { hash = fnv1a64(std::as_bytes(t), hash); };
    for (const auto& g : p.gates) {
        mix(view(g.input));
        mix(view(g.recurrent));
        mix(view(g.bias));
    }
    mix(view(head.weight));
    mix(view(head.bias));
    return hash;
}

SequenceCache sequence_forward_batch(const LstmParameters& p, const RegressorHead& head,
                                     std::span<const Matrix> steps) {
    if (steps.empty()) throw ValidationError("sequence_forward: empty sequence");
    if (head.weight.cols() != p.hidden_dim())
        throw ValidationError("sequence_forward: head expects H=" + std::to_string(head.weight.cols()) +
                              " but LSTM has H=" + std::to_string(p.hidden_dim()));
    const Eigen::Index batch = steps.front().cols();
    SequenceCache cache;
    cache.steps.reserve(steps.size());
    Matrix h = Matrix::Zero(p.hidden_dim(), batch);
    Matrix c = Matrix::Zero(p.hidden_dim(), batch);
    for (const Matrix& x : steps) {
        if (x.rows() != p.input_dim() || x.cols() != batch)
            throw ValidationError("sequence_forward: input step has shape " + std::to_string(x.rows()) + "x" +
                                  std::to_string(x.cols()) + ", expected " + std::to_string(p.input_dim()) + "x" +
                                  std::to_string(batch));
        cache.steps.push_back(cell_forward_batch(p, x, h, c));
        h = cache.steps.back().h;
        c = cache.steps.back().c;
    }
    cache.yhat = head.weight * h;
    cache.yhat.colwise() += head.bias;
    cache.fingerprint = fingerprint(p, head);
    return cache;
}

std::pair<Vector, SequenceCache> sequence_forward(const LstmParameters& p, const RegressorHead& head,
                                                  const Matrix& x) {
    if (x.rows() == 0) throw ValidationError("sequence_forward: empty sequence");
    if (x.cols() != p.input_dim())
        throw ValidationError("sequence_forward: input has " + std::to_string(x.cols()) + " features, expected " +
                              std::to_string(p.input_dim()));
    std::vector<Matrix> steps;
    steps.reserve(static_cast<std::size_t>(x.rows()));
    for (Eigen::Index t = 0; t < x.rows(); ++t) steps.emplace_back(x.row(t).transpose());
    SequenceCache cache = sequence_forward_batch(p, head, steps);
    Vector yhat = cache.yhat.col(0);
    return {std::move(yhat), std::move(cache)};
}

double mse(std::span<const double> actual, std::span<const double> predicted) {
    if (actual.size() != predicted.size())
        throw ValidationError("mse: length mismatch (" + std::to_string(actual.size()) + " vs " +
                              std::to_string(predicted.size()) + ")");
    if (actual.empty()) throw ValidationError("mse: empty input");
    double sum = 0.0;
    for (std::size_t j = 0; j < actual.size(); ++j) {
        const double diff = actual[j] - predicted[j];
        sum += diff * diff;
    }
    return sum / static_cast<double>(actual.size());
}

Gradients backward(const LstmParameters& p, const RegressorHead& head, const SequenceCache& cache,
                   const Matrix& target) {
    if (cache.steps.empty() || cache.fingerprint != fingerprint(p, head))
        throw ValidationError("backward: cache was not produced by these parameters");
    if (target.rows() != cache.yhat.rows() || target.cols() != cache.yhat.cols())
        throw ValidationError("backward: target shape " + std::to_string(target.rows()) + "x" +
                              std::to_string(target.cols()) + " does not match prediction shape " +
                              std::to_string(cache.yhat.rows()) + "x" + std::to_string(cache.yhat.cols()));

    const int hd = p.hidden_dim();
    Gradients grad{LstmParameters::zeros(p.input_dim(), hd), RegressorHead::zeros(hd, head.horizon())};

    // d/dyhat of (1/K) * sum_k (yhat_k - y_k)^2
    const Matrix dy = (2.0 / static_cast<double>(target.rows())) * (cache.yhat - target);
    const StepCache& last = cache.steps.back();
    grad.head.weight.noalias() = dy * last.h.transpose();
    grad.head.bias = dy.rowwise().sum();

    Matrix dh = head.weight.transpose() * dy;
    Matrix dc = Matrix::Zero(hd, dy.cols());
    std::array<Matrix, kGates> dz;
    for (auto it = cache.steps.rbegin(); it != cache.steps.rend(); ++it) {
        const StepCache& s = *it;
        dc.array() += dh.array() * s.o.array() * (1.0 - s.tanh_c.array().square());
        const Matrix d_o = dh.cwiseProduct(s.tanh_c);
        dz[0] = (dc.array() * s.c_prev.array() * s.f.array() * (1.0 - s.f.array())).matrix();
        dz[1] = (dc.array() * s.g.array() * s.i.array() * (1.0 - s.i.array())).matrix();
        dz[2] = (dc.array() * s.i.array() * (1.0 - s.g.array().square())).matrix();
        dz[3] = (d_o.array() * s.o.array() * (1.0 - s.o.array())).matrix();

        dh.setZero();
        for (std::size_t g = 0; g < kGates; ++g) {
            GateWeights& gw = grad.lstm.gates[g];
            gw.input.noalias() += dz[g] * s.x.transpose();
            gw.recurrent.noalias() += dz[g] * s.h_prev.transpose();
            gw.bias += dz[g].rowwise().sum();
            dh.noalias() += p.gates[g].recurrent.transpose() * dz[g];
        }
        dc = dc.cwiseProduct(s.f);
    }
    return grad;
}

Gradients backward(const LstmParameters& p, const RegressorHead& head, const SequenceCache& cache,
                   const Vector& target) {
    return backward(p, head, cache, Matrix(target));
}

double sequence_loss(const LstmParameters& p, const RegressorHead& head, const Matrix& x, const Vector& target) {
    const auto [yhat, cache] = sequence_forward(p, head, x);
    return mse(target, yhat);
}

double finite_diff(const std::function<double(double)>& fn, double at, double eps) {
    if (!(eps > 0.0)) throw ValidationError("finite_diff: epsilon must be positive");
    return (fn(at + eps) - fn(at - eps)) / (2.0 * eps);
}

Gradients finite_diff_grad(const LstmParameters& p, const RegressorHead& head, const Matrix& x, const Vector& target,
                           double eps) {
    if (!(eps > 0.0)) throw ValidationError("finite_diff_grad: epsilon must be positive");
    Model probe{p, head};
    Gradients grad{LstmParameters::zeros(p.input_dim(), p.hidden_dim()),
                   RegressorHead::zeros(p.hidden_dim(), head.horizon())};
    auto probe_tensors = probe.tensors();
    auto grad_tensors = grad.tensors();
    for (std::size_t t = 0; t < probe_tensors.size(); ++t) {
        for (std::size_t k = 0; k < probe_tensors[t].size(); ++k) {
            double& theta = probe_tensors[t][k];
            const double saved = theta;
            grad_tensors[t][k] = finite_diff(
                [&](double v) {
                    theta = v;
                    return sequence_loss(probe.lstm, probe.head, x, target);
                },
                saved, eps);
            theta = saved;
        }
    }
    return grad;
}

double global_norm(const Gradients& g) {
    double sum = 0.0;
    for (auto t : g.tensors())
        for (double v : t) sum += v * v;
    return std::sqrt(sum);
}

void TrainConfig::validate() const {
    auto fail = [](const std::string& what) { throw ValidationError("train config: " + what); };
    if (epochs < 1) fail("epochs must be >= 1");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) fail("learning_rate must be finite and >= 0");
    if (batch_size < 1) fail("batch_size must be >= 1");
    if (lookback < 1) fail("lookback must be >= 1");
    if (!(grad_clip_norm > 0.0)) fail("grad_clip_norm must be positive");
    if (hidden_dim < 1) fail("hidden_dim must be >= 1");
    if (horizon < 1) fail("horizon must be >= 1");
    if (optimizer == Optimizer::Adam) {
        if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) fail("Adam betas must be in [0, 1)");
        if (!(epsilon > 0.0)) fail("Adam epsilon must be positive");
    }
}

std::string LossCurve::to_csv() const {
    std::ostringstream out;
    out.precision(17);
    out << "epoch,train_mse,test_mse\n";
    for (const auto& p : points) out << p.epoch << ',' << p.train_mse << ',' << p.test_mse << '\n';
    return out.str();
}

namespace {

constexpr Eigen::Index kEvalChunk = 256;

/// Time-major batch: result[t] is d x B with one column per selected example.
std::vector<Matrix> gather_steps(std::span<const Example> examples, std::span<const std::size_t> indices) {
    const Eigen::Index len = examples[indices[0]].x.rows();
    const Eigen::Index d = examples[indices[0]].x.cols();
    std::vector<Matrix> steps(static_cast<std::size_t>(len), Matrix(d, static_cast<Eigen::Index>(indices.size())));
    for (std::size_t b = 0; b < indices.size(); ++b) {
        const Matrix& x = examples[indices[b]].x;
        for (Eigen::Index t = 0; t < len; ++t) steps[static_cast<std::size_t>(t)].col(static_cast<Eigen::Index>(b)) = x.row(t).transpose();
    }
    return steps;
}

Matrix gather_targets(std::span<const Example> examples, std::span<const std::size_t> indices) {
    Matrix y(examples[indices[0]].target.size(), static_cast<Eigen::Index>(indices.size()));
    for (std::size_t b = 0; b < indices.size(); ++b) y.col(static_cast<Eigen::Index>(b)) = examples[indices[b]].target;
    return y;
}

void check_shapes(std::span<const Example> set, const char* name, Eigen::Index len, Eigen::Index d, Eigen::Index k) {
    for (const Example& e : set)
        if (e.x.rows() != len || e.x.cols() != d || e.target.size() != k)
            throw ValidationError(std::string("train: inconsistent example shape in ") + name + " set");
}

}  // namespace

Matrix predict(const Model& model, std::span<const Example> examples) {
    Matrix out(model.head.horizon(), static_cast<Eigen::Index>(examples.size()));
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < examples.size(); start += kEvalChunk) {
        const std::size_t end = std::min(examples.size(), start + static_cast<std::size_t>(kEvalChunk));
        idx.resize(end - start);
        std::iota(idx.begin(), idx.end(), start);
        const auto cache = sequence_forward_batch(model.lstm, model.head, gather_steps(examples, idx));
        out.middleCols(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(end - start)) = cache.yhat;
    }
    return out;
}

double dataset_mse(const Model& model, std::span<const Example> examples) {
    if (examples.empty()) throw ValidationError("dataset_mse: empty dataset");
    const Matrix yhat = predict(model, examples);
    double sum = 0.0;
    for (std::size_t n = 0; n < examples.size(); ++n)
        sum += (yhat.col(static_cast<Eigen::Index>(n)) - examples[n].target).squaredNorm() /
               static_cast<double>(yhat.rows());
    return sum / static_cast<double>(examples.size());
}

TrainResult train(std::span<const Example> train_set, std::span<const Example> test_set, const TrainConfig& cfg,
                  const std::optional<Model>& warm_start, const std::function<void(const StepInfo&)>& observer) {
    cfg.validate();
    if (train_set.empty() || test_set.empty()) throw ValidationError("train: train and test sets must be non-empty");
    const Eigen::Index len = train_set.front().x.rows();
    const Eigen::Index d = train_set.front().x.cols();
    const Eigen::Index k = train_set.front().target.size();
    if (len == 0 || d == 0 || k == 0) throw ValidationError("train: empty example");
    check_shapes(train_set, "train", len, d, k);
    check_shapes(test_set, "test", len, d, k);

    Model model = warm_start ? *warm_start
                             : init_parameters(cfg.seed, static_cast<int>(d), cfg.hidden_dim, static_cast<int>(k));
    if (model.lstm.input_dim() != d || model.head.horizon() != k)
        throw ValidationError("train: warm-start model shape does not match the data");

    Gradients m{LstmParameters::zeros(static_cast<int>(d), model.lstm.hidden_dim()),
                RegressorHead::zeros(model.lstm.hidden_dim(), static_cast<int>(k))};
    Gradients v = m;
    long step = 0;

    std::mt19937_64 shuffle_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);

    TrainResult result;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            const std::span<const std::size_t> batch(order.data() + start, end - start);
            const auto cache = sequence_forward_batch(model.lstm, model.head, gather_steps(train_set, batch));
            const Matrix target = gather_targets(train_set, batch);
            loss_sum += (cache.yhat - target).squaredNorm() / static_cast<double>(k);

            Gradients grad = backward(model.lstm, model.head, cache, target);
            const double scale = 1.0 / static_cast<double>(batch.size());
            auto grad_t = grad.tensors();
            for (auto t : grad_t)
                for (double& g : t) g *= scale;

            StepInfo info{epoch, global_norm(grad), 0.0, 0.0};
            if (std::isfinite(info.raw_grad_norm) && info.raw_grad_norm > cfg.grad_clip_norm) {
                const double clip = cfg.grad_clip_norm / info.raw_grad_norm;
                for (auto t : grad_t)
                    for (double& g : t) g *= clip;
            }
            info.clipped_grad_norm = global_norm(grad);

            ++step;
            auto param_t = model.tensors();
            auto m_t = m.tensors();
            auto v_t = v.tensors();
            double update_sq = 0.0;
            const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
            const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
            for (std::size_t t = 0; t < param_t.size(); ++t) {
                for (std::size_t j = 0; j < param_t[t].size(); ++j) {
                    const double g = grad_t[t][j];
                    double update;
                    if (cfg.optimizer == Optimizer::Adam) {
                        m_t[t][j] = cfg.beta1 * m_t[t][j] + (1.0 - cfg.beta1) * g;
                        v_t[t][j] = cfg.beta2 * v_t[t][j] + (1.0 - cfg.beta2) * g * g;
                        update = cfg.learning_rate * (m_t[t][j] / bc1) / (std::sqrt(v_t[t][j] / bc2) + cfg.epsilon);
                    } else {
                        update = cfg.learning_rate * g;
                    }
                    param_t[t][j] -= update;
                    update_sq += update * update;
                }
            }
            info.update_norm = std::sqrt(update_sq);
            if (observer) observer(info);
        }

        LossPoint point{epoch, loss_sum / static_cast<double>(order.size()), 0.0};
        if (!std::isfinite(point.train_mse))
            throw DivergenceError("training diverged at epoch " + std::to_string(epoch) + " (train MSE " +
                                      std::to_string(point.train_mse) + ")",
                                  epoch);
        point.test_mse = dataset_mse(model, test_set);
        result.curve.points.push_back(point);
    }
    result.model = std::move(model);
    return result;
}

}  // namespace loadcast::lstm
