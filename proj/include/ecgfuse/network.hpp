#ifndef ECGFUSE_NETWORK_HPP
#define ECGFUSE_NETWORK_HPP

#include "ecgfuse/core.hpp"
#include "ecgfuse/features.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace ecgfuse {

enum class Loss { CrossEntropy, SquaredError };

struct NetConfig {
    std::vector<int> hidden{64};  // hidden layer widths; input and output widths come from the data
    double learning_rate = 1e-3;
    int batch_size = 10;
    int epochs = 150;
    int steps_per_epoch = 50;  // 0 = one full pass over the data
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    Loss loss = Loss::CrossEntropy;
    std::uint64_t seed = 0;
};

/// Fully connected ReLU network with a linear output layer. Cross-entropy
/// applies softmax to the outputs; squared error compares them directly
/// against one-hot targets. Samples are columns.
class Mlp {
public:
    Mlp() = default;

    /// widths = {inputs, hidden..., outputs}; He-normal weights, zero biases.
    Mlp(std::vector<int> widths, const RngStream& rng) : widths_(std::move(widths)) {
        if (widths_.size() < 2) throw ArgumentError("Mlp: need input and output widths");
        for (int w : widths_)
            if (w < 1) throw ArgumentError("Mlp: layer widths must be >= 1");
        auto g = rng.child("init").engine();
        for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
            Eigen::MatrixXd w(widths_[l + 1], widths_[l]);
            const double sd = std::sqrt(2.0 / widths_[l]);
            for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = sd * normal(g);
            weights_.push_back(std::move(w));
            biases_.push_back(Vector::Zero(widths_[l + 1]));
        }
    }

    const std::vector<int>& widths() const noexcept { return widths_; }
    std::size_t layers() const noexcept { return weights_.size(); }
    std::vector<Eigen::MatrixXd>& weights() noexcept { return weights_; }
    std::vector<Vector>& biases() noexcept { return biases_; }
    const std::vector<Eigen::MatrixXd>& weights() const noexcept { return weights_; }
    const std::vector<Vector>& biases() const noexcept { return biases_; }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (std::size_t l = 0; l < weights_.size(); ++l) n += weights_[l].size() + biases_[l].size();
        return n;
    }

    /// Raw outputs (logits) for a batch.
    Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const {
        Eigen::MatrixXd a = x;
        for (std::size_t l = 0; l < weights_.size(); ++l) {
            Eigen::MatrixXd z = (weights_[l] * a).colwise() + biases_[l];
            a = (l + 1 < weights_.size()) ? Eigen::MatrixXd(z.cwiseMax(0.0)) : z;
        }
        return a;
    }

    struct Gradients {
        std::vector<Eigen::MatrixXd> weights;
        std::vector<Vector> biases;
    };

    /// Mean loss over the batch and its gradient with respect to every parameter.
    double loss_and_gradients(const Eigen::MatrixXd& x, const std::vector<int>& y, Loss loss,
                              Gradients& grad) const {
        const auto L = weights_.size();
        const double batch = static_cast<double>(x.cols());
        std::vector<Eigen::MatrixXd> acts{x};  // inputs to each layer
        std::vector<Eigen::MatrixXd> pre;      // pre-activations
        for (std::size_t l = 0; l < L; ++l) {
            pre.push_back((weights_[l] * acts.back()).colwise() + biases_[l]);
            if (l + 1 < L) acts.push_back(pre.back().cwiseMax(0.0));
        }
        const Eigen::MatrixXd& out = pre.back();

        Eigen::MatrixXd target = Eigen::MatrixXd::Zero(out.rows(), out.cols());
        for (Eigen::Index j = 0; j < out.cols(); ++j) target(y[static_cast<std::size_t>(j)], j) = 1.0;

        double value = 0.0;
        Eigen::MatrixXd delta;
        if (loss == Loss::CrossEntropy) {
            const Eigen::MatrixXd p = softmax(out);
            for (Eigen::Index j = 0; j < out.cols(); ++j) {
                const Eigen::Index k = y[static_cast<std::size_t>(j)];
                const double shift = out.col(j).maxCoeff();
                const double lse = shift + std::log((out.col(j).array() - shift).exp().sum());
                value += lse - out(k, j);
            }
            delta = (p - target) / batch;
        } else {
            const Eigen::MatrixXd r = out - target;
            value = 0.5 * r.squaredNorm();
            delta = r / batch;
        }
        value /= batch;

        grad.weights.assign(L, {});
        grad.biases.assign(L, {});
        for (std::size_t l = L; l-- > 0;) {
            grad.weights[l] = delta * acts[l].transpose();
            grad.biases[l] = delta.rowwise().sum();
            if (l > 0) {
                delta = weights_[l].transpose() * delta;
                delta = delta.cwiseProduct((pre[l - 1].array() > 0.0).cast<double>().matrix());
            }
        }
        return value;
    }

    double loss(const Eigen::MatrixXd& x, const std::vector<int>& y, Loss kind) const {
        Gradients g;
        return loss_and_gradients(x, y, kind, g);
    }

    static Eigen::MatrixXd softmax(const Eigen::MatrixXd& logits) {
        Eigen::MatrixXd p(logits.rows(), logits.cols());
        for (Eigen::Index j = 0; j < logits.cols(); ++j) {
            const double shift = logits.col(j).maxCoeff();
            const Eigen::ArrayXd e = (logits.col(j).array() - shift).exp();
            p.col(j) = (e / e.sum()).matrix();
        }
        return p;
    }

    // Parameters flattened layer by layer: weights (column-major), then bias.
    Vector parameters() const {
        Vector v(static_cast<Eigen::Index>(parameter_count()));
        Eigen::Index at = 0;
        for (std::size_t l = 0; l < weights_.size(); ++l) {
            v.segment(at, weights_[l].size()) = Eigen::Map<const Vector>(weights_[l].data(), weights_[l].size());
            at += weights_[l].size();
            v.segment(at, biases_[l].size()) = biases_[l];
            at += biases_[l].size();
        }
        return v;
    }

    void set_parameters(const Vector& v) {
        if (static_cast<std::size_t>(v.size()) != parameter_count())
            throw ArgumentError("Mlp::set_parameters: size mismatch");
        Eigen::Index at = 0;
        for (std::size_t l = 0; l < weights_.size(); ++l) {
            Eigen::Map<Vector>(weights_[l].data(), weights_[l].size()) = v.segment(at, weights_[l].size());
            at += weights_[l].size();
            biases_[l] = v.segment(at, biases_[l].size());
            at += biases_[l].size();
        }
    }

    static Vector flatten(const Gradients& g) {
        Eigen::Index n = 0;
        for (std::size_t l = 0; l < g.weights.size(); ++l) n += g.weights[l].size() + g.biases[l].size();
        Vector v(n);
        Eigen::Index at = 0;
        for (std::size_t l = 0; l < g.weights.size(); ++l) {
            v.segment(at, g.weights[l].size()) = Eigen::Map<const Vector>(g.weights[l].data(), g.weights[l].size());
            at += g.weights[l].size();
            v.segment(at, g.biases[l].size()) = g.biases[l];
            at += g.biases[l].size();
        }
        return v;
    }

private:
    std::vector<int> widths_;
    std::vector<Eigen::MatrixXd> weights_;
    std::vector<Vector> biases_;
};

struct GradientCheckResult {
    double max_relative_error = 0.0;
    double max_absolute_error = 0.0;
    std::size_t worst_parameter = 0;
};

/// Compares backprop gradients with central differences, step h.
/// Relative error per parameter is |a - n| / max(|a|, |n|, 1e-6); the floor
/// keeps parameters with vanishing gradient from dividing roundoff by ~0.
inline GradientCheckResult gradient_check(const Mlp& net, const Eigen::MatrixXd& x, const std::vector<int>& y,
                                          Loss loss, double h = 1e-5) {
    Mlp::Gradients g;
    net.loss_and_gradients(x, y, loss, g);
    const Vector analytic = Mlp::flatten(g);
    Mlp probe = net;
    Vector theta = net.parameters();
    GradientCheckResult res;
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
        const double keep = theta(i);
        theta(i) = keep + h;
        probe.set_parameters(theta);
        const double up = probe.loss(x, y, loss);
        theta(i) = keep - h;
        probe.set_parameters(theta);
        const double down = probe.loss(x, y, loss);
        theta(i) = keep;
        const double numeric = (up - down) / (2.0 * h);
        const double abs_err = std::abs(analytic(i) - numeric);
        const double rel = abs_err / std::max({std::abs(analytic(i)), std::abs(numeric), 1e-6});
        res.max_absolute_error = std::max(res.max_absolute_error, abs_err);
        if (rel > res.max_relative_error) {
            res.max_relative_error = rel;
            res.worst_parameter = static_cast<std::size_t>(i);
        }
    }
    return res;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

/// Per-feature z-scoring fitted on training data.
struct Standardizer {
    Vector mean;
    Vector scale;

    static Standardizer fit(const Eigen::MatrixXd& x) {
        Standardizer s;
        const double n = static_cast<double>(x.cols());
        s.mean = x.rowwise().mean();
        s.scale = ((x.colwise() - s.mean).array().square().rowwise().sum() / n).sqrt().matrix();
        for (Eigen::Index i = 0; i < s.scale.size(); ++i)
            if (!(s.scale(i) > 1e-12)) s.scale(i) = 1.0;
        return s;
    }

    Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const {
        return (x.colwise() - mean).array().colwise() / scale.array();
    }
};

struct TrainingCurve {
    std::vector<double> loss;
    std::vector<double> accuracy;
};

struct Model {
    Standardizer standardizer;
    Mlp net;
    std::vector<ClassId> classes;
    TrainingCurve curve;

    /// Class probabilities (softmax of the outputs), one column per sample.
    Eigen::MatrixXd scores(const Eigen::MatrixXd& features) const {
        return Mlp::softmax(net.forward(standardizer.apply(features)));
    }
};

class TrainingError : public Error {
public:
    TrainingError(const std::string& what, int epoch) : Error(what), epoch_(epoch) {}
    int epoch() const noexcept { return epoch_; }

private:
    int epoch_;
};

/// Mini-batch Adam. Batches walk a fresh permutation each epoch (substream
/// "shuffle/<epoch>"); with steps_per_epoch set, the walk wraps around the
/// permutation as needed.
inline Model train(const LabeledFeatures& data, const NetConfig& cfg) {
    if (data.class_count() < 2) throw ArgumentError("train: need at least two classes");
    if (cfg.batch_size < 1) throw ArgumentError("train: batch size must be >= 1");
    if (data.size() < static_cast<std::size_t>(cfg.batch_size))
        throw ArgumentError("train: " + std::to_string(data.size()) + " samples is fewer than one batch of " +
                            std::to_string(cfg.batch_size));
    if (cfg.epochs < 0 || cfg.learning_rate < 0.0) throw ArgumentError("train: negative epochs or learning rate");

    const RngStream root(cfg.seed, "train");
    Model model;
    model.classes = data.classes;
    model.standardizer = Standardizer::fit(data.x);
    const Eigen::MatrixXd x = model.standardizer.apply(data.x);

    std::vector<int> widths{static_cast<int>(x.rows())};
    widths.insert(widths.end(), cfg.hidden.begin(), cfg.hidden.end());
    widths.push_back(data.class_count());
    model.net = Mlp(widths, root);

    Vector theta = model.net.parameters();
    Vector m1 = Vector::Zero(theta.size());
    Vector m2 = Vector::Zero(theta.size());
    long long t = 0;

    const auto n = data.size();
    const auto B = static_cast<std::size_t>(cfg.batch_size);
    const std::size_t steps = cfg.steps_per_epoch > 0 ? static_cast<std::size_t>(cfg.steps_per_epoch) : (n + B - 1) / B;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<std::size_t> perm(n);
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        auto g = root.child("shuffle").child(static_cast<std::size_t>(epoch)).engine();
        shuffle(perm, g);

        double loss_sum = 0.0;
        std::size_t seen = 0, correct = 0;
        for (std::size_t s = 0; s < steps; ++s) {
            const std::size_t begin = s * B;
            const std::size_t size = cfg.steps_per_epoch > 0 ? B : std::min(B, n - begin);
            Eigen::MatrixXd xb(x.rows(), static_cast<Eigen::Index>(size));
            std::vector<int> yb(size);
            for (std::size_t i = 0; i < size; ++i) {
                const std::size_t idx = perm[(begin + i) % n];
                xb.col(static_cast<Eigen::Index>(i)) = x.col(static_cast<Eigen::Index>(idx));
                yb[i] = data.y[idx];
            }
            Mlp::Gradients grad;
            const double value = model.net.loss_and_gradients(xb, yb, cfg.loss, grad);
            if (!std::isfinite(value))
                throw TrainingError("train: loss diverged at epoch " + std::to_string(epoch), epoch);

            const Eigen::MatrixXd out = model.net.forward(xb);
            for (std::size_t i = 0; i < size; ++i) {
                Eigen::Index arg;
                out.col(static_cast<Eigen::Index>(i)).maxCoeff(&arg);
                if (arg == yb[i]) ++correct;
            }
            loss_sum += value * static_cast<double>(size);
            seen += size;

            const Vector gv = Mlp::flatten(grad);
            ++t;
            m1 = cfg.beta1 * m1 + (1.0 - cfg.beta1) * gv;
            m2 = cfg.beta2 * m2 + (1.0 - cfg.beta2) * gv.cwiseProduct(gv);
            const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
            const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
            theta.array() -= cfg.learning_rate * (m1.array() / c1) / ((m2.array() / c2).sqrt() + cfg.epsilon);
            model.net.set_parameters(theta);
        }
        model.curve.loss.push_back(loss_sum / static_cast<double>(seen));
        model.curve.accuracy.push_back(static_cast<double>(correct) / static_cast<double>(seen));
    }
    return model;
}

}  // namespace ecgfuse

#endif
