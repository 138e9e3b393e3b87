#include "csl/probing.hpp"

#include "csl/error.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

namespace csl {

const char* to_string(StopReason reason) {
    switch (reason) {
    case StopReason::GradientTolerance: return "gradient_tolerance";
    case StopReason::MaxIterations: return "max_iterations";
    case StopReason::LineSearchStalled: return "line_search_stalled";
    }
    return "unknown";
}

void TrainConfig::validate() const {
    if (!(ridge >= 0.0) || !std::isfinite(ridge)) {
        throw Error(ErrorKind::Configuration, "probe ridge must be a finite value >= 0");
    }
    if (max_iter < 0) {
        throw Error(ErrorKind::Configuration, "probe max_iter must be >= 0");
    }
    if (!(grad_tol > 0.0)) {
        throw Error(ErrorKind::Configuration, "probe grad_tol must be > 0");
    }
}

namespace {

void check_labels(const Matrix& x, const Labels& labels, std::size_t num_classes) {
    if (static_cast<std::size_t>(x.rows()) != labels.size()) {
        throw Error(ErrorKind::InputValidation,
                    "probe: " + std::to_string(x.rows()) + " rows but " +
                        std::to_string(labels.size()) + " labels");
    }
    for (Label y : labels) {
        if (y >= num_classes) {
            throw Error(ErrorKind::InputValidation,
                        "probe: label " + std::to_string(y) + " >= class count " +
                            std::to_string(num_classes));
        }
    }
}

/// Parameters packed as [vec(W) (column-major C x D), b].
struct Objective {
    const Matrix& x;
    const Labels& labels;
    Eigen::Index classes;
    double ridge;

    Eigen::Index size() const { return classes * x.cols() + classes; }

    double operator()(const Vector& theta, Vector& grad) const {
        const Eigen::Index c = classes;
        const Eigen::Index d = x.cols();
        const auto n = static_cast<double>(x.rows());
        Eigen::Map<const Matrix> w(theta.data(), c, d);
        Eigen::Map<const Vector> b(theta.data() + c * d, c);

        Matrix scores = x * w.transpose();
        scores.rowwise() += b.transpose();
        double loss = 0.0;
        // scores become softmax probabilities minus the one-hot target
        for (Eigen::Index i = 0; i < scores.rows(); ++i) {
            auto row = scores.row(i);
            const Label y = labels[static_cast<std::size_t>(i)];
            const double m = row.maxCoeff();
            const double shifted_target = row(y) - m;
            row.array() = (row.array() - m).exp();
            const double z = row.sum();
            loss += std::log(z) - shifted_target;
            row /= z;
            row(y) -= 1.0;
        }
        loss /= n;
        loss += 0.5 * ridge * w.squaredNorm();

        grad.resize(size());
        Eigen::Map<Matrix> gw(grad.data(), c, d);
        Eigen::Map<Vector> gb(grad.data() + c * d, c);
        gw.noalias() = scores.transpose() * x / n;
        gw += ridge * w;
        gb = scores.colwise().sum().transpose() / n;
        return loss;
    }
};

}  // namespace

LossGradient probe_objective(const Matrix& x, const Labels& labels, const Matrix& weights,
                             const Vector& bias, double ridge) {
    const auto c = weights.rows();
    check_labels(x, labels, static_cast<std::size_t>(c));
    if (weights.cols() != x.cols() || bias.size() != c) {
        throw Error(ErrorKind::InputValidation, "probe_objective: parameter shape mismatch");
    }
    if (x.rows() == 0) {
        throw Error(ErrorKind::InputValidation, "probe_objective: empty data");
    }
    Objective obj{x, labels, c, ridge};
    Vector theta(obj.size());
    Eigen::Map<Matrix>(theta.data(), c, x.cols()) = weights;
    theta.tail(c) = bias;
    Vector grad;
    LossGradient out;
    out.loss = obj(theta, grad);
    out.grad_weights = Eigen::Map<const Matrix>(grad.data(), c, x.cols());
    out.grad_bias = grad.tail(c);
    return out;
}

Probe train_probe(const Matrix& x, const Labels& labels, std::size_t num_classes,
                  const TrainConfig& config) {
    config.validate();
    if (num_classes < 1) {
        throw Error(ErrorKind::InputValidation, "probe needs at least one class");
    }
    check_labels(x, labels, num_classes);
    if (x.rows() == 0) {
        throw Error(ErrorKind::InputValidation, "probe: no training rows");
    }
    if (labels.size() < num_classes) {
        throw Error(ErrorKind::InputValidation,
                    "probe: need N >= C, got N=" + std::to_string(labels.size()) +
                        " C=" + std::to_string(num_classes));
    }
    require_finite(x, "probe training features");

    const auto c = static_cast<Eigen::Index>(num_classes);
    const Eigen::Index d = x.cols();
    Objective objective{x, labels, c, config.ridge};

    Vector theta = Vector::Zero(objective.size());
    {
        Vector counts = Vector::Zero(c);
        for (Label y : labels) {
            counts(y) += 1.0;
        }
        const double n = static_cast<double>(labels.size());
        for (Eigen::Index k = 0; k < c; ++k) {
            theta(c * d + k) = std::log((counts(k) + 0.5) / (n + 0.5 * static_cast<double>(c)));
        }
    }

    constexpr int kMemory = 10;
    constexpr double kArmijo = 1e-4;
    constexpr int kMaxBacktracks = 60;
    std::deque<Vector> s_hist;
    std::deque<Vector> y_hist;
    std::deque<double> rho_hist;

    Vector grad;
    double f = objective(theta, grad);
    if (!std::isfinite(f)) {
        throw FitError(grad.cwiseAbs().maxCoeff(), "probe loss is not finite at the start");
    }
    Probe probe;
    probe.config = config;
    probe.stop = StopReason::MaxIterations;
    int iter = 0;
    Vector grad_new;
    for (; iter < config.max_iter; ++iter) {
        if (grad.cwiseAbs().maxCoeff() <= config.grad_tol) {
            probe.stop = StopReason::GradientTolerance;
            break;
        }
        // two-loop recursion
        Vector dir = -grad;
        const std::size_t m = s_hist.size();
        std::vector<double> alpha(m);
        for (std::size_t k = m; k-- > 0;) {
            alpha[k] = rho_hist[k] * s_hist[k].dot(dir);
            dir -= alpha[k] * y_hist[k];
        }
        if (m > 0) {
            dir *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
        }
        for (std::size_t k = 0; k < m; ++k) {
            const double beta = rho_hist[k] * y_hist[k].dot(dir);
            dir += (alpha[k] - beta) * s_hist[k];
        }
        double slope = grad.dot(dir);
        if (!(slope < 0.0)) {
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
            dir = -grad;
            slope = -grad.squaredNorm();
        }
        double step = 1.0;
        if (s_hist.empty()) {
            step = std::min(1.0, 1.0 / std::sqrt(grad.squaredNorm()));
        }
        bool accepted = false;
        Vector trial;
        double f_new = f;
        for (int bt = 0; bt < kMaxBacktracks; ++bt) {
            trial = theta + step * dir;
            f_new = objective(trial, grad_new);
            if (std::isfinite(f_new) && f_new <= f + kArmijo * step * slope) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            probe.stop = StopReason::LineSearchStalled;
            break;
        }
        Vector s = trial - theta;
        Vector y = grad_new - grad;
        const double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm() && sy > 0.0) {
            if (s_hist.size() == kMemory) {
                s_hist.pop_front();
                y_hist.pop_front();
                rho_hist.pop_front();
            }
            s_hist.push_back(std::move(s));
            y_hist.push_back(std::move(y));
            rho_hist.push_back(1.0 / sy);
        }
        theta.swap(trial);
        grad.swap(grad_new);
        f = f_new;
    }
    if (iter == config.max_iter && grad.cwiseAbs().maxCoeff() <= config.grad_tol) {
        probe.stop = StopReason::GradientTolerance;
    }
    if (!std::isfinite(f) || !theta.allFinite()) {
        throw FitError(grad.cwiseAbs().maxCoeff(), "probe optimization produced non-finite values");
    }

    probe.weights = Eigen::Map<const Matrix>(theta.data(), c, d);
    probe.bias = theta.tail(c);
    probe.final_loss = f;
    probe.grad_norm = grad.cwiseAbs().maxCoeff();
    probe.iterations = iter;
    return probe;
}

Labels Probe::predict(const Matrix& x) const {
    if (x.cols() != input_dim()) {
        throw Error(ErrorKind::InputValidation,
                    "probe expects " + std::to_string(input_dim()) + " features, got " +
                        std::to_string(x.cols()));
    }
    Matrix scores = x * weights.transpose();
    scores.rowwise() += bias.transpose();
    Labels out(static_cast<std::size_t>(x.rows()));
    for (Eigen::Index i = 0; i < scores.rows(); ++i) {
        Eigen::Index best = 0;
        for (Eigen::Index k = 1; k < scores.cols(); ++k) {
            if (scores(i, k) > scores(i, best)) {
                best = k;
            }
        }
        out[static_cast<std::size_t>(i)] = static_cast<Label>(best);
    }
    return out;
}

double accuracy(const Probe& probe, const Matrix& x, const Labels& labels) {
    if (x.cols() != probe.input_dim()) {
        throw Error(ErrorKind::InputValidation,
                    "accuracy: probe expects " + std::to_string(probe.input_dim()) +
                        " features, got " + std::to_string(x.cols()));
    }
    if (labels.empty() || x.rows() == 0) {
        throw Error(ErrorKind::InputValidation, "accuracy: empty evaluation set");
    }
    if (static_cast<std::size_t>(x.rows()) != labels.size()) {
        throw Error(ErrorKind::InputValidation, "accuracy: row/label count mismatch");
    }
    const Labels predicted = probe.predict(x);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        correct += predicted[i] == labels[i] ? 1 : 0;
    }
    return static_cast<double>(correct) / static_cast<double>(labels.size());
}

double majority_baseline(const Labels& labels) {
    if (labels.empty()) {
        throw Error(ErrorKind::InputValidation, "majority_baseline: no labels");
    }
    const Label top = *std::max_element(labels.begin(), labels.end());
    std::vector<std::size_t> counts(static_cast<std::size_t>(top) + 1, 0);
    for (Label y : labels) {
        ++counts[y];
    }
    const auto best = *std::max_element(counts.begin(), counts.end());
    return static_cast<double>(best) / static_cast<double>(labels.size());
}

Matrix project_features(const Projector& p, const Matrix& x, Side side) {
    if (x.cols() != p.dim()) {
        throw Error(ErrorKind::InputValidation,
                    "project_features: subspace lives in D=" + std::to_string(p.dim()) +
                        " but features have " + std::to_string(x.cols()) + " columns");
    }
    const Matrix& m = side == Side::Onto ? p.onto() : p.complement();
    return x * m.transpose();
}

Matrix project_features(const ConceptSubspace& s, const Matrix& x, Side side) {
    return project_features(s.projector, x, side);
}

}  // namespace csl
