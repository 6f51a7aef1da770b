#include "bandsel/classify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <string>

#include "bandsel/error.hpp"
#include "bandsel/io.hpp"
#include "bandsel/rng.hpp"

namespace bandsel {

// ---------------------------------------------------------------------------
// Standardizer
// ---------------------------------------------------------------------------

Standardizer Standardizer::fit(const Matrix& x) {
    if (x.rows() == 0) throw ParameterError("cannot fit standardization on an empty matrix");
    Standardizer s;
    const auto n = static_cast<double>(x.rows());
    s.mean = x.colwise().sum() / n;
    s.scale = RowVector::Ones(x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        double ss = 0.0;
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            const double d = x(i, j) - s.mean(j);
            ss += d * d;
        }
        const double sd = std::sqrt(ss / n);
        if (sd > 1e-12 * std::max(1.0, std::abs(s.mean(j)))) s.scale(j) = sd;
    }
    return s;
}

Matrix Standardizer::transform(const Matrix& x) const {
    if (static_cast<std::size_t>(x.cols()) != dim())
        throw ShapeError("input has " + std::to_string(x.cols()) + " columns, model expects " + std::to_string(dim()));
    Matrix out(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i)
        for (Eigen::Index j = 0; j < x.cols(); ++j) out(i, j) = (x(i, j) - mean(j)) / scale(j);
    return out;
}

std::string_view classifier_name(ClassifierKind k) noexcept {
    switch (k) {
        case ClassifierKind::Fcn: return "fcn";
        case ClassifierKind::Svm: return "svm";
        case ClassifierKind::Knn: return "knn";
    }
    return "?";
}

ClassifierKind parse_classifier(std::string_view name) {
    if (name == "fcn") return ClassifierKind::Fcn;
    if (name == "svm") return ClassifierKind::Svm;
    if (name == "knn") return ClassifierKind::Knn;
    throw ParameterError("unknown classifier '" + std::string(name) + "' (expected fcn, svm or knn)");
}

namespace {

void check_training_inputs(const Matrix& x, const Labels& y, std::size_t num_classes) {
    if (static_cast<std::size_t>(x.rows()) != y.size())
        throw ShapeError("feature matrix has " + std::to_string(x.rows()) + " rows but " + std::to_string(y.size()) +
                         " labels");
    if (x.rows() == 0 || x.cols() == 0) throw ParameterError("empty training matrix");
    std::set<int> present;
    for (int label : y) {
        if (label < 0 || static_cast<std::size_t>(label) >= num_classes)
            throw ParameterError("label " + std::to_string(label) + " outside [0, " + std::to_string(num_classes) + ")");
        present.insert(label);
    }
    if (present.size() < 2) throw ParameterError("training needs at least two classes");
    if (!x.allFinite()) throw NumericError("training matrix contains non-finite values");
}

void softmax_rows(Matrix& z) {
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        const double m = z.row(i).maxCoeff();
        double sum = 0.0;
        for (Eigen::Index j = 0; j < z.cols(); ++j) {
            z(i, j) = std::exp(z(i, j) - m);
            sum += z(i, j);
        }
        z.row(i) /= sum;
    }
}

Labels argmax_rows(const Matrix& p) {
    Labels out(static_cast<std::size_t>(p.rows()));
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        Eigen::Index best = 0;
        for (Eigen::Index j = 1; j < p.cols(); ++j)
            if (p(i, j) > p(i, best)) best = j;
        out[static_cast<std::size_t>(i)] = static_cast<int>(best);
    }
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// FCN
// ---------------------------------------------------------------------------

FcnNetwork FcnNetwork::init(const std::vector<std::size_t>& dims, std::uint64_t seed) {
    if (dims.size() < 2) throw ParameterError("network needs input and output layers");
    Rng rng(derive_seed(seed, "fcn-init"));
    FcnNetwork net;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const auto in = static_cast<Eigen::Index>(dims[l]);
        const auto out = static_cast<Eigen::Index>(dims[l + 1]);
        const bool last = l + 2 == dims.size();
        // He-uniform for ReLU layers, Glorot-uniform for the softmax layer.
        const double limit = last ? std::sqrt(6.0 / static_cast<double>(in + out)) : std::sqrt(6.0 / static_cast<double>(in));
        Matrix w(in, out);
        for (Eigen::Index i = 0; i < in; ++i)
            for (Eigen::Index j = 0; j < out; ++j) w(i, j) = rng.uniform(-limit, limit);
        net.weights.push_back(std::move(w));
        net.biases.push_back(RowVector::Zero(out));
    }
    return net;
}

std::vector<std::size_t> FcnNetwork::layer_dims() const {
    std::vector<std::size_t> dims;
    if (weights.empty()) return dims;
    dims.push_back(static_cast<std::size_t>(weights.front().rows()));
    for (const auto& w : weights) dims.push_back(static_cast<std::size_t>(w.cols()));
    return dims;
}

Matrix FcnNetwork::forward(const Matrix& x) const {
    Matrix a = x;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        Matrix z = a * weights[l];
        z.rowwise() += biases[l];
        if (l + 1 < weights.size()) z = z.cwiseMax(0.0);
        a = std::move(z);
    }
    softmax_rows(a);
    return a;
}

double FcnNetwork::loss_and_gradient(const Matrix& x, std::span<const int> y, FcnNetwork& grad) const {
    const std::size_t layers = weights.size();
    std::vector<Matrix> acts;  // acts[0] = input, acts[l+1] = output of layer l
    acts.reserve(layers + 1);
    acts.push_back(x);
    for (std::size_t l = 0; l < layers; ++l) {
        Matrix z = acts.back() * weights[l];
        z.rowwise() += biases[l];
        if (l + 1 < layers) z = z.cwiseMax(0.0);
        acts.push_back(std::move(z));
    }
    Matrix& p = acts.back();
    softmax_rows(p);

    const auto n = static_cast<double>(x.rows());
    double loss = 0.0;
    Matrix delta = p;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const auto t = y[static_cast<std::size_t>(i)];
        loss -= std::log(std::max(p(i, t), std::numeric_limits<double>::min()));
        delta(i, t) -= 1.0;
    }
    loss /= n;
    delta /= n;

    grad.weights.resize(layers);
    grad.biases.resize(layers);
    for (std::size_t l = layers; l-- > 0;) {
        grad.weights[l] = acts[l].transpose() * delta;
        grad.biases[l] = delta.colwise().sum();
        if (l > 0) {
            Matrix back = delta * weights[l].transpose();
            const Matrix& a = acts[l];
            for (Eigen::Index i = 0; i < back.rows(); ++i)
                for (Eigen::Index j = 0; j < back.cols(); ++j)
                    if (a(i, j) <= 0.0) back(i, j) = 0.0;
            delta = std::move(back);
        }
    }
    return loss;
}

FcnModel train_fcn(const Matrix& x, const Labels& y, std::size_t num_classes, const FcnConfig& cfg) {
    check_training_inputs(x, y, num_classes);
    if (cfg.batch == 0) throw ParameterError("batch size must be positive");

    FcnModel model;
    model.num_classes = num_classes;
    model.scaler = Standardizer::fit(x);
    const Matrix xz = model.scaler.transform(x);

    std::vector<std::size_t> dims{static_cast<std::size_t>(x.cols())};
    dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
    dims.push_back(num_classes);
    model.network = FcnNetwork::init(dims, cfg.seed);
    FcnNetwork& net = model.network;

    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    FcnNetwork m1 = net, m2 = net, grad;
    for (auto& w : m1.weights) w.setZero();
    for (auto& b : m1.biases) b.setZero();
    m2 = m1;

    Rng rng(derive_seed(cfg.seed, "fcn-shuffle"));
    std::vector<std::size_t> order(y.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<int> yb;
    Matrix xb;
    double b1t = 1.0, b2t = 1.0;

    auto adam = [&](auto& param, auto& g, auto& m, auto& v, double step) {
        m = beta1 * m + (1.0 - beta1) * g;
        v = beta2 * v + (1.0 - beta2) * g.cwiseProduct(g);
        param.array() -= step * m.array() / (v.array().sqrt() + eps);
    };

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order.begin(), order.end());
        for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
            const std::size_t count = std::min(cfg.batch, order.size() - start);
            xb.resize(static_cast<Eigen::Index>(count), xz.cols());
            yb.resize(count);
            for (std::size_t i = 0; i < count; ++i) {
                xb.row(static_cast<Eigen::Index>(i)) = xz.row(static_cast<Eigen::Index>(order[start + i]));
                yb[i] = y[order[start + i]];
            }
            const double loss = net.loss_and_gradient(xb, yb, grad);
            if (!std::isfinite(loss))
                throw NumericError("FCN loss became non-finite at epoch " + std::to_string(epoch) + " (batch offset " +
                                   std::to_string(start) + ", learning rate " + format_double(cfg.learning_rate) + ")");
            b1t *= beta1;
            b2t *= beta2;
            // Bias correction folded into the step size.
            const double step = cfg.learning_rate * std::sqrt(1.0 - b2t) / (1.0 - b1t);
            for (std::size_t l = 0; l < net.weights.size(); ++l) {
                adam(net.weights[l], grad.weights[l], m1.weights[l], m2.weights[l], step);
                adam(net.biases[l], grad.biases[l], m1.biases[l], m2.biases[l], step);
            }
        }
    }
    return model;
}

// ---------------------------------------------------------------------------
// SVM (SMO with second-order working-set selection)
// ---------------------------------------------------------------------------

namespace {

double int_pow(double base, int exp) {
    double r = 1.0;
    for (int i = 0; i < exp; ++i) r *= base;
    return r;
}

struct SmoResult {
    std::vector<double> alpha;
    double rho = 0.0;
};

// Solves min 0.5 a'Qa - e'a  s.t. 0 <= a <= C, y'a = 0 with Q_ij = y_i y_j K_ij.
SmoResult solve_smo(const Matrix& kernel, const std::vector<double>& y, double c, double tol, std::size_t max_iter) {
    const auto n = static_cast<Eigen::Index>(y.size());
    constexpr double kTau = 1e-12;
    std::vector<double> alpha(y.size(), 0.0);
    std::vector<double> grad(y.size(), -1.0);

    auto q = [&](Eigen::Index i, Eigen::Index j) { return y[i] * y[j] * kernel(i, j); };
    auto upper = [&](Eigen::Index i) { return alpha[i] >= c; };
    auto lower = [&](Eigen::Index i) { return alpha[i] <= 0.0; };

    for (std::size_t iter = 0; iter < max_iter; ++iter) {
        double gmax = -std::numeric_limits<double>::infinity();
        Eigen::Index i_sel = -1;
        for (Eigen::Index t = 0; t < n; ++t) {
            if (y[t] > 0) {
                if (!upper(t) && -grad[t] >= gmax) {
                    gmax = -grad[t];
                    i_sel = t;
                }
            } else if (!lower(t) && grad[t] >= gmax) {
                gmax = grad[t];
                i_sel = t;
            }
        }
        if (i_sel < 0) break;

        double gmax2 = -std::numeric_limits<double>::infinity();
        double obj_min = std::numeric_limits<double>::infinity();
        Eigen::Index j_sel = -1;
        const double qii = kernel(i_sel, i_sel);
        for (Eigen::Index t = 0; t < n; ++t) {
            double grad_diff;
            double quad;
            if (y[t] > 0) {
                if (lower(t)) continue;
                grad_diff = gmax + grad[t];
                gmax2 = std::max(gmax2, grad[t]);
                quad = qii + kernel(t, t) - 2.0 * y[i_sel] * q(i_sel, t);
            } else {
                if (upper(t)) continue;
                grad_diff = gmax - grad[t];
                gmax2 = std::max(gmax2, -grad[t]);
                quad = qii + kernel(t, t) + 2.0 * y[i_sel] * q(i_sel, t);
            }
            if (grad_diff > 0.0) {
                const double obj = -(grad_diff * grad_diff) / (quad > 0.0 ? quad : kTau);
                if (obj <= obj_min) {
                    obj_min = obj;
                    j_sel = t;
                }
            }
        }
        if (gmax + gmax2 < tol || j_sel < 0) break;

        const Eigen::Index i = i_sel, j = j_sel;
        const double old_ai = alpha[i], old_aj = alpha[j];
        const double qij = q(i, j);
        if (y[i] != y[j]) {
            double quad = kernel(i, i) + kernel(j, j) + 2.0 * qij;
            if (quad <= 0.0) quad = kTau;
            const double delta = (-grad[i] - grad[j]) / quad;
            const double diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if (diff > 0.0) {
                if (alpha[j] < 0.0) {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if (alpha[i] < 0.0) {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if (diff > 0.0) {
                if (alpha[i] > c) {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if (alpha[j] > c) {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            double quad = kernel(i, i) + kernel(j, j) - 2.0 * qij;
            if (quad <= 0.0) quad = kTau;
            const double delta = (grad[i] - grad[j]) / quad;
            const double sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if (sum > c) {
                if (alpha[i] > c) {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if (alpha[j] < 0.0) {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if (sum > c) {
                if (alpha[j] > c) {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if (alpha[i] < 0.0) {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        const double dai = alpha[i] - old_ai, daj = alpha[j] - old_aj;
        for (Eigen::Index t = 0; t < n; ++t) grad[t] += q(i, t) * dai + q(j, t) * daj;
    }

    double ub = std::numeric_limits<double>::infinity(), lb = -ub, sum_free = 0.0;
    std::size_t n_free = 0;
    for (Eigen::Index t = 0; t < n; ++t) {
        const double yg = y[t] * grad[t];
        if (upper(t)) {
            if (y[t] < 0) ub = std::min(ub, yg);
            else lb = std::max(lb, yg);
        } else if (lower(t)) {
            if (y[t] > 0) ub = std::min(ub, yg);
            else lb = std::max(lb, yg);
        } else {
            ++n_free;
            sum_free += yg;
        }
    }
    SmoResult r;
    r.rho = n_free > 0 ? sum_free / static_cast<double>(n_free) : 0.5 * (ub + lb);
    r.alpha = std::move(alpha);
    return r;
}

}  // namespace

SvmModel train_svm(const Matrix& x, const Labels& y, std::size_t num_classes, const SvmConfig& cfg) {
    check_training_inputs(x, y, num_classes);
    if (!(cfg.c > 0.0)) throw ParameterError("SVM C must be positive");
    if (cfg.degree < 1) throw ParameterError("polynomial degree must be at least 1");

    SvmModel model;
    model.num_classes = num_classes;
    model.scaler = Standardizer::fit(x);
    model.gamma = cfg.gamma.value_or(1.0 / static_cast<double>(x.cols()));
    model.coef0 = cfg.coef0;
    model.degree = cfg.degree;
    model.c = cfg.c;
    const Matrix xz = model.scaler.transform(x);

    Matrix gram = xz * xz.transpose();
    for (Eigen::Index i = 0; i < gram.rows(); ++i)
        for (Eigen::Index j = 0; j < gram.cols(); ++j)
            gram(i, j) = int_pow(model.gamma * gram(i, j) + model.coef0, model.degree);

    std::vector<std::vector<std::size_t>> by_class(num_classes);
    for (std::size_t i = 0; i < y.size(); ++i) by_class[static_cast<std::size_t>(y[i])].push_back(i);

    std::vector<std::ptrdiff_t> sv_slot(y.size(), -1);
    std::vector<std::size_t> sv_rows;
    for (std::size_t a = 0; a < num_classes; ++a) {
        for (std::size_t b = a + 1; b < num_classes; ++b) {
            if (by_class[a].empty() || by_class[b].empty()) continue;
            std::vector<std::size_t> idx = by_class[a];
            idx.insert(idx.end(), by_class[b].begin(), by_class[b].end());
            std::vector<double> yy(idx.size());
            for (std::size_t i = 0; i < idx.size(); ++i) yy[i] = i < by_class[a].size() ? 1.0 : -1.0;
            Matrix k(static_cast<Eigen::Index>(idx.size()), static_cast<Eigen::Index>(idx.size()));
            for (std::size_t i = 0; i < idx.size(); ++i)
                for (std::size_t j = 0; j < idx.size(); ++j)
                    k(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                        gram(static_cast<Eigen::Index>(idx[i]), static_cast<Eigen::Index>(idx[j]));

            const auto sol = solve_smo(k, yy, cfg.c, cfg.tolerance, cfg.max_iterations);
            SvmPairModel pair;
            pair.positive = static_cast<int>(a);
            pair.negative = static_cast<int>(b);
            pair.rho = sol.rho;
            for (std::size_t i = 0; i < idx.size(); ++i) {
                if (sol.alpha[i] <= 0.0) continue;
                auto& slot = sv_slot[idx[i]];
                if (slot < 0) {
                    slot = static_cast<std::ptrdiff_t>(sv_rows.size());
                    sv_rows.push_back(idx[i]);
                }
                pair.sv_index.push_back(static_cast<std::size_t>(slot));
                pair.coef.push_back(yy[i] * sol.alpha[i]);
            }
            if (pair.sv_index.empty()) throw NumericError("SVM pair produced no support vectors");
            model.pairs.push_back(std::move(pair));
        }
    }
    model.support_vectors.resize(static_cast<Eigen::Index>(sv_rows.size()), xz.cols());
    for (std::size_t i = 0; i < sv_rows.size(); ++i)
        model.support_vectors.row(static_cast<Eigen::Index>(i)) = xz.row(static_cast<Eigen::Index>(sv_rows[i]));
    return model;
}

Matrix svm_decision_values(const SvmModel& model, const Matrix& x) {
    const Matrix xz = model.scaler.transform(x);
    Matrix k = xz * model.support_vectors.transpose();
    for (Eigen::Index i = 0; i < k.rows(); ++i)
        for (Eigen::Index j = 0; j < k.cols(); ++j) k(i, j) = int_pow(model.gamma * k(i, j) + model.coef0, model.degree);

    Matrix coef = Matrix::Zero(model.support_vectors.rows(), static_cast<Eigen::Index>(model.pairs.size()));
    RowVector rho(static_cast<Eigen::Index>(model.pairs.size()));
    for (std::size_t p = 0; p < model.pairs.size(); ++p) {
        const auto& pair = model.pairs[p];
        for (std::size_t s = 0; s < pair.sv_index.size(); ++s)
            coef(static_cast<Eigen::Index>(pair.sv_index[s]), static_cast<Eigen::Index>(p)) += pair.coef[s];
        rho(static_cast<Eigen::Index>(p)) = pair.rho;
    }
    Matrix dec = k * coef;
    dec.rowwise() -= rho;
    return dec;
}

// ---------------------------------------------------------------------------
// k-NN
// ---------------------------------------------------------------------------

KnnModel train_knn(const Matrix& x, const Labels& y, std::size_t num_classes, const KnnConfig& cfg) {
    check_training_inputs(x, y, num_classes);
    if (cfg.k == 0) throw ParameterError("k-NN needs k >= 1");
    KnnModel m;
    m.scaler = Standardizer::fit(x);
    m.train = m.scaler.transform(x);
    m.labels = y;
    m.k = std::min<std::size_t>(cfg.k, y.size());
    m.num_classes = num_classes;
    return m;
}

namespace {

Prediction knn_predict(const KnnModel& m, const Matrix& x) {
    const Matrix xz = m.scaler.transform(x);
    const auto n_train = static_cast<std::size_t>(m.train.rows());
    const auto dim = static_cast<std::size_t>(m.train.cols());
    const auto k = m.num_classes;
    Prediction out{Labels(static_cast<std::size_t>(x.rows())), Matrix(x.rows(), static_cast<Eigen::Index>(k))};

    std::vector<std::pair<double, std::size_t>> dist(n_train);
    std::vector<double> votes(k);
    const double* train = m.train.data();
    for (Eigen::Index r = 0; r < xz.rows(); ++r) {
        const double* q = xz.data() + r * xz.cols();
        for (std::size_t i = 0; i < n_train; ++i) {
            const double* t = train + i * dim;
            double d = 0.0;
            for (std::size_t j = 0; j < dim; ++j) {
                const double diff = q[j] - t[j];
                d += diff * diff;
            }
            dist[i] = {d, i};
        }
        const auto kth = dist.begin() + static_cast<std::ptrdiff_t>(m.k);
        std::partial_sort(dist.begin(), kth, dist.end());
        std::fill(votes.begin(), votes.end(), 0.0);
        for (auto it = dist.begin(); it != kth; ++it) votes[static_cast<std::size_t>(m.labels[it->second])] += 1.0;

        // Majority vote; ties go to the tied class with the closest neighbour.
        const double top = *std::max_element(votes.begin(), votes.end());
        int label = -1;
        for (auto it = dist.begin(); it != kth && label < 0; ++it) {
            const int c = m.labels[it->second];
            if (votes[static_cast<std::size_t>(c)] == top) label = c;
        }
        out.labels[static_cast<std::size_t>(r)] = label;
        const double denom = static_cast<double>(m.k) + 0.5 * static_cast<double>(k);
        for (std::size_t c = 0; c < k; ++c) out.proba(r, static_cast<Eigen::Index>(c)) = (votes[c] + 0.5) / denom;
    }
    return out;
}

Prediction svm_predict(const SvmModel& m, const Matrix& x) {
    const Matrix dec = svm_decision_values(m, x);
    const auto k = m.num_classes;
    Prediction out{Labels(static_cast<std::size_t>(x.rows())), Matrix(x.rows(), static_cast<Eigen::Index>(k))};
    std::vector<double> votes(k);
    const double denom = static_cast<double>(m.pairs.size()) + 0.5 * static_cast<double>(k);
    for (Eigen::Index r = 0; r < dec.rows(); ++r) {
        std::fill(votes.begin(), votes.end(), 0.0);
        for (std::size_t p = 0; p < m.pairs.size(); ++p) {
            const auto& pair = m.pairs[p];
            votes[static_cast<std::size_t>(dec(r, static_cast<Eigen::Index>(p)) > 0.0 ? pair.positive : pair.negative)] += 1.0;
        }
        // max_element returns the first maximum, i.e. the lowest class index on ties.
        out.labels[static_cast<std::size_t>(r)] =
            static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin());
        for (std::size_t c = 0; c < k; ++c) out.proba(r, static_cast<Eigen::Index>(c)) = (votes[c] + 0.5) / denom;
    }
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Uniform interface
// ---------------------------------------------------------------------------

Model train_model(const Matrix& x, const Labels& y, std::size_t num_classes, const TrainOptions& options) {
    switch (options.kind) {
        case ClassifierKind::Fcn: return train_fcn(x, y, num_classes, options.fcn);
        case ClassifierKind::Svm: return train_svm(x, y, num_classes, options.svm);
        case ClassifierKind::Knn: return train_knn(x, y, num_classes, options.knn);
    }
    throw ParameterError("unknown classifier kind");
}

ClassifierKind model_kind(const Model& m) noexcept {
    switch (m.index()) {
        case 0: return ClassifierKind::Fcn;
        case 1: return ClassifierKind::Svm;
        default: return ClassifierKind::Knn;
    }
}

std::size_t input_dim(const Model& m) noexcept {
    return std::visit([](const auto& model) { return model.scaler.dim(); }, m);
}

std::size_t num_classes(const Model& m) noexcept {
    return std::visit([](const auto& model) { return model.num_classes; }, m);
}

Prediction predict_with_proba(const Model& m, const Matrix& x) {
    if (static_cast<std::size_t>(x.cols()) != input_dim(m))
        throw ShapeError("input has " + std::to_string(x.cols()) + " features, model expects " +
                         std::to_string(input_dim(m)));
    if (const auto* fcn = std::get_if<FcnModel>(&m)) {
        Prediction p;
        p.proba = fcn->network.forward(fcn->scaler.transform(x));
        p.labels = argmax_rows(p.proba);
        return p;
    }
    if (const auto* svm = std::get_if<SvmModel>(&m)) return svm_predict(*svm, x);
    return knn_predict(std::get<KnnModel>(m), x);
}

Labels predict(const Model& m, const Matrix& x) { return predict_with_proba(m, x).labels; }

Matrix predict_proba(const Model& m, const Matrix& x) { return predict_with_proba(m, x).proba; }

double cross_entropy(const Matrix& proba, const Labels& y) {
    if (static_cast<std::size_t>(proba.rows()) != y.size()) throw ShapeError("probability rows differ from labels");
    if (y.empty()) return 0.0;
    double loss = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i)
        loss -= std::log(std::max(proba(static_cast<Eigen::Index>(i), y[i]), 1e-12));
    return loss / static_cast<double>(y.size());
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

double cohen_kappa(const std::vector<std::vector<std::size_t>>& confusion) {
    const std::size_t k = confusion.size();
    double total = 0.0, agree = 0.0;
    std::vector<double> rows(k, 0.0), cols(k, 0.0);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) {
            const auto v = static_cast<double>(confusion[i][j]);
            total += v;
            rows[i] += v;
            cols[j] += v;
            if (i == j) agree += v;
        }
    if (total == 0.0) throw ParameterError("kappa of an empty confusion matrix");
    const double po = agree / total;
    double pe = 0.0;
    for (std::size_t i = 0; i < k; ++i) pe += rows[i] * cols[i];
    pe /= total * total;
    if (pe >= 1.0) return po >= 1.0 ? 1.0 : 0.0;
    return 1.0 - (1.0 - po) / (1.0 - pe);
}

EvalReport evaluate(const Labels& y_true, const Labels& y_pred, std::size_t num_classes) {
    if (y_true.size() != y_pred.size()) throw ShapeError("truth and prediction lengths differ");
    if (y_true.empty()) throw ParameterError("cannot evaluate an empty prediction set");
    EvalReport r;
    r.confusion.assign(num_classes, std::vector<std::size_t>(num_classes, 0));
    std::size_t correct = 0;
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        const int t = y_true[i], p = y_pred[i];
        if (t < 0 || p < 0 || static_cast<std::size_t>(t) >= num_classes || static_cast<std::size_t>(p) >= num_classes)
            throw ParameterError("label outside [0, " + std::to_string(num_classes) + ")");
        ++r.confusion[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
        if (t == p) ++correct;
    }
    r.total = y_true.size();
    r.accuracy = static_cast<double>(correct) / static_cast<double>(r.total);
    r.kappa = cohen_kappa(r.confusion);
    return r;
}

void write_confusion_csv(const std::filesystem::path& path, const EvalReport& report,
                         const std::vector<std::string>& names) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    auto name = [&](std::size_t i) { return i < names.size() ? names[i] : "class" + std::to_string(i); };
    out << "truth\\predicted";
    for (std::size_t j = 0; j < report.confusion.size(); ++j) out << ',' << name(j);
    out << '\n';
    for (std::size_t i = 0; i < report.confusion.size(); ++i) {
        out << name(i);
        for (auto v : report.confusion[i]) out << ',' << v;
        out << '\n';
    }
}

// ---------------------------------------------------------------------------
// Pixel-wise prediction
// ---------------------------------------------------------------------------

PixelPipeline::PixelPipeline(const WavelengthAxis& axis, std::optional<DualBandFeatureSet> set)
    : bands_(axis.size()) {
    if (set) assembler_.emplace(axis, std::move(*set));
}

std::size_t PixelPipeline::feature_dim() const noexcept { return assembler_ ? assembler_->feature_dim() : bands_; }

void PixelPipeline::extract(std::span<const float> pixel, std::span<double> out) const {
    if (assembler_) {
        assembler_->assemble(pixel, out);
        return;
    }
    if (pixel.size() != bands_ || out.size() < bands_) throw ShapeError("pixel length does not match the pipeline");
    std::copy(pixel.begin(), pixel.end(), out.begin());
}

namespace {

constexpr std::size_t kPixelChunk = 4096;

}  // namespace

ClassMap classify_pixels(const Hypercube& cube, const PixelMask& mask, const PixelPipeline& pipeline, const Model& model) {
    if (mask.height() != cube.height() || mask.width() != cube.width())
        throw ShapeError("mask dimensions do not match the cube");
    if (pipeline.feature_dim() != input_dim(model))
        throw ShapeError("pipeline yields " + std::to_string(pipeline.feature_dim()) + " features, model expects " +
                         std::to_string(input_dim(model)));
    if (num_classes(model) > 255) throw ParameterError("class maps hold at most 255 classes");

    ClassMap map{cube.height(), cube.width(), std::vector<std::uint8_t>(cube.pixel_count(), 0)};
    std::vector<std::size_t> fg;
    for (std::size_t p = 0; p < mask.size(); ++p)
        if (mask[p]) fg.push_back(p);

    const auto dim = static_cast<Eigen::Index>(pipeline.feature_dim());
    Matrix chunk;
    for (std::size_t start = 0; start < fg.size(); start += kPixelChunk) {
        const std::size_t count = std::min(kPixelChunk, fg.size() - start);
        chunk.resize(static_cast<Eigen::Index>(count), dim);
        for (std::size_t i = 0; i < count; ++i)
            pipeline.extract(cube.pixel(fg[start + i]),
                             std::span<double>(chunk.data() + static_cast<Eigen::Index>(i) * dim, static_cast<std::size_t>(dim)));
        const Labels labels = predict(model, chunk);
        for (std::size_t i = 0; i < count; ++i) map.labels[fg[start + i]] = static_cast<std::uint8_t>(labels[i] + 1);
    }
    return map;
}

ClassMap classify_pixels(const Hypercube& cube, const PixelMask& mask, const DualBandFeatureSet& set, const Model& model) {
    if (set.feature_dim() != input_dim(model))
        throw ShapeError("feature set has " + std::to_string(set.feature_dim()) + " features, model expects " +
                         std::to_string(input_dim(model)));
    return classify_pixels(cube, mask, PixelPipeline(cube.axis(), set), model);
}

BenchResult bench_predict(const Model& model, const std::optional<DualBandFeatureSet>& set,
                          std::span<const Hypercube> cubes, std::size_t repetitions) {
    if (cubes.empty()) throw ParameterError("benchmark needs at least one cube");
    if (repetitions < 3) throw ParameterError("benchmark needs at least 3 repetitions");

    using Clock = std::chrono::steady_clock;
    auto ms_since = [](Clock::time_point t0) {
        return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
    };

    std::vector<PixelPipeline> pipelines;
    for (const auto& cube : cubes) {
        pipelines.emplace_back(cube.axis(), set);
        if (pipelines.back().feature_dim() != input_dim(model))
            throw ShapeError("benchmark pipeline yields " + std::to_string(pipelines.back().feature_dim()) +
                             " features, model expects " + std::to_string(input_dim(model)));
    }

    std::vector<double> totals, feats, infers;
    Matrix chunk;
    std::size_t sink = 0;
    for (std::size_t rep = 0; rep < repetitions; ++rep) {
        for (std::size_t c = 0; c < cubes.size(); ++c) {
            const auto& cube = cubes[c];
            const auto dim = static_cast<Eigen::Index>(pipelines[c].feature_dim());
            double f_ms = 0.0, i_ms = 0.0;
            for (std::size_t start = 0; start < cube.pixel_count(); start += kPixelChunk) {
                const std::size_t count = std::min(kPixelChunk, cube.pixel_count() - start);
                auto t0 = Clock::now();
                chunk.resize(static_cast<Eigen::Index>(count), dim);
                for (std::size_t i = 0; i < count; ++i)
                    pipelines[c].extract(cube.pixel(start + i),
                                         std::span<double>(chunk.data() + static_cast<Eigen::Index>(i) * dim,
                                                           static_cast<std::size_t>(dim)));
                f_ms += ms_since(t0);
                t0 = Clock::now();
                const Labels labels = predict(model, chunk);
                i_ms += ms_since(t0);
                sink += static_cast<std::size_t>(labels.front());
            }
            feats.push_back(f_ms);
            infers.push_back(i_ms);
            totals.push_back(f_ms + i_ms);
        }
    }
    auto median = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        const std::size_t mid = v.size() / 2;
        return v.size() % 2 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
    };
    BenchResult r;
    r.median_image_ms = median(totals);
    r.features_ms = median(feats);
    r.inference_ms = median(infers);
    r.fps = r.median_image_ms > 0.0 ? 1000.0 / r.median_image_ms : std::numeric_limits<double>::infinity();
    r.pixels_per_image = cubes.front().pixel_count();
    (void)sink;
    return r;
}

}  // namespace bandsel
