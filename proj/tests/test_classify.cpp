#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "bandsel/dataset.hpp"
#include "bandsel/error.hpp"
#include "bandsel/classify.hpp"
#include "bandsel/serialization.hpp"
#include "oracles.hpp"

using namespace bandsel;

namespace {

struct Blobs {
    Matrix x;
    Labels y;
};

Blobs make_blobs(std::size_t per_class, std::size_t classes, std::size_t dim, double spread, std::uint64_t seed) {
    oracle::Gen gen(seed);
    Blobs b;
    b.x.resize(static_cast<Eigen::Index>(per_class * classes), static_cast<Eigen::Index>(dim));
    for (std::size_t c = 0; c < classes; ++c)
        for (std::size_t i = 0; i < per_class; ++i) {
            const auto r = static_cast<Eigen::Index>(c * per_class + i);
            for (std::size_t d = 0; d < dim; ++d)
                b.x(r, static_cast<Eigen::Index>(d)) = (d % classes == c ? 4.0 : 0.0) + spread * gen.normal();
            b.y.push_back(static_cast<int>(c));
        }
    return b;
}

double accuracy(const Labels& a, const Labels& b) {
    std::size_t hit = 0;
    for (std::size_t i = 0; i < a.size(); ++i) hit += a[i] == b[i];
    return static_cast<double>(hit) / static_cast<double>(a.size());
}

}  // namespace

TEST(Standardizer, ZeroVarianceColumnsMapToZero) {
    Matrix x(3, 2);
    x << 1, 5, 2, 5, 3, 5;
    const auto s = Standardizer::fit(x);
    const Matrix z = s.transform(x);
    EXPECT_NEAR(z(0, 0), -std::sqrt(1.5), 1e-12);
    for (int r = 0; r < 3; ++r) EXPECT_EQ(z(r, 1), 0.0);
}

TEST(Fcn, SoftmaxRowsSumToOne) {
    oracle::Gen gen(5);
    const auto net = FcnNetwork::init({6, 16, 8, 4}, 1);
    Matrix x(50, 6);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = 30.0 * gen.normal();
    const Matrix p = net.forward(x);
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
        EXPECT_NEAR(p.row(r).sum(), 1.0, 1e-6);
        EXPECT_GE(p.row(r).minCoeff(), 0.0);
    }
}

TEST(Fcn, GradientMatchesCentralDifferences) {
    oracle::Gen gen(17);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        auto net = FcnNetwork::init({2, 3, 2}, seed);
        for (auto& b : net.biases)
            for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = gen.uniform(-0.5, 0.5);
        Matrix x(4, 2);
        for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = gen.normal();
        const std::vector<int> y = {0, 1, 1, 0};
        FcnNetwork grad = net;
        net.loss_and_gradient(x, y, grad);

        const double h = 1e-5;
        FcnNetwork scratch = net;
        auto check = [&](Matrix& param, const Matrix& g) {
            for (Eigen::Index i = 0; i < param.size(); ++i) {
                const double orig = param.data()[i];
                param.data()[i] = orig + h;
                const double up = net.loss_and_gradient(x, y, scratch);
                param.data()[i] = orig - h;
                const double down = net.loss_and_gradient(x, y, scratch);
                param.data()[i] = orig;
                const double fd = (up - down) / (2 * h);
                const double an = g.data()[i];
                const double rel = std::abs(fd - an) / std::max(1e-8, std::abs(fd) + std::abs(an));
                EXPECT_LE(rel, 1e-4) << "fd " << fd << " analytic " << an;
            }
        };
        for (std::size_t l = 0; l < net.weights.size(); ++l) {
            check(net.weights[l], grad.weights[l]);
            const RowVector gb = grad.biases[l];
            for (Eigen::Index i = 0; i < gb.size(); ++i) {
                const double orig = net.biases[l](i);
                net.biases[l](i) = orig + h;
                const double up = net.loss_and_gradient(x, y, scratch);
                net.biases[l](i) = orig - h;
                const double down = net.loss_and_gradient(x, y, scratch);
                net.biases[l](i) = orig;
                const double fd = (up - down) / (2 * h);
                const double rel = std::abs(fd - gb(i)) / std::max(1e-8, std::abs(fd) + std::abs(gb(i)));
                EXPECT_LE(rel, 1e-4);
            }
        }
    }
}

TEST(Fcn, SeparatesBlobs) {
    const auto train = make_blobs(40, 3, 4, 0.5, 1);
    const auto test = make_blobs(40, 3, 4, 0.5, 2);
    FcnConfig cfg;
    cfg.epochs = 60;
    cfg.learning_rate = 1e-2;
    const Model m = train_fcn(train.x, train.y, 3, cfg);
    EXPECT_GE(accuracy(predict(m, test.x), test.y), 0.99);
}

TEST(Fcn, DivergenceIsNumericError) {
    const auto train = make_blobs(20, 2, 3, 0.5, 3);
    FcnConfig cfg;
    cfg.learning_rate = 1e300;
    cfg.epochs = 20;
    EXPECT_THROW(train_fcn(train.x, train.y, 2, cfg), NumericError);
}

TEST(Fcn, SameSeedSameModel) {
    const auto train = make_blobs(20, 2, 3, 0.5, 4);
    FcnConfig cfg;
    cfg.epochs = 5;
    cfg.seed = 9;
    const auto a = train_fcn(train.x, train.y, 2, cfg);
    const auto b = train_fcn(train.x, train.y, 2, cfg);
    for (std::size_t l = 0; l < a.network.weights.size(); ++l)
        EXPECT_EQ(a.network.weights[l], b.network.weights[l]);
}

TEST(Svm, SeparatesBlobs) {
    const auto train = make_blobs(40, 4, 4, 0.5, 5);
    const auto test = make_blobs(40, 4, 4, 0.5, 6);
    const Model m = train_svm(train.x, train.y, 4);
    EXPECT_GE(accuracy(predict(m, test.x), test.y), 0.99);
    EXPECT_EQ(std::get<SvmModel>(m).pairs.size(), 6u);
}

TEST(Svm, PolynomialKernelSolvesXor) {
    oracle::Gen gen(8);
    auto sample = [&](std::size_t n) {
        Blobs b;
        b.x.resize(static_cast<Eigen::Index>(n), 2);
        for (std::size_t i = 0; i < n; ++i) {
            const double u = gen.uniform(-1, 1), v = gen.uniform(-1, 1);
            b.x(static_cast<Eigen::Index>(i), 0) = u;
            b.x(static_cast<Eigen::Index>(i), 1) = v;
            b.y.push_back(u * v > 0 ? 1 : 0);
        }
        return b;
    };
    const auto train = sample(300), test = sample(300);
    SvmConfig cfg;
    cfg.c = 10.0;
    const Model m = train_svm(train.x, train.y, 2, cfg);
    EXPECT_GE(accuracy(predict(m, test.x), test.y), 0.95);
}

TEST(Knn, SeparatesBlobsAndVotesSmoothly) {
    const auto train = make_blobs(30, 3, 3, 0.5, 10);
    const auto test = make_blobs(30, 3, 3, 0.5, 11);
    const Model m = train_knn(train.x, train.y, 3);
    const auto pred = predict_with_proba(m, test.x);
    EXPECT_GE(accuracy(pred.labels, test.y), 0.99);
    for (Eigen::Index r = 0; r < pred.proba.rows(); ++r) {
        EXPECT_NEAR(pred.proba.row(r).sum(), 1.0, 1e-12);
        EXPECT_GT(pred.proba.row(r).minCoeff(), 0.0);
    }
}

TEST(Models, OneSamplePerClassAndChanceOnIdenticalFeatures) {
    Matrix x(3, 2);
    x << 0, 0, 5, 0, 0, 5;
    const Labels y = {0, 1, 2};
    for (auto kind : {ClassifierKind::Fcn, ClassifierKind::Svm, ClassifierKind::Knn}) {
        TrainOptions opt;
        opt.kind = kind;
        opt.fcn.epochs = 300;
        opt.fcn.learning_rate = 1e-2;
        opt.knn.k = 1;
        const Model m = train_model(x, y, 3, opt);
        EXPECT_EQ(predict(m, x), y) << classifier_name(kind);
    }

    // Identical rows carry no information: every prediction is one class.
    Matrix same = Matrix::Constant(40, 3, 0.7);
    Labels yy(40);
    for (std::size_t i = 0; i < yy.size(); ++i) yy[i] = static_cast<int>(i % 2);
    for (auto kind : {ClassifierKind::Fcn, ClassifierKind::Svm, ClassifierKind::Knn}) {
        TrainOptions opt;
        opt.kind = kind;
        const Model m = train_model(same, yy, 2, opt);
        const auto pred = predict(m, same);
        EXPECT_TRUE(std::all_of(pred.begin(), pred.end(), [&](int v) { return v == pred[0]; }));
        EXPECT_NEAR(accuracy(pred, yy), 0.5, 1e-12);
    }
}

TEST(Models, ShapeAndParameterErrors) {
    const auto b = make_blobs(5, 2, 3, 0.1, 12);
    TrainOptions opt;
    opt.kind = ClassifierKind::Knn;
    Labels short_labels(b.y.begin(), b.y.end() - 1);
    EXPECT_THROW(train_model(b.x, short_labels, 2, opt), ShapeError);
    Labels one_class(b.y.size(), 0);
    EXPECT_THROW(train_model(b.x, one_class, 2, opt), ParameterError);
    Labels bad = b.y;
    bad[0] = 7;
    EXPECT_THROW(train_model(b.x, bad, 2, opt), ParameterError);

    const Model m = train_model(b.x, b.y, 2, opt);
    EXPECT_THROW(predict(m, Matrix::Zero(2, 4)), ShapeError);
    EXPECT_THROW(parse_classifier("forest"), ParameterError);
}

TEST(Metrics, KappaWorkedExample) {
    const std::vector<std::vector<std::size_t>> c = {{40, 10}, {20, 30}};
    EXPECT_NEAR(cohen_kappa(c), 0.4, 1e-12);

    Labels t, p;
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
            for (std::size_t k = 0; k < c[i][j]; ++k) {
                t.push_back(i);
                p.push_back(j);
            }
    const auto rep = evaluate(t, p, 2);
    EXPECT_EQ(rep.confusion, c);
    EXPECT_NEAR(rep.accuracy, 0.7, 1e-12);
    EXPECT_NEAR(rep.kappa, 0.4, 1e-12);
}

TEST(Metrics, KappaFormulaOnRandomConfusions) {
    oracle::Gen gen(21);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t k = 2 + gen.below(6);
        std::vector<std::vector<std::size_t>> c(k, std::vector<std::size_t>(k));
        for (auto& row : c)
            for (auto& v : row) v = gen.below(50);
        c[0][0] += 1;
        EXPECT_NEAR(cohen_kappa(c), oracle::kappa_from_confusion(c), 1e-12);
    }
}

TEST(Metrics, EvaluateMatchesBruteForce) {
    oracle::Gen gen(22);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t k = 2 + gen.below(5);
        const std::size_t n = 1 + gen.below(200);
        Labels t(n), p(n);
        for (std::size_t i = 0; i < n; ++i) {
            t[i] = static_cast<int>(gen.below(k));
            p[i] = gen.below(3) == 0 ? static_cast<int>(gen.below(k)) : t[i];
        }
        const auto rep = evaluate(t, p, k);
        EXPECT_NEAR(rep.kappa, oracle::kappa_bruteforce(t, p), 1e-12);
        EXPECT_NEAR(rep.accuracy, accuracy(t, p), 1e-15);

        // Relabelling classes and reordering instances changes neither metric.
        std::vector<int> perm(k);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), gen.engine());
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), gen.engine());
        Labels t2(n), p2(n);
        for (std::size_t i = 0; i < n; ++i) {
            t2[i] = perm[static_cast<std::size_t>(t[order[i]])];
            p2[i] = perm[static_cast<std::size_t>(p[order[i]])];
        }
        const auto rep2 = evaluate(t2, p2, k);
        EXPECT_NEAR(rep2.kappa, rep.kappa, 1e-12);
        EXPECT_EQ(rep2.accuracy, rep.accuracy);
    }
}

TEST(Metrics, DegenerateAgreement) {
    EXPECT_EQ(evaluate({1, 1, 1}, {1, 1, 1}, 3).kappa, 1.0);
    EXPECT_EQ(evaluate({1, 1, 1}, {0, 0, 0}, 3).kappa, 0.0);
    EXPECT_THROW(evaluate({0, 1}, {0}, 2), ShapeError);
}

TEST(Metrics, CrossEntropy) {
    Matrix p(2, 2);
    p << 0.5, 0.5, 0.0, 1.0;
    EXPECT_NEAR(cross_entropy(p, {0, 0}), (std::log(2.0) - std::log(1e-12)) / 2.0, 1e-9);
}

namespace {

SynthConfig cube_config() {
    SynthConfig cfg;
    cfg.classes = 4;
    cfg.n_per_class = 30;
    cfg.seed = 3;
    return cfg;
}

const DualBandFeatureSet kPlanted{{{510.0, 670.0}, {670.0, 790.0}},
                                  {FeatureMask{Feature::Max, Feature::Argmax}, FeatureMask{Feature::Min, Feature::Argmin}}};

Model planted_svm(const SynthConfig& cfg) {
    const auto ds = generate_synthetic(cfg);
    Matrix x(static_cast<Eigen::Index>(ds.data.size()), 4);
    for (std::size_t i = 0; i < ds.data.size(); ++i) {
        const auto f = assemble_dual(Spectrum(ds.data.spectra[i], ds.data.axis), kPlanted);
        for (std::size_t j = 0; j < f.size(); ++j) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = f[j];
    }
    return train_svm(x, ds.data.labels, cfg.classes);
}

}  // namespace

TEST(PixelMap, HalvesOfTheDiscAreRecovered) {
    const auto cfg = cube_config();
    const auto model = planted_svm(cfg);
    const auto sc = generate_synthetic_cube(cfg, 40, 60, 1, 3, 77);
    const auto mask = ndvi_segment(sc.cube);
    const auto map = classify_pixels(sc.cube, mask, kPlanted, model);
    ASSERT_EQ(map.labels.size(), sc.truth.size());
    std::size_t fruit = 0, hit = 0;
    for (std::size_t i = 0; i < map.labels.size(); ++i) {
        if (!mask[i]) {
            EXPECT_EQ(map.labels[i], 0);
            continue;
        }
        if (sc.truth[i] == 0) continue;
        ++fruit;
        hit += map.labels[i] == sc.truth[i];
    }
    ASSERT_GT(fruit, 100u);
    EXPECT_GE(static_cast<double>(hit) / static_cast<double>(fruit), 0.95);
}

TEST(PixelMap, EmptyMaskGivesBackgroundOnly) {
    const auto cfg = cube_config();
    const auto model = planted_svm(cfg);
    const auto sc = generate_synthetic_cube(cfg, 10, 12, 0, 1, 5);
    const auto map = classify_pixels(sc.cube, PixelMask(10, 12, false), kPlanted, model);
    EXPECT_TRUE(std::all_of(map.labels.begin(), map.labels.end(), [](std::uint8_t v) { return v == 0; }));
}

TEST(PixelMap, DimensionMismatchIsShapeError) {
    const auto cfg = cube_config();
    const auto model = planted_svm(cfg);
    const auto sc = generate_synthetic_cube(cfg, 6, 6, 0, 1, 5);
    const PixelPipeline full(sc.cube.axis(), std::nullopt);
    EXPECT_THROW(classify_pixels(sc.cube, PixelMask(6, 6, true), full, model), ShapeError);
}

TEST(Bench, RequiresThreeRepetitions) {
    const auto cfg = cube_config();
    const auto model = planted_svm(cfg);
    std::vector<Hypercube> cubes{generate_synthetic_cube(cfg, 8, 8, 0, 1, 5).cube};
    EXPECT_THROW(bench_predict(model, kPlanted, cubes, 2), ParameterError);
    EXPECT_THROW(bench_predict(model, kPlanted, std::span<const Hypercube>{}, 3), ParameterError);
    const auto r = bench_predict(model, kPlanted, cubes, 3);
    EXPECT_EQ(r.pixels_per_image, 64u);
    EXPECT_GT(r.fps, 0.0);
}

TEST(Serialization, ModelRoundTripPredictsIdentically) {
    oracle::TempDir dir("model");
    const auto train = make_blobs(20, 3, 4, 0.8, 30);
    const auto probe = make_blobs(20, 3, 4, 1.5, 31);
    for (auto kind : {ClassifierKind::Fcn, ClassifierKind::Svm, ClassifierKind::Knn}) {
        TrainOptions opt;
        opt.kind = kind;
        opt.fcn.epochs = 10;
        ModelBundle bundle{train_model(train.x, train.y, 3, opt), WavelengthAxis({500.0, 510.0, 520.0, 530.0}),
                           std::nullopt, Preprocessing{true, 11, 2}, "tomato", {"a", "b", "c"}};
        const auto path = dir / (std::string(classifier_name(kind)) + ".json");
        save_model(bundle, path);
        const auto back = load_model(path);
        EXPECT_EQ(model_kind(back.model), kind);
        EXPECT_EQ(back.axis, bundle.axis);
        EXPECT_EQ(back.class_names, bundle.class_names);
        EXPECT_TRUE(back.preprocessing.msc);
        EXPECT_EQ(predict(back.model, probe.x), predict(bundle.model, probe.x));
        EXPECT_EQ(predict_proba(back.model, probe.x), predict_proba(bundle.model, probe.x));
    }
}
