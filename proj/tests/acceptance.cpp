#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "bandsel/classify.hpp"
#include "bandsel/dataset.hpp"
#include "bandsel/error.hpp"
#include "bandsel/features.hpp"
#include "bandsel/io.hpp"
#include "bandsel/rng.hpp"
#include "bandsel/search.hpp"
#include "bandsel/serialization.hpp"
#include "bandsel/spectral.hpp"
#include "cli.hpp"
#include "oracles.hpp"

using namespace bandsel;
namespace fs = std::filesystem;

namespace {

enum class Verdict { Pass, Fail, Skip };

struct Outcome {
    Verdict verdict;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int digits = 3) {
    std::ostringstream s;
    s.setf(std::ios::fixed);
    s.precision(digits);
    s << v;
    return s.str();
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// The planted-band dataset shared by criteria 2 and 3.
struct PlantedRun {
    TrainTest data;
    SearchResult search;
    double seconds = 0.0;
};

const PlantedRun& planted_run() {
    static const PlantedRun run = [] {
        PlantedRun r;
        SynthConfig cfg;  // 7 classes x 60, sigma 0.02, 510-670 peak, 670-790 trough
        cfg.seed = derive_seed(0, "acceptance");
        const auto ds = generate_synthetic(cfg);
        const auto split = stratified_split(ds.data.labels, 0.3, derive_seed(0, "acceptance-split"));
        r.data.train = ds.data.subset(split.train);
        r.data.test = ds.data.subset(split.test);
        SearchConfig sc;
        sc.classifier = ClassifierKind::Knn;
        sc.jobs = 8;
        sc.seed = derive_seed(0, "acceptance-search");
        const auto t0 = Clock::now();
        r.search = run_search(r.data, SearchGrid{}, sc);
        r.seconds = seconds_since(t0);
        return r;
    }();
    return run;
}

Outcome criterion1() {
    const auto t0 = Clock::now();
    const auto windows = enumerate_windows(SearchGrid{});
    const auto masks = enumerate_masks();
    std::vector<SearchRecord> pending;
    for (const auto& w : windows)
        for (const auto& m : masks) {
            SearchRecord r;
            r.windows = {w};
            r.masks = {m};
            r.seed = candidate_seed(0, r.windows, r.masks);
            pending.push_back(std::move(r));
        }
    const std::size_t candidates = pending.size();
    const double secs = seconds_since(t0);
    const auto ledger_size = planted_run().search.fine.records.size();
    const bool ok = windows.size() == 210 && masks.size() == 511 && candidates == 107310 && ledger_size == 107310 &&
                    secs < 1.0;
    return {ok ? Verdict::Pass : Verdict::Fail,
            std::to_string(windows.size()) + " windows x " + std::to_string(masks.size()) + " masks = " +
                std::to_string(candidates) + " candidates, fine ledger " + std::to_string(ledger_size) +
                " records, enumeration " + fmt(secs * 1000.0, 2) + " ms"};
}

Outcome criterion2() {
    const auto& run = planted_run();
    const auto& top = run.search.fine.best();
    const SubbandWindow pigment{510.0, 670.0};
    const double covered = overlap_nm(top.windows[0], pigment) / pigment.width_nm();
    const bool has_argmax = top.masks[0].test(Feature::Argmax);
    const auto& best = run.search.coarse.best;
    const bool ok = has_argmax && covered >= 0.5 && best.test_accuracy >= 0.95;
    return {ok ? Verdict::Pass : Verdict::Fail,
            "fine top " + top.windows[0].label() + " {" + top.masks[0].to_string() + "} covers " +
                fmt(100.0 * covered, 0) + "% of 510-670, coarse " + run.search.coarse.selected.describe() +
                " accuracy " + fmt(best.test_accuracy) + ", search " + fmt(run.seconds, 1) + " s"};
}

Outcome criterion3() {
    const auto& fine = planted_run().search.fine;
    const SubbandWindow pigment{510.0, 670.0};
    auto single = [&](Feature f) {
        for (const auto& r : fine.records)
            if (r.windows[0] == pigment && r.masks[0] == FeatureMask{f}) return r.test_accuracy;
        throw ParameterError("fine ledger lacks single-feature record " + std::string(feature_name(f)));
    };
    const double argmax = single(Feature::Argmax);
    std::string detail = "argmax " + fmt(argmax);
    bool ok = true;
    for (Feature f : {Feature::Mean, Feature::Median, Feature::Area, Feature::Skewness, Feature::Kurtosis}) {
        const double acc = single(f);
        ok = ok && argmax > acc;
        detail += ", " + std::string(feature_name(f)) + " " + fmt(acc);
    }
    return {ok ? Verdict::Pass : Verdict::Fail, detail + " on 510-670"};
}

Outcome criterion4() {
    const char* root = std::getenv("BANDSEL_DATA");
    const fs::path base = root ? fs::path(root) : fs::path("data");
    struct Case {
        std::string fruit;
        DualBandFeatureSet set;
        double min_accuracy, min_kappa;
    };
    const std::vector<Case> cases = {
        {"strawberry",
         {{{510.0, 670.0}, {670.0, 790.0}}, {FeatureMask{Feature::Max, Feature::Argmax}, FeatureMask{Feature::Min, Feature::Argmin}}},
         0.96,
         0.95},
        {"tomato",
         {{{510.0, 650.0}, {650.0, 770.0}},
          {FeatureMask{Feature::Argmax, Feature::Argmin},
           FeatureMask{Feature::Max, Feature::Min, Feature::Argmax, Feature::Argmin}}},
         0.94,
         0.93},
    };
    for (const auto& c : cases)
        if (!fs::exists(base / c.fruit / "manifest.txt"))
            return {Verdict::Skip, "public dataset not found (" + (base / c.fruit / "manifest.txt").string() +
                                       "; set BANDSEL_DATA)"};

    bool ok = true;
    std::string detail;
    for (const auto& c : cases) {
        const auto manifest = load_manifest(base / c.fruit / "manifest.txt");
        auto data = load_dataset(manifest);
        auto features = [&](const LabeledSpectra& s) {
            Matrix x(static_cast<Eigen::Index>(s.size()), static_cast<Eigen::Index>(c.set.feature_dim()));
            for (std::size_t i = 0; i < s.size(); ++i) {
                const auto row = assemble_dual(Spectrum(s.spectra[i], s.axis), c.set);
                for (std::size_t j = 0; j < row.size(); ++j)
                    x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row[j];
            }
            return x;
        };
        const Model m = train_svm(features(data.train), data.train.labels, data.train.num_classes);
        const auto rep = evaluate(data.test.labels, predict(m, features(data.test)), data.test.num_classes);
        ok = ok && rep.accuracy >= c.min_accuracy && rep.kappa >= c.min_kappa;
        detail += (detail.empty() ? "" : ", ") + c.fruit + " accuracy " + fmt(rep.accuracy) + " kappa " + fmt(rep.kappa);
    }
    return {ok ? Verdict::Pass : Verdict::Fail, detail};
}

Outcome criterion5() {
    const auto t0 = Clock::now();
    std::vector<std::string> failures;
    auto require = [&](bool cond, const std::string& what) {
        if (!cond) failures.push_back(what);
    };
    oracle::Gen gen(5);

    {
        const auto axis = WavelengthAxis::linspace(500.0, 800.0, 16);
        Hypercube white(8, 8, axis, CubeKind::RawIntensity), dark(8, 8, axis, CubeKind::RawIntensity);
        for (auto& v : white.data()) v = static_cast<float>(gen.uniform(1000.0, 4000.0));
        for (auto& v : dark.data()) v = static_cast<float>(gen.uniform(0.0, 200.0));
        const auto ones = calibrate(white, white, dark);
        const auto zeros = calibrate(dark, white, dark);
        require(std::all_of(ones.data().begin(), ones.data().end(), [](float v) { return v == 1.0f; }), "white->1");
        require(std::all_of(zeros.data().begin(), zeros.data().end(), [](float v) { return v == 0.0f; }), "dark->0");
    }
    {
        const auto axis = WavelengthAxis::linspace(450.0, 850.0, 120);
        double worst = 0.0;
        for (int trial = 0; trial < 20; ++trial) {
            std::vector<Spectrum> batch;
            for (int i = 0; i < 10; ++i) {
                std::vector<double> s(axis.size());
                const double a = gen.uniform(0.5, 1.5), b = gen.uniform(-0.1, 0.1);
                for (std::size_t k = 0; k < s.size(); ++k)
                    s[k] = a * (0.4 + 0.3 * std::sin(0.04 * static_cast<double>(k))) + b + 0.01 * gen.normal();
                batch.emplace_back(s, axis);
            }
            const Spectrum ref = msc_correct(batch).front();
            const auto once = msc_correct(batch, ref);
            const auto twice = msc_correct(once, ref);
            for (std::size_t i = 0; i < once.size(); ++i)
                for (std::size_t k = 0; k < axis.size(); ++k)
                    worst = std::max(worst, std::abs(twice[i].values[k] - once[i].values[k]));
        }
        require(worst <= 1e-9, "MSC idempotence " + std::to_string(worst));
    }
    {
        double worst = 0.0;
        for (int trial = 0; trial < 50; ++trial) {
            const double a = gen.uniform(-1, 1), b = gen.uniform(-1, 1), c = gen.uniform(-1, 1);
            std::vector<double> v(80);
            for (std::size_t i = 0; i < v.size(); ++i) {
                const double t = static_cast<double>(i) / 80.0;
                v[i] = a + b * t + c * t * t;
            }
            const auto s = savgol_smooth(v, 11, 2);
            for (std::size_t i = 5; i + 5 < v.size(); ++i) worst = std::max(worst, std::abs(s[i] - v[i]));
        }
        require(worst <= 1e-9, "Savitzky-Golay reproduction " + std::to_string(worst));
    }
    {
        double worst = 0.0;
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            auto net = FcnNetwork::init({3, 5, 4, 3}, seed);
            // Random biases keep every ReLU away from its kink at the probe point.
            for (auto& b : net.biases)
                for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = gen.uniform(-0.5, 0.5);
            Matrix x(6, 3);
            for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = gen.normal();
            const std::vector<int> y = {0, 1, 2, 2, 1, 0};
            FcnNetwork grad = net, scratch = net;
            net.loss_and_gradient(x, y, grad);
            const double h = 1e-5;
            auto probe = [&](double& param, double analytic) {
                const double orig = param;
                param = orig + h;
                const double up = net.loss_and_gradient(x, y, scratch);
                param = orig - h;
                const double down = net.loss_and_gradient(x, y, scratch);
                param = orig;
                const double fd = (up - down) / (2 * h);
                worst = std::max(worst, std::abs(fd - analytic) / std::max(1e-8, std::abs(fd) + std::abs(analytic)));
            };
            for (std::size_t l = 0; l < net.weights.size(); ++l) {
                for (Eigen::Index i = 0; i < net.weights[l].size(); ++i)
                    probe(net.weights[l].data()[i], grad.weights[l].data()[i]);
                for (Eigen::Index i = 0; i < net.biases[l].size(); ++i) probe(net.biases[l](i), grad.biases[l](i));
            }
        }
        require(worst <= 1e-4, "FCN gradient rel. error " + std::to_string(worst));
    }
    {
        const auto net = FcnNetwork::init({8, 32, 7}, 3);
        Matrix x(200, 8);
        for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = 50.0 * gen.normal();
        const Matrix p = net.forward(x);
        double worst = 0.0;
        for (Eigen::Index r = 0; r < p.rows(); ++r) worst = std::max(worst, std::abs(p.row(r).sum() - 1.0));
        require(worst <= 1e-6, "softmax normalization " + std::to_string(worst));
    }
    {
        double worst = 0.0;
        for (int trial = 0; trial < 100; ++trial) {
            const std::size_t k = 2 + gen.below(6);
            std::vector<std::vector<std::size_t>> c(k, std::vector<std::size_t>(k));
            for (auto& row : c)
                for (auto& v : row) v = gen.below(40);
            c[0][0] += 1;
            worst = std::max(worst, std::abs(cohen_kappa(c) - oracle::kappa_from_confusion(c)));
        }
        require(worst <= 1e-12, "kappa formula " + std::to_string(worst));
    }
    {
        double worst = 0.0;
        for (int trial = 0; trial < 1000; ++trial) {
            const std::size_t n = 3 + gen.below(150);
            std::vector<double> v(n), nm(n);
            double w = gen.uniform(450.0, 600.0);
            for (std::size_t i = 0; i < n; ++i) {
                nm[i] = w;
                w += gen.uniform(0.5, 3.0);
                v[i] = gen.below(5) == 0 && i > 0 ? v[i - 1] : gen.uniform(-0.1, 1.5);
            }
            const auto got = compute_features(v, nm).to_array();
            const auto want = oracle::features(v, nm).as_array();
            for (std::size_t f = 0; f < kFeatureCount; ++f)
                worst = std::max(worst, std::abs(got[f] - want[f]) / std::max(1.0, std::abs(want[f])));
        }
        require(worst <= 1e-9, "features vs oracle " + std::to_string(worst));
    }

    const double secs = seconds_since(t0);
    require(secs < 60.0, "suite took " + fmt(secs, 1) + " s");
    std::string detail = "7 properties in " + fmt(secs, 2) + " s";
    for (const auto& f : failures) detail += "; failed: " + f;
    return {failures.empty() ? Verdict::Pass : Verdict::Fail, detail};
}

Outcome criterion6() {
    SynthConfig cfg;
    cfg.axis = WavelengthAxis::linspace(450.0, 849.0, 400);
    cfg.seed = derive_seed(0, "acceptance-throughput");
    const auto ds = generate_synthetic(cfg);
    const DualBandFeatureSet selected{{{510.0, 670.0}, {670.0, 790.0}},
                                      {FeatureMask{Feature::Max, Feature::Argmax}, FeatureMask{Feature::Min, Feature::Argmin}}};
    Matrix xf(static_cast<Eigen::Index>(ds.data.size()), 4);
    for (std::size_t i = 0; i < ds.data.size(); ++i) {
        const auto row = assemble_dual(Spectrum(ds.data.spectra[i], ds.data.axis), selected);
        for (std::size_t j = 0; j < row.size(); ++j) xf(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row[j];
    }
    const Model fast = train_svm(xf, ds.data.labels, cfg.classes);
    const Model full = train_svm(ds.data.as_matrix(), ds.data.labels, cfg.classes);

    std::vector<Hypercube> cubes;
    for (std::size_t i = 0; i < 3; ++i)
        cubes.push_back(generate_synthetic_cube(cfg, 120, 368, i, cfg.classes - 1 - i, derive_seed(cfg.seed, i)).cube);
    const auto a = bench_predict(fast, selected, cubes, 5);
    const auto b = bench_predict(full, std::nullopt, cubes, 5);
    const double ratio = a.fps / b.fps;
    return {ratio >= 5.0 ? Verdict::Pass : Verdict::Fail,
            "selected-feature SVM " + fmt(a.fps, 2) + " FPS, full-spectrum SVM " + fmt(b.fps, 2) + " FPS, ratio " +
                fmt(ratio, 1) + "x on 120x368x400"};
}

Outcome criterion7() {
    oracle::TempDir dir("acceptance-determinism");
    auto run = [&](std::vector<std::string> args) {
        args.insert(args.begin(), "bandsel");
        std::ostringstream out, err;
        const int code = cli::run(args, out, err);
        if (code != 0) throw IoError("bandsel " + args[1] + " ... exited " + std::to_string(code) + ": " + err.str());
    };
    run({"--seed", "7", "--out", dir.path().string(), "synth"});
    const auto manifest = (dir / "manifest.txt").string();
    auto search = [&](const std::string& out, const std::string& jobs) {
        run({"--seed", "7", "--out", (dir / out).string(), "search", "--manifest", manifest, "--classifier", "knn",
             "--jobs", jobs});
    };
    const auto t0 = Clock::now();
    search("a", "1");
    search("b", "1");
    search("c", "8");
    const double secs = seconds_since(t0);

    bool identical = true;
    for (const auto* f : {"fine_ledger.csv", "fine_ledger.jsonl", "coarse_ledger.csv", "coarse_ledger.jsonl"})
        identical = identical && slurp(dir / "a" / f) == slurp(dir / "b" / f);

    auto canonical = [&](const std::string& out, const char* file, Stage stage) {
        auto ledger = read_ledger_csv(dir / out / file, stage);
        ledger.sort();
        write_ledger_csv(ledger, dir / (out + "-sorted-" + file));
        return slurp(dir / (out + "-sorted-" + file));
    };
    const bool jobs_match = canonical("a", "fine_ledger.csv", Stage::Fine) == canonical("c", "fine_ledger.csv", Stage::Fine) &&
                            canonical("a", "coarse_ledger.csv", Stage::Coarse) ==
                                canonical("c", "coarse_ledger.csv", Stage::Coarse);
    return {identical && jobs_match ? Verdict::Pass : Verdict::Fail,
            std::string("repeat run ") + (identical ? "byte-identical" : "DIFFERS") + ", --jobs 1 vs --jobs 8 " +
                (jobs_match ? "identical" : "DIFFER") + " after canonical sort (3 searches in " + fmt(secs, 1) + " s)"};
}

}  // namespace

// With arguments, only the listed criterion numbers run.
int main(int argc, char** argv) {
    std::vector<std::size_t> only;
    for (int i = 1; i < argc; ++i) only.push_back(std::stoul(argv[i]));

    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"enumeration", criterion1}, {"planted-band recovery", criterion2}, {"single-feature ranking", criterion3},
        {"real-data reproduction", criterion4}, {"numerical properties", criterion5}, {"throughput ratio", criterion6},
        {"determinism", criterion7},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        if (!only.empty() && std::find(only.begin(), only.end(), i + 1) == only.end()) continue;
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {Verdict::Fail, std::string("error: ") + e.what()};
        }
        const char* tag = o.verdict == Verdict::Pass ? "PASS" : o.verdict == Verdict::Fail ? "FAIL" : "SKIP";
        failed += o.verdict == Verdict::Fail;
        std::cout << "criterion " << i + 1 << " [" << criteria[i].first << "]: " << tag << " - " << o.detail << std::endl;
    }
    return failed == 0 ? 0 : 1;
}
