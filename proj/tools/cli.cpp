#include "cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "bandsel/classes.hpp"
#include "bandsel/classify.hpp"
#include "bandsel/dataset.hpp"
#include "bandsel/error.hpp"
#include "bandsel/io.hpp"
#include "bandsel/rng.hpp"
#include "bandsel/search.hpp"
#include "bandsel/serialization.hpp"
#include "bandsel/spectral.hpp"

namespace bandsel::cli {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

struct Global {
    std::uint64_t seed = 0;
    std::string out;
    bool json_summary = false;
    bool verbose = false;
};

struct Streams {
    std::ostream& out;
    std::ostream& err;
};

std::string default_out_dir() {
    if (const char* env = std::getenv("BANDSEL_OUT"); env && *env) return env;
    return "bandsel-out";
}

// Every effective option of a subcommand, in registration order: given values,
// else defaults. Flags appear only when set.
std::vector<std::pair<std::string, std::vector<std::string>>> effective_options(const CLI::App& sub) {
    std::vector<std::pair<std::string, std::vector<std::string>>> out;
    for (const CLI::Option* opt : sub.get_options()) {
        if (opt->get_lnames().empty()) continue;
        const std::string name = "--" + opt->get_lnames().front();
        if (name == "--help") continue;
        if (opt->get_expected_max() == 0) {
            if (opt->count() > 0) out.push_back({name, {}});
            continue;
        }
        if (opt->count() > 0)
            out.push_back({name, opt->results()});
        else if (!opt->get_default_str().empty())
            out.push_back({name, {opt->get_default_str()}});
    }
    return out;
}

void write_echo(const Global& g, const CLI::App& sub) {
    ojson params;
    std::vector<std::string> argv = {"--seed", std::to_string(g.seed), "--out", g.out, sub.get_name()};
    params["seed"] = g.seed;
    params["out"] = g.out;
    for (const auto& [name, values] : effective_options(sub)) {
        argv.push_back(name);
        argv.insert(argv.end(), values.begin(), values.end());
        const std::string key = name.substr(2);
        if (values.empty())
            params[key] = true;
        else if (values.size() == 1)
            params[key] = values.front();
        else
            params[key] = values;
    }
    ojson echo{{"command", sub.get_name()}, {"version", 1}, {"parameters", params}, {"argv", argv}};
    fs::create_directories(g.out);
    std::ofstream f(fs::path(g.out) / (sub.get_name() + ".config.json"), std::ios::trunc);
    if (!f) throw IoError("cannot write the config echo into " + g.out);
    f << echo.dump(2) << '\n';
}

void emit_summary(const Global& g, const Streams& io, const ojson& summary, const std::vector<std::string>& lines) {
    if (g.json_summary) {
        io.out << summary.dump() << '\n';
        return;
    }
    for (const auto& l : lines) io.out << l << '\n';
}

NdviOptions ndvi_options(double red, double nir, const std::string& polarity) {
    NdviOptions o;
    o.red_nm = red;
    o.nir_nm = nir;
    if (polarity == "lower")
        o.polarity = FruitPolarity::LowerNdvi;
    else if (polarity == "higher")
        o.polarity = FruitPolarity::HigherNdvi;
    else
        throw ParameterError("polarity must be 'lower' or 'higher'");
    return o;
}

void add_ndvi_flags(CLI::App* sub, double& red, double& nir, std::string& polarity) {
    sub->add_option("--red-nm", red, "Red band for NDVI")->capture_default_str();
    sub->add_option("--nir-nm", nir, "Near-infrared band for NDVI")->capture_default_str();
    sub->add_option("--polarity", polarity, "Fruit side of the NDVI threshold")
        ->check(CLI::IsMember({"lower", "higher"}))
        ->capture_default_str();
}

struct PreprocessFlags {
    bool msc = false;
    std::size_t savgol_window = 0;
    std::size_t savgol_order = 2;

    void add(CLI::App* sub) {
        sub->add_flag("--msc", msc, "Apply multiplicative scatter correction");
        sub->add_option("--savgol-window", savgol_window, "Savitzky-Golay window (0 = off)")->capture_default_str();
        sub->add_option("--savgol-order", savgol_order, "Savitzky-Golay polynomial order")->capture_default_str();
    }
    Preprocessing get() const { return {msc, savgol_window, savgol_order}; }
};

std::vector<double> feature_row(const std::vector<double>& spectrum, const std::optional<FeatureAssembler>& assembler) {
    if (!assembler) return spectrum;
    std::vector<double> row(assembler->feature_dim());
    assembler->assemble(spectrum, row);
    return row;
}

Matrix feature_matrix(const LabeledSpectra& data, const std::optional<DualBandFeatureSet>& set) {
    std::optional<FeatureAssembler> assembler;
    if (set) assembler.emplace(data.axis, *set);
    const std::size_t dim = assembler ? assembler->feature_dim() : data.axis.size();
    Matrix x(static_cast<Eigen::Index>(data.size()), static_cast<Eigen::Index>(dim));
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto row = feature_row(data.spectra[i], assembler);
        for (std::size_t j = 0; j < dim; ++j) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row[j];
    }
    return x;
}

// ---------------------------------------------------------------------------
// calibrate
// ---------------------------------------------------------------------------

struct CalibrateOpts {
    std::string raw, white, dark;
};

int cmd_calibrate(const Global& g, const CalibrateOpts& o, const Streams& io) {
    const Hypercube cube = calibrate(read_hsc(o.raw), read_hsc(o.white), read_hsc(o.dark));
    const fs::path dest = fs::path(g.out) / "reflectance.hsc";
    write_hsc(cube, dest);
    emit_summary(g, io,
                 {{"command", "calibrate"},
                  {"output", dest.string()},
                  {"height", cube.height()},
                  {"width", cube.width()},
                  {"bands", cube.bands()}},
                 {"wrote " + dest.string() + " (" + std::to_string(cube.height()) + "x" + std::to_string(cube.width()) +
                  "x" + std::to_string(cube.bands()) + ")"});
    return kOk;
}

// ---------------------------------------------------------------------------
// segment
// ---------------------------------------------------------------------------

struct SegmentOpts {
    std::string cube;
    double red_nm = 670.0;
    double nir_nm = 800.0;
    std::string polarity = "lower";
};

int cmd_segment(const Global& g, const SegmentOpts& o, const Streams& io) {
    const Hypercube cube = read_hsc(o.cube);
    const PixelMask mask = ndvi_segment(cube, ndvi_options(o.red_nm, o.nir_nm, o.polarity));
    if (mask.count() == 0) throw DomainError("no foreground pixels after NDVI thresholding");
    const Spectrum mean = instance_mean_spectrum(cube, mask);

    std::vector<std::uint8_t> pixels(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i) pixels[i] = mask[i] ? 255 : 0;
    const fs::path out(g.out);
    write_pgm(out / "mask.pgm", mask.height(), mask.width(), pixels);
    write_spectra_csv({cube.axis(), {{fs::path(o.cube).stem().string(), mean.values}}}, out / "spectrum.csv");
    emit_summary(g, io,
                 {{"command", "segment"}, {"foreground_pixels", mask.count()}, {"total_pixels", mask.size()}},
                 {"foreground " + std::to_string(mask.count()) + " of " + std::to_string(mask.size()) + " pixels",
                  "wrote " + (out / "mask.pgm").string() + " and " + (out / "spectrum.csv").string()});
    return kOk;
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

struct SynthOpts {
    std::string fruit = "strawberry";
    std::size_t n_per_class = 60;
    std::size_t classes = 7;
    double lo_nm = 450.0;
    double hi_nm = 850.0;
    std::size_t bands = 401;
    std::string pigment = "510-670";
    std::string chlorophyll = "670-790";
    double shift = 20.0;
    double lift = 0.1;
    double noise = 0.02;
    double scatter = 0.05;
    double test_fraction = 0.3;
    std::size_t cube_height = 0;
    std::size_t cube_width = 0;
};

int cmd_synth(const Global& g, const SynthOpts& o, const Streams& io) {
    const auto fruit = parse_fruit(o.fruit);
    if (!fruit) throw ParameterError("unknown fruit '" + o.fruit + "'");
    SynthConfig cfg;
    cfg.n_per_class = o.n_per_class;
    cfg.classes = o.classes;
    cfg.axis = WavelengthAxis::linspace(o.lo_nm, o.hi_nm, o.bands);
    cfg.pigment_band = SubbandWindow::parse(o.pigment);
    cfg.chlorophyll_band = SubbandWindow::parse(o.chlorophyll);
    cfg.peak_shift_per_class_nm = o.shift;
    cfg.trough_lift_per_class = o.lift;
    cfg.noise_sigma = o.noise;
    cfg.scatter_gain_sigma = o.scatter;
    cfg.seed = derive_seed(g.seed, "synth");

    const SynthDataset ds = generate_synthetic(cfg);
    const fs::path out(g.out);
    write_synthetic_dataset(ds, *fruit, o.test_fraction, out, derive_seed(g.seed, "split"));

    ojson summary{{"command", "synth"},
                  {"instances", ds.data.size()},
                  {"classes", cfg.classes},
                  {"manifest", (out / "manifest.txt").string()}};
    std::vector<std::string> lines = {"wrote " + std::to_string(ds.data.size()) + " spectra to " +
                                      (out / "spectra.csv").string(),
                                      "manifest " + (out / "manifest.txt").string()};
    if (o.cube_height > 0 && o.cube_width > 0) {
        const SynthCube sc = generate_synthetic_cube(cfg, o.cube_height, o.cube_width, 0, cfg.classes - 1,
                                                     derive_seed(g.seed, "synth-cube"));
        write_hsc(sc.cube, out / "cube.hsc");
        std::vector<std::uint8_t> truth = sc.truth;
        write_pgm(out / "cube_truth.pgm", o.cube_height, o.cube_width, truth);
        summary["cube"] = (out / "cube.hsc").string();
        lines.push_back("cube " + (out / "cube.hsc").string());
    }
    emit_summary(g, io, summary, lines);
    return kOk;
}

// ---------------------------------------------------------------------------
// search
// ---------------------------------------------------------------------------

struct SearchOpts {
    std::string manifest;
    double grid_lo = 450.0;
    double grid_hi = 850.0;
    std::size_t subbands = 20;
    std::size_t q = 10;
    double target = 0.95;
    double overlap_tol = 20.0;
    std::string classifier = "fcn";
    std::size_t epochs = 100;
    std::size_t batch = 32;
    double lr = 1e-3;
    std::size_t knn_k = 5;
    std::size_t jobs = 1;
    std::size_t mask_pool = 50;
    PreprocessFlags pre;
    double red_nm = 670.0;
    double nir_nm = 800.0;
    std::string polarity = "lower";
};

TrainTest load_training_data(const std::string& manifest_path, const NdviOptions& ndvi, const Preprocessing& pre,
                             DatasetManifest* manifest_out = nullptr) {
    const DatasetManifest manifest = load_manifest(manifest_path);
    TrainTest tt = load_dataset(manifest, ndvi);
    preprocess(tt, pre);
    if (manifest_out) *manifest_out = manifest;
    return tt;
}

int cmd_search(const Global& g, const SearchOpts& o, const Streams& io) {
    SearchConfig cfg;
    cfg.q = o.q;
    cfg.accuracy_target = o.target;
    cfg.overlap_tolerance_nm = o.overlap_tol;
    cfg.classifier = parse_classifier(o.classifier);
    cfg.epochs = o.epochs;
    cfg.batch = o.batch;
    cfg.learning_rate = o.lr;
    cfg.knn_k = o.knn_k;
    cfg.seed = derive_seed(g.seed, "search");
    cfg.jobs = o.jobs;
    cfg.coarse_mask_pool = o.mask_pool;
    cfg.validate();
    const SearchGrid grid = SearchGrid::uniform(o.grid_lo, o.grid_hi, o.subbands);

    const TrainTest data = load_training_data(o.manifest, ndvi_options(o.red_nm, o.nir_nm, o.polarity), o.pre.get());
    if (data.train.size() == 0 || data.test.size() == 0)
        throw DomainError("search needs both train and test instances in the manifest");

    Progress progress;
    if (g.verbose)
        progress = [&io](std::size_t done, std::size_t total) {
            io.err << "\r  " << done << " / " << total << (done == total ? "\n" : "") << std::flush;
        };
    const SearchResult result = run_search(data, grid, cfg, progress);

    const fs::path out(g.out);
    write_ledger_csv(result.fine, out / "fine_ledger.csv");
    write_ledger_jsonl(result.fine, out / "fine_ledger.jsonl");
    write_ledger_csv(result.coarse.ledger, out / "coarse_ledger.csv");
    write_ledger_jsonl(result.coarse.ledger, out / "coarse_ledger.jsonl");
    const auto& best = result.coarse.best;
    save_feature_set({result.coarse.selected, best.test_accuracy, best.test_loss,
                      std::string(classifier_name(cfg.classifier)), result.coarse.below_target},
                     out / "featureset.json");

    const auto& top = result.fine.best();
    ojson candidates = ojson::array();
    for (const auto& c : result.candidates)
        candidates.push_back({{"window", c.windows[0].label()}, {"mask", c.masks[0].to_string()}, {"accuracy", c.test_accuracy}});
    ojson summary{{"command", "search"},
                  {"q", cfg.q},
                  {"target", cfg.accuracy_target},
                  {"fine_records", result.fine.records.size()},
                  {"coarse_records", result.coarse.ledger.records.size()},
                  {"fine_best", {{"window", top.windows[0].label()}, {"mask", top.masks[0].to_string()}, {"accuracy", top.test_accuracy}}},
                  {"candidates", candidates},
                  {"selected", result.coarse.selected.describe()},
                  {"accuracy", best.test_accuracy},
                  {"below_target", result.coarse.below_target}};
    std::vector<std::string> lines = {
        "q=" + std::to_string(cfg.q) + " target=" + format_double(cfg.accuracy_target) + " classifier=" +
            std::string(classifier_name(cfg.classifier)),
        "fine stage: " + std::to_string(result.fine.records.size()) + " records, best " + top.windows[0].label() + " " +
            top.masks[0].to_string() + " accuracy " + format_double(top.test_accuracy),
        "coarse stage: " + std::to_string(result.coarse.ledger.records.size()) + " records",
        "selected " + result.coarse.selected.describe() + " accuracy " + format_double(best.test_accuracy)};
    if (result.coarse.below_target) lines.push_back("warning: no pair reached the accuracy target");
    emit_summary(g, io, summary, lines);
    return kOk;
}

// ---------------------------------------------------------------------------
// train / evaluate
// ---------------------------------------------------------------------------

struct ClassifierFlags {
    std::string classifier = "svm";
    std::size_t epochs = 100;
    std::size_t batch = 32;
    double lr = 1e-3;
    double c = 1.0;
    int degree = 3;
    double coef0 = 1.0;
    std::optional<double> gamma;
    std::size_t knn_k = 5;

    void add(CLI::App* sub) {
        sub->add_option("--classifier", classifier, "fcn, svm or knn")
            ->check(CLI::IsMember({"fcn", "svm", "knn"}))
            ->capture_default_str();
        sub->add_option("--epochs", epochs, "FCN epochs")->capture_default_str();
        sub->add_option("--batch", batch, "FCN batch size")->capture_default_str();
        sub->add_option("--lr", lr, "FCN learning rate")->capture_default_str();
        sub->add_option("--C", c, "SVM box constraint")->capture_default_str();
        sub->add_option("--degree", degree, "SVM polynomial degree")->capture_default_str();
        sub->add_option("--coef0", coef0, "SVM kernel offset")->capture_default_str();
        sub->add_option("--gamma", gamma, "SVM kernel scale (default 1/dim)");
        sub->add_option("--knn-k", knn_k, "k-NN neighbours")->capture_default_str();
    }

    TrainOptions get(std::uint64_t seed) const {
        TrainOptions t;
        t.kind = parse_classifier(classifier);
        t.fcn.epochs = epochs;
        t.fcn.batch = batch;
        t.fcn.learning_rate = lr;
        t.fcn.seed = seed;
        t.svm.c = c;
        t.svm.degree = degree;
        t.svm.coef0 = coef0;
        t.svm.gamma = gamma;
        t.knn.k = knn_k;
        return t;
    }
};

struct TrainOpts {
    std::string manifest;
    std::string features;
    ClassifierFlags clf;
    PreprocessFlags pre;
    double red_nm = 670.0;
    double nir_nm = 800.0;
    std::string polarity = "lower";
};

int cmd_train(const Global& g, const TrainOpts& o, const Streams& io) {
    DatasetManifest manifest;
    const TrainTest data =
        load_training_data(o.manifest, ndvi_options(o.red_nm, o.nir_nm, o.polarity), o.pre.get(), &manifest);
    if (data.train.size() == 0) throw DomainError("the manifest has no training instances");

    std::optional<DualBandFeatureSet> set;
    if (!o.features.empty()) set = load_feature_set(o.features).set;
    const Matrix x = feature_matrix(data.train, set);
    ModelBundle bundle{train_model(x, data.train.labels, data.train.num_classes, o.clf.get(derive_seed(g.seed, "train"))),
                       data.train.axis,
                       set,
                       o.pre.get(),
                       std::string(fruit_name(manifest.fruit)),
                       class_names(manifest.fruit)};
    const EvalReport fit = evaluate(data.train.labels, predict(bundle.model, x), data.train.num_classes);

    const fs::path dest = fs::path(g.out) / "model.json";
    save_model(bundle, dest);
    emit_summary(g, io,
                 {{"command", "train"},
                  {"classifier", o.clf.classifier},
                  {"input_dim", input_dim(bundle.model)},
                  {"train_instances", data.train.size()},
                  {"train_accuracy", fit.accuracy},
                  {"model", dest.string()}},
                 {"trained " + o.clf.classifier + " on " + std::to_string(data.train.size()) + " instances, " +
                      std::to_string(input_dim(bundle.model)) + " inputs",
                  "train accuracy " + format_double(fit.accuracy), "wrote " + dest.string()});
    return kOk;
}

struct EvaluateOpts {
    std::string manifest;
    std::string model;
    std::string features;
    std::string split = "test";
    double red_nm = 670.0;
    double nir_nm = 800.0;
    std::string polarity = "lower";
};

int cmd_evaluate(const Global& g, const EvaluateOpts& o, const Streams& io) {
    const ModelBundle bundle = load_model(o.model);
    std::optional<DualBandFeatureSet> set = bundle.features;
    if (!o.features.empty()) set = load_feature_set(o.features).set;

    DatasetManifest manifest;
    const TrainTest data =
        load_training_data(o.manifest, ndvi_options(o.red_nm, o.nir_nm, o.polarity), bundle.preprocessing, &manifest);
    LabeledSpectra part = o.split == "train" ? data.train : data.test;
    if (o.split == "all") {
        part = data.train;
        for (std::size_t i = 0; i < data.test.size(); ++i) {
            part.spectra.push_back(data.test.spectra[i]);
            part.labels.push_back(data.test.labels[i]);
            part.ids.push_back(data.test.ids[i]);
        }
    }
    if (part.size() == 0) throw DomainError("no instances in the '" + o.split + "' split");
    if (!(part.axis == bundle.axis)) throw ShapeError("dataset wavelengths differ from the model's training axis");

    const Matrix x = feature_matrix(part, set);
    const EvalReport report = evaluate(part.labels, predict(bundle.model, x), part.num_classes);

    const fs::path out(g.out);
    write_confusion_csv(out / "confusion.csv", report, class_names(manifest.fruit));
    {
        std::ofstream f(out / "evaluation.csv", std::ios::trunc);
        if (!f) throw IoError("cannot write " + (out / "evaluation.csv").string());
        f << "split,instances,accuracy,kappa\n"
          << o.split << ',' << report.total << ',' << format_double(report.accuracy) << ','
          << format_double(report.kappa) << '\n';
    }
    emit_summary(g, io,
                 {{"command", "evaluate"},
                  {"split", o.split},
                  {"instances", report.total},
                  {"accuracy", report.accuracy},
                  {"kappa", report.kappa}},
                 {"accuracy " + format_double(report.accuracy) + " kappa " + format_double(report.kappa) + " on " +
                      std::to_string(report.total) + " " + o.split + " instances",
                  "wrote " + (out / "confusion.csv").string()});
    return kOk;
}

// ---------------------------------------------------------------------------
// predict-map
// ---------------------------------------------------------------------------

struct PredictMapOpts {
    std::string cube;
    std::string model;
    std::string features;
    double red_nm = 670.0;
    double nir_nm = 800.0;
    std::string polarity = "lower";
};

int cmd_predict_map(const Global& g, const PredictMapOpts& o, const Streams& io) {
    const ModelBundle bundle = load_model(o.model);
    std::optional<DualBandFeatureSet> set = bundle.features;
    if (!o.features.empty()) set = load_feature_set(o.features).set;
    const Hypercube cube = read_hsc(o.cube);
    if (cube.kind() != CubeKind::Reflectance) throw DomainError(o.cube + ": calibrate the cube to reflectance first");
    if (!set && !(cube.axis() == bundle.axis))
        throw ShapeError("cube wavelengths differ from the model's full-spectrum input");

    const PixelMask mask = ndvi_segment(cube, ndvi_options(o.red_nm, o.nir_nm, o.polarity));
    const ClassMap map = classify_pixels(cube, mask, PixelPipeline(cube.axis(), set), bundle.model);

    const fs::path out(g.out);
    write_pgm(out / "classmap.pgm", map.height, map.width, map.labels);
    write_palette_png(out / "classmap.png", map.height, map.width, map.labels);
    std::vector<std::size_t> counts(num_classes(bundle.model) + 1, 0);
    for (auto v : map.labels) ++counts[v];
    ojson per_class = ojson::object();
    std::vector<std::string> lines = {"foreground " + std::to_string(mask.count()) + " of " +
                                      std::to_string(mask.size()) + " pixels"};
    for (std::size_t c = 1; c < counts.size(); ++c) {
        if (counts[c] == 0) continue;
        const std::string name = c - 1 < bundle.class_names.size() ? bundle.class_names[c - 1] : std::to_string(c - 1);
        per_class[name] = counts[c];
        lines.push_back("  " + name + ": " + std::to_string(counts[c]));
    }
    lines.push_back("wrote " + (out / "classmap.pgm").string() + " and " + (out / "classmap.png").string());
    emit_summary(g, io, {{"command", "predict-map"}, {"foreground_pixels", mask.count()}, {"classes", per_class}}, lines);
    return kOk;
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

struct BenchOpts {
    std::vector<std::string> models;
    std::vector<std::string> cubes;
    std::size_t synthetic = 0;
    std::size_t height = 120;
    std::size_t width = 368;
    std::size_t reps = 5;
};

int cmd_bench(const Global& g, const BenchOpts& o, const Streams& io) {
    if (o.reps < 3) throw ParameterError("benchmark needs at least 3 repetitions");
    if (o.models.empty()) throw ParameterError("benchmark needs at least one --model");
    std::vector<ModelBundle> bundles;
    for (const auto& m : o.models) bundles.push_back(load_model(m));

    std::vector<Hypercube> cubes;
    for (const auto& c : o.cubes) cubes.push_back(read_hsc(c));
    if (o.synthetic > 0) {
        SynthConfig cfg;
        cfg.axis = bundles.front().axis;
        cfg.seed = derive_seed(g.seed, "bench");
        for (std::size_t i = 0; i < o.synthetic; ++i)
            cubes.push_back(generate_synthetic_cube(cfg, o.height, o.width, i % cfg.classes, (i + 1) % cfg.classes,
                                                    derive_seed(g.seed, static_cast<std::uint64_t>(i))).cube);
    }
    if (cubes.empty()) throw ParameterError("benchmark needs --cube files or --synthetic N");

    const fs::path out(g.out);
    fs::create_directories(out);
    std::ofstream csv(out / "bench.csv", std::ios::trunc);
    if (!csv) throw IoError("cannot write " + (out / "bench.csv").string());
    csv << "method,inputs,fps,median_image_ms,features_ms,inference_ms,pixels\n";
    ojson rows = ojson::array();
    std::vector<std::string> lines;
    for (std::size_t i = 0; i < bundles.size(); ++i) {
        const auto& b = bundles[i];
        for (const auto& c : cubes)
            if (!(c.axis() == b.axis)) throw ShapeError(o.models[i] + ": cube wavelengths differ from the model axis");
        const BenchResult r = bench_predict(b.model, b.features, cubes, o.reps);
        const std::string method = fs::path(o.models[i]).replace_extension().generic_string();
        const std::string inputs = b.features ? b.features->describe() : "full-spectrum";
        csv << method << ',' << '"' << inputs << '"' << ',' << format_double(r.fps) << ','
            << format_double(r.median_image_ms) << ',' << format_double(r.features_ms) << ','
            << format_double(r.inference_ms) << ',' << r.pixels_per_image << '\n';
        rows.push_back({{"method", method}, {"inputs", inputs}, {"fps", r.fps}, {"median_image_ms", r.median_image_ms}});
        lines.push_back(method + ": " + format_double(r.fps) + " fps (" + inputs + ")");
    }
    lines.push_back("wrote " + (out / "bench.csv").string());
    emit_summary(g, io, {{"command", "bench"}, {"results", rows}}, lines);
    return kOk;
}

// ---------------------------------------------------------------------------
// Dispatch
// ---------------------------------------------------------------------------

int exit_code(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Parameter: return kUsage;
        case ErrorKind::Numeric: return kNumeric;
        case ErrorKind::Shape:
        case ErrorKind::Domain:
        case ErrorKind::Io: return kData;
    }
    return kFailure;
}

std::vector<std::string> replay_args(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    try {
        const auto echo = nlohmann::json::parse(in);
        return echo.at("argv").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw IoError(path + ": " + e.what());
    }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    const Streams io{out, err};
    Global g;
    g.out = default_out_dir();

    CLI::App app{"Dual-band hyperspectral feature selection and maturity classification"};
    app.name(args.empty() ? "bandsel" : fs::path(args.front()).filename().string());
    app.require_subcommand(1);
    app.fallthrough();
    app.add_option("--seed", g.seed, "Global seed; every subsystem seed derives from it")->capture_default_str();
    app.add_option("--out", g.out, "Output directory (default $BANDSEL_OUT or ./bandsel-out)");
    app.add_flag("--json-summary", g.json_summary, "Print a machine-readable summary instead of text");
    app.add_flag("-v,--verbose", g.verbose, "Progress output on stderr");

    CalibrateOpts cal;
    auto* sub_cal = app.add_subcommand("calibrate", "Flat-field correction of a raw cube to reflectance");
    sub_cal->add_option("--raw", cal.raw, "Raw HSC cube")->required()->check(CLI::ExistingFile);
    sub_cal->add_option("--white", cal.white, "White reference HSC cube")->required()->check(CLI::ExistingFile);
    sub_cal->add_option("--dark", cal.dark, "Dark reference HSC cube")->required()->check(CLI::ExistingFile);

    SegmentOpts seg;
    auto* sub_seg = app.add_subcommand("segment", "NDVI background removal and instance mean spectrum");
    sub_seg->add_option("--cube", seg.cube, "Reflectance HSC cube")->required()->check(CLI::ExistingFile);
    add_ndvi_flags(sub_seg, seg.red_nm, seg.nir_nm, seg.polarity);

    SynthOpts syn;
    auto* sub_syn = app.add_subcommand("synth", "Synthetic spectra with planted pigment and chlorophyll bands");
    sub_syn->add_option("--fruit", syn.fruit, "Class vocabulary")->check(CLI::IsMember({"strawberry", "tomato"}))->capture_default_str();
    sub_syn->add_option("--n-per-class", syn.n_per_class, "Instances per class")->capture_default_str();
    sub_syn->add_option("--classes", syn.classes, "Number of classes")->capture_default_str();
    sub_syn->add_option("--lo-nm", syn.lo_nm, "First band")->capture_default_str();
    sub_syn->add_option("--hi-nm", syn.hi_nm, "Last band")->capture_default_str();
    sub_syn->add_option("--bands", syn.bands, "Band count")->capture_default_str();
    sub_syn->add_option("--pigment", syn.pigment, "Pigment band lo-hi")->capture_default_str();
    sub_syn->add_option("--chlorophyll", syn.chlorophyll, "Chlorophyll band lo-hi")->capture_default_str();
    sub_syn->add_option("--shift", syn.shift, "Peak shift per class in nm")->capture_default_str();
    sub_syn->add_option("--lift", syn.lift, "Trough lift per class")->capture_default_str();
    sub_syn->add_option("--noise", syn.noise, "Additive noise sigma")->capture_default_str();
    sub_syn->add_option("--scatter", syn.scatter, "Multiplicative gain sigma")->capture_default_str();
    sub_syn->add_option("--test-fraction", syn.test_fraction, "Stratified test share")->capture_default_str();
    sub_syn->add_option("--cube-height", syn.cube_height, "Also write a two-class cube of this height");
    sub_syn->add_option("--cube-width", syn.cube_width, "Cube width");

    SearchOpts sea;
    auto* sub_sea = app.add_subcommand("search", "Fine and coarse subband/feature-mask search");
    sub_sea->add_option("--manifest", sea.manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
    sub_sea->add_option("--grid-lo", sea.grid_lo, "Search span start (nm)")->capture_default_str();
    sub_sea->add_option("--grid-hi", sea.grid_hi, "Search span end (nm)")->capture_default_str();
    sub_sea->add_option("--subbands", sea.subbands, "Number of equal subbands")->capture_default_str();
    sub_sea->add_option("--q", sea.q, "Candidates kept after the fine stage")->capture_default_str();
    sub_sea->add_option("--target", sea.target, "Accuracy that stops the coarse stage")->capture_default_str();
    sub_sea->add_option("--overlap-tol", sea.overlap_tol, "Allowed overlap between kept windows (nm)")->capture_default_str();
    sub_sea->add_option("--classifier", sea.classifier, "fcn, svm or knn (fast)")
        ->check(CLI::IsMember({"fcn", "svm", "knn"}))
        ->capture_default_str();
    sub_sea->add_option("--epochs", sea.epochs, "FCN epochs")->capture_default_str();
    sub_sea->add_option("--batch", sea.batch, "FCN batch size")->capture_default_str();
    sub_sea->add_option("--lr", sea.lr, "FCN learning rate")->capture_default_str();
    sub_sea->add_option("--knn-k", sea.knn_k, "k-NN neighbours")->capture_default_str();
    sub_sea->add_option("--jobs", sea.jobs, "Worker threads (0 = all cores)")->capture_default_str();
    sub_sea->add_option("--mask-pool", sea.mask_pool, "Per-window masks carried into the coarse stage")->capture_default_str();
    sea.pre.add(sub_sea);
    add_ndvi_flags(sub_sea, sea.red_nm, sea.nir_nm, sea.polarity);

    TrainOpts tr;
    auto* sub_tr = app.add_subcommand("train", "Train a classifier on selected features or full spectra");
    sub_tr->add_option("--manifest", tr.manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
    sub_tr->add_option("--features", tr.features, "Feature-set JSON (omit for full spectrum)")->check(CLI::ExistingFile);
    tr.clf.add(sub_tr);
    tr.pre.add(sub_tr);
    add_ndvi_flags(sub_tr, tr.red_nm, tr.nir_nm, tr.polarity);

    EvaluateOpts ev;
    auto* sub_ev = app.add_subcommand("evaluate", "Accuracy, kappa and confusion matrix on a manifest split");
    sub_ev->add_option("--manifest", ev.manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
    sub_ev->add_option("--model", ev.model, "Model JSON")->required()->check(CLI::ExistingFile);
    sub_ev->add_option("--features", ev.features, "Override the model's feature set")->check(CLI::ExistingFile);
    sub_ev->add_option("--split", ev.split, "train, test or all")
        ->check(CLI::IsMember({"train", "test", "all"}))
        ->capture_default_str();
    add_ndvi_flags(sub_ev, ev.red_nm, ev.nir_nm, ev.polarity);

    PredictMapOpts pm;
    auto* sub_pm = app.add_subcommand("predict-map", "Pixel-wise class map of a reflectance cube");
    sub_pm->add_option("--cube", pm.cube, "Reflectance HSC cube")->required()->check(CLI::ExistingFile);
    sub_pm->add_option("--model", pm.model, "Model JSON")->required()->check(CLI::ExistingFile);
    sub_pm->add_option("--features", pm.features, "Override the model's feature set")->check(CLI::ExistingFile);
    add_ndvi_flags(sub_pm, pm.red_nm, pm.nir_nm, pm.polarity);

    BenchOpts be;
    auto* sub_be = app.add_subcommand("bench", "Prediction throughput per model");
    sub_be->add_option("--model", be.models, "Model JSON (repeatable)")->required()->check(CLI::ExistingFile);
    sub_be->add_option("--cube", be.cubes, "Reflectance HSC cube (repeatable)")->check(CLI::ExistingFile);
    sub_be->add_option("--synthetic", be.synthetic, "Generate N synthetic cubes on the first model's axis")->capture_default_str();
    sub_be->add_option("--height", be.height, "Synthetic cube height")->capture_default_str();
    sub_be->add_option("--width", be.width, "Synthetic cube width")->capture_default_str();
    sub_be->add_option("--reps", be.reps, "Repetitions (>= 3)")->capture_default_str();

    std::string replay_file;
    auto* sub_rp = app.add_subcommand("replay", "Re-run a command from its config echo");
    sub_rp->add_option("config", replay_file, "<command>.config.json")->required()->check(CLI::ExistingFile);

    // CLI11 consumes a reversed argument list without the program name.
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    if (!reversed.empty()) reversed.pop_back();
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (sub_rp->parsed()) {
            std::vector<std::string> again = {args.empty() ? "bandsel" : args.front()};
            const auto stored = replay_args(replay_file);
            again.insert(again.end(), stored.begin(), stored.end());
            if (std::find(stored.begin(), stored.end(), "replay") != stored.end())
                throw ParameterError("a replay echo cannot replay itself");
            return run(again, out, err);
        }
        const CLI::App* sub = app.get_subcommands().front();
        write_echo(g, *sub);
        if (sub == sub_cal) return cmd_calibrate(g, cal, io);
        if (sub == sub_seg) return cmd_segment(g, seg, io);
        if (sub == sub_syn) return cmd_synth(g, syn, io);
        if (sub == sub_sea) return cmd_search(g, sea, io);
        if (sub == sub_tr) return cmd_train(g, tr, io);
        if (sub == sub_ev) return cmd_evaluate(g, ev, io);
        if (sub == sub_pm) return cmd_predict_map(g, pm, io);
        if (sub == sub_be) return cmd_bench(g, be, io);
        return kUsage;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kFailure;
    }
}

}  // namespace bandsel::cli
