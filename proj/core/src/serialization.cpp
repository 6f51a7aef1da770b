#include "bandsel/serialization.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "bandsel/error.hpp"
#include "bandsel/io.hpp"

namespace bandsel {

namespace fs = std::filesystem;
using nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

constexpr int kModelVersion = 1;
constexpr int kFeatureSetVersion = 1;

std::uint64_t to_le(std::uint64_t v) {
    if constexpr (std::endian::native == std::endian::little) return v;
    std::uint64_t r = 0;
    for (int i = 0; i < 8; ++i) r |= ((v >> (8 * i)) & 0xFFu) << (8 * (7 - i));
    return r;
}

class TensorWriter {
public:
    ojson add(const double* data, Eigen::Index rows, Eigen::Index cols) {
        ojson ref{{"offset", values_.size()}, {"rows", rows}, {"cols", cols}};
        values_.insert(values_.end(), data, data + rows * cols);
        return ref;
    }
    ojson add(const Matrix& m) { return add(m.data(), m.rows(), m.cols()); }
    ojson add(const RowVector& v) { return add(v.data(), 1, v.size()); }
    ojson add(const std::vector<double>& v) { return add(v.data(), 1, static_cast<Eigen::Index>(v.size())); }

    void write(const fs::path& path) const {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + path.string());
        for (double d : values_) {
            const auto bits = to_le(std::bit_cast<std::uint64_t>(d));
            out.write(reinterpret_cast<const char*>(&bits), sizeof bits);
        }
        if (!out) throw IoError("failed writing " + path.string());
    }

private:
    std::vector<double> values_;
};

class TensorReader {
public:
    explicit TensorReader(const fs::path& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot open model weights " + path.string());
        in.seekg(0, std::ios::end);
        const auto size = static_cast<std::size_t>(in.tellg());
        if (size % 8 != 0) throw IoError(path.string() + ": truncated weights file");
        in.seekg(0);
        values_.resize(size / 8);
        for (auto& d : values_) {
            std::uint64_t bits = 0;
            in.read(reinterpret_cast<char*>(&bits), sizeof bits);
            d = std::bit_cast<double>(to_le(bits));
        }
        if (!in) throw IoError("failed reading " + path.string());
    }

    Matrix matrix(const json& ref) const {
        const auto offset = ref.at("offset").get<std::size_t>();
        const auto rows = ref.at("rows").get<Eigen::Index>();
        const auto cols = ref.at("cols").get<Eigen::Index>();
        if (rows < 0 || cols < 0 || offset + static_cast<std::size_t>(rows * cols) > values_.size())
            throw IoError("tensor reference beyond the weights file");
        Matrix m(rows, cols);
        if (rows * cols > 0) std::memcpy(m.data(), values_.data() + offset, sizeof(double) * static_cast<std::size_t>(rows * cols));
        return m;
    }
    RowVector row(const json& ref) const {
        const Matrix m = matrix(ref);
        if (m.rows() != 1) throw IoError("expected a row tensor");
        return m.row(0);
    }
    std::vector<double> vec(const json& ref) const {
        const RowVector r = row(ref);
        return {r.data(), r.data() + r.size()};
    }

private:
    std::vector<double> values_;
};

ojson scaler_json(const Standardizer& s, TensorWriter& w) { return {{"mean", w.add(s.mean)}, {"scale", w.add(s.scale)}}; }

Standardizer read_scaler(const json& j, const TensorReader& r) {
    Standardizer s{r.row(j.at("mean")), r.row(j.at("scale"))};
    if (s.mean.size() != s.scale.size()) throw IoError("standardizer mean and scale differ in length");
    return s;
}

ojson feature_set_json(const DualBandFeatureSet& set) {
    ojson windows = ojson::array();
    for (std::size_t i = 0; i < set.windows.size(); ++i)
        windows.push_back({{"lo_nm", set.windows[i].lo_nm},
                           {"hi_nm", set.windows[i].hi_nm},
                           {"mask", set.masks.at(i).to_string()}});
    return windows;
}

DualBandFeatureSet read_feature_set(const json& windows) {
    DualBandFeatureSet set;
    for (const auto& w : windows) {
        set.windows.push_back({w.at("lo_nm").get<double>(), w.at("hi_nm").get<double>()});
        set.masks.push_back(FeatureMask::parse(w.at("mask").get<std::string>()));
    }
    return set;
}

fs::path weights_path(const fs::path& path) {
    fs::path p = path;
    return p.replace_extension(".bin");
}

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw IoError(path.string() + ": " + e.what());
    }
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace

void save_model(const ModelBundle& bundle, const fs::path& path) {
    TensorWriter w;
    ojson j;
    j["format"] = "bandsel-model";
    j["version"] = kModelVersion;
    j["kind"] = classifier_name(model_kind(bundle.model));
    j["fruit"] = bundle.fruit;
    j["class_names"] = bundle.class_names;
    j["num_classes"] = num_classes(bundle.model);
    j["input_dim"] = input_dim(bundle.model);
    j["axis_nm"] = w.add(std::vector<double>(bundle.axis.nm().begin(), bundle.axis.nm().end()));
    j["features"] = bundle.features ? feature_set_json(*bundle.features) : ojson(nullptr);
    j["preprocessing"] = {{"msc", bundle.preprocessing.msc},
                          {"savgol_window", bundle.preprocessing.savgol_window},
                          {"savgol_order", bundle.preprocessing.savgol_order}};

    if (const auto* fcn = std::get_if<FcnModel>(&bundle.model)) {
        j["scaler"] = scaler_json(fcn->scaler, w);
        ojson layers = ojson::array();
        for (std::size_t l = 0; l < fcn->network.weights.size(); ++l)
            layers.push_back({{"weights", w.add(fcn->network.weights[l])}, {"bias", w.add(fcn->network.biases[l])}});
        j["layers"] = layers;
    } else if (const auto* svm = std::get_if<SvmModel>(&bundle.model)) {
        j["scaler"] = scaler_json(svm->scaler, w);
        j["kernel"] = {{"type", "poly"}, {"degree", svm->degree}, {"gamma", svm->gamma}, {"coef0", svm->coef0}, {"c", svm->c}};
        j["support_vectors"] = w.add(svm->support_vectors);
        ojson pairs = ojson::array();
        for (const auto& p : svm->pairs)
            pairs.push_back({{"positive", p.positive},
                             {"negative", p.negative},
                             {"rho", p.rho},
                             {"sv_index", p.sv_index},
                             {"coef", w.add(p.coef)}});
        j["pairs"] = pairs;
    } else {
        const auto& knn = std::get<KnnModel>(bundle.model);
        j["scaler"] = scaler_json(knn.scaler, w);
        j["k"] = knn.k;
        j["train"] = w.add(knn.train);
        j["labels"] = knn.labels;
    }

    write_text(path, j.dump(2) + "\n");
    w.write(weights_path(path));
}

ModelBundle load_model(const fs::path& path) {
    const json j = read_json(path);
    try {
        if (j.at("format") != "bandsel-model") throw IoError(path.string() + ": not a model file");
        if (j.at("version").get<int>() != kModelVersion)
            throw IoError(path.string() + ": unsupported model version " + j.at("version").dump());
        const TensorReader r(weights_path(path));

        ModelBundle b;
        b.fruit = j.at("fruit").get<std::string>();
        b.class_names = j.at("class_names").get<std::vector<std::string>>();
        b.axis = WavelengthAxis(r.vec(j.at("axis_nm")));
        if (!j.at("features").is_null()) b.features = read_feature_set(j.at("features"));
        const auto& pre = j.at("preprocessing");
        b.preprocessing = {pre.at("msc").get<bool>(), pre.at("savgol_window").get<std::size_t>(),
                           pre.at("savgol_order").get<std::size_t>()};
        const auto k = j.at("num_classes").get<std::size_t>();
        const auto kind = parse_classifier(j.at("kind").get<std::string>());

        if (kind == ClassifierKind::Fcn) {
            FcnModel m;
            m.scaler = read_scaler(j.at("scaler"), r);
            m.num_classes = k;
            for (const auto& layer : j.at("layers")) {
                m.network.weights.push_back(r.matrix(layer.at("weights")));
                m.network.biases.push_back(r.row(layer.at("bias")));
            }
            if (m.network.weights.empty()) throw IoError("network has no layers");
            for (std::size_t l = 0; l < m.network.weights.size(); ++l) {
                const bool chained = l == 0 ? m.network.weights[0].rows() == m.scaler.mean.size()
                                            : m.network.weights[l].rows() == m.network.weights[l - 1].cols();
                if (!chained || m.network.biases[l].size() != m.network.weights[l].cols())
                    throw IoError("layer " + std::to_string(l) + " dimensions are inconsistent");
            }
            b.model = std::move(m);
        } else if (kind == ClassifierKind::Svm) {
            SvmModel m;
            m.scaler = read_scaler(j.at("scaler"), r);
            const auto& kernel = j.at("kernel");
            m.degree = kernel.at("degree").get<int>();
            m.gamma = kernel.at("gamma").get<double>();
            m.coef0 = kernel.at("coef0").get<double>();
            m.c = kernel.at("c").get<double>();
            m.support_vectors = r.matrix(j.at("support_vectors"));
            m.num_classes = k;
            for (const auto& p : j.at("pairs")) {
                SvmPairModel pm;
                pm.positive = p.at("positive").get<int>();
                pm.negative = p.at("negative").get<int>();
                pm.rho = p.at("rho").get<double>();
                pm.sv_index = p.at("sv_index").get<std::vector<std::size_t>>();
                pm.coef = r.vec(p.at("coef"));
                if (pm.coef.size() != pm.sv_index.size()) throw IoError("support vector coefficients misaligned");
                for (auto i : pm.sv_index)
                    if (i >= static_cast<std::size_t>(m.support_vectors.rows()))
                        throw IoError("support vector index out of range");
                m.pairs.push_back(std::move(pm));
            }
            b.model = std::move(m);
        } else {
            KnnModel m;
            m.scaler = read_scaler(j.at("scaler"), r);
            m.k = j.at("k").get<std::size_t>();
            m.train = r.matrix(j.at("train"));
            m.labels = j.at("labels").get<Labels>();
            m.num_classes = k;
            if (m.labels.size() != static_cast<std::size_t>(m.train.rows())) throw IoError("k-NN labels misaligned");
            b.model = std::move(m);
        }
        if (b.features && b.features->feature_dim() != input_dim(b.model))
            throw IoError(path.string() + ": feature set width differs from the model input");
        return b;
    } catch (const json::exception& e) {
        throw IoError(path.string() + ": " + e.what());
    }
}

void save_feature_set(const FeatureSetDocument& doc, const fs::path& path) {
    ojson j;
    j["format"] = "bandsel-featureset";
    j["version"] = kFeatureSetVersion;
    j["windows"] = feature_set_json(doc.set);
    j["feature_dim"] = doc.set.feature_dim();
    j["columns"] = doc.set.column_names();
    if (doc.test_accuracy) j["test_accuracy"] = *doc.test_accuracy;
    if (doc.test_loss && std::isfinite(*doc.test_loss)) j["test_loss"] = *doc.test_loss;
    if (!doc.classifier.empty()) j["classifier"] = doc.classifier;
    j["below_target"] = doc.below_target;
    write_text(path, j.dump(2) + "\n");
}

FeatureSetDocument load_feature_set(const fs::path& path) {
    const json j = read_json(path);
    try {
        if (j.at("format") != "bandsel-featureset") throw IoError(path.string() + ": not a feature-set file");
        if (j.at("version").get<int>() != kFeatureSetVersion)
            throw IoError(path.string() + ": unsupported feature-set version");
        FeatureSetDocument doc;
        doc.set = read_feature_set(j.at("windows"));
        if (j.contains("test_accuracy")) doc.test_accuracy = j["test_accuracy"].get<double>();
        if (j.contains("test_loss")) doc.test_loss = j["test_loss"].get<double>();
        if (j.contains("classifier")) doc.classifier = j["classifier"].get<std::string>();
        doc.below_target = j.value("below_target", false);
        if (doc.set.windows.empty()) throw IoError(path.string() + ": feature set has no windows");
        for (auto m : doc.set.masks)
            if (m.empty()) throw IoError(path.string() + ": feature set contains an empty mask");
        return doc;
    } catch (const json::exception& e) {
        throw IoError(path.string() + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Ledgers
// ---------------------------------------------------------------------------

namespace {

std::string join_windows(const SearchRecord& r) {
    std::string s;
    for (std::size_t i = 0; i < r.windows.size(); ++i) s += (i ? "|" : "") + r.windows[i].label();
    return s;
}

std::string join_masks(const SearchRecord& r) {
    std::string s;
    for (std::size_t i = 0; i < r.masks.size(); ++i) s += (i ? "|" : "") + r.masks[i].to_string();
    return s;
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, sep)) out.push_back(cur);
    if (!s.empty() && s.back() == sep) out.emplace_back();
    return out;
}

}  // namespace

void write_ledger_csv(const SearchLedger& ledger, const fs::path& path) {
    std::string text = "windows;masks;accuracy;loss;dim;seed;classifier;failed\n";
    for (const auto& r : ledger.records) {
        text += join_windows(r);
        text += ';';
        text += join_masks(r);
        text += ';';
        text += format_double(r.test_accuracy);
        text += ';';
        text += std::isfinite(r.test_loss) ? format_double(r.test_loss) : std::string("inf");
        text += ';';
        text += std::to_string(r.feature_dim);
        text += ';';
        text += std::to_string(r.seed);
        text += ';';
        text += classifier_name(r.classifier);
        text += ';';
        text += r.failed ? "1\n" : "0\n";
    }
    write_text(path, text);
}

SearchLedger read_ledger_csv(const fs::path& path, Stage stage) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line.rfind("windows;masks;accuracy;loss;dim;seed", 0) != 0)
        throw IoError(path.string() + ": not a search ledger");
    SearchLedger ledger{stage, {}};
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto cells = split(line, ';');
        if (cells.size() != 8) throw IoError(path.string() + ":" + std::to_string(line_no) + ": expected 8 fields");
        SearchRecord r;
        for (const auto& w : split(cells[0], '|')) r.windows.push_back(SubbandWindow::parse(w));
        for (const auto& m : split(cells[1], '|')) r.masks.push_back(FeatureMask::parse(m));
        r.test_accuracy = std::stod(cells[2]);
        r.test_loss = cells[3] == "inf" ? std::numeric_limits<double>::infinity() : std::stod(cells[3]);
        r.feature_dim = std::stoull(cells[4]);
        r.seed = std::stoull(cells[5]);
        r.classifier = parse_classifier(cells[6]);
        r.failed = cells[7] == "1";
        ledger.records.push_back(std::move(r));
    }
    return ledger;
}

void write_ledger_jsonl(const SearchLedger& ledger, const fs::path& path) {
    std::string text;
    for (const auto& r : ledger.records) {
        ojson j;
        j["stage"] = stage_name(ledger.stage);
        ojson windows = ojson::array(), masks = ojson::array();
        for (const auto& w : r.windows) windows.push_back(w.label());
        for (const auto& m : r.masks) masks.push_back(m.to_string());
        j["windows"] = windows;
        j["masks"] = masks;
        j["accuracy"] = r.test_accuracy;
        j["loss"] = std::isfinite(r.test_loss) ? ojson(r.test_loss) : ojson(nullptr);
        j["dim"] = r.feature_dim;
        j["seed"] = r.seed;
        j["classifier"] = classifier_name(r.classifier);
        j["failed"] = r.failed;
        text += j.dump();
        text += '\n';
    }
    write_text(path, text);
}

}  // namespace bandsel
