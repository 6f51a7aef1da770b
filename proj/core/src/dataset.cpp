#include "bandsel/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "bandsel/error.hpp"
#include "bandsel/io.hpp"
#include "bandsel/rng.hpp"

namespace bandsel {

namespace fs = std::filesystem;

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string> split_csv(std::string_view line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        out.emplace_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

struct CsvRef {
    std::string file;
    std::size_t row = 0;
};

std::optional<CsvRef> parse_csv_ref(const std::string& path) {
    const auto hash = path.rfind('#');
    if (hash == std::string::npos) return std::nullopt;
    CsvRef ref{path.substr(0, hash), 0};
    const std::string_view digits(path.data() + hash + 1, path.size() - hash - 1);
    const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), ref.row);
    if (ec != std::errc{} || ptr != digits.data() + digits.size())
        throw IoError("malformed spectra reference '" + path + "' (expected <file>.csv#<row>)");
    return ref;
}

std::string split_name(Split s) { return s == Split::Train ? "train" : "test"; }

}  // namespace

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

std::map<std::string, std::size_t> DatasetManifest::class_counts() const {
    std::map<std::string, std::size_t> counts;
    for (const auto& e : entries) ++counts[e.class_label];
    return counts;
}

DatasetManifest load_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest " + path.string());

    DatasetManifest m;
    m.base_dir = path.parent_path();
    std::string line;
    std::size_t line_no = 0;
    bool have_header = false, have_columns = false, have_fruit = false;
    std::set<std::string> ids, paths;

    auto fail = [&](const std::string& msg) {
        throw IoError(path.string() + ":" + std::to_string(line_no) + ": " + msg);
    };

    while (std::getline(in, line)) {
        ++line_no;
        const auto text = trim(line);
        if (text.empty()) continue;
        if (!have_header) {
            if (text.front() != '#') fail("manifest must start with '# fruit=<name> axis=<file>'");
            std::istringstream ss{std::string(text.substr(1))};
            std::string tok;
            while (ss >> tok) {
                const auto eq = tok.find('=');
                if (eq == std::string::npos) continue;
                const auto key = tok.substr(0, eq), value = tok.substr(eq + 1);
                if (key == "fruit") {
                    const auto f = parse_fruit(value);
                    if (!f) fail("unknown fruit '" + value + "'");
                    m.fruit = *f;
                    have_fruit = true;
                } else if (key == "axis") {
                    m.axis_file = value;
                }
            }
            if (!have_fruit) fail("header does not name the fruit");
            if (m.axis_file.empty()) fail("header does not name the axis file");
            have_header = true;
            continue;
        }
        if (text.front() == '#') continue;
        const auto cells = split_csv(text);
        if (!have_columns) {
            if (cells != std::vector<std::string>{"instance_id", "path", "class", "split"})
                fail("expected column header 'instance_id,path,class,split'");
            have_columns = true;
            continue;
        }
        if (cells.size() != 4) fail("expected 4 columns");
        ManifestEntry e{cells[0], cells[1], cells[2], Split::Train};
        if (e.instance_id.empty()) fail("empty instance id");
        if (!class_index(m.fruit, e.class_label))
            fail("unknown class '" + e.class_label + "' for " + std::string(fruit_name(m.fruit)));
        if (cells[3] == "train")
            e.split = Split::Train;
        else if (cells[3] == "test")
            e.split = Split::Test;
        else
            fail("split must be 'train' or 'test', got '" + cells[3] + "'");
        if (!ids.insert(e.instance_id).second) fail("duplicate instance id '" + e.instance_id + "'");
        if (!paths.insert(e.path).second) fail("duplicate path '" + e.path + "'");
        const auto ref = parse_csv_ref(e.path);
        const fs::path file = m.base_dir / (ref ? ref->file : e.path);
        if (!fs::exists(file)) fail("missing file " + file.string());
        m.entries.push_back(std::move(e));
    }
    if (!have_header) throw IoError(path.string() + ": empty manifest");
    if (!have_columns || m.entries.empty()) throw IoError(path.string() + ": manifest lists no instances");

    const fs::path axis_path = m.base_dir / m.axis_file;
    if (!fs::exists(axis_path)) throw IoError(path.string() + ": missing axis file " + axis_path.string());
    m.axis = read_axis_file(axis_path);
    return m;
}

void write_manifest(const DatasetManifest& m, const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << "# fruit=" << fruit_name(m.fruit) << " axis=" << m.axis_file.generic_string() << '\n';
    out << "instance_id,path,class,split\n";
    for (const auto& e : m.entries)
        out << e.instance_id << ',' << e.path << ',' << e.class_label << ',' << split_name(e.split) << '\n';
}

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

LabeledSpectra LabeledSpectra::subset(const std::vector<std::size_t>& indices) const {
    LabeledSpectra out;
    out.axis = axis;
    out.num_classes = num_classes;
    for (auto i : indices) {
        out.spectra.push_back(spectra.at(i));
        out.labels.push_back(labels.at(i));
        out.ids.push_back(ids.at(i));
    }
    return out;
}

Matrix LabeledSpectra::as_matrix() const {
    Matrix m(static_cast<Eigen::Index>(spectra.size()), static_cast<Eigen::Index>(axis.size()));
    for (std::size_t i = 0; i < spectra.size(); ++i)
        for (std::size_t b = 0; b < axis.size(); ++b)
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(b)) = spectra[i][b];
    return m;
}

TrainTest load_dataset(const DatasetManifest& manifest, const NdviOptions& ndvi) {
    TrainTest out;
    const std::size_t k = class_names(manifest.fruit).size();
    out.train.axis = out.test.axis = manifest.axis;
    out.train.num_classes = out.test.num_classes = k;

    std::unordered_map<std::string, SpectraTable> tables;
    for (const auto& e : manifest.entries) {
        std::vector<double> values;
        if (const auto ref = parse_csv_ref(e.path)) {
            auto it = tables.find(ref->file);
            if (it == tables.end()) it = tables.emplace(ref->file, read_spectra_csv(manifest.base_dir / ref->file)).first;
            const auto& table = it->second;
            if (!(table.axis == manifest.axis))
                throw ShapeError(ref->file + ": wavelengths differ from the manifest axis");
            if (ref->row >= table.rows.size())
                throw IoError(e.path + ": row " + std::to_string(ref->row) + " beyond the " +
                              std::to_string(table.rows.size()) + " rows of " + ref->file);
            const auto& row = table.rows[ref->row];
            if (!row.label.empty() && row.label != e.class_label)
                throw IoError(e.path + ": spectra label '" + row.label + "' disagrees with manifest class '" +
                              e.class_label + "'");
            values = row.values;
        } else {
            const Hypercube cube = read_hsc(manifest.base_dir / e.path);
            if (cube.kind() != CubeKind::Reflectance)
                throw DomainError(e.path + ": cube must be calibrated to reflectance first");
            if (!(cube.axis() == manifest.axis)) throw ShapeError(e.path + ": wavelengths differ from the manifest axis");
            values = instance_mean_spectrum(cube, ndvi_segment(cube, ndvi)).values;
        }
        auto& part = e.split == Split::Train ? out.train : out.test;
        part.spectra.push_back(std::move(values));
        part.labels.push_back(static_cast<int>(*class_index(manifest.fruit, e.class_label)));
        part.ids.push_back(e.instance_id);
    }
    return out;
}

void preprocess(TrainTest& data, const Preprocessing& options) {
    if (options.msc) {
        std::vector<Spectrum> all;
        all.reserve(data.train.size() + data.test.size());
        for (const auto* part : {&data.train, &data.test})
            for (const auto& s : part->spectra) all.emplace_back(s, part->axis);
        auto corrected = msc_correct(all);
        std::size_t i = 0;
        for (auto* part : {&data.train, &data.test})
            for (auto& s : part->spectra) s = std::move(corrected[i++].values);
    }
    if (options.savgol_window > 0) {
        for (auto* part : {&data.train, &data.test})
            for (auto& s : part->spectra) s = savgol_smooth(s, options.savgol_window, options.savgol_order);
    }
}

SplitIndices stratified_split(const Labels& labels, double test_fraction, std::uint64_t seed,
                              std::vector<std::string>* warnings) {
    if (!(test_fraction >= 0.0 && test_fraction <= 1.0)) throw ParameterError("test fraction must lie in [0, 1]");
    std::map<int, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < labels.size(); ++i) groups[labels[i]].push_back(i);

    Rng rng(derive_seed(seed, "stratified-split"));
    struct Quota {
        int label;
        std::size_t take;
        double remainder;
        std::size_t cap;
    };
    std::vector<Quota> quotas;
    std::size_t assigned = 0;
    for (auto& [label, idx] : groups) {
        rng.shuffle(idx.begin(), idx.end());
        const double ideal = static_cast<double>(idx.size()) * test_fraction;
        const std::size_t cap = idx.size() >= 2 ? idx.size() : 0;
        if (idx.size() < 2 && warnings && test_fraction > 0.0)
            warnings->push_back("class " + std::to_string(label) + " has a single instance; kept in train");
        const auto take = std::min(cap, static_cast<std::size_t>(std::floor(ideal)));
        quotas.push_back({label, take, ideal - std::floor(ideal), cap});
        assigned += take;
    }
    const auto target = static_cast<std::size_t>(std::llround(static_cast<double>(labels.size()) * test_fraction));
    std::vector<std::size_t> order(quotas.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return quotas[a].remainder > quotas[b].remainder; });
    for (std::size_t pass = 0; pass < 2 && assigned < target; ++pass)
        for (auto q : order) {
            if (assigned >= target) break;
            if (quotas[q].take < quotas[q].cap && (pass == 1 || quotas[q].remainder > 0.0)) {
                ++quotas[q].take;
                ++assigned;
            }
        }

    SplitIndices out;
    std::size_t qi = 0;
    for (const auto& [label, idx] : groups) {
        const auto take = quotas[qi++].take;
        out.test.insert(out.test.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(take));
        out.train.insert(out.train.end(), idx.begin() + static_cast<std::ptrdiff_t>(take), idx.end());
    }
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.test.begin(), out.test.end());
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic generator
// ---------------------------------------------------------------------------

void SynthConfig::validate() const {
    if (classes < 2) throw ParameterError("synthetic data needs at least two classes");
    if (n_per_class == 0) throw ParameterError("synthetic data needs at least one instance per class");
    if (axis.empty()) throw ParameterError("synthetic axis is empty");
    if (noise_sigma < 0.0 || scatter_gain_sigma < 0.0) throw ParameterError("noise levels must be nonnegative");
    if (!(pigment_band.lo_nm < pigment_band.hi_nm) || !(chlorophyll_band.lo_nm < chlorophyll_band.hi_nm))
        throw ParameterError("planted bands must have positive width");
    if (overlap_nm(pigment_band, chlorophyll_band) > 0.0)
        throw ParameterError("pigment and chlorophyll bands must be disjoint");
    const double last_peak = pigment_band.lo_nm + static_cast<double>(classes - 1) * peak_shift_per_class_nm;
    if (peak_shift_per_class_nm < 0.0 || last_peak > pigment_band.hi_nm)
        throw ParameterError("peak shift moves the class " + std::to_string(classes - 1) + " peak to " +
                             format_double(last_peak) + " nm, outside the pigment band " + pigment_band.label());
    if (trough_lift_per_class * static_cast<double>(classes - 1) > 1.0 || trough_lift_per_class < 0.0)
        throw ParameterError("trough lift must keep every trough depth within [0, 1] of the base depth");
    if (peak_width_nm <= 0.0 || trough_width_nm <= 0.0) throw ParameterError("planted widths must be positive");
}

std::vector<double> synthetic_class_spectrum(const SynthConfig& cfg, std::size_t cls) {
    const auto& axis = cfg.axis;
    const double lo = axis.front(), span = std::max(axis.back() - axis.front(), 1.0);
    const double mu = cfg.pigment_band.lo_nm + static_cast<double>(cls) * cfg.peak_shift_per_class_nm;
    const double tau = 0.5 * (cfg.chlorophyll_band.lo_nm + cfg.chlorophyll_band.hi_nm);
    const double depth = cfg.trough_depth * (1.0 - static_cast<double>(cls) * cfg.trough_lift_per_class);
    std::vector<double> v(axis.size());
    for (std::size_t b = 0; b < axis.size(); ++b) {
        const double nm = axis[b];
        const double t = (nm - lo) / span;
        const double base = 0.2 + 0.02 * t - 0.01 * t * t;
        const double dp = (nm - mu) / cfg.peak_width_nm;
        const double dt = (nm - tau) / cfg.trough_width_nm;
        v[b] = base + cfg.peak_amplitude * std::exp(-0.5 * dp * dp) - depth * std::exp(-0.5 * dt * dt);
    }
    return v;
}

SynthDataset generate_synthetic(const SynthConfig& cfg) {
    cfg.validate();
    SynthDataset ds;
    ds.truth.pigment_band = cfg.pigment_band;
    ds.truth.chlorophyll_band = cfg.chlorophyll_band;
    ds.truth.trough_center_nm = 0.5 * (cfg.chlorophyll_band.lo_nm + cfg.chlorophyll_band.hi_nm);
    ds.data.axis = cfg.axis;
    ds.data.num_classes = cfg.classes;

    for (std::size_t c = 0; c < cfg.classes; ++c) {
        ds.truth.peak_center_nm.push_back(cfg.pigment_band.lo_nm + static_cast<double>(c) * cfg.peak_shift_per_class_nm);
        ds.truth.trough_depth.push_back(cfg.trough_depth * (1.0 - static_cast<double>(c) * cfg.trough_lift_per_class));
        const auto tmpl = synthetic_class_spectrum(cfg, c);
        for (std::size_t j = 0; j < cfg.n_per_class; ++j) {
            const std::size_t i = c * cfg.n_per_class + j;
            Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(i)));
            const double gain = std::max(0.5, 1.0 + cfg.scatter_gain_sigma * rng.normal());
            std::vector<double> s(tmpl.size());
            for (std::size_t b = 0; b < tmpl.size(); ++b) s[b] = gain * tmpl[b] + cfg.noise_sigma * rng.normal();
            ds.data.spectra.push_back(std::move(s));
            ds.data.labels.push_back(static_cast<int>(c));
            char id[32];
            std::snprintf(id, sizeof id, "syn%05zu", i);
            ds.data.ids.emplace_back(id);
        }
    }
    return ds;
}

std::vector<double> background_spectrum(const WavelengthAxis& axis) {
    std::vector<double> v(axis.size());
    for (std::size_t b = 0; b < axis.size(); ++b) {
        const double nm = axis[b];
        const double green = (nm - 550.0) / 30.0;
        v[b] = 0.05 + 0.04 * std::exp(-0.5 * green * green) + 0.45 / (1.0 + std::exp(-(nm - 710.0) / 12.0));
    }
    return v;
}

SynthCube generate_synthetic_cube(const SynthConfig& cfg, std::size_t height, std::size_t width,
                                  std::size_t left_class, std::size_t right_class, std::uint64_t seed) {
    cfg.validate();
    if (left_class >= cfg.classes || right_class >= cfg.classes) throw ParameterError("cube class outside the class range");
    const auto left = synthetic_class_spectrum(cfg, left_class);
    const auto right = synthetic_class_spectrum(cfg, right_class);
    const auto background = background_spectrum(cfg.axis);
    const std::size_t bands = cfg.axis.size();

    SynthCube out{Hypercube(height, width, cfg.axis, CubeKind::Reflectance), std::vector<std::uint8_t>(height * width, 0)};
    const double cy = 0.5 * static_cast<double>(height), cx = 0.5 * static_cast<double>(width);
    const double radius = 0.4 * static_cast<double>(std::min(height, width));
    // Elliptical fruit region stretched across the wide axis.
    const double ry = radius, rx = std::max(radius, 0.4 * static_cast<double>(width));
    for (std::size_t y = 0; y < height; ++y) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(y)));
        for (std::size_t x = 0; x < width; ++x) {
            const double dy = (static_cast<double>(y) + 0.5 - cy) / ry;
            const double dx = (static_cast<double>(x) + 0.5 - cx) / rx;
            const bool fruit = dx * dx + dy * dy <= 1.0;
            const std::vector<double>* tmpl = &background;
            double gain = 1.0;
            std::uint8_t truth = 0;
            if (fruit) {
                const bool is_left = static_cast<double>(x) + 0.5 < cx;
                tmpl = is_left ? &left : &right;
                truth = static_cast<std::uint8_t>((is_left ? left_class : right_class) + 1);
                gain = std::max(0.5, 1.0 + cfg.scatter_gain_sigma * rng.normal());
            }
            auto px = out.cube.pixel(y * width + x);
            for (std::size_t b = 0; b < bands; ++b)
                px[b] = static_cast<float>(gain * (*tmpl)[b] + cfg.noise_sigma * rng.normal());
            out.truth[y * width + x] = truth;
        }
    }
    return out;
}

void write_synthetic_dataset(const SynthDataset& ds, Fruit fruit, double test_fraction, const fs::path& dir,
                             std::uint64_t split_seed) {
    fs::create_directories(dir);
    const auto& names = class_names(fruit);
    if (ds.data.num_classes > names.size())
        throw ParameterError(std::to_string(ds.data.num_classes) + " classes exceed the " + std::string(fruit_name(fruit)) +
                             " vocabulary of " + std::to_string(names.size()));

    SpectraTable table{ds.data.axis, {}};
    for (std::size_t i = 0; i < ds.data.size(); ++i)
        table.rows.push_back({names[static_cast<std::size_t>(ds.data.labels[i])], ds.data.spectra[i]});
    write_spectra_csv(table, dir / "spectra.csv");
    write_axis_file(ds.data.axis, dir / "axis.txt");

    const auto split = stratified_split(ds.data.labels, test_fraction, split_seed);
    std::vector<Split> which(ds.data.size(), Split::Train);
    for (auto i : split.test) which[i] = Split::Test;

    DatasetManifest m;
    m.fruit = fruit;
    m.axis_file = "axis.txt";
    for (std::size_t i = 0; i < ds.data.size(); ++i)
        m.entries.push_back({ds.data.ids[i], "spectra.csv#" + std::to_string(i),
                             names[static_cast<std::size_t>(ds.data.labels[i])], which[i]});
    write_manifest(m, dir / "manifest.txt");

    nlohmann::ordered_json planted;
    planted["pigment_band"] = {ds.truth.pigment_band.lo_nm, ds.truth.pigment_band.hi_nm};
    planted["chlorophyll_band"] = {ds.truth.chlorophyll_band.lo_nm, ds.truth.chlorophyll_band.hi_nm};
    planted["peak_center_nm"] = ds.truth.peak_center_nm;
    planted["trough_center_nm"] = ds.truth.trough_center_nm;
    planted["trough_depth"] = ds.truth.trough_depth;
    std::vector<std::string> cls(names.begin(), names.begin() + static_cast<std::ptrdiff_t>(ds.data.num_classes));
    planted["classes"] = cls;
    std::ofstream out(dir / "planted.json", std::ios::trunc);
    if (!out) throw IoError("cannot write " + (dir / "planted.json").string());
    out << planted.dump(2) << '\n';
}

}  // namespace bandsel
