#include "bandsel/features.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>

#include "bandsel/error.hpp"
#include "bandsel/io.hpp"

namespace bandsel {

namespace {

constexpr std::array<std::string_view, kFeatureCount> kNames = {
    "max", "min", "argmax", "argmin", "mean", "median", "area", "skewness", "kurtosis",
};

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
    return s;
}

}  // namespace

std::string_view feature_name(Feature f) noexcept { return kNames[static_cast<std::size_t>(f)]; }

std::optional<Feature> parse_feature(std::string_view name) noexcept {
    for (std::size_t i = 0; i < kFeatureCount; ++i)
        if (kNames[i] == name) return static_cast<Feature>(i);
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// FeatureMask
// ---------------------------------------------------------------------------

FeatureMask::FeatureMask(std::uint16_t bits) : bits_(bits) {
    if (bits > kAll) throw ParameterError("feature mask " + std::to_string(bits) + " exceeds nine bits");
}

FeatureMask::FeatureMask(std::initializer_list<Feature> features) {
    for (Feature f : features) bits_ |= static_cast<std::uint16_t>(1u << static_cast<unsigned>(f));
}

std::size_t FeatureMask::popcount() const noexcept { return static_cast<std::size_t>(std::popcount(bits_)); }

std::vector<Feature> FeatureMask::features() const {
    std::vector<Feature> out;
    for (std::size_t i = 0; i < kFeatureCount; ++i)
        if ((bits_ >> i) & 1u) out.push_back(static_cast<Feature>(i));
    return out;
}

std::string FeatureMask::to_string() const {
    if (empty()) return "none";
    std::string s;
    for (Feature f : features()) {
        if (!s.empty()) s += '+';
        s += feature_name(f);
    }
    return s;
}

FeatureMask FeatureMask::parse(std::string_view text) {
    text = trim(text);
    if (text == "none" || text.empty()) return FeatureMask{};
    if (text == "all") return all();
    std::uint16_t bits = 0;
    std::size_t start = 0;
    while (start <= text.size()) {
        auto end = text.find_first_of("+,", start);
        if (end == std::string_view::npos) end = text.size();
        const auto name = trim(text.substr(start, end - start));
        const auto f = parse_feature(name);
        if (!f) throw ParameterError("unknown feature '" + std::string(name) + "'");
        bits |= static_cast<std::uint16_t>(1u << static_cast<unsigned>(*f));
        start = end + 1;
    }
    return FeatureMask(bits);
}

// ---------------------------------------------------------------------------
// SubbandWindow
// ---------------------------------------------------------------------------

std::string SubbandWindow::label() const { return format_double(lo_nm) + "-" + format_double(hi_nm); }

SubbandWindow SubbandWindow::parse(std::string_view text) {
    text = trim(text);
    const auto dash = text.find('-', 1);
    if (dash == std::string_view::npos) throw ParameterError("window must look like 510-670, got '" + std::string(text) + "'");
    auto number = [&](std::string_view part) {
        part = trim(part);
        double v = 0.0;
        const auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
        if (ec != std::errc{} || ptr != part.data() + part.size())
            throw ParameterError("malformed window bound '" + std::string(part) + "'");
        return v;
    };
    SubbandWindow w{number(text.substr(0, dash)), number(text.substr(dash + 1))};
    if (!(w.lo_nm < w.hi_nm)) throw ParameterError("window lower bound must be below the upper bound");
    return w;
}

double overlap_nm(const SubbandWindow& a, const SubbandWindow& b) noexcept {
    return std::max(0.0, std::min(a.hi_nm, b.hi_nm) - std::max(a.lo_nm, b.lo_nm));
}

// ---------------------------------------------------------------------------
// FeatureVector
// ---------------------------------------------------------------------------

double FeatureVector::operator[](Feature f) const noexcept {
    switch (f) {
        case Feature::Max: return max;
        case Feature::Min: return min;
        case Feature::Argmax: return argmax_um;
        case Feature::Argmin: return argmin_um;
        case Feature::Mean: return mean;
        case Feature::Median: return median;
        case Feature::Area: return area;
        case Feature::Skewness: return skewness;
        case Feature::Kurtosis: return kurtosis;
    }
    return 0.0;
}

std::array<double, kFeatureCount> FeatureVector::to_array() const noexcept {
    return {max, min, argmax_um, argmin_um, mean, median, area, skewness, kurtosis};
}

// ---------------------------------------------------------------------------
// Extraction
// ---------------------------------------------------------------------------

WavelengthAxis::IndexRange window_indices(const WavelengthAxis& axis, const SubbandWindow& w) {
    if (!(w.lo_nm < w.hi_nm)) throw ParameterError("window " + w.label() + " is empty");
    if (axis.empty()) throw ParameterError("empty wavelength axis");
    const double slack = 1e-9 * std::max(1.0, std::abs(w.hi_nm));
    if (w.lo_nm < axis.front() - slack || w.hi_nm > axis.back() + slack)
        throw ParameterError("window " + w.label() + " nm lies outside the axis " + format_double(axis.front()) +
                             "-" + format_double(axis.back()) + " nm");
    const auto r = axis.index_range(w.lo_nm, w.hi_nm);
    if (r.size() == 0) throw ParameterError("window " + w.label() + " selects no bands");
    return r;
}

Spectrum slice_window(const Spectrum& s, const SubbandWindow& w) {
    const auto r = window_indices(s.axis, w);
    const auto nm = s.axis.nm();
    return Spectrum(std::vector<double>(s.values.begin() + static_cast<std::ptrdiff_t>(r.first),
                                        s.values.begin() + static_cast<std::ptrdiff_t>(r.last)),
                    WavelengthAxis(std::vector<double>(nm.begin() + static_cast<std::ptrdiff_t>(r.first),
                                                       nm.begin() + static_cast<std::ptrdiff_t>(r.last))));
}

void compute_masked_features(std::span<const double> values, std::span<const double> nm, FeatureMask mask,
                             std::span<double> out, std::span<double> scratch) {
    const std::size_t n = values.size();
    if (n < 3) throw DomainError("feature extraction needs at least 3 samples, got " + std::to_string(n));
    if (nm.size() != n) throw ShapeError("values and wavelengths differ in length");
    if (out.size() < mask.popcount()) throw ShapeError("feature output buffer too small");

    const bool want_extrema = mask.test(Feature::Max) || mask.test(Feature::Min) || mask.test(Feature::Argmax) ||
                              mask.test(Feature::Argmin);
    const bool want_moments = mask.test(Feature::Skewness) || mask.test(Feature::Kurtosis);
    const bool want_mean = mask.test(Feature::Mean) || want_moments;

    double vmax = 0.0, vmin = 0.0;
    std::size_t imax = 0, imin = 0;
    if (want_extrema) {
        vmax = vmin = values[0];
        for (std::size_t i = 1; i < n; ++i) {
            const double v = values[i];
            // Strict comparisons keep the first occurrence from the low-wavelength end.
            if (v > vmax) {
                vmax = v;
                imax = i;
            }
            if (v < vmin) {
                vmin = v;
                imin = i;
            }
        }
    }

    double mean = 0.0;
    if (want_mean) {
        mean = pairwise_sum(values) / static_cast<double>(n);
    }

    double median = 0.0;
    if (mask.test(Feature::Median)) {
        if (scratch.size() < n) throw ShapeError("median scratch buffer too small");
        auto buf = scratch.first(n);
        std::copy(values.begin(), values.end(), buf.begin());
        const std::size_t mid = n / 2;
        std::nth_element(buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(mid), buf.end());
        median = buf[mid];
        if (n % 2 == 0) {
            const double lower = *std::max_element(buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(mid));
            median = 0.5 * (lower + median);
        }
    }

    double area = 0.0;
    if (mask.test(Feature::Area)) {
        for (std::size_t i = 1; i < n; ++i) area += 0.5 * (values[i - 1] + values[i]) * (nm[i] - nm[i - 1]);
        area *= 1e-3;
    }

    double skew = 0.0, kurt = 3.0;
    if (want_moments) {
        double m2 = 0.0, m3 = 0.0, m4 = 0.0;
        for (double v : values) {
            const double d = v - mean;
            const double d2 = d * d;
            m2 += d2;
            m3 += d2 * d;
            m4 += d2 * d2;
        }
        const double inv_n = 1.0 / static_cast<double>(n);
        m2 *= inv_n;
        m3 *= inv_n;
        m4 *= inv_n;
        // A constant segment leaves only round-off in m2; skewness 0 and kurtosis 3 by convention.
        if (m2 > 1e-24 * std::max(1.0, mean * mean)) {
            skew = m3 / (m2 * std::sqrt(m2));
            kurt = m4 / (m2 * m2);
        }
    }

    std::size_t k = 0;
    for (std::size_t i = 0; i < kFeatureCount; ++i) {
        const auto f = static_cast<Feature>(i);
        if (!mask.test(f)) continue;
        switch (f) {
            case Feature::Max: out[k++] = vmax; break;
            case Feature::Min: out[k++] = vmin; break;
            case Feature::Argmax: out[k++] = nm[imax] * 1e-3; break;
            case Feature::Argmin: out[k++] = nm[imin] * 1e-3; break;
            case Feature::Mean: out[k++] = mean; break;
            case Feature::Median: out[k++] = median; break;
            case Feature::Area: out[k++] = area; break;
            case Feature::Skewness: out[k++] = skew; break;
            case Feature::Kurtosis: out[k++] = kurt; break;
        }
    }
}

FeatureVector compute_features(std::span<const double> values, std::span<const double> nm) {
    std::array<double, kFeatureCount> out{};
    std::vector<double> scratch(values.size());
    compute_masked_features(values, nm, FeatureMask::all(), out, scratch);
    return {out[0], out[1], out[2], out[3], out[4], out[5], out[6], out[7], out[8]};
}

FeatureVector compute_features(const Spectrum& s) { return compute_features(s.values, s.axis.nm()); }

std::vector<double> apply_mask(const FeatureVector& fv, FeatureMask mask) {
    if (mask.empty()) throw ParameterError("the zero feature mask selects nothing");
    std::vector<double> out;
    out.reserve(mask.popcount());
    for (Feature f : mask.features()) out.push_back(fv[f]);
    return out;
}

// ---------------------------------------------------------------------------
// Dual-band sets
// ---------------------------------------------------------------------------

std::size_t DualBandFeatureSet::feature_dim() const noexcept {
    std::size_t d = 0;
    for (auto m : masks) d += m.popcount();
    return d;
}

void DualBandFeatureSet::validate(double overlap_tolerance_nm) const {
    if (windows.empty()) throw ParameterError("feature set has no windows");
    if (windows.size() != masks.size()) throw ParameterError("feature set windows and masks are misaligned");
    for (std::size_t i = 0; i < windows.size(); ++i) {
        if (!(windows[i].lo_nm < windows[i].hi_nm)) throw ParameterError("window " + windows[i].label() + " is empty");
        if (masks[i].empty()) throw ParameterError("feature set contains the zero mask");
        for (std::size_t j = i + 1; j < windows.size(); ++j)
            if (overlap_nm(windows[i], windows[j]) > overlap_tolerance_nm)
                throw ParameterError("windows " + windows[i].label() + " and " + windows[j].label() +
                                     " overlap beyond the tolerance");
    }
}

std::vector<std::string> DualBandFeatureSet::column_names() const {
    std::vector<std::string> names;
    for (std::size_t i = 0; i < windows.size(); ++i)
        for (Feature f : masks[i].features()) names.push_back(std::string(feature_name(f)) + "@" + windows[i].label());
    return names;
}

std::string DualBandFeatureSet::describe() const {
    std::string s;
    for (std::size_t i = 0; i < windows.size(); ++i) {
        if (i) s += " + ";
        s += "{" + masks[i].to_string() + " | " + windows[i].label() + "}";
    }
    return s;
}

std::vector<double> assemble_dual(const Spectrum& s, const DualBandFeatureSet& set) {
    if (set.windows.size() != set.masks.size()) throw ParameterError("feature set windows and masks are misaligned");
    std::vector<double> out;
    out.reserve(set.feature_dim());
    for (std::size_t i = 0; i < set.windows.size(); ++i) {
        const auto part = apply_mask(compute_features(slice_window(s, set.windows[i])), set.masks[i]);
        out.insert(out.end(), part.begin(), part.end());
    }
    return out;
}

FeatureAssembler::FeatureAssembler(const WavelengthAxis& axis, DualBandFeatureSet set)
    : axis_(axis), set_(std::move(set)) {
    if (set_.windows.size() != set_.masks.size()) throw ParameterError("feature set windows and masks are misaligned");
    for (std::size_t i = 0; i < set_.windows.size(); ++i) {
        if (set_.masks[i].empty()) throw ParameterError("the zero feature mask selects nothing");
        const auto r = window_indices(axis_, set_.windows[i]);
        if (r.size() < 3) throw DomainError("window " + set_.windows[i].label() + " holds fewer than 3 bands");
        ranges_.push_back(r);
        max_window_ = std::max(max_window_, r.size());
    }
    dim_ = set_.feature_dim();
}

void FeatureAssembler::assemble(std::span<const double> spectrum, std::span<double> out) const {
    if (spectrum.size() != axis_.size()) throw ShapeError("spectrum length does not match the assembler axis");
    if (out.size() < dim_) throw ShapeError("feature output buffer too small");
    thread_local std::vector<double> scratch;
    if (scratch.size() < max_window_) scratch.resize(max_window_);
    std::size_t k = 0;
    for (std::size_t i = 0; i < ranges_.size(); ++i) {
        const auto r = ranges_[i];
        compute_masked_features(spectrum.subspan(r.first, r.size()), axis_.nm().subspan(r.first, r.size()),
                                set_.masks[i], out.subspan(k), scratch);
        k += set_.masks[i].popcount();
    }
}

void FeatureAssembler::assemble(std::span<const float> spectrum, std::span<double> out) const {
    if (spectrum.size() != axis_.size()) throw ShapeError("spectrum length does not match the assembler axis");
    thread_local std::vector<double> widened;
    widened.resize(spectrum.size());
    // Only the window bands are read, so only those are widened.
    for (const auto r : ranges_)
        for (std::size_t b = r.first; b < r.last; ++b) widened[b] = spectrum[b];
    assemble(std::span<const double>(widened), out);
}

void write_feature_csv(const std::filesystem::path& path, const DualBandFeatureSet& set,
                       const std::vector<std::string>& labels, const std::vector<std::vector<double>>& rows) {
    if (labels.size() != rows.size()) throw ShapeError("feature CSV labels and rows differ in count");
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << "label";
    for (const auto& name : set.column_names()) out << ',' << name;
    out << '\n';
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != set.feature_dim()) throw ShapeError("feature row width differs from the set dimension");
        out << labels[i];
        for (double v : rows[i]) out << ',' << format_double(v);
        out << '\n';
    }
}

}  // namespace bandsel
