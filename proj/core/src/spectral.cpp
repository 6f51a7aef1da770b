#include "bandsel/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Dense>

#include "bandsel/error.hpp"

namespace bandsel {

// ---------------------------------------------------------------------------
// WavelengthAxis
// ---------------------------------------------------------------------------

WavelengthAxis::WavelengthAxis(std::vector<double> wavelengths_nm) : nm_(std::move(wavelengths_nm)) {
    for (std::size_t i = 0; i < nm_.size(); ++i) {
        const double v = nm_[i];
        if (!std::isfinite(v) || v < kMinNm || v > kMaxNm)
            throw ParameterError("wavelength " + std::to_string(v) + " nm outside [100, 3000] nm");
        if (i > 0 && !(v > nm_[i - 1]))
            throw ParameterError("wavelength axis is not strictly increasing at index " + std::to_string(i));
    }
}

WavelengthAxis WavelengthAxis::linspace(double lo_nm, double hi_nm, std::size_t count) {
    if (count == 0) throw ParameterError("axis needs at least one band");
    std::vector<double> v(count);
    if (count == 1) {
        v[0] = lo_nm;
    } else {
        const double step = (hi_nm - lo_nm) / static_cast<double>(count - 1);
        for (std::size_t i = 0; i < count; ++i) v[i] = lo_nm + step * static_cast<double>(i);
        v.back() = hi_nm;
    }
    return WavelengthAxis(std::move(v));
}

std::size_t WavelengthAxis::nearest_index(double nm) const {
    if (nm_.empty()) throw ParameterError("empty wavelength axis");
    const auto it = std::lower_bound(nm_.begin(), nm_.end(), nm);
    if (it == nm_.begin()) return 0;
    if (it == nm_.end()) return nm_.size() - 1;
    const auto hi = static_cast<std::size_t>(it - nm_.begin());
    return (nm - nm_[hi - 1] <= nm_[hi] - nm) ? hi - 1 : hi;
}

WavelengthAxis::IndexRange WavelengthAxis::index_range(double lo_nm, double hi_nm) const noexcept {
    // A relative slack absorbs round-off in evenly spaced axes such as linspace(450, 850, 400).
    const double slack = 1e-9 * std::max(1.0, std::abs(hi_nm));
    const auto first = std::lower_bound(nm_.begin(), nm_.end(), lo_nm - slack);
    const auto last = std::upper_bound(first, nm_.end(), hi_nm + slack);
    return {static_cast<std::size_t>(first - nm_.begin()), static_cast<std::size_t>(last - nm_.begin())};
}

// ---------------------------------------------------------------------------
// Containers
// ---------------------------------------------------------------------------

Hypercube::Hypercube(std::size_t height, std::size_t width, WavelengthAxis axis, CubeKind kind, float fill)
    : height_(height), width_(width), axis_(std::move(axis)), kind_(kind),
      data_(height * width * axis_.size(), fill) {}

Hypercube::Hypercube(std::size_t height, std::size_t width, WavelengthAxis axis, CubeKind kind,
                     std::vector<float> bip_data)
    : height_(height), width_(width), axis_(std::move(axis)), kind_(kind), data_(std::move(bip_data)) {
    if (data_.size() != height_ * width_ * axis_.size())
        throw ShapeError("cube data length " + std::to_string(data_.size()) + " != H*W*B = " +
                         std::to_string(height_ * width_ * axis_.size()));
    if (kind_ == CubeKind::Reflectance) {
        for (float& v : data_)
            if (!std::isfinite(v)) v = 0.0f;
    }
}

Spectrum::Spectrum(std::vector<double> v, WavelengthAxis a) : values(std::move(v)), axis(std::move(a)) {
    if (values.size() != axis.size())
        throw ShapeError("spectrum has " + std::to_string(values.size()) + " values for " +
                         std::to_string(axis.size()) + " wavelengths");
}

std::size_t PixelMask::count() const noexcept {
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

double pairwise_sum(std::span<const double> values) noexcept {
    constexpr std::size_t kBlock = 8;
    if (values.size() <= kBlock) {
        double s = 0.0;
        for (double v : values) s += v;
        return s;
    }
    const std::size_t half = values.size() / 2;
    return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

// ---------------------------------------------------------------------------
// Calibration
// ---------------------------------------------------------------------------

Hypercube calibrate(const Hypercube& raw, const Hypercube& white, const Hypercube& dark) {
    if (raw.kind() != CubeKind::RawIntensity) throw DomainError("calibrate expects a raw-intensity cube");
    if (!raw.same_geometry(white) || !raw.same_geometry(dark))
        throw ShapeError("raw, white and dark cubes must share height, width and wavelength axis");

    Hypercube out(raw.height(), raw.width(), raw.axis(), CubeKind::Reflectance);
    const auto r = raw.data();
    const auto w = white.data();
    const auto d = dark.data();
    auto o = out.data();
    for (std::size_t i = 0; i < r.size(); ++i) {
        const double den = static_cast<double>(w[i]) - static_cast<double>(d[i]);
        if (den < -kRatioEpsilon)
            throw DomainError("white reference below dark reference at voxel " + std::to_string(i));
        double v = 0.0;
        if (std::abs(den) >= kRatioEpsilon) v = (static_cast<double>(r[i]) - static_cast<double>(d[i])) / den;
        if (!std::isfinite(v)) v = 0.0;
        o[i] = static_cast<float>(std::clamp(v, kReflectanceClampLo, kReflectanceClampHi));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Multiplicative scatter correction
// ---------------------------------------------------------------------------

std::vector<Spectrum> msc_correct(std::span<const Spectrum> spectra, const std::optional<Spectrum>& reference) {
    if (spectra.empty()) return {};
    const WavelengthAxis& axis = spectra.front().axis;
    for (const auto& s : spectra)
        if (!(s.axis == axis)) throw ShapeError("MSC requires all spectra on one wavelength axis");

    const std::size_t n = axis.size();
    std::vector<double> ref(n, 0.0);
    if (reference) {
        if (!(reference->axis == axis)) throw ShapeError("MSC reference axis differs from the batch");
        ref = reference->values;
    } else {
        std::vector<double> column(spectra.size());
        for (std::size_t b = 0; b < n; ++b) {
            for (std::size_t i = 0; i < spectra.size(); ++i) column[i] = spectra[i].values[b];
            ref[b] = pairwise_sum(column) / static_cast<double>(spectra.size());
        }
    }

    const double ref_mean = pairwise_sum(ref) / static_cast<double>(n);
    double sxx = 0.0;
    for (double r : ref) sxx += (r - ref_mean) * (r - ref_mean);
    if (!(sxx > 0.0) || sxx <= 1e-24 * std::max(1.0, ref_mean * ref_mean) * static_cast<double>(n))
        throw NumericError("MSC reference spectrum is constant; regression is degenerate");

    std::vector<Spectrum> out;
    out.reserve(spectra.size());
    for (const auto& s : spectra) {
        const double x_mean = pairwise_sum(s.values) / static_cast<double>(n);
        double sxy = 0.0;
        for (std::size_t b = 0; b < n; ++b) sxy += (ref[b] - ref_mean) * (s.values[b] - x_mean);
        const double slope = sxy / sxx;
        if (!std::isfinite(slope) || std::abs(slope) < kRatioEpsilon)
            throw NumericError("MSC slope is zero or non-finite; spectrum is uncorrelated with the reference");
        const double intercept = x_mean - slope * ref_mean;
        std::vector<double> corrected(n);
        for (std::size_t b = 0; b < n; ++b) corrected[b] = (s.values[b] - intercept) / slope;
        out.emplace_back(std::move(corrected), axis);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Savitzky-Golay
// ---------------------------------------------------------------------------

std::vector<double> savgol_coefficients(std::size_t window, std::size_t order) {
    if (window % 2 == 0 || window < 1) throw ParameterError("Savitzky-Golay window must be odd");
    if (order >= window) throw ParameterError("Savitzky-Golay order must be smaller than the window");
    const auto half = static_cast<long>(window / 2);
    const double scale = half > 0 ? static_cast<double>(half) : 1.0;

    // Least-squares fit on a scaled abscissa; the center weights are row 0 of
    // the pseudo-inverse of the Vandermonde matrix.
    Eigen::MatrixXd design(static_cast<Eigen::Index>(window), static_cast<Eigen::Index>(order + 1));
    for (long i = -half; i <= half; ++i) {
        const double t = static_cast<double>(i) / scale;
        double p = 1.0;
        for (std::size_t j = 0; j <= order; ++j) {
            design(i + half, static_cast<Eigen::Index>(j)) = p;
            p *= t;
        }
    }
    const Eigen::MatrixXd pinv = design.completeOrthogonalDecomposition().pseudoInverse();
    std::vector<double> coeffs(window);
    for (std::size_t i = 0; i < window; ++i) coeffs[i] = pinv(0, static_cast<Eigen::Index>(i));
    return coeffs;
}

std::vector<double> savgol_smooth(std::span<const double> values, std::size_t window, std::size_t order) {
    const std::size_t n = values.size();
    if (window > n) throw ParameterError("Savitzky-Golay window exceeds the spectrum length");
    const auto coeffs = savgol_coefficients(window, order);
    const auto half = static_cast<long>(window / 2);
    const auto last = static_cast<long>(n) - 1;

    auto mirrored = [&](long j) {
        if (j < 0) j = -j;
        if (j > last) j = 2 * last - j;
        return values[static_cast<std::size_t>(std::clamp(j, 0L, last))];
    };

    std::vector<double> out(n);
    for (long i = 0; i <= last; ++i) {
        double acc = 0.0;
        for (long k = -half; k <= half; ++k) acc += coeffs[static_cast<std::size_t>(k + half)] * mirrored(i + k);
        out[static_cast<std::size_t>(i)] = acc;
    }
    return out;
}

Spectrum savgol_smooth(const Spectrum& s, std::size_t window, std::size_t order) {
    return Spectrum(savgol_smooth(s.values, window, order), s.axis);
}

// ---------------------------------------------------------------------------
// NDVI segmentation
// ---------------------------------------------------------------------------

std::vector<double> ndvi_image(const Hypercube& cube, double red_nm, double nir_nm) {
    const auto& axis = cube.axis();
    if (!axis.contains(red_nm)) throw ParameterError("red wavelength " + std::to_string(red_nm) + " nm outside the cube axis");
    if (!axis.contains(nir_nm)) throw ParameterError("NIR wavelength " + std::to_string(nir_nm) + " nm outside the cube axis");
    const std::size_t red = axis.nearest_index(red_nm);
    const std::size_t nir = axis.nearest_index(nir_nm);

    std::vector<double> ndvi(cube.pixel_count());
    for (std::size_t p = 0; p < ndvi.size(); ++p) {
        const auto px = cube.pixel(p);
        const double r = px[red];
        const double n = px[nir];
        ndvi[p] = (n - r) / (n + r + kRatioEpsilon);
    }
    return ndvi;
}

namespace {

struct OtsuSplit {
    double lo = 0.0;
    double bin_width = 0.0;
    std::size_t bins = 0;
    std::size_t split = 0;  // bins [0, split) vs [split, bins)

    std::size_t bin_of(double v) const noexcept {
        const double f = (v - lo) / bin_width;
        if (!(f > 0.0)) return 0;
        return std::min(bins - 1, static_cast<std::size_t>(f));
    }
    double threshold() const noexcept { return lo + bin_width * static_cast<double>(split); }
};

std::optional<OtsuSplit> otsu_split(std::span<const double> values, std::size_t bins) {
    if (bins < 2) throw ParameterError("Otsu needs at least two histogram bins");
    if (values.empty()) return std::nullopt;
    const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
    if (!(*mx > *mn)) return std::nullopt;

    OtsuSplit s{*mn, (*mx - *mn) / static_cast<double>(bins), bins, 1};
    std::vector<double> hist(bins, 0.0);
    for (double v : values) hist[s.bin_of(v)] += 1.0;

    const double total = static_cast<double>(values.size());
    double total_moment = 0.0;
    for (std::size_t i = 0; i < bins; ++i) total_moment += static_cast<double>(i) * hist[i];

    double w0 = 0.0, m0 = 0.0, best = -1.0;
    for (std::size_t k = 1; k < bins; ++k) {
        w0 += hist[k - 1];
        m0 += static_cast<double>(k - 1) * hist[k - 1];
        const double w1 = total - w0;
        if (w0 == 0.0 || w1 == 0.0) continue;
        const double mu0 = m0 / w0;
        const double mu1 = (total_moment - m0) / w1;
        const double between = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
        if (between > best) {
            best = between;
            s.split = k;
        }
    }
    return s;
}

}  // namespace

std::optional<double> otsu_threshold(std::span<const double> values, std::size_t bins) {
    const auto s = otsu_split(values, bins);
    if (!s) return std::nullopt;
    return s->threshold();
}

PixelMask ndvi_segment(const Hypercube& cube, const NdviOptions& options) {
    const auto ndvi = ndvi_image(cube, options.red_nm, options.nir_nm);
    const bool fruit_low = options.polarity == FruitPolarity::LowerNdvi;
    PixelMask mask(cube.height(), cube.width());

    const auto split = otsu_split(ndvi, options.bins);
    for (std::size_t p = 0; p < ndvi.size(); ++p) {
        bool low;
        if (split)
            low = split->bin_of(ndvi[p]) < split->split;
        else
            low = ndvi[p] < options.fallback_threshold;
        mask.set(p, fruit_low ? low : !low);
    }
    return mask;
}

Spectrum instance_mean_spectrum(const Hypercube& cube, const PixelMask& mask) {
    if (mask.height() != cube.height() || mask.width() != cube.width())
        throw ShapeError("mask dimensions do not match the cube");
    std::vector<std::size_t> fg;
    for (std::size_t p = 0; p < mask.size(); ++p)
        if (mask[p]) fg.push_back(p);
    if (fg.empty()) throw DomainError("mask has no foreground pixels");

    const std::size_t bands = cube.bands();
    std::vector<double> mean(bands);
    std::vector<double> column(fg.size());
    for (std::size_t b = 0; b < bands; ++b) {
        for (std::size_t i = 0; i < fg.size(); ++i) column[i] = cube.pixel(fg[i])[b];
        mean[b] = pairwise_sum(column) / static_cast<double>(fg.size());
    }
    return Spectrum(std::move(mean), cube.axis());
}

}  // namespace bandsel
