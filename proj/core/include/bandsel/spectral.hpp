#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace bandsel {

/// Strictly increasing list of band-center wavelengths in nanometers.
class WavelengthAxis {
public:
    static constexpr double kMinNm = 100.0;
    static constexpr double kMaxNm = 3000.0;

    WavelengthAxis() = default;
    /// Throws ParameterError unless strictly increasing and inside [100, 3000] nm.
    explicit WavelengthAxis(std::vector<double> wavelengths_nm);

    /// `count` samples evenly spaced over [lo_nm, hi_nm] inclusive.
    static WavelengthAxis linspace(double lo_nm, double hi_nm, std::size_t count);

    std::size_t size() const noexcept { return nm_.size(); }
    bool empty() const noexcept { return nm_.empty(); }
    double operator[](std::size_t i) const noexcept { return nm_[i]; }
    double front() const noexcept { return nm_.front(); }
    double back() const noexcept { return nm_.back(); }
    std::span<const double> nm() const noexcept { return nm_; }

    bool contains(double nm) const noexcept { return !nm_.empty() && nm >= nm_.front() && nm <= nm_.back(); }
    /// Index of the band closest to `nm`; ties resolve to the lower band.
    std::size_t nearest_index(double nm) const;

    /// Half-open index range [first, last) of bands with lo_nm <= wavelength <= hi_nm.
    struct IndexRange {
        std::size_t first = 0;
        std::size_t last = 0;
        std::size_t size() const noexcept { return last - first; }
    };
    IndexRange index_range(double lo_nm, double hi_nm) const noexcept;

    friend bool operator==(const WavelengthAxis&, const WavelengthAxis&) = default;

private:
    std::vector<double> nm_;
};

enum class CubeKind { RawIntensity, Reflectance };

/// H x W x B volume. Samples are stored band-interleaved-by-pixel so that a
/// pixel's spectrum is contiguous; the on-disk HSC format is band-sequential.
class Hypercube {
public:
    Hypercube() = default;
    Hypercube(std::size_t height, std::size_t width, WavelengthAxis axis, CubeKind kind, float fill = 0.0f);
    Hypercube(std::size_t height, std::size_t width, WavelengthAxis axis, CubeKind kind, std::vector<float> bip_data);

    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    std::size_t bands() const noexcept { return axis_.size(); }
    std::size_t pixel_count() const noexcept { return height_ * width_; }
    const WavelengthAxis& axis() const noexcept { return axis_; }
    CubeKind kind() const noexcept { return kind_; }

    float& at(std::size_t y, std::size_t x, std::size_t b) noexcept { return data_[(y * width_ + x) * bands() + b]; }
    float at(std::size_t y, std::size_t x, std::size_t b) const noexcept { return data_[(y * width_ + x) * bands() + b]; }

    std::span<float> pixel(std::size_t index) noexcept { return {data_.data() + index * bands(), bands()}; }
    std::span<const float> pixel(std::size_t index) const noexcept { return {data_.data() + index * bands(), bands()}; }

    std::span<float> data() noexcept { return data_; }
    std::span<const float> data() const noexcept { return data_; }

    bool same_geometry(const Hypercube& other) const noexcept {
        return height_ == other.height_ && width_ == other.width_ && axis_ == other.axis_;
    }

private:
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    WavelengthAxis axis_;
    CubeKind kind_ = CubeKind::Reflectance;
    std::vector<float> data_;
};

struct Spectrum {
    std::vector<double> values;
    WavelengthAxis axis;

    Spectrum() = default;
    /// Throws ShapeError when the value count differs from the axis length.
    Spectrum(std::vector<double> values, WavelengthAxis axis);

    std::size_t size() const noexcept { return values.size(); }
};

/// Foreground (fruit) pixels of an H x W image.
class PixelMask {
public:
    PixelMask() = default;
    PixelMask(std::size_t height, std::size_t width, bool fill = false)
        : height_(height), width_(width), bits_(height * width, fill ? 1 : 0) {}

    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    std::size_t size() const noexcept { return bits_.size(); }
    bool operator[](std::size_t i) const noexcept { return bits_[i] != 0; }
    void set(std::size_t i, bool v) noexcept { bits_[i] = v ? 1 : 0; }
    bool at(std::size_t y, std::size_t x) const noexcept { return bits_[y * width_ + x] != 0; }
    std::size_t count() const noexcept;

    friend bool operator==(const PixelMask&, const PixelMask&) = default;

private:
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::vector<std::uint8_t> bits_;
};

// ---------------------------------------------------------------------------
// Preprocessing
// ---------------------------------------------------------------------------

inline constexpr double kRatioEpsilon = 1e-6;
inline constexpr double kReflectanceClampLo = -0.1;
inline constexpr double kReflectanceClampHi = 2.0;

/// Flat-field correction R = (raw - dark) / (white - dark). Voxels whose
/// denominator magnitude is below kRatioEpsilon map to 0; the result is
/// clamped to [kReflectanceClampLo, kReflectanceClampHi].
Hypercube calibrate(const Hypercube& raw, const Hypercube& white, const Hypercube& dark);

/// Multiplicative scatter correction: each x becomes (x - b) / a where (a, b)
/// fit x ~ a * reference + b. The batch mean is the reference when none is given.
std::vector<Spectrum> msc_correct(std::span<const Spectrum> spectra,
                                  const std::optional<Spectrum>& reference = std::nullopt);

/// Central-point Savitzky-Golay smoothing weights for a window of the given
/// (odd) size and polynomial order.
std::vector<double> savgol_coefficients(std::size_t window, std::size_t order);

/// Savitzky-Golay smoothing with mirror padding at the edges (x[-k] = x[k]).
Spectrum savgol_smooth(const Spectrum& s, std::size_t window = 11, std::size_t order = 2);
std::vector<double> savgol_smooth(std::span<const double> values, std::size_t window, std::size_t order);

enum class FruitPolarity { LowerNdvi, HigherNdvi };

struct NdviOptions {
    double red_nm = 670.0;
    double nir_nm = 800.0;
    FruitPolarity polarity = FruitPolarity::LowerNdvi;
    std::size_t bins = 64;
    // Used only when the NDVI histogram has no spread to split.
    double fallback_threshold = 0.3;
};

/// Per-pixel (nir - red) / (nir + red + eps) from the nearest bands.
std::vector<double> ndvi_image(const Hypercube& cube, double red_nm, double nir_nm);

/// Otsu threshold over a `bins`-bin histogram spanning [min, max] of the
/// values. Returns nullopt when all values are equal.
std::optional<double> otsu_threshold(std::span<const double> values, std::size_t bins);

/// Background removal by Otsu-thresholded NDVI.
PixelMask ndvi_segment(const Hypercube& cube, const NdviOptions& options = {});

/// Per-band mean over foreground pixels (pairwise summation, pixel order).
Spectrum instance_mean_spectrum(const Hypercube& cube, const PixelMask& mask);

/// Pairwise (cascade) summation; the split points depend only on the length.
double pairwise_sum(std::span<const double> values) noexcept;

}  // namespace bandsel
