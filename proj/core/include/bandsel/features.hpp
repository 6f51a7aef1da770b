#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bandsel/spectral.hpp"

namespace bandsel {

/// Statistical measures of a subband, in canonical order.
enum class Feature : std::uint8_t { Max, Min, Argmax, Argmin, Mean, Median, Area, Skewness, Kurtosis };

inline constexpr std::size_t kFeatureCount = 9;

std::string_view feature_name(Feature f) noexcept;
std::optional<Feature> parse_feature(std::string_view name) noexcept;

/// 9-bit selector; bit i selects Feature(i).
class FeatureMask {
public:
    static constexpr std::uint16_t kAll = (1u << kFeatureCount) - 1;

    constexpr FeatureMask() = default;
    /// Throws ParameterError for bit patterns wider than nine bits.
    explicit FeatureMask(std::uint16_t bits);
    FeatureMask(std::initializer_list<Feature> features);

    static FeatureMask all() { return FeatureMask(kAll); }

    std::uint16_t bits() const noexcept { return bits_; }
    bool empty() const noexcept { return bits_ == 0; }
    bool test(Feature f) const noexcept { return (bits_ >> static_cast<unsigned>(f)) & 1u; }
    std::size_t popcount() const noexcept;
    std::vector<Feature> features() const;
    FeatureMask complement() const noexcept { return FeatureMask(static_cast<std::uint16_t>(~bits_ & kAll)); }

    /// "max+argmax"; the empty mask prints as "none".
    std::string to_string() const;
    /// Accepts '+' or ',' separated feature names.
    static FeatureMask parse(std::string_view text);

    friend bool operator==(FeatureMask, FeatureMask) = default;

private:
    std::uint16_t bits_ = 0;
};

/// Wavelength interval [lo_nm, hi_nm], both ends inclusive.
struct SubbandWindow {
    double lo_nm = 0.0;
    double hi_nm = 0.0;

    double width_nm() const noexcept { return hi_nm - lo_nm; }
    /// "510-670"
    std::string label() const;
    static SubbandWindow parse(std::string_view text);

    friend bool operator==(const SubbandWindow&, const SubbandWindow&) = default;
    friend auto operator<=>(const SubbandWindow&, const SubbandWindow&) = default;
};

/// Length of the intersection of two windows in nm (0 when disjoint).
double overlap_nm(const SubbandWindow& a, const SubbandWindow& b) noexcept;

struct FeatureVector {
    double max = 0.0;
    double min = 0.0;
    double argmax_um = 0.0;
    double argmin_um = 0.0;
    double mean = 0.0;
    double median = 0.0;
    double area = 0.0;      // reflectance * um
    double skewness = 0.0;  // Fisher-Pearson, population moments
    double kurtosis = 0.0;  // non-excess

    double operator[](Feature f) const noexcept;
    std::array<double, kFeatureCount> to_array() const noexcept;
};

/// Contiguous sub-spectrum with lo_nm <= wavelength <= hi_nm.
Spectrum slice_window(const Spectrum& s, const SubbandWindow& w);

/// Band index range of a window; ParameterError when the window leaves the
/// axis or selects no band.
WavelengthAxis::IndexRange window_indices(const WavelengthAxis& axis, const SubbandWindow& w);

FeatureVector compute_features(const Spectrum& s);
FeatureVector compute_features(std::span<const double> values, std::span<const double> wavelengths_nm);

/// Writes only the features selected by `mask`, in canonical order, into
/// out[0 .. popcount). Statistics not needed by the mask are not computed.
/// `scratch` must hold values.size() doubles when the median is requested.
void compute_masked_features(std::span<const double> values, std::span<const double> wavelengths_nm,
                             FeatureMask mask, std::span<double> out, std::span<double> scratch);

/// Set-bit components of `fv` in canonical order. ParameterError on the zero mask.
std::vector<double> apply_mask(const FeatureVector& fv, FeatureMask mask);

/// Subband windows with one feature mask each; features are concatenated in window order.
struct DualBandFeatureSet {
    std::vector<SubbandWindow> windows;
    std::vector<FeatureMask> masks;

    std::size_t feature_dim() const noexcept;
    /// Throws ParameterError when lists are misaligned, a mask is empty, or two
    /// windows overlap by more than `overlap_tolerance_nm`.
    void validate(double overlap_tolerance_nm) const;
    /// e.g. "argmax@510-670"
    std::vector<std::string> column_names() const;
    std::string describe() const;

    friend bool operator==(const DualBandFeatureSet&, const DualBandFeatureSet&) = default;
};

std::vector<double> assemble_dual(const Spectrum& s, const DualBandFeatureSet& set);

/// Precomputed band ranges for one axis so per-pixel assembly avoids lookups.
class FeatureAssembler {
public:
    FeatureAssembler(const WavelengthAxis& axis, DualBandFeatureSet set);

    std::size_t feature_dim() const noexcept { return dim_; }
    std::size_t input_bands() const noexcept { return axis_.size(); }
    const DualBandFeatureSet& set() const noexcept { return set_; }

    /// `spectrum` spans the full axis; `out` receives feature_dim() values.
    void assemble(std::span<const double> spectrum, std::span<double> out) const;
    void assemble(std::span<const float> spectrum, std::span<double> out) const;

private:
    WavelengthAxis axis_;
    DualBandFeatureSet set_;
    std::vector<WavelengthAxis::IndexRange> ranges_;
    std::size_t dim_ = 0;
    std::size_t max_window_ = 0;
};

/// Feature matrix export: header "label,<column names>", one row per instance.
void write_feature_csv(const std::filesystem::path& path, const DualBandFeatureSet& set,
                       const std::vector<std::string>& labels, const std::vector<std::vector<double>>& rows);

}  // namespace bandsel
