#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "bandsel/classes.hpp"
#include "bandsel/classify.hpp"
#include "bandsel/features.hpp"
#include "bandsel/spectral.hpp"

namespace bandsel {

enum class Split { Train, Test };

struct ManifestEntry {
    std::string instance_id;
    std::string path;  // as written in the manifest, relative to its directory
    std::string class_label;
    Split split = Split::Train;
};

/// Line-oriented manifest:
///   # fruit=<strawberry|tomato> axis=<axis file>
///   instance_id,path,class,split
///   <rows>
/// `path` is an HSC cube (mean spectrum of the NDVI foreground), or
/// `<file>.csv#<row>` selecting a 0-based data row of a spectra CSV.
struct DatasetManifest {
    Fruit fruit = Fruit::Strawberry;
    std::filesystem::path axis_file;
    WavelengthAxis axis;
    std::vector<ManifestEntry> entries;
    std::filesystem::path base_dir;

    std::map<std::string, std::size_t> class_counts() const;
};

/// IoError on missing or malformed files, unknown classes, duplicate ids or paths.
DatasetManifest load_manifest(const std::filesystem::path& path);
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

/// Instance spectra on one axis with 0-based class labels.
struct LabeledSpectra {
    WavelengthAxis axis;
    std::vector<std::vector<double>> spectra;
    Labels labels;
    std::vector<std::string> ids;
    std::size_t num_classes = 0;

    std::size_t size() const noexcept { return spectra.size(); }
    LabeledSpectra subset(const std::vector<std::size_t>& indices) const;
    /// Rows = instances, columns = bands.
    Matrix as_matrix() const;
};

struct TrainTest {
    LabeledSpectra train;
    LabeledSpectra test;
};

struct Preprocessing {
    bool msc = false;               // batch MSC over the whole dataset, mean reference
    std::size_t savgol_window = 0;  // 0 disables smoothing
    std::size_t savgol_order = 2;
};

/// Applies MSC (over train and test together) then Savitzky-Golay per spectrum.
void preprocess(TrainTest& data, const Preprocessing& options);

/// Reads every manifest entry and groups them by split.
TrainTest load_dataset(const DatasetManifest& manifest, const NdviOptions& ndvi = {});

/// Indices into `labels`, per-class proportional; the total test count is
/// round(N * test_fraction) apportioned by largest remainder. Classes with a
/// single instance stay in train and add a message to `warnings`.
struct SplitIndices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};
SplitIndices stratified_split(const Labels& labels, double test_fraction, std::uint64_t seed,
                              std::vector<std::string>* warnings = nullptr);

// ---------------------------------------------------------------------------
// Synthetic data with planted dual-band structure
// ---------------------------------------------------------------------------

/// Class c spectrum = gain * (baseline + peak(c) - trough(c)) + noise, where the
/// peak is a Gaussian at pigment.lo + c * peak_shift and the trough a Gaussian
/// at the chlorophyll-band center with depth trough_depth * (1 - c * trough_lift).
/// The baseline is 0.2 + 0.02 t - 0.01 t^2 with t in [0, 1] across the axis.
struct SynthConfig {
    std::size_t n_per_class = 60;
    std::size_t classes = 7;
    WavelengthAxis axis = WavelengthAxis::linspace(450.0, 850.0, 401);
    SubbandWindow pigment_band{510.0, 670.0};
    SubbandWindow chlorophyll_band{670.0, 790.0};
    double peak_shift_per_class_nm = 20.0;
    double trough_lift_per_class = 0.1;
    double noise_sigma = 0.02;
    double peak_amplitude = 0.35;
    double peak_width_nm = 10.0;
    double trough_depth = 0.12;
    double trough_width_nm = 25.0;
    double scatter_gain_sigma = 0.05;  // per-instance multiplicative scatter
    std::uint64_t seed = 0;

    /// ParameterError on overlapping bands, negative noise, or a peak shifted
    /// outside the pigment band.
    void validate() const;
};

struct PlantedTruth {
    SubbandWindow pigment_band;
    SubbandWindow chlorophyll_band;
    std::vector<double> peak_center_nm;  // per class
    double trough_center_nm = 0.0;
    std::vector<double> trough_depth;    // per class
};

/// Noise-free class template, before gain and noise.
std::vector<double> synthetic_class_spectrum(const SynthConfig& cfg, std::size_t cls);

struct SynthDataset {
    LabeledSpectra data;  // n_per_class * classes rows, class-major
    PlantedTruth truth;
};

SynthDataset generate_synthetic(const SynthConfig& cfg);

/// Reflectance cube: a fruit disc split into a left half of `left_class` and a
/// right half of `right_class`, on vegetation-like background with high NDVI.
struct SynthCube {
    Hypercube cube;
    std::vector<std::uint8_t> truth;  // 0 background, class + 1
};
SynthCube generate_synthetic_cube(const SynthConfig& cfg, std::size_t height, std::size_t width,
                                  std::size_t left_class, std::size_t right_class, std::uint64_t seed);

/// Vegetation-like background reflectance (red edge near 710 nm).
std::vector<double> background_spectrum(const WavelengthAxis& axis);

/// Writes spectra.csv, axis.txt, manifest.txt and planted.json into `dir`,
/// splitting with stratified_split(test_fraction, split_seed).
void write_synthetic_dataset(const SynthDataset& ds, Fruit fruit, double test_fraction,
                             const std::filesystem::path& dir, std::uint64_t split_seed = 0);

}  // namespace bandsel
