#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "bandsel/classify.hpp"
#include "bandsel/dataset.hpp"
#include "bandsel/features.hpp"
#include "bandsel/search.hpp"

namespace bandsel {

/// A trained model plus everything needed to feed it: the wavelength axis it
/// was trained on, the dual-band feature set (none = full spectrum), the
/// preprocessing applied to training spectra and the class vocabulary.
struct ModelBundle {
    Model model;
    WavelengthAxis axis;
    std::optional<DualBandFeatureSet> features;
    Preprocessing preprocessing;
    std::string fruit;
    std::vector<std::string> class_names;
};

/// Writes `path` (JSON metadata) and `path` with extension ".bin" (little-endian
/// float64 tensors referenced by offset from the JSON).
void save_model(const ModelBundle& bundle, const std::filesystem::path& path);
ModelBundle load_model(const std::filesystem::path& path);

struct FeatureSetDocument {
    DualBandFeatureSet set;
    std::optional<double> test_accuracy;
    std::optional<double> test_loss;
    std::string classifier;
    bool below_target = false;
};

void save_feature_set(const FeatureSetDocument& doc, const std::filesystem::path& path);
FeatureSetDocument load_feature_set(const std::filesystem::path& path);

/// Semicolon-separated: windows;masks;accuracy;loss;dim;seed;classifier;failed.
/// Multi-window records join their windows and masks with '|'.
void write_ledger_csv(const SearchLedger& ledger, const std::filesystem::path& path);
SearchLedger read_ledger_csv(const std::filesystem::path& path, Stage stage);
/// One JSON object per record.
void write_ledger_jsonl(const SearchLedger& ledger, const std::filesystem::path& path);

}  // namespace bandsel
