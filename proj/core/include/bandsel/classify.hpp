#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "bandsel/features.hpp"
#include "bandsel/spectral.hpp"

namespace bandsel {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::RowVectorXd;
using Labels = std::vector<int>;

/// Per-column z-scoring fitted on a training matrix. Zero-variance columns get
/// a unit scale so they map to 0 instead of NaN.
struct Standardizer {
    RowVector mean;
    RowVector scale;

    static Standardizer fit(const Matrix& x);
    Matrix transform(const Matrix& x) const;
    std::size_t dim() const noexcept { return static_cast<std::size_t>(mean.size()); }
};

enum class ClassifierKind { Fcn, Svm, Knn };

std::string_view classifier_name(ClassifierKind k) noexcept;
ClassifierKind parse_classifier(std::string_view name);

// ---------------------------------------------------------------------------
// Fully connected network: input -> hidden (ReLU) ... -> softmax
// ---------------------------------------------------------------------------

struct FcnConfig {
    std::vector<std::size_t> hidden = {64, 32};
    std::size_t epochs = 100;
    std::size_t batch = 32;
    double learning_rate = 1e-3;
    std::uint64_t seed = 0;
};

/// Weights are stored input-major: layer l maps rows of width weights[l].rows()
/// to width weights[l].cols().
struct FcnNetwork {
    std::vector<Matrix> weights;
    std::vector<RowVector> biases;

    static FcnNetwork init(const std::vector<std::size_t>& layer_dims, std::uint64_t seed);
    std::vector<std::size_t> layer_dims() const;
    std::size_t num_classes() const noexcept { return static_cast<std::size_t>(weights.back().cols()); }

    /// Softmax probabilities, one row per input row.
    Matrix forward(const Matrix& x) const;
    /// Mean categorical cross-entropy over the batch; fills `grad` (same shapes).
    double loss_and_gradient(const Matrix& x, std::span<const int> y, FcnNetwork& grad) const;
};

struct FcnModel {
    Standardizer scaler;
    FcnNetwork network;
    std::size_t num_classes = 0;
};

/// Adam-trained softmax network. NumericError when the loss turns non-finite.
FcnModel train_fcn(const Matrix& x, const Labels& y, std::size_t num_classes, const FcnConfig& cfg = {});

// ---------------------------------------------------------------------------
// Kernel SVM (polynomial), one-vs-one
// ---------------------------------------------------------------------------

struct SvmConfig {
    double c = 1.0;
    int degree = 3;
    std::optional<double> gamma;  // default 1 / input dimension
    double coef0 = 1.0;
    double tolerance = 1e-3;
    std::size_t max_iterations = 10'000'000;
};

struct SvmPairModel {
    int positive = 0;  // decision > 0 votes for this class
    int negative = 0;
    std::vector<std::size_t> sv_index;  // rows of SvmModel::support_vectors
    std::vector<double> coef;           // y_i * alpha_i
    double rho = 0.0;
};

struct SvmModel {
    Standardizer scaler;
    double gamma = 1.0;
    double coef0 = 1.0;
    int degree = 3;
    double c = 1.0;
    Matrix support_vectors;  // standardized rows shared by all pairs
    std::vector<SvmPairModel> pairs;
    std::size_t num_classes = 0;
};

SvmModel train_svm(const Matrix& x, const Labels& y, std::size_t num_classes, const SvmConfig& cfg = {});

/// Per-row, per-pair decision values (column order = SvmModel::pairs).
Matrix svm_decision_values(const SvmModel& model, const Matrix& x);

// ---------------------------------------------------------------------------
// k-nearest neighbours on standardized features (fast search option)
// ---------------------------------------------------------------------------

struct KnnConfig {
    std::size_t k = 5;
};

struct KnnModel {
    Standardizer scaler;
    Matrix train;  // standardized
    Labels labels;
    std::size_t k = 5;
    std::size_t num_classes = 0;
};

KnnModel train_knn(const Matrix& x, const Labels& y, std::size_t num_classes, const KnnConfig& cfg = {});

// ---------------------------------------------------------------------------
// Uniform model interface
// ---------------------------------------------------------------------------

using Model = std::variant<FcnModel, SvmModel, KnnModel>;

struct TrainOptions {
    ClassifierKind kind = ClassifierKind::Fcn;
    FcnConfig fcn;
    SvmConfig svm;
    KnnConfig knn;
};

/// Throws ShapeError when rows differ from labels, ParameterError unless at
/// least two classes are present or a label falls outside [0, num_classes).
Model train_model(const Matrix& x, const Labels& y, std::size_t num_classes, const TrainOptions& options);

ClassifierKind model_kind(const Model& m) noexcept;
std::size_t input_dim(const Model& m) noexcept;
std::size_t num_classes(const Model& m) noexcept;

/// ShapeError on a column-count mismatch.
Labels predict(const Model& m, const Matrix& x);
/// Class probabilities. FCN: softmax. SVM: smoothed pairwise vote shares.
/// k-NN: smoothed neighbour vote shares. Rows sum to 1.
Matrix predict_proba(const Model& m, const Matrix& x);

struct Prediction {
    Labels labels;
    Matrix proba;
};

/// Labels and probabilities from one pass; same values as predict() and predict_proba().
Prediction predict_with_proba(const Model& m, const Matrix& x);

/// Mean cross-entropy of `proba` against `y` (probabilities floored at 1e-12).
double cross_entropy(const Matrix& proba, const Labels& y);

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

struct EvalReport {
    std::vector<std::vector<std::size_t>> confusion;  // [truth][predicted]
    double accuracy = 0.0;
    double kappa = 0.0;
    std::size_t total = 0;
};

/// Confusion matrix, accuracy and Cohen's kappa.
EvalReport evaluate(const Labels& y_true, const Labels& y_pred, std::size_t num_classes);
/// Kappa = 1 - (1 - p_o) / (1 - p_e); when p_e == 1 it is 1 for perfect agreement, else 0.
double cohen_kappa(const std::vector<std::vector<std::size_t>>& confusion);

void write_confusion_csv(const std::filesystem::path& path, const EvalReport& report,
                         const std::vector<std::string>& class_names);

// ---------------------------------------------------------------------------
// Pixel-wise prediction
// ---------------------------------------------------------------------------

/// H x W class indices: 0 = background, 1..k = class index + 1.
struct ClassMap {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> labels;
};

/// Turns pixel spectra into model inputs: the selected dual-band features, or
/// the full spectrum when no feature set is given.
class PixelPipeline {
public:
    PixelPipeline(const WavelengthAxis& axis, std::optional<DualBandFeatureSet> set);

    std::size_t feature_dim() const noexcept;
    bool full_spectrum() const noexcept { return !assembler_.has_value(); }
    void extract(std::span<const float> pixel, std::span<double> out) const;

private:
    std::size_t bands_ = 0;
    std::optional<FeatureAssembler> assembler_;
};

ClassMap classify_pixels(const Hypercube& cube, const PixelMask& mask, const DualBandFeatureSet& set, const Model& model);
ClassMap classify_pixels(const Hypercube& cube, const PixelMask& mask, const PixelPipeline& pipeline, const Model& model);

struct BenchResult {
    double fps = 0.0;             // 1 / median per-image seconds
    double median_image_ms = 0.0;
    double features_ms = 0.0;     // median per image
    double inference_ms = 0.0;    // median per image
    std::size_t pixels_per_image = 0;
};

/// Median wall-clock end-to-end prediction over `repetitions` passes of every
/// cube (all pixels). ParameterError unless at least one cube and three repetitions.
BenchResult bench_predict(const Model& model, const std::optional<DualBandFeatureSet>& set,
                          std::span<const Hypercube> cubes, std::size_t repetitions);

}  // namespace bandsel
