#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "bandsel/classify.hpp"
#include "bandsel/dataset.hpp"
#include "bandsel/features.hpp"

namespace bandsel {

/// n_subbands equal subbands of width b_w starting at span_lo_nm.
struct SearchGrid {
    double span_lo_nm = 450.0;
    double span_hi_nm = 850.0;
    double width_nm = 20.0;
    std::size_t n_subbands = 20;

    /// ParameterError unless n_subbands * width_nm == span_hi_nm - span_lo_nm.
    void validate() const;
    /// Grid with `n` subbands covering [lo, hi].
    static SearchGrid uniform(double lo_nm, double hi_nm, std::size_t n);
};

struct SearchRecord {
    std::vector<SubbandWindow> windows;
    std::vector<FeatureMask> masks;
    double test_accuracy = 0.0;
    double test_loss = 0.0;
    std::size_t feature_dim = 0;
    std::uint64_t seed = 0;
    ClassifierKind classifier = ClassifierKind::Fcn;
    bool failed = false;  // classifier diverged; accuracy forced to 0

    DualBandFeatureSet feature_set() const { return {windows, masks}; }
};

/// Canonical order: accuracy desc, feature_dim asc, loss asc, then windows and
/// mask bits lexicographically.
bool record_before(const SearchRecord& a, const SearchRecord& b);

enum class Stage { Fine, Coarse };
std::string_view stage_name(Stage s) noexcept;

struct SearchLedger {
    Stage stage = Stage::Fine;
    std::vector<SearchRecord> records;

    void sort();
    const SearchRecord& best() const;
};

struct SearchConfig {
    std::size_t q = 10;
    double accuracy_target = 0.95;
    double overlap_tolerance_nm = 20.0;
    ClassifierKind classifier = ClassifierKind::Fcn;
    std::size_t epochs = 100;
    std::size_t batch = 32;
    double learning_rate = 1e-3;
    std::size_t knn_k = 5;
    std::uint64_t seed = 0;
    std::size_t jobs = 1;             // 0 = all hardware threads
    std::size_t coarse_mask_pool = 50;  // per-window masks carried into the coarse stage

    void validate() const;
    /// Classifier options for one candidate trained with `seed`.
    TrainOptions train_options(std::uint64_t seed) const;
};

/// All n(n+1)/2 contiguous runs of subbands, by start then end.
std::vector<SubbandWindow> enumerate_windows(const SearchGrid& grid);
/// The 511 nonzero masks in ascending bit order.
std::vector<FeatureMask> enumerate_masks();

/// Seed used for a candidate; depends only on the base seed and the candidate itself.
std::uint64_t candidate_seed(std::uint64_t base, const std::vector<SubbandWindow>& windows,
                             const std::vector<FeatureMask>& masks);

/// Trains the configured classifier on the masked dual-band features of `train`
/// and scores `test`. A diverging classifier yields a failed record instead of
/// an exception.
SearchRecord evaluate_candidate(const LabeledSpectra& train, const LabeledSpectra& test,
                                const std::vector<SubbandWindow>& windows, const std::vector<FeatureMask>& masks,
                                const SearchConfig& cfg);

/// Per-window table of all nine features for every instance of a dataset.
struct WindowFeatureTable {
    SubbandWindow window;
    Matrix values;  // rows = instances, columns = Feature order
};
WindowFeatureTable window_feature_table(const LabeledSpectra& data, const SubbandWindow& window);

/// Same result as evaluate_candidate, using precomputed window tables.
SearchRecord evaluate_tables(const std::vector<const WindowFeatureTable*>& train,
                             const std::vector<const WindowFeatureTable*>& test, const Labels& train_labels,
                             const Labels& test_labels, std::size_t num_classes,
                             const std::vector<FeatureMask>& masks, const SearchConfig& cfg);

/// Optional progress callback: (done, total).
using Progress = std::function<void(std::size_t, std::size_t)>;

/// Every window of the grid that lies on the data axis, times all 511 masks.
SearchLedger run_fine_stage(const TrainTest& data, const SearchGrid& grid, const SearchConfig& cfg,
                            const Progress& progress = {});

/// Walks the ranked ledger and keeps a record when its window overlaps every
/// kept window by at most the tolerance and repeats none of them, until q are
/// kept. Failed records are skipped.
std::vector<SearchRecord> select_top_q(const SearchLedger& ledger, const SearchConfig& cfg);

struct CoarseResult {
    SearchLedger ledger;
    DualBandFeatureSet selected;
    SearchRecord best;
    bool below_target = false;
};

/// Pairs of candidate windows with masks drawn from each window's best fine-stage
/// masks; pairs are visited in candidate rank order and the sweep stops after
/// the first pair whose best record reaches the accuracy target.
CoarseResult run_coarse_stage(const TrainTest& data, const SearchLedger& fine,
                              const std::vector<SearchRecord>& candidates, const SearchConfig& cfg,
                              const Progress& progress = {});

struct SearchResult {
    SearchLedger fine;
    std::vector<SearchRecord> candidates;
    CoarseResult coarse;
};

SearchResult run_search(const TrainTest& data, const SearchGrid& grid, const SearchConfig& cfg,
                        const Progress& progress = {});

}  // namespace bandsel
