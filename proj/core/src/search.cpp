#include "bandsel/search.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>
#include <numeric>

#include "bandsel/error.hpp"
#include "bandsel/io.hpp"
#include "bandsel/parallel.hpp"
#include "bandsel/rng.hpp"

namespace bandsel {

void SearchGrid::validate() const {
    if (n_subbands == 0) throw ParameterError("search grid needs at least one subband");
    if (!(width_nm > 0.0)) throw ParameterError("subband width must be positive");
    if (!(span_lo_nm < span_hi_nm)) throw ParameterError("search span must have lo < hi");
    const double covered = static_cast<double>(n_subbands) * width_nm;
    const double span = span_hi_nm - span_lo_nm;
    if (std::abs(covered - span) > 1e-9 * std::max(1.0, span))
        throw ParameterError(std::to_string(n_subbands) + " subbands of " + format_double(width_nm) +
                             " nm do not tile the span " + format_double(span_lo_nm) + "-" +
                             format_double(span_hi_nm) + " nm");
}

SearchGrid SearchGrid::uniform(double lo_nm, double hi_nm, std::size_t n) {
    if (n == 0) throw ParameterError("search grid needs at least one subband");
    SearchGrid g{lo_nm, hi_nm, (hi_nm - lo_nm) / static_cast<double>(n), n};
    g.validate();
    return g;
}

std::string_view stage_name(Stage s) noexcept { return s == Stage::Fine ? "fine" : "coarse"; }

bool record_before(const SearchRecord& a, const SearchRecord& b) {
    if (a.test_accuracy != b.test_accuracy) return a.test_accuracy > b.test_accuracy;
    if (a.feature_dim != b.feature_dim) return a.feature_dim < b.feature_dim;
    if (a.test_loss != b.test_loss) return a.test_loss < b.test_loss;
    if (a.windows != b.windows) return a.windows < b.windows;
    return std::lexicographical_compare(a.masks.begin(), a.masks.end(), b.masks.begin(), b.masks.end(),
                                        [](FeatureMask x, FeatureMask y) { return x.bits() < y.bits(); });
}

void SearchLedger::sort() { std::stable_sort(records.begin(), records.end(), record_before); }

const SearchRecord& SearchLedger::best() const {
    if (records.empty()) throw ParameterError("empty search ledger");
    return *std::min_element(records.begin(), records.end(), record_before);
}

void SearchConfig::validate() const {
    if (q == 0) throw ParameterError("q must be at least 1");
    if (!(accuracy_target > 0.0 && accuracy_target <= 1.0)) throw ParameterError("accuracy target must lie in (0, 1]");
    if (overlap_tolerance_nm < 0.0) throw ParameterError("overlap tolerance must be nonnegative");
    if (epochs == 0 || batch == 0) throw ParameterError("epochs and batch size must be positive");
    if (!(learning_rate > 0.0)) throw ParameterError("learning rate must be positive");
    if (knn_k == 0) throw ParameterError("k-NN needs k >= 1");
    if (coarse_mask_pool == 0) throw ParameterError("coarse mask pool must be positive");
}

TrainOptions SearchConfig::train_options(std::uint64_t candidate) const {
    TrainOptions opts;
    opts.kind = classifier;
    opts.fcn.epochs = epochs;
    opts.fcn.batch = batch;
    opts.fcn.learning_rate = learning_rate;
    opts.fcn.seed = candidate;
    opts.knn.k = knn_k;
    return opts;
}

std::vector<SubbandWindow> enumerate_windows(const SearchGrid& grid) {
    grid.validate();
    std::vector<SubbandWindow> out;
    out.reserve(grid.n_subbands * (grid.n_subbands + 1) / 2);
    for (std::size_t s = 0; s < grid.n_subbands; ++s)
        for (std::size_t e = s; e < grid.n_subbands; ++e)
            out.push_back({grid.span_lo_nm + static_cast<double>(s) * grid.width_nm,
                           grid.span_lo_nm + static_cast<double>(e + 1) * grid.width_nm});
    return out;
}

std::vector<FeatureMask> enumerate_masks() {
    std::vector<FeatureMask> out;
    out.reserve(FeatureMask::kAll);
    for (std::uint16_t bits = 1; bits <= FeatureMask::kAll; ++bits) out.emplace_back(bits);
    return out;
}

std::uint64_t candidate_seed(std::uint64_t base, const std::vector<SubbandWindow>& windows,
                             const std::vector<FeatureMask>& masks) {
    std::string key;
    for (std::size_t i = 0; i < windows.size(); ++i) {
        key += windows[i].label();
        key += ':';
        key += i < masks.size() ? masks[i].to_string() : std::string("none");
        key += ';';
    }
    return derive_seed(base, key);
}

WindowFeatureTable window_feature_table(const LabeledSpectra& data, const SubbandWindow& window) {
    const auto r = window_indices(data.axis, window);
    const auto nm = data.axis.nm().subspan(r.first, r.size());
    WindowFeatureTable t{window, Matrix(static_cast<Eigen::Index>(data.size()), static_cast<Eigen::Index>(kFeatureCount))};
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto& s = data.spectra[i];
        if (s.size() != data.axis.size()) throw ShapeError("spectrum length differs from the axis");
        const auto fv = compute_features(std::span<const double>(s).subspan(r.first, r.size()), nm);
        const auto a = fv.to_array();
        for (std::size_t f = 0; f < kFeatureCount; ++f)
            t.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(f)) = a[f];
    }
    return t;
}

namespace {

Matrix select_columns(const std::vector<const WindowFeatureTable*>& tables, const std::vector<FeatureMask>& masks) {
    std::size_t dim = 0;
    for (auto m : masks) dim += m.popcount();
    const Eigen::Index rows = tables.front()->values.rows();
    Matrix x(rows, static_cast<Eigen::Index>(dim));
    Eigen::Index col = 0;
    for (std::size_t w = 0; w < tables.size(); ++w) {
        if (tables[w]->values.rows() != rows) throw ShapeError("window tables differ in row count");
        for (std::size_t f = 0; f < kFeatureCount; ++f) {
            if (!masks[w].test(static_cast<Feature>(f))) continue;
            x.col(col++) = tables[w]->values.col(static_cast<Eigen::Index>(f));
        }
    }
    return x;
}

}  // namespace

SearchRecord evaluate_tables(const std::vector<const WindowFeatureTable*>& train,
                             const std::vector<const WindowFeatureTable*>& test, const Labels& train_labels,
                             const Labels& test_labels, std::size_t num_classes,
                             const std::vector<FeatureMask>& masks, const SearchConfig& cfg) {
    if (train.empty() || train.size() != test.size() || train.size() != masks.size())
        throw ParameterError("windows and masks must be nonempty and aligned");
    if (train_labels.empty() || test_labels.empty()) throw ParameterError("train and test sets must be nonempty");
    SearchRecord rec;
    for (auto* t : train) rec.windows.push_back(t->window);
    rec.masks = masks;
    for (auto m : masks) {
        if (m.empty()) throw ParameterError("the zero feature mask cannot be evaluated");
        rec.feature_dim += m.popcount();
    }
    rec.seed = candidate_seed(cfg.seed, rec.windows, rec.masks);
    rec.classifier = cfg.classifier;

    const Matrix xtr = select_columns(train, masks);
    const Matrix xte = select_columns(test, masks);
    try {
        const Model model = train_model(xtr, train_labels, num_classes, cfg.train_options(rec.seed));
        const Prediction p = predict_with_proba(model, xte);
        std::size_t correct = 0;
        for (std::size_t i = 0; i < test_labels.size(); ++i) correct += p.labels[i] == test_labels[i];
        rec.test_accuracy = static_cast<double>(correct) / static_cast<double>(test_labels.size());
        rec.test_loss = cross_entropy(p.proba, test_labels);
        if (!std::isfinite(rec.test_loss)) throw NumericError("non-finite test loss");
    } catch (const NumericError&) {
        rec.failed = true;
        rec.test_accuracy = 0.0;
        rec.test_loss = std::numeric_limits<double>::infinity();
    }
    return rec;
}

SearchRecord evaluate_candidate(const LabeledSpectra& train, const LabeledSpectra& test,
                                const std::vector<SubbandWindow>& windows, const std::vector<FeatureMask>& masks,
                                const SearchConfig& cfg) {
    if (train.size() == 0 || test.size() == 0) throw ParameterError("train and test sets must be nonempty");
    if (!(train.axis == test.axis)) throw ShapeError("train and test spectra use different axes");
    if (windows.size() != masks.size() || windows.empty()) throw ParameterError("windows and masks must be aligned");
    std::vector<WindowFeatureTable> tr, te;
    for (const auto& w : windows) {
        tr.push_back(window_feature_table(train, w));
        te.push_back(window_feature_table(test, w));
    }
    std::vector<const WindowFeatureTable*> trp, tep;
    for (std::size_t i = 0; i < windows.size(); ++i) {
        trp.push_back(&tr[i]);
        tep.push_back(&te[i]);
    }
    return evaluate_tables(trp, tep, train.labels, test.labels, std::max(train.num_classes, test.num_classes), masks,
                           cfg);
}

namespace {

struct TablePair {
    WindowFeatureTable train;
    WindowFeatureTable test;
};

bool window_on_axis(const WavelengthAxis& axis, const SubbandWindow& w) {
    try {
        return window_indices(axis, w).size() >= 3;
    } catch (const ParameterError&) {
        return false;
    }
}

std::vector<TablePair> build_tables(const TrainTest& data, const std::vector<SubbandWindow>& windows, std::size_t jobs) {
    std::vector<TablePair> out(windows.size());
    parallel_for(windows.size(), jobs, [&](std::size_t i) {
        out[i] = {window_feature_table(data.train, windows[i]), window_feature_table(data.test, windows[i])};
    });
    return out;
}

void check_data(const TrainTest& data) {
    if (data.train.size() == 0 || data.test.size() == 0)
        throw ParameterError("search needs nonempty train and test splits");
    if (!(data.train.axis == data.test.axis)) throw ShapeError("train and test spectra use different axes");
}

class ProgressTicker {
public:
    ProgressTicker(const Progress& cb, std::size_t total) : cb_(cb), total_(total) {}
    void tick() {
        if (!cb_) return;
        std::lock_guard lock(mutex_);
        ++done_;
        if (done_ == total_ || done_ % 4096 == 0) cb_(done_, total_);
    }

private:
    const Progress& cb_;
    std::size_t total_;
    std::size_t done_ = 0;
    std::mutex mutex_;
};

}  // namespace

SearchLedger run_fine_stage(const TrainTest& data, const SearchGrid& grid, const SearchConfig& cfg,
                            const Progress& progress) {
    cfg.validate();
    check_data(data);
    std::vector<SubbandWindow> windows;
    for (const auto& w : enumerate_windows(grid))
        if (window_on_axis(data.train.axis, w)) windows.push_back(w);
    if (windows.empty()) throw ParameterError("no search window lies on the data axis");

    const auto masks = enumerate_masks();
    const auto tables = build_tables(data, windows, cfg.jobs);
    const std::size_t k = std::max(data.train.num_classes, data.test.num_classes);

    SearchLedger ledger{Stage::Fine, std::vector<SearchRecord>(windows.size() * masks.size())};
    ProgressTicker ticker(progress, ledger.records.size());
    parallel_for(ledger.records.size(), cfg.jobs, [&](std::size_t i) {
        const auto& t = tables[i / masks.size()];
        ledger.records[i] = evaluate_tables({&t.train}, {&t.test}, data.train.labels, data.test.labels, k,
                                            {masks[i % masks.size()]}, cfg);
        ticker.tick();
    });
    ledger.sort();
    return ledger;
}

std::vector<SearchRecord> select_top_q(const SearchLedger& ledger, const SearchConfig& cfg) {
    if (ledger.records.empty()) throw ParameterError("cannot select from an empty ledger");
    std::vector<const SearchRecord*> ranked;
    ranked.reserve(ledger.records.size());
    for (const auto& r : ledger.records) ranked.push_back(&r);
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const SearchRecord* a, const SearchRecord* b) { return record_before(*a, *b); });

    auto max_overlap = [](const SearchRecord& a, const SearchRecord& b) {
        double m = 0.0;
        for (const auto& wa : a.windows)
            for (const auto& wb : b.windows) m = std::max(m, overlap_nm(wa, wb));
        return m;
    };
    std::vector<SearchRecord> kept;
    for (const auto* r : ranked) {
        if (kept.size() >= cfg.q) break;
        if (r->failed) continue;
        // A repeated window never survives, even one no wider than the tolerance.
        const bool compatible = std::all_of(kept.begin(), kept.end(), [&](const SearchRecord& k) {
            return k.windows != r->windows && max_overlap(k, *r) <= cfg.overlap_tolerance_nm;
        });
        if (compatible) kept.push_back(*r);
    }
    return kept;
}

CoarseResult run_coarse_stage(const TrainTest& data, const SearchLedger& fine,
                              const std::vector<SearchRecord>& candidates, const SearchConfig& cfg,
                              const Progress& progress) {
    cfg.validate();
    check_data(data);
    if (candidates.empty()) throw ParameterError("coarse stage needs at least one candidate");
    for (const auto& c : candidates)
        if (c.windows.size() != 1 || c.masks.size() != 1)
            throw ParameterError("coarse-stage candidates must be single-window records");

    CoarseResult result;
    result.ledger.stage = Stage::Coarse;
    if (candidates.size() == 1) {
        result.best = candidates.front();
        result.ledger.records.push_back(result.best);
        result.selected = result.best.feature_set();
        result.below_target = result.best.test_accuracy < cfg.accuracy_target;
        return result;
    }

    // Each window's mask pool: its best fine-stage masks in ledger rank order.
    std::vector<SearchRecord> ranked = fine.records;
    std::stable_sort(ranked.begin(), ranked.end(), record_before);
    std::vector<std::vector<FeatureMask>> pools(candidates.size());
    for (std::size_t c = 0; c < candidates.size(); ++c) {
        for (const auto& r : ranked) {
            if (pools[c].size() >= cfg.coarse_mask_pool) break;
            if (r.windows.size() == 1 && r.windows[0] == candidates[c].windows[0] && !r.failed)
                pools[c].push_back(r.masks[0]);
        }
        if (pools[c].empty()) pools[c].push_back(candidates[c].masks[0]);
    }

    std::vector<SubbandWindow> windows;
    for (const auto& c : candidates) windows.push_back(c.windows[0]);
    const auto tables = build_tables(data, windows, cfg.jobs);
    const std::size_t k = std::max(data.train.num_classes, data.test.num_classes);

    struct Combo {
        std::size_t a, b;  // pool ranks
        std::size_t dim;
    };
    std::size_t total = 0;
    for (std::size_t i = 0; i < candidates.size(); ++i)
        for (std::size_t j = i + 1; j < candidates.size(); ++j) total += pools[i].size() * pools[j].size();
    ProgressTicker ticker(progress, total);

    bool reached = false;
    for (std::size_t i = 0; i < candidates.size() && !reached; ++i) {
        for (std::size_t j = i + 1; j < candidates.size() && !reached; ++j) {
            // Lower-wavelength window first so the feature order is canonical.
            const bool swap = windows[j] < windows[i];
            const std::size_t lo = swap ? j : i, hi = swap ? i : j;
            std::vector<Combo> combos;
            for (std::size_t a = 0; a < pools[lo].size(); ++a)
                for (std::size_t b = 0; b < pools[hi].size(); ++b)
                    combos.push_back({a, b, pools[lo][a].popcount() + pools[hi][b].popcount()});

            std::vector<SearchRecord> recs(combos.size());
            parallel_for(combos.size(), cfg.jobs, [&](std::size_t n) {
                const auto& cb = combos[n];
                recs[n] = evaluate_tables({&tables[lo].train, &tables[hi].train}, {&tables[lo].test, &tables[hi].test},
                                          data.train.labels, data.test.labels, k,
                                          {pools[lo][cb.a], pools[hi][cb.b]}, cfg);
                ticker.tick();
            });
            reached = std::any_of(recs.begin(), recs.end(), [&](const SearchRecord& r) {
                return !r.failed && r.test_accuracy >= cfg.accuracy_target;
            });
            for (auto& r : recs) result.ledger.records.push_back(std::move(r));
        }
    }
    result.ledger.sort();
    result.best = result.ledger.best();
    result.selected = result.best.feature_set();
    result.below_target = result.best.test_accuracy < cfg.accuracy_target;
    return result;
}

SearchResult run_search(const TrainTest& data, const SearchGrid& grid, const SearchConfig& cfg,
                        const Progress& progress) {
    SearchResult out;
    out.fine = run_fine_stage(data, grid, cfg, progress);
    out.candidates = select_top_q(out.fine, cfg);
    if (out.candidates.empty()) throw NumericError("every fine-stage candidate failed to train");
    out.coarse = run_coarse_stage(data, out.fine, out.candidates, cfg, progress);
    return out;
}

}  // namespace bandsel
