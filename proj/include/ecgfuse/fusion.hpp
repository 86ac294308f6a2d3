#ifndef ECGFUSE_FUSION_HPP
#define ECGFUSE_FUSION_HPP

#include "ecgfuse/core.hpp"
#include "ecgfuse/parallel.hpp"
#include "ecgfuse/wavelet.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace ecgfuse {

struct FusionConfig {
    std::optional<double> delta;  // intra-class fusion proportion; unset = default_delta(n)
    int p = 4;                    // train feature libraries per class
    double split = 0.8;           // fraction of originals used for training
    std::uint64_t seed = 0;
};

/// 1 while all pairs fit the budget of 50000 fused samples per class,
/// otherwise the proportion giving s = 316 (316 * 315 / 2 = 49770).
inline double default_delta(std::size_t n) {
    constexpr std::size_t max_s = 316;
    if (n <= max_s) return 1.0;
    return static_cast<double>(max_s) / static_cast<double>(n);
}

inline std::size_t fused_count(std::size_t s) { return s * (s - 1) / 2; }

// ---------------------------------------------------------------------------
// Threshold selection
// ---------------------------------------------------------------------------

struct ThresholdSelection {
    std::size_t n = 0;
    /// class index -> indices into the input record list, ascending
    std::map<int, std::vector<std::size_t>> selected;
};

/// n is the smallest class size. Larger classes contribute a uniformly random
/// n-subset (substream "select/<class>"), kept in input order.
inline ThresholdSelection select_threshold(std::span<const EcgRecord> records, const RngStream& rng) {
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < records.size(); ++i) by_class[records[i].label.index].push_back(i);
    if (by_class.size() < 2) throw DataError("select_threshold: need at least two classes");

    ThresholdSelection sel;
    sel.n = std::numeric_limits<std::size_t>::max();
    for (auto& [k, idx] : by_class) sel.n = std::min(sel.n, idx.size());
    if (sel.n < 2)
        throw DataError("select_threshold: smallest class has " + std::to_string(sel.n) +
                        " record(s); fusion needs at least 2");

    const RngStream select = rng.child("select");
    for (auto& [k, idx] : by_class) {
        if (idx.size() == sel.n) {
            sel.selected[k] = idx;
            continue;
        }
        auto g = select.child(static_cast<std::size_t>(k)).engine();
        auto pick = sample_without_replacement(idx.size(), sel.n, g);
        std::sort(pick.begin(), pick.end());
        std::vector<std::size_t> chosen;
        chosen.reserve(sel.n);
        for (auto p : pick) chosen.push_back(idx[p]);
        sel.selected[k] = std::move(chosen);
    }
    return sel;
}

// ---------------------------------------------------------------------------
// Pair enumeration and intra-class fusion
// ---------------------------------------------------------------------------

using IndexPair = std::pair<std::size_t, std::size_t>;

/// Picks s = floor(n * delta) of the n samples (all when delta = 1) and
/// returns every unordered pair {i, j}, i < j, in lexicographic order.
inline std::vector<IndexPair> enumerate_pairs(std::size_t n, double delta, const RngStream& rng) {
    if (!(delta > 0.0 && delta <= 1.0))
        throw ArgumentError("enumerate_pairs: delta " + std::to_string(delta) + " not in (0, 1]");
    const auto s = static_cast<std::size_t>(floor_product(static_cast<double>(n), delta));
    if (s < 2)
        throw ArgumentError("enumerate_pairs: floor(n * delta) = " + std::to_string(s) + " < 2");

    std::vector<std::size_t> chosen;
    if (s == n) {
        chosen.resize(n);
        std::iota(chosen.begin(), chosen.end(), std::size_t{0});
    } else {
        auto g = rng.engine();
        chosen = sample_without_replacement(n, s, g);
        std::sort(chosen.begin(), chosen.end());
    }
    std::vector<IndexPair> pairs;
    pairs.reserve(fused_count(s));
    for (std::size_t a = 0; a < s; ++a)
        for (std::size_t b = a + 1; b < s; ++b) pairs.emplace_back(chosen[a], chosen[b]);
    return pairs;
}

namespace detail {

inline std::vector<SubbandSet> analyze_all(std::span<const Matrix> xs, const FilterBank& fb) {
    std::vector<SubbandSet> out(xs.size());
    parallel_for(xs.size(), [&](std::size_t i) { out[i] = analyze_2d(xs[i], fb); });
    return out;
}

// Equal-weight fusion of two signals from their cached decompositions; the
// arithmetic matches fuse_signals({x_i, x_j}, {1/2, 1/2}).
inline Matrix fuse_pair(const SubbandSet& a, const SubbandSet& b, const FilterBank& fb) {
    SubbandSet acc = a;
    acc *= 0.5;
    SubbandSet t = b;
    t *= 0.5;
    acc += t;
    return synthesize_2d(acc, fb);
}

inline void require_same_shape(std::span<const Matrix> xs, const char* who) {
    for (const auto& x : xs)
        if (x.rows() != xs[0].rows() || x.cols() != xs[0].cols())
            throw ArgumentError(std::string(who) + ": records differ in shape");
}

}  // namespace detail

/// output[t] = fuse_signals({records[i], records[j]}, {1/2, 1/2}) for pairs[t].
inline std::vector<Matrix> intra_class_fuse(std::span<const Matrix> records,
                                            std::span<const IndexPair> pairs, const FilterBank& fb) {
    detail::require_same_shape(records, "intra_class_fuse");
    for (auto [i, j] : pairs)
        if (i >= records.size() || j >= records.size())
            throw ArgumentError("intra_class_fuse: pair index out of range");
    const auto bands = detail::analyze_all(records, fb);
    std::vector<Matrix> out(pairs.size());
    parallel_for(pairs.size(), [&](std::size_t t) {
        out[t] = detail::fuse_pair(bands[pairs[t].first], bands[pairs[t].second], fb);
    });
    return out;
}

// ---------------------------------------------------------------------------
// Feature libraries
// ---------------------------------------------------------------------------

enum class LibraryRole { Train, Test };

struct FeatureLibrary {
    ClassId label;
    LibraryRole role = LibraryRole::Train;
    std::vector<Matrix> prototypes;
    std::size_t group_size = 0;  // m: fused inputs merged per prototype
    std::size_t leftover = 0;    // fused inputs not assigned to any group
};

/// p disjoint groups of m = floor(count / p) items drawn without replacement.
/// Groups are consecutive runs of one shuffled permutation.
inline std::vector<std::vector<std::size_t>> draw_groups(std::size_t count, int p, const RngStream& rng) {
    if (p < 1) throw ArgumentError("draw_groups: p must be >= 1");
    const auto groups = static_cast<std::size_t>(p);
    if (groups > count)
        throw ArgumentError("draw_groups: p = " + std::to_string(p) + " exceeds " +
                            std::to_string(count) + " fused samples");
    const std::size_t m = count / groups;
    std::vector<std::size_t> perm(count);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    auto g = rng.engine();
    shuffle(perm, g);
    std::vector<std::vector<std::size_t>> out(groups);
    for (std::size_t q = 0; q < groups; ++q)
        out[q].assign(perm.begin() + static_cast<std::ptrdiff_t>(q * m),
                      perm.begin() + static_cast<std::ptrdiff_t>((q + 1) * m));
    return out;
}

namespace detail {

// Fuses group members with weight 1/m each, in group order. With m == 1 the
// single member passes through the transform pair unchanged in value.
template <typename Get>
Matrix fuse_group(const std::vector<std::size_t>& group, Get&& member_bands, const FilterBank& fb) {
    const double w = 1.0 / static_cast<double>(group.size());
    SubbandSet acc = member_bands(group[0]);
    acc *= w;
    for (std::size_t t = 1; t < group.size(); ++t) {
        SubbandSet s = member_bands(group[t]);
        s *= w;
        acc += s;
    }
    return synthesize_2d(acc, fb);
}

}  // namespace detail

/// Groups the fused samples (substream "group") and fuses each group into one
/// prototype. Leftover samples beyond p * m are dropped and counted.
inline FeatureLibrary build_train_libraries(std::span<const Matrix> fused, int p, const FilterBank& fb,
                                            const RngStream& rng, ClassId label = {}) {
    detail::require_same_shape(fused, "build_train_libraries");
    const auto groups = draw_groups(fused.size(), p, rng);
    FeatureLibrary lib;
    lib.label = std::move(label);
    lib.role = LibraryRole::Train;
    lib.group_size = groups[0].size();
    lib.leftover = fused.size() - groups.size() * lib.group_size;
    lib.prototypes.resize(groups.size());
    parallel_for(groups.size(), [&](std::size_t q) {
        lib.prototypes[q] = detail::fuse_group(
            groups[q], [&](std::size_t t) { return analyze_2d(fused[t], fb); }, fb);
    });
    return lib;
}

/// Equal-weight fusion of all train prototypes into the single test prototype.
inline FeatureLibrary build_test_library(const FeatureLibrary& train, const FilterBank& fb) {
    if (train.role != LibraryRole::Train || train.prototypes.empty())
        throw ArgumentError("build_test_library: need a non-empty train library");
    detail::require_same_shape(train.prototypes, "build_test_library");
    FeatureLibrary lib;
    lib.label = train.label;
    lib.role = LibraryRole::Test;
    lib.group_size = train.prototypes.size();
    if (train.prototypes.size() == 1) {
        lib.prototypes = train.prototypes;
    } else {
        lib.prototypes.push_back(fuse_signals(std::span<const Matrix>(train.prototypes), fb));
    }
    return lib;
}

// ---------------------------------------------------------------------------
// Dataset regeneration
// ---------------------------------------------------------------------------

struct Sample {
    Matrix signal;
    ClassId label;
    std::string id;
    std::string source;  // id of the original record
    int library = 0;     // index of the feature library it was fused with
};

struct RebalancedDataset {
    std::vector<Sample> train;
    std::vector<Sample> test;
};

struct ClassLibraries {
    FeatureLibrary train;
    FeatureLibrary test;
};

inline std::size_t train_originals(std::size_t n, double split) {
    return static_cast<std::size_t>(floor_product(static_cast<double>(n), split));
}

/// Splits each class's originals (substream "split/<class>") and fuses every
/// train original with each of its class's p train prototypes and every test
/// original with the class's test prototype, weights 1/2 and 1/2.
inline RebalancedDataset regenerate_dataset(const std::map<int, std::vector<const EcgRecord*>>& selected,
                                            const std::map<int, ClassLibraries>& libs,
                                            const FusionConfig& cfg, const FilterBank& fb) {
    if (!(cfg.split > 0.0 && cfg.split < 1.0))
        throw ArgumentError("regenerate_dataset: split must lie in (0, 1)");
    const RngStream split_rng = RngStream(cfg.seed).child("split");

    struct Job {
        const EcgRecord* original;
        const Matrix* prototype;
        int library;
        bool train;
    };
    std::vector<Job> jobs;
    for (const auto& [k, originals] : selected) {
        auto it = libs.find(k);
        if (it == libs.end())
            throw DataError("regenerate_dataset: no feature library for class " + std::to_string(k));
        const auto& [train_lib, test_lib] = it->second;
        if (test_lib.prototypes.size() != 1)
            throw ArgumentError("regenerate_dataset: test library must hold exactly one prototype");

        std::vector<const EcgRecord*> order = originals;
        auto g = split_rng.child(static_cast<std::size_t>(k)).engine();
        shuffle(order, g);
        const std::size_t n_train = train_originals(order.size(), cfg.split);
        for (std::size_t i = 0; i < n_train; ++i)
            for (std::size_t q = 0; q < train_lib.prototypes.size(); ++q)
                jobs.push_back({order[i], &train_lib.prototypes[q], static_cast<int>(q), true});
        for (std::size_t i = n_train; i < order.size(); ++i)
            jobs.push_back({order[i], &test_lib.prototypes[0], 0, false});
    }

    std::vector<Sample> samples(jobs.size());
    parallel_for(jobs.size(), [&](std::size_t j) {
        const Job& job = jobs[j];
        const Matrix* pair[2] = {&job.original->leads, job.prototype};
        const double w[2] = {0.5, 0.5};
        Sample& s = samples[j];
        s.signal = fuse_signals(std::span<const Matrix* const>(pair), std::span<const double>(w), fb);
        s.label = job.original->label;
        s.source = job.original->id;
        s.library = job.library;
        s.id = job.original->id + (job.train ? "_p" + std::to_string(job.library) : std::string("_t"));
    });

    RebalancedDataset out;
    for (std::size_t j = 0; j < jobs.size(); ++j)
        (jobs[j].train ? out.train : out.test).push_back(std::move(samples[j]));
    return out;
}

// ---------------------------------------------------------------------------
// Full pipeline
// ---------------------------------------------------------------------------

struct PipelineReport {
    std::size_t n = 0;
    double delta = 1.0;
    int p = 0;
    std::size_t s = 0;       // floor(n * delta)
    std::size_t fused = 0;   // s(s-1)/2 per class
    std::size_t m = 0;
    std::size_t leftover = 0;
    std::size_t train_per_class = 0;
    std::size_t test_per_class = 0;
    std::vector<ClassId> classes;
};

inline nlohmann::json to_json(const PipelineReport& r) {
    nlohmann::json classes = nlohmann::json::array();
    for (const auto& c : r.classes) classes.push_back({{"label", c.index}, {"name", c.name}});
    return {{"n", r.n},
            {"delta", r.delta},
            {"p", r.p},
            {"s", r.s},
            {"fused_per_class", r.fused},
            {"m", r.m},
            {"leftover", r.leftover},
            {"train_per_class", r.train_per_class},
            {"test_per_class", r.test_per_class},
            {"classes", classes}};
}

struct PipelineResult {
    RebalancedDataset dataset;
    PipelineReport report;
    std::map<int, ClassLibraries> libraries;
};

/// Threshold selection, pair fusion, train/test libraries and regeneration
/// for already cleansed records. Fused pairs are streamed into their library
/// groups rather than held in memory; the result is identical to running
/// intra_class_fuse followed by build_train_libraries.
inline PipelineResult run_pipeline(std::span<const EcgRecord> records, const FusionConfig& cfg,
                                   const FilterBank& fb) {
    const RngStream root(cfg.seed);
    std::string stage = "select_threshold";
    try {
        if (cfg.p < 1) throw ArgumentError("p must be >= 1");
        for (const auto& r : records)
            if (r.rows() != records[0].rows() || r.cols() != records[0].cols())
                throw ArgumentError("records differ in shape; cleanse them first");

        const ThresholdSelection sel = select_threshold(records, root);
        PipelineResult result;
        auto& rep = result.report;
        rep.n = sel.n;
        rep.delta = cfg.delta.value_or(default_delta(sel.n));
        rep.p = cfg.p;

        std::map<int, std::vector<const EcgRecord*>> selected;
        for (const auto& [k, idx] : sel.selected) {
            auto& v = selected[k];
            for (auto i : idx) v.push_back(&records[i]);
            rep.classes.push_back(records[idx[0]].label);
        }

        for (const auto& [k, originals] : selected) {
            stage = "enumerate_pairs";
            const auto pairs = enumerate_pairs(sel.n, rep.delta, root.child("pairs").child(static_cast<std::size_t>(k)));
            rep.s = static_cast<std::size_t>(floor_product(static_cast<double>(sel.n), rep.delta));
            rep.fused = pairs.size();

            stage = "intra_class_fuse";
            std::vector<SubbandSet> bands(originals.size());
            parallel_for(originals.size(), [&](std::size_t i) { bands[i] = analyze_2d(originals[i]->leads, fb); });

            stage = "build_train_libraries";
            const auto groups = draw_groups(pairs.size(), cfg.p, root.child("group").child(static_cast<std::size_t>(k)));
            FeatureLibrary train;
            train.label = originals[0]->label;
            train.group_size = groups[0].size();
            train.leftover = pairs.size() - groups.size() * train.group_size;
            train.prototypes.resize(groups.size());
            parallel_for(groups.size(), [&](std::size_t q) {
                train.prototypes[q] = detail::fuse_group(
                    groups[q],
                    [&](std::size_t t) {
                        return analyze_2d(detail::fuse_pair(bands[pairs[t].first], bands[pairs[t].second], fb), fb);
                    },
                    fb);
            });
            rep.m = train.group_size;
            rep.leftover = train.leftover;

            stage = "build_test_library";
            FeatureLibrary test = build_test_library(train, fb);
            result.libraries.emplace(k, ClassLibraries{std::move(train), std::move(test)});
        }

        stage = "regenerate_dataset";
        result.dataset = regenerate_dataset(selected, result.libraries, cfg, fb);
        rep.train_per_class = train_originals(sel.n, cfg.split) * static_cast<std::size_t>(cfg.p);
        rep.test_per_class = sel.n - train_originals(sel.n, cfg.split);

        std::map<int, std::size_t> train_counts, test_counts;
        for (const auto& s : result.dataset.train) ++train_counts[s.label.index];
        for (const auto& s : result.dataset.test) ++test_counts[s.label.index];
        for (const auto& [k, _] : selected)
            if (train_counts[k] != rep.train_per_class || test_counts[k] != rep.test_per_class)
                throw InternalError("class " + std::to_string(k) + " is not balanced");
        return result;
    } catch (const InternalError&) {
        throw;
    } catch (const ArgumentError& e) {
        throw ArgumentError("run_pipeline [" + stage + "]: " + e.what());
    } catch (const DataError& e) {
        throw DataError("run_pipeline [" + stage + "]: " + e.what());
    }
}

}  // namespace ecgfuse

#endif
