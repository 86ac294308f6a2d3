#ifndef ECGFUSE_FEATURES_HPP
#define ECGFUSE_FEATURES_HPP

#include "ecgfuse/core.hpp"
#include "ecgfuse/fusion.hpp"
#include "ecgfuse/parallel.hpp"
#include "ecgfuse/wavelet.hpp"

#include <map>
#include <span>
#include <vector>

namespace ecgfuse {

inline constexpr int kBandsPerLead = 4;
inline constexpr int kStatsPerBand = 3;
inline constexpr int kFeaturesPerLead = kBandsPerLead * kStatsPerBand;

/// Per-lead two-level wavelet-packet summary along time. Bands LL, LH, HL,
/// HH (first letter = first-level filter) each contribute mean, population
/// variance and mean-square energy, laid out lead-major:
///     [lead][band][mean, variance, energy]
/// 12 leads give 144 features. Columns must be divisible by 4.
inline Vector featurize(const Matrix& x, const FilterBank& fb = bior13()) {
    if (x.cols() % 4 != 0 || x.cols() == 0)
        throw ArgumentError("featurize: sample count must be a positive multiple of 4");
    const auto [lo, hi] = analyze_time(x, fb);
    const auto [ll, lh] = analyze_time(lo, fb);
    const auto [hl, hh] = analyze_time(hi, fb);
    const Matrix* bands[kBandsPerLead] = {&ll, &lh, &hl, &hh};

    Vector f(x.rows() * kFeaturesPerLead);
    for (Eigen::Index lead = 0; lead < x.rows(); ++lead) {
        for (int b = 0; b < kBandsPerLead; ++b) {
            const auto row = bands[b]->row(lead);
            const double n = static_cast<double>(row.size());
            const double mean = row.mean();
            const double energy = row.squaredNorm() / n;
            const double var = std::max(0.0, (row.array() - mean).square().sum() / n);
            const Eigen::Index at = lead * kFeaturesPerLead + b * kStatsPerBand;
            f(at) = mean;
            f(at + 1) = var;
            f(at + 2) = energy;
        }
    }
    return f;
}

/// Column-per-sample feature matrix with contiguous labels 0..C-1.
struct LabeledFeatures {
    Eigen::MatrixXd x;            // features x samples
    std::vector<int> y;           // position in `classes`
    std::vector<ClassId> classes; // sorted by ClassId::index

    std::size_t size() const noexcept { return y.size(); }
    int class_count() const noexcept { return static_cast<int>(classes.size()); }

    LabeledFeatures subset(std::span<const std::size_t> idx) const {
        LabeledFeatures out;
        out.classes = classes;
        out.x.resize(x.rows(), static_cast<Eigen::Index>(idx.size()));
        out.y.reserve(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) {
            out.x.col(static_cast<Eigen::Index>(i)) = x.col(static_cast<Eigen::Index>(idx[i]));
            out.y.push_back(y[idx[i]]);
        }
        return out;
    }
};

/// Featurizes signals; `classes` fixes the label order (derived from the
/// inputs when empty).
template <typename Item, typename SignalOf, typename LabelOf>
LabeledFeatures featurize_all(std::span<const Item> items, SignalOf&& signal_of, LabelOf&& label_of,
                              std::vector<ClassId> classes = {}, const FilterBank& fb = bior13()) {
    if (classes.empty()) {
        std::map<int, std::string> seen;
        for (const auto& it : items) {
            const ClassId& c = label_of(it);
            seen.emplace(c.index, c.name);
        }
        for (auto& [i, n] : seen) classes.push_back({i, n});
    }
    std::map<int, int> position;
    for (std::size_t c = 0; c < classes.size(); ++c) position[classes[c].index] = static_cast<int>(c);

    LabeledFeatures out;
    out.classes = classes;
    out.y.resize(items.size());
    std::vector<Vector> cols(items.size());
    parallel_for(items.size(), [&](std::size_t i) { cols[i] = featurize(signal_of(items[i]), fb); });
    for (std::size_t i = 0; i < items.size(); ++i) {
        auto it = position.find(label_of(items[i]).index);
        if (it == position.end())
            throw ArgumentError("featurize_all: label " + std::to_string(label_of(items[i]).index) +
                                " not among the known classes");
        out.y[i] = it->second;
    }
    if (!items.empty()) {
        out.x.resize(cols[0].size(), static_cast<Eigen::Index>(items.size()));
        for (std::size_t i = 0; i < items.size(); ++i) out.x.col(static_cast<Eigen::Index>(i)) = cols[i];
    }
    return out;
}

inline LabeledFeatures featurize_samples(std::span<const Sample> samples, std::vector<ClassId> classes = {}) {
    return featurize_all(
        samples, [](const Sample& s) -> const Matrix& { return s.signal; },
        [](const Sample& s) -> const ClassId& { return s.label; }, std::move(classes));
}

inline LabeledFeatures featurize_records(std::span<const EcgRecord> records, std::vector<ClassId> classes = {}) {
    return featurize_all(
        records, [](const EcgRecord& r) -> const Matrix& { return r.leads; },
        [](const EcgRecord& r) -> const ClassId& { return r.label; }, std::move(classes));
}

}  // namespace ecgfuse

#endif
