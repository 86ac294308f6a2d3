#ifndef ECGFUSE_EVALUATION_HPP
#define ECGFUSE_EVALUATION_HPP

#include "ecgfuse/core.hpp"
#include "ecgfuse/features.hpp"
#include "ecgfuse/fusion.hpp"
#include "ecgfuse/network.hpp"
#include "ecgfuse/parallel.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace ecgfuse {

struct ClassMetrics {
    ClassId label;
    double precision = 0.0;      // 0 when the class is never predicted
    double recall = 0.0;         // 0 when the class has no test samples
    double f1 = 0.0;
    double ovr_accuracy = 0.0;   // one-vs-rest accuracy
    std::optional<double> auc;   // absent when positives or negatives are missing
    std::size_t support = 0;
};

struct Metrics {
    double accuracy = 0.0;
    double macro_f1 = 0.0;
    std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
    std::vector<ClassMetrics> per_class;
};

/// Area under the ROC curve as the Mann-Whitney statistic, tied scores
/// sharing their average rank.
inline std::optional<double> rank_auc(std::span<const double> scores, const std::vector<bool>& positive) {
    const std::size_t n = scores.size();
    std::size_t pos = 0;
    for (bool p : positive) pos += p ? 1 : 0;
    const std::size_t neg = n - pos;
    if (pos == 0 || neg == 0) return std::nullopt;

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
    std::vector<double> rank(n);
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
        i = j + 1;
    }
    double pos_rank_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        if (positive[i]) pos_rank_sum += rank[i];
    const double u = pos_rank_sum - static_cast<double>(pos) * static_cast<double>(pos + 1) / 2.0;
    return u / (static_cast<double>(pos) * static_cast<double>(neg));
}

/// Metrics from per-sample class scores (classes x samples) and true labels.
inline Metrics compute_metrics(const Eigen::MatrixXd& scores, const std::vector<int>& truth,
                               const std::vector<ClassId>& classes) {
    const auto C = classes.size();
    const auto n = truth.size();
    if (n == 0) throw ArgumentError("evaluate: empty test set");
    if (static_cast<std::size_t>(scores.cols()) != n || static_cast<std::size_t>(scores.rows()) != C)
        throw ArgumentError("evaluate: score matrix shape mismatch");

    Metrics m;
    m.confusion.assign(C, std::vector<std::size_t>(C, 0));
    std::size_t correct = 0;
    for (std::size_t j = 0; j < n; ++j) {
        Eigen::Index pred;
        scores.col(static_cast<Eigen::Index>(j)).maxCoeff(&pred);
        ++m.confusion[static_cast<std::size_t>(truth[j])][static_cast<std::size_t>(pred)];
        if (pred == truth[j]) ++correct;
    }
    m.accuracy = static_cast<double>(correct) / static_cast<double>(n);

    double f1_sum = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
        ClassMetrics cm;
        cm.label = classes[c];
        std::size_t tp = m.confusion[c][c], row = 0, col = 0;
        for (std::size_t k = 0; k < C; ++k) {
            row += m.confusion[c][k];
            col += m.confusion[k][c];
        }
        cm.support = row;
        cm.precision = col ? static_cast<double>(tp) / static_cast<double>(col) : 0.0;
        cm.recall = row ? static_cast<double>(tp) / static_cast<double>(row) : 0.0;
        cm.f1 = (cm.precision + cm.recall) > 0.0 ? 2.0 * cm.precision * cm.recall / (cm.precision + cm.recall) : 0.0;
        const std::size_t fp = col - tp, fn = row - tp;
        cm.ovr_accuracy = static_cast<double>(n - fp - fn) / static_cast<double>(n);

        std::vector<double> s(n);
        std::vector<bool> pos(n);
        for (std::size_t j = 0; j < n; ++j) {
            s[j] = scores(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(j));
            pos[j] = truth[j] == static_cast<int>(c);
        }
        cm.auc = rank_auc(s, pos);
        f1_sum += cm.f1;
        m.per_class.push_back(std::move(cm));
    }
    m.macro_f1 = f1_sum / static_cast<double>(C);
    return m;
}

inline Metrics evaluate(const Model& model, const LabeledFeatures& test) {
    if (test.size() == 0) throw ArgumentError("evaluate: empty test set");
    return compute_metrics(model.scores(test.x), test.y, model.classes);
}

inline nlohmann::json to_json(const Metrics& m) {
    nlohmann::json per_class = nlohmann::json::array();
    nlohmann::json auc = nlohmann::json::array();
    for (const auto& c : m.per_class) {
        per_class.push_back({{"name", c.label.name},
                             {"label", c.label.index},
                             {"precision", c.precision},
                             {"recall", c.recall},
                             {"f1", c.f1},
                             {"one_vs_rest_accuracy", c.ovr_accuracy},
                             {"support", c.support}});
        auc.push_back(c.auc ? nlohmann::json(*c.auc) : nlohmann::json(nullptr));
    }
    return {{"accuracy", m.accuracy},
            {"macro_f1", m.macro_f1},
            {"per_class", per_class},
            {"confusion", m.confusion},
            {"auc", auc}};
}

inline std::string curve_csv(const TrainingCurve& c) {
    std::string out = "epoch,loss,accuracy\n";
    char buf[96];
    for (std::size_t e = 0; e < c.loss.size(); ++e) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", e, c.loss[e], c.accuracy[e]);
        out += buf;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Cross-validation
// ---------------------------------------------------------------------------

/// Stratified fold index per sample. Each class is shuffled (substream
/// "folds/<class>") and dealt round-robin, continuing the dealer position
/// from the previous class so fold sizes differ by at most one overall.
inline std::vector<int> stratified_folds(const LabeledFeatures& data, int folds, const RngStream& rng) {
    if (folds < 2) throw ArgumentError("cross_validate: need at least 2 folds");
    std::vector<std::vector<std::size_t>> by_class(data.classes.size());
    for (std::size_t i = 0; i < data.size(); ++i) by_class[static_cast<std::size_t>(data.y[i])].push_back(i);
    for (std::size_t c = 0; c < by_class.size(); ++c)
        if (by_class[c].size() < static_cast<std::size_t>(folds))
            throw DataError("cross_validate: class '" + data.classes[c].name + "' has " +
                            std::to_string(by_class[c].size()) + " samples, fewer than " +
                            std::to_string(folds) + " folds");

    std::vector<int> assign(data.size(), -1);
    std::size_t dealer = 0;
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        auto idx = by_class[c];
        auto g = rng.child("folds").child(c).engine();
        shuffle(idx, g);
        for (auto i : idx) assign[i] = static_cast<int>(dealer++ % static_cast<std::size_t>(folds));
    }
    return assign;
}

struct FoldResult {
    Metrics metrics;
    TrainingCurve curve;
    std::size_t train_size = 0;
    std::size_t validation_size = 0;
};

struct CrossValidation {
    std::vector<FoldResult> folds;
    double mean_accuracy = 0.0;
    double std_accuracy = 0.0;
    double mean_macro_f1 = 0.0;
};

/// Folds train independently (in parallel) with the same network seed.
inline CrossValidation cross_validate(const LabeledFeatures& data, const NetConfig& cfg, int folds = 5) {
    const auto assign = stratified_folds(data, folds, RngStream(cfg.seed, "cv"));
    CrossValidation cv;
    cv.folds.resize(static_cast<std::size_t>(folds));
    parallel_for(cv.folds.size(), [&](std::size_t f) {
        std::vector<std::size_t> tr, va;
        for (std::size_t i = 0; i < data.size(); ++i) (assign[i] == static_cast<int>(f) ? va : tr).push_back(i);
        const Model model = train(data.subset(tr), cfg);
        auto& out = cv.folds[f];
        out.metrics = evaluate(model, data.subset(va));
        out.curve = model.curve;
        out.train_size = tr.size();
        out.validation_size = va.size();
    });
    double sum = 0.0, sq = 0.0, f1 = 0.0;
    for (const auto& f : cv.folds) {
        sum += f.metrics.accuracy;
        sq += f.metrics.accuracy * f.metrics.accuracy;
        f1 += f.metrics.macro_f1;
    }
    const double k = static_cast<double>(folds);
    cv.mean_accuracy = sum / k;
    cv.std_accuracy = std::sqrt(std::max(0.0, sq / k - cv.mean_accuracy * cv.mean_accuracy));
    cv.mean_macro_f1 = f1 / k;
    return cv;
}

inline nlohmann::json to_json(const CrossValidation& cv) {
    nlohmann::json folds = nlohmann::json::array();
    for (const auto& f : cv.folds)
        folds.push_back({{"accuracy", f.metrics.accuracy},
                         {"macro_f1", f.metrics.macro_f1},
                         {"train_size", f.train_size},
                         {"validation_size", f.validation_size}});
    return {{"folds", folds},
            {"mean_accuracy", cv.mean_accuracy},
            {"std_accuracy", cv.std_accuracy},
            {"mean_macro_f1", cv.mean_macro_f1}};
}

/// Scores records with a model trained on prototype-fused samples without
/// using their labels: each record is fused (1/2, 1/2) with the test
/// prototype of every candidate class k, and the model's probability of k on
/// that fusion becomes the record's class-k score (renormalised over k).
inline Metrics evaluate_prototype_fused(const Model& model, std::span<const EcgRecord> records,
                                        const std::map<int, ClassLibraries>& libs,
                                        const FilterBank& fb = bior13()) {
    if (records.empty()) throw ArgumentError("evaluate: empty test set");
    const auto C = model.classes.size();
    std::vector<const Matrix*> protos(C);
    for (std::size_t c = 0; c < C; ++c) {
        auto it = libs.find(model.classes[c].index);
        if (it == libs.end() || it->second.test.prototypes.size() != 1)
            throw ArgumentError("evaluate: no test prototype for class " + model.classes[c].name);
        protos[c] = &it->second.test.prototypes[0];
    }
    std::map<int, int> position;
    for (std::size_t c = 0; c < C; ++c) position[model.classes[c].index] = static_cast<int>(c);

    Eigen::MatrixXd scores(static_cast<Eigen::Index>(C), static_cast<Eigen::Index>(records.size()));
    std::vector<int> truth(records.size());
    parallel_for(records.size(), [&](std::size_t j) {
        Eigen::MatrixXd feats(model.standardizer.mean.size(), static_cast<Eigen::Index>(C));
        for (std::size_t c = 0; c < C; ++c) {
            const Matrix* pair[2] = {&records[j].leads, protos[c]};
            const double w[2] = {0.5, 0.5};
            feats.col(static_cast<Eigen::Index>(c)) =
                featurize(fuse_signals(std::span<const Matrix* const>(pair), std::span<const double>(w), fb), fb);
        }
        const Eigen::MatrixXd p = model.scores(feats);
        Vector own(static_cast<Eigen::Index>(C));
        for (std::size_t c = 0; c < C; ++c) own(static_cast<Eigen::Index>(c)) = p(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(c));
        const double total = own.sum();
        scores.col(static_cast<Eigen::Index>(j)) = total > 0.0 ? Vector(own / total) : Vector(Vector::Constant(own.size(), 1.0 / static_cast<double>(C)));
    });
    for (std::size_t j = 0; j < records.size(); ++j) {
        auto it = position.find(records[j].label.index);
        if (it == position.end()) throw ArgumentError("evaluate: unknown label in test set");
        truth[j] = it->second;
    }
    return compute_metrics(scores, truth, model.classes);
}

// ---------------------------------------------------------------------------
// Three-arm augmentation comparison
// ---------------------------------------------------------------------------

struct ArmResult {
    std::string name;
    std::size_t train_size = 0;
    std::vector<std::size_t> train_per_class;
    Metrics metrics;
};

struct ComparisonReport {
    std::vector<ArmResult> arms;  // imbalanced, oversampled, rebalanced
    std::optional<PipelineReport> pipeline;

    const ArmResult& arm(std::string_view name) const {
        for (const auto& a : arms)
            if (a.name == name) return a;
        throw ArgumentError("no arm named " + std::string(name));
    }
};

/// Duplicates randomly chosen records of each class (with replacement,
/// substream "oversample/<class>") until every class matches the largest.
inline std::vector<EcgRecord> oversample_duplicates(std::span<const EcgRecord> records, const RngStream& rng) {
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < records.size(); ++i) by_class[records[i].label.index].push_back(i);
    std::size_t target = 0;
    for (auto& [k, v] : by_class) target = std::max(target, v.size());
    std::vector<EcgRecord> out(records.begin(), records.end());
    for (auto& [k, v] : by_class) {
        auto g = rng.child("oversample").child(static_cast<std::size_t>(k)).engine();
        for (std::size_t i = v.size(); i < target; ++i) {
            EcgRecord dup = records[v[uniform_index(g, v.size())]];
            dup.id += "_dup" + std::to_string(i);
            out.push_back(std::move(dup));
        }
    }
    return out;
}

/// Trains the three arms with one network configuration and evaluates all of
/// them on the same untouched test records:
///   imbalanced  - the cleansed training records as they are
///   oversampled - duplicates of minority records up to the majority count
///   rebalanced  - the fused training split produced by run_pipeline
inline ComparisonReport compare_augmentation(std::span<const EcgRecord> train_records,
                                             std::span<const EcgRecord> test_records, const FusionConfig& fusion,
                                             const NetConfig& net, const FilterBank& fb = bior13()) {
    if (train_records.empty() || test_records.empty()) throw ArgumentError("compare: empty train or test set");
    const auto train_classes = featurize_records(train_records).classes;
    const LabeledFeatures test = featurize_records(test_records, train_classes);

    const auto counts = [&](const LabeledFeatures& f) {
        std::vector<std::size_t> c(f.classes.size(), 0);
        for (int y : f.y) ++c[static_cast<std::size_t>(y)];
        return c;
    };

    ComparisonReport report;
    const auto run_arm = [&](std::string name, const LabeledFeatures& data) {
        ArmResult arm;
        arm.name = std::move(name);
        arm.train_size = data.size();
        arm.train_per_class = counts(data);
        const Model model = train(data, net);
        arm.metrics = evaluate(model, test);
        return arm;
    };

    report.arms.push_back(run_arm("imbalanced", featurize_records(train_records, train_classes)));
    const auto dup = oversample_duplicates(train_records, RngStream(fusion.seed));
    report.arms.push_back(run_arm("oversampled", featurize_records(std::span<const EcgRecord>(dup), train_classes)));
    const PipelineResult piped = run_pipeline(train_records, fusion, fb);
    report.pipeline = piped.report;
    {
        const LabeledFeatures data = featurize_samples(piped.dataset.train, train_classes);
        ArmResult arm;
        arm.name = "rebalanced";
        arm.train_size = data.size();
        arm.train_per_class = counts(data);
        const Model model = train(data, net);
        arm.metrics = evaluate_prototype_fused(model, test_records, piped.libraries, fb);
        report.arms.push_back(std::move(arm));
    }
    return report;
}

inline nlohmann::json to_json(const ComparisonReport& r) {
    nlohmann::json arms = nlohmann::json::array();
    for (const auto& a : r.arms) {
        nlohmann::json recall = nlohmann::json::array();
        for (const auto& c : a.metrics.per_class) recall.push_back({{"name", c.label.name}, {"recall", c.recall}});
        arms.push_back({{"arm", a.name},
                        {"train_size", a.train_size},
                        {"train_per_class", a.train_per_class},
                        {"accuracy", a.metrics.accuracy},
                        {"macro_f1", a.metrics.macro_f1},
                        {"recall", recall},
                        {"metrics", to_json(a.metrics)}});
    }
    nlohmann::json j{{"arms", arms}};
    if (r.pipeline) j["pipeline"] = to_json(*r.pipeline);
    return j;
}

}  // namespace ecgfuse

#endif
