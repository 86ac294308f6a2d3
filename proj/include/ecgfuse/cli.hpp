#ifndef ECGFUSE_CLI_HPP
#define ECGFUSE_CLI_HPP

// Command implementations behind the ecgfuse executable. Argument parsing
// lives in tools/ecgfuse.cpp; everything here takes a resolved RunConfig.

#include "ecgfuse/cleanse.hpp"
#include "ecgfuse/core.hpp"
#include "ecgfuse/evaluation.hpp"
#include "ecgfuse/features.hpp"
#include "ecgfuse/fusion.hpp"
#include "ecgfuse/network.hpp"
#include "ecgfuse/noise.hpp"
#include "ecgfuse/record_io.hpp"
#include "ecgfuse/synth.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

namespace ecgfuse::cli {

enum ExitCode : int { kOk = 0, kInputError = 1, kOutputError = 2, kInternalError = 3 };

struct RunConfig {
    std::string command;

    std::string manifest;
    std::string test_manifest;
    std::string dataset;
    std::string out;
    std::string noise_file;
    std::string noise_dir;

    // synth
    std::string preset;
    std::vector<std::size_t> counts;
    Eigen::Index min_len = kSamples;
    Eigen::Index max_len = kSamples;
    double synth_noise = SynthOptions{}.noise_sigma;

    // clean
    int rank = 5;

    // rebalance
    std::optional<double> delta;
    int p = 4;
    double split = 0.8;

    // noise
    std::vector<std::string> kinds{"bw", "em", "ma"};
    std::vector<double> levels = standard_snr_levels();

    // train-eval / compare
    std::vector<int> hidden = NetConfig{}.hidden;
    double learning_rate = NetConfig{}.learning_rate;
    int batch_size = NetConfig{}.batch_size;
    int epochs = NetConfig{}.epochs;
    int steps_per_epoch = NetConfig{}.steps_per_epoch;
    std::string loss = "cross-entropy";
    int folds = 5;
    int seeds = 5;
    double holdout = 0.2;

    std::uint64_t seed = 0;
};

inline nlohmann::json to_json(const RunConfig& c) {
    nlohmann::json j;
    j["command"] = c.command;
    j["manifest"] = c.manifest;
    j["test_manifest"] = c.test_manifest;
    j["dataset"] = c.dataset;
    j["out"] = c.out;
    j["noise_file"] = c.noise_file;
    j["noise_dir"] = c.noise_dir;
    j["preset"] = c.preset;
    j["counts"] = c.counts;
    j["min_len"] = c.min_len;
    j["max_len"] = c.max_len;
    j["synth_noise"] = c.synth_noise;
    j["rank"] = c.rank;
    j["delta"] = c.delta ? nlohmann::json(*c.delta) : nlohmann::json(nullptr);
    j["p"] = c.p;
    j["split"] = c.split;
    j["kinds"] = c.kinds;
    j["levels"] = c.levels;
    j["hidden"] = c.hidden;
    j["learning_rate"] = c.learning_rate;
    j["batch_size"] = c.batch_size;
    j["epochs"] = c.epochs;
    j["steps_per_epoch"] = c.steps_per_epoch;
    j["loss"] = c.loss;
    j["folds"] = c.folds;
    j["seeds"] = c.seeds;
    j["holdout"] = c.holdout;
    j["seed"] = c.seed;
    return j;
}

/// Overlays the keys present in `j` onto `c`. Unknown keys are rejected so a
/// typo in a config file does not silently fall back to a default.
inline void apply_json(RunConfig& c, const nlohmann::json& j) {
    if (!j.is_object()) throw ArgumentError("config: top level must be an object");
    const RunConfig reference;
    const auto known = to_json(reference);
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.contains(it.key())) throw ArgumentError("config: unknown key '" + it.key() + "'");
    try {
        auto take = [&](const char* key, auto& field) {
            if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
        };
        take("manifest", c.manifest);
        take("test_manifest", c.test_manifest);
        take("dataset", c.dataset);
        take("out", c.out);
        take("noise_file", c.noise_file);
        take("noise_dir", c.noise_dir);
        take("preset", c.preset);
        take("counts", c.counts);
        take("min_len", c.min_len);
        take("max_len", c.max_len);
        take("synth_noise", c.synth_noise);
        take("rank", c.rank);
        if (j.contains("delta")) {
            if (j.at("delta").is_null())
                c.delta.reset();
            else
                c.delta = j.at("delta").get<double>();
        }
        take("p", c.p);
        take("split", c.split);
        take("kinds", c.kinds);
        take("levels", c.levels);
        take("hidden", c.hidden);
        take("learning_rate", c.learning_rate);
        take("batch_size", c.batch_size);
        take("epochs", c.epochs);
        take("steps_per_epoch", c.steps_per_epoch);
        take("loss", c.loss);
        take("folds", c.folds);
        take("seeds", c.seeds);
        take("holdout", c.holdout);
        take("seed", c.seed);
    } catch (const nlohmann::json::exception& e) {
        throw ArgumentError(std::string("config: ") + e.what());
    }
}

inline NetConfig net_config(const RunConfig& c) {
    NetConfig n;
    n.hidden = c.hidden;
    n.learning_rate = c.learning_rate;
    n.batch_size = c.batch_size;
    n.epochs = c.epochs;
    n.steps_per_epoch = c.steps_per_epoch;
    n.loss = c.loss == "squared-error" ? Loss::SquaredError : Loss::CrossEntropy;
    n.seed = c.seed;
    return n;
}

inline FusionConfig fusion_config(const RunConfig& c) {
    FusionConfig f;
    f.delta = c.delta;
    f.p = c.p;
    f.split = c.split;
    f.seed = c.seed;
    return f;
}

/// Domain checks shared by every command; violations are usage errors.
inline void validate(const RunConfig& c) {
    const auto require = [](bool ok, const std::string& msg) {
        if (!ok) throw ArgumentError(msg);
    };
    if (c.delta) require(*c.delta > 0.0 && *c.delta <= 1.0, "--delta must lie in (0, 1]");
    require(c.p >= 1, "--p must be >= 1");
    require(c.split > 0.0 && c.split < 1.0, "--split must lie in (0, 1)");
    require(c.rank >= 1, "--rank must be >= 1");
    require(c.min_len >= 1 && c.max_len >= c.min_len, "--min-len/--max-len: need 1 <= min <= max");
    require(c.synth_noise >= 0.0, "--synth-noise must be >= 0");
    for (const auto& k : c.kinds) parse_noise_kind(k);
    for (double l : c.levels)
        require(l >= kMinSnrDb && l <= kMaxSnrDb, "--snr-db values must lie in [-40, 40]");
    for (int h : c.hidden) require(h >= 1, "--hidden widths must be >= 1");
    require(c.learning_rate >= 0.0, "--lr must be >= 0");
    require(c.batch_size >= 1, "--batch-size must be >= 1");
    require(c.epochs >= 1, "--epochs must be >= 1");
    require(c.steps_per_epoch >= 0, "--steps-per-epoch must be >= 0");
    require(c.loss == "cross-entropy" || c.loss == "squared-error",
            "--loss must be cross-entropy or squared-error");
    require(c.folds == 0 || c.folds >= 2, "--folds must be 0 (skip) or >= 2");
    require(c.seeds >= 1, "--seeds must be >= 1");
    require(c.holdout > 0.0 && c.holdout < 1.0, "--holdout must lie in (0, 1)");
}

namespace detail {

inline fs::path require_out(const RunConfig& c) {
    if (c.out.empty()) throw ArgumentError("--out is required");
    const fs::path out(c.out);
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec || !fs::is_directory(out)) throw IoError("cannot create output directory " + out.string(), true);
    return out;
}

inline DatasetManifest require_manifest(const std::string& path, const char* flag) {
    if (path.empty()) throw ArgumentError(std::string(flag) + " is required");
    DatasetManifest m = load_manifest(path);
    if (m.entries.empty()) throw DataError(path + ": manifest lists no records");
    return m;
}

inline void write_text(const std::string& text, const fs::path& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write " + path.string(), true);
    f << text;
    if (!f) throw IoError("failed writing " + path.string(), true);
}

inline std::string level_tag(double db) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", db);
    return buf;
}

inline std::vector<EcgRecord> to_records(std::span<const Sample> samples) {
    std::vector<EcgRecord> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back({s.signal, s.label, s.id});
    return out;
}

// Writes samples under dir/subdir and a manifest keeping their provenance.
inline DatasetManifest write_samples(std::span<const Sample> samples, const fs::path& dir,
                                     const std::string& subdir, const std::string& manifest_name,
                                     std::uint64_t seed, const std::string& notes) {
    DatasetManifest m;
    m.seed = seed;
    m.notes = notes;
    m.base_dir = dir;
    if (!samples.empty()) m.expected_shape = Shape{samples[0].signal.rows(), samples[0].signal.cols()};
    std::vector<std::string> rel(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) rel[i] = subdir + "/" + samples[i].id + ".csv";
    parallel_for(samples.size(), [&](std::size_t i) { save_record(samples[i].signal, dir / rel[i]); });
    for (std::size_t i = 0; i < samples.size(); ++i)
        m.entries.push_back({rel[i], samples[i].label, samples[i].source, samples[i].library});
    save_manifest(m, dir / manifest_name);
    return m;
}

inline std::vector<Sample> load_samples(const DatasetManifest& m) {
    std::vector<Sample> out(m.entries.size());
    parallel_for(m.entries.size(), [&](std::size_t i) {
        const auto& e = m.entries[i];
        EcgRecord r = load_record(m.resolve(e), m.expected_shape);
        out[i] = Sample{std::move(r.leads), e.label, std::move(r.id), e.source, std::max(0, e.library)};
    });
    return out;
}

inline std::vector<EcgRecord> load_records_parallel(const DatasetManifest& m) {
    std::vector<EcgRecord> out(m.entries.size());
    parallel_for(m.entries.size(), [&](std::size_t i) {
        out[i] = load_record(m.resolve(m.entries[i]), m.expected_shape);
        out[i].label = m.entries[i].label;
    });
    return out;
}

inline double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t h = v.size() / 2;
    return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Commands. Each writes run_config.json into its output directory first.
// ---------------------------------------------------------------------------

inline void write_run_config(const RunConfig& c, const fs::path& out) { write_json(to_json(c), out / "run_config.json"); }

/// synth: labelled synthetic records plus manifest.json.
inline void run_synth(const RunConfig& c) {
    const fs::path out = detail::require_out(c);
    write_run_config(c, out);
    SynthOptions opt;
    if (c.preset == "cpsc-mini") {
        opt = cpsc_mini_preset(c.seed);
    } else if (!c.preset.empty()) {
        throw ArgumentError("unknown preset '" + c.preset + "' (expected cpsc-mini)");
    } else {
        if (c.counts.size() < 2) throw ArgumentError("synth: --counts needs at least two classes");
        opt.per_class = c.counts;
        opt.min_len = c.min_len;
        opt.max_len = c.max_len;
        opt.seed = c.seed;
    }
    opt.noise_sigma = c.synth_noise;
    synthesize_dataset(opt, out);
}

/// clean: length normalisation; cleansed records, manifest.json, rejections.json.
inline void run_clean(const RunConfig& c) {
    const DatasetManifest in = detail::require_manifest(c.manifest, "--manifest");
    const fs::path out = detail::require_out(c);
    write_run_config(c, out);
    const auto records = detail::load_records_parallel(in);
    auto [clean, report] = cleanse_dataset(records, c.rank);
    DatasetManifest m = write_records(clean, out, in.seed, "cleansed from " + c.manifest);
    m.expected_shape = Shape{kLeads, kSamples};
    save_manifest(m, out / "manifest.json");
    write_json(to_json(report), out / "rejections.json");
}

/// rebalance: fused train/test splits, their libraries and pipeline_report.json.
inline void run_rebalance(const RunConfig& c) {
    const DatasetManifest in = detail::require_manifest(c.manifest, "--manifest");
    const fs::path out = detail::require_out(c);
    write_run_config(c, out);
    const auto records = detail::load_records_parallel(in);
    const PipelineResult r = run_pipeline(records, fusion_config(c), bior13());

    const std::string notes = "rebalanced from " + c.manifest;
    detail::write_samples(r.dataset.train, out, "train", "train.json", c.seed, notes);
    detail::write_samples(r.dataset.test, out, "test", "test.json", c.seed, notes);
    for (const auto& [k, libs] : r.libraries) {
        const fs::path dir = out / "libraries" / std::to_string(k);
        for (std::size_t q = 0; q < libs.train.prototypes.size(); ++q)
            save_record(libs.train.prototypes[q], dir / ("train_" + std::to_string(q) + ".csv"));
        save_record(libs.test.prototypes[0], dir / "test.csv");
    }
    write_json(to_json(r.report), out / "pipeline_report.json");
}

/// noise: one noisy copy of a test split per (kind, level) plus sweep.json.
inline void run_noise(const RunConfig& c) {
    std::string manifest = c.manifest;
    if (manifest.empty() && !c.dataset.empty()) manifest = (fs::path(c.dataset) / "test.json").string();
    const DatasetManifest in = detail::require_manifest(manifest, "--dataset or --manifest");
    const fs::path out = detail::require_out(c);
    write_run_config(c, out);
    const auto test = detail::load_samples(in);

    std::optional<Matrix> external;
    if (!c.noise_file.empty()) external = load_record(c.noise_file).leads;
    std::vector<NoiseKind> kinds;
    for (const auto& k : c.kinds) kinds.push_back(parse_noise_kind(k));

    const auto sets = sweep(test, kinds, c.levels, RngStream(c.seed), external);
    nlohmann::json index{{"source", manifest}, {"sets", nlohmann::json::array()}};
    for (const auto& [key, samples] : sets) {
        const std::string tag = to_string(key.kind) + "_snr" + detail::level_tag(key.snr_db);
        detail::write_samples(samples, out, tag, tag + ".json", c.seed,
                              "noise " + to_string(key.kind) + " at " + detail::level_tag(key.snr_db) + " dB");
        index["sets"].push_back({{"kind", to_string(key.kind)}, {"snr_db", key.snr_db}, {"manifest", tag + ".json"}});
    }
    write_json(index, out / "sweep.json");
}

/// train-eval: k-fold CV on the train split, test metrics and, when a sweep
/// directory is given, accuracy per (kind, level).
inline void run_train_eval(const RunConfig& c) {
    if (c.dataset.empty()) throw ArgumentError("--dataset is required");
    const fs::path ds(c.dataset);
    const DatasetManifest train_m = detail::require_manifest((ds / "train.json").string(), "--dataset");
    const DatasetManifest test_m = detail::require_manifest((ds / "test.json").string(), "--dataset");
    const fs::path out = detail::require_out(c);
    write_run_config(c, out);

    const NetConfig net = net_config(c);
    const auto classes = train_m.classes();
    const auto train_s = detail::load_samples(train_m);
    const LabeledFeatures train_f = featurize_samples(train_s, classes);
    const auto test_s = detail::load_samples(test_m);
    const LabeledFeatures test_f = featurize_samples(test_s, classes);

    if (c.folds >= 2) {
        const CrossValidation cv = cross_validate(train_f, net, c.folds);
        for (std::size_t f = 0; f < cv.folds.size(); ++f) {
            write_json(to_json(cv.folds[f].metrics), out / "cv" / ("fold_" + std::to_string(f) + ".json"));
            detail::write_text(curve_csv(cv.folds[f].curve), out / "cv" / ("fold_" + std::to_string(f) + "_curve.csv"));
        }
        write_json(to_json(cv), out / "cv" / "aggregate.json");
    }

    const Model model = train(train_f, net);
    detail::write_text(curve_csv(model.curve), out / "curve.csv");
    write_json(to_json(evaluate(model, test_f)), out / "test_metrics.json");

    if (!c.noise_dir.empty()) {
        const fs::path nd(c.noise_dir);
        const auto index = read_json(nd / "sweep.json");
        nlohmann::json results = nlohmann::json::array();
        std::map<double, std::vector<double>> by_level;
        try {
            for (const auto& set : index.at("sets")) {
                const DatasetManifest m = load_manifest(nd / set.at("manifest").get<std::string>());
                const auto noisy = detail::load_samples(m);
                const Metrics met = evaluate(model, featurize_samples(noisy, classes));
                const double level = set.at("snr_db").get<double>();
                by_level[level].push_back(met.accuracy);
                results.push_back({{"kind", set.at("kind")},
                                   {"snr_db", level},
                                   {"accuracy", met.accuracy},
                                   {"macro_f1", met.macro_f1}});
            }
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(std::string("sweep.json: ") + e.what());
        }
        nlohmann::json mean = nlohmann::json::array();
        for (const auto& [level, acc] : by_level) {
            double s = 0.0;
            for (double a : acc) s += a;
            mean.push_back({{"snr_db", level}, {"mean_accuracy", s / static_cast<double>(acc.size())}});
        }
        write_json({{"results", results}, {"mean_by_level", mean}}, out / "noise_sweep.json");
    }
}

/// Class with the fewest records (lowest index on ties).
inline ClassId minority_class(std::span<const EcgRecord> records) {
    std::map<int, std::size_t> counts;
    std::map<int, ClassId> ids;
    for (const auto& r : records) {
        ++counts[r.label.index];
        ids.emplace(r.label.index, r.label);
    }
    if (counts.empty()) throw ArgumentError("minority_class: no records");
    int best = counts.begin()->first;
    for (const auto& [k, n] : counts)
        if (n < counts[best]) best = k;
    return ids.at(best);
}

inline double class_recall(const Metrics& m, int label) {
    for (const auto& c : m.per_class)
        if (c.label.index == label) return c.recall;
    throw ArgumentError("class " + std::to_string(label) + " missing from metrics");
}

/// Stratified holdout: each class is shuffled (substream "holdout/<class>")
/// and its last ceil(fraction * n) records go to the test side, keeping at
/// least one record on each side.
inline std::pair<std::vector<EcgRecord>, std::vector<EcgRecord>> holdout_split(std::span<const EcgRecord> records,
                                                                               double fraction,
                                                                               const RngStream& rng) {
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < records.size(); ++i) by_class[records[i].label.index].push_back(i);
    std::pair<std::vector<EcgRecord>, std::vector<EcgRecord>> out;
    for (auto& [k, idx] : by_class) {
        if (idx.size() < 2)
            throw DataError("holdout: class " + std::to_string(k) + " needs at least two records");
        auto g = rng.child("holdout").child(static_cast<std::size_t>(k)).engine();
        shuffle(idx, g);
        auto n_test = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(idx.size()) - 1e-9));
        n_test = std::clamp<std::size_t>(n_test, 1, idx.size() - 1);
        for (std::size_t i = 0; i < idx.size(); ++i)
            (i + n_test < idx.size() ? out.first : out.second).push_back(records[idx[i]]);
    }
    return out;
}

/// compare: the three training arms over several seeds, reporting each arm's
/// minority recall and its median gain over the imbalanced arm.
inline void run_compare(const RunConfig& c) {
    const DatasetManifest in = detail::require_manifest(c.manifest, "--manifest");
    const fs::path out = detail::require_out(c);
    write_run_config(c, out);
    const auto records = detail::load_records_parallel(in);

    std::vector<EcgRecord> train_r, test_r;
    if (!c.test_manifest.empty()) {
        train_r = records;
        test_r = detail::load_records_parallel(detail::require_manifest(c.test_manifest, "--test-manifest"));
    } else {
        std::tie(train_r, test_r) = holdout_split(records, c.holdout, RngStream(c.seed));
    }
    const ClassId minority = minority_class(train_r);

    nlohmann::json runs = nlohmann::json::array();
    std::map<std::string, std::vector<double>> recall, gain, accuracy, macro_f1;
    std::vector<std::string> arm_order;
    std::string table = "seed,arm,train_size,accuracy,macro_f1,minority_recall,gain_vs_imbalanced\n";
    for (int s = 0; s < c.seeds; ++s) {
        RunConfig sc = c;
        sc.seed = c.seed + static_cast<std::uint64_t>(s);
        const ComparisonReport rep = compare_augmentation(train_r, test_r, fusion_config(sc), net_config(sc));
        const double base = class_recall(rep.arm("imbalanced").metrics, minority.index);
        for (const auto& a : rep.arms) {
            if (s == 0) arm_order.push_back(a.name);
            const double r = class_recall(a.metrics, minority.index);
            recall[a.name].push_back(r);
            gain[a.name].push_back(r - base);
            accuracy[a.name].push_back(a.metrics.accuracy);
            macro_f1[a.name].push_back(a.metrics.macro_f1);
            char line[256];
            std::snprintf(line, sizeof line, "%llu,%s,%zu,%.6f,%.6f,%.6f,%.6f\n",
                          static_cast<unsigned long long>(sc.seed), a.name.c_str(), a.train_size,
                          a.metrics.accuracy, a.metrics.macro_f1, r, r - base);
            table += line;
        }
        nlohmann::json run = to_json(rep);
        run["seed"] = sc.seed;
        runs.push_back(std::move(run));
    }
    nlohmann::json summary = nlohmann::json::array();
    for (const auto& name : arm_order)
        summary.push_back({{"arm", name},
                           {"median_minority_recall", detail::median(recall[name])},
                           {"median_gain_vs_imbalanced", detail::median(gain[name])},
                           {"median_accuracy", detail::median(accuracy[name])},
                           {"median_macro_f1", detail::median(macro_f1[name])}});
    write_json({{"minority_class", {{"label", minority.index}, {"name", minority.name}}},
                {"train_size", train_r.size()},
                {"test_size", test_r.size()},
                {"summary", summary},
                {"runs", runs}},
               out / "compare_report.json");
    detail::write_text(table, out / "arms.csv");
}

inline void run(const RunConfig& c) {
    validate(c);
    if (c.command == "synth") return run_synth(c);
    if (c.command == "clean") return run_clean(c);
    if (c.command == "rebalance") return run_rebalance(c);
    if (c.command == "noise") return run_noise(c);
    if (c.command == "train-eval") return run_train_eval(c);
    if (c.command == "compare") return run_compare(c);
    throw ArgumentError("unknown command '" + c.command + "'");
}

/// Maps an exception from run() onto the process exit code, printing it.
inline int report_failure(std::exception_ptr e) {
    try {
        std::rethrow_exception(e);
    } catch (const IoError& ex) {
        std::cerr << "error: " << ex.what() << '\n';
        return ex.is_output() ? kOutputError : kInputError;
    } catch (const InternalError& ex) {
        std::cerr << "internal error: " << ex.what() << '\n';
        return kInternalError;
    } catch (const TrainingError& ex) {
        std::cerr << "error: " << ex.what() << '\n';
        return kInputError;
    } catch (const Error& ex) {
        std::cerr << "error: " << ex.what() << '\n';
        return kInputError;
    } catch (const std::exception& ex) {
        std::cerr << "internal error: " << ex.what() << '\n';
        return kInternalError;
    }
}

}  // namespace ecgfuse::cli

#endif
