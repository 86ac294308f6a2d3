// Acceptance runner: prints one PASS/FAIL line per criterion and exits
// non-zero if any fails.

#include "ecgfuse/cleanse.hpp"
#include "ecgfuse/cli.hpp"
#include "ecgfuse/evaluation.hpp"
#include "ecgfuse/features.hpp"
#include "ecgfuse/fusion.hpp"
#include "ecgfuse/network.hpp"
#include "ecgfuse/noise.hpp"
#include "ecgfuse/synth.hpp"
#include "ecgfuse/wavelet.hpp"

#include "helpers.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <sys/wait.h>

using namespace ecgfuse;
using testing_util::max_abs;
using testing_util::random_matrix;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// 1 ------------------------------------------------------------------------
Outcome perfect_reconstruction() {
    const auto t0 = std::chrono::steady_clock::now();
    const FilterBank fb = bior13();
    double worst = 0.0;
    for (std::uint64_t i = 0; i < 1000; ++i) {
        // vary the scale so both tiny and large amplitudes are covered
        const double scale = std::pow(10.0, static_cast<double>(i % 13) - 6.0);
        const Matrix x = scale * random_matrix(12, 5000, i, "pr");
        const Matrix y = synthesize_2d(analyze_2d(x, fb), fb);
        worst = std::max(worst, max_abs(y - x) / std::max(1.0, max_abs(x)));
    }
    const double secs = seconds_since(t0);
    return {worst <= 1e-9 && secs <= 60.0, fmt("worst relative error %.3g, %.1f s single-threaded", worst, secs)};
}

// 2 ------------------------------------------------------------------------
Outcome fusion_average() {
    const FilterBank fb = bior13();
    auto g = RngStream(2, "fusion-groups").engine();
    const int sizes[3] = {2, 3, 5};
    double worst = 0.0;
    for (int i = 0; i < 500; ++i) {
        const int k = sizes[uniform_index(g, 3)];
        std::vector<Matrix> xs;
        Matrix mean = Matrix::Zero(12, 5000);
        for (int j = 0; j < k; ++j) {
            xs.push_back(random_matrix(12, 5000, static_cast<std::uint64_t>(i * 10 + j), "fusion"));
            mean += xs.back();
        }
        mean /= k;
        worst = std::max(worst, max_abs(fuse_signals(std::span<const Matrix>(xs), fb) - mean));
    }
    return {worst <= 1e-9, fmt("worst |fused - mean| %.3g over 500 groups", worst)};
}

// 3 ------------------------------------------------------------------------
Outcome cleanse_conformance() {
    const Eigen::Index col_cases[] = {1, 100, 2499, 2500, 2501, 3000, 4999, 5000, 5001, 6000, 9000};
    const Eigen::Index row_cases[] = {1, 11, 12, 13};
    int checked = 0, bad = 0;
    double worst_span = 0.0;
    std::uint64_t seed = 0;
    for (Eigen::Index rows : row_cases)
        for (Eigen::Index cols : col_cases)
            for (int rep = 0; rep < 3; ++rep) {
                ++checked;
                // correlated leads: a few sources mixed, plus noise
                const Matrix src = random_matrix(3, cols, ++seed, "src");
                const Matrix x = random_matrix(rows, 3, seed, "mix") * src + 0.05 * random_matrix(rows, cols, seed, "n");
                const auto out = cleanse_record({x, {0, "c"}, "rec"}, 5);
                const bool expect_reject = rows != 12 || cols <= 2500;
                if (expect_reject != std::holds_alternative<Rejection>(out)) {
                    ++bad;
                    continue;
                }
                if (expect_reject) continue;
                const Matrix& y = std::get<EcgRecord>(out).leads;
                if (y.rows() != 12 || y.cols() != 5000) {
                    ++bad;
                    continue;
                }
                if (cols >= 5000) {
                    if (!(y == x.leftCols(5000))) ++bad;
                    continue;
                }
                if (!(y.leftCols(cols) == x)) ++bad;
                const PcaModel m = fit_pca(x, 5);
                const Eigen::MatrixXd c = y.rightCols(5000 - cols).colwise() - m.mean;
                const Eigen::MatrixXd resid = c - m.components * (m.components.transpose() * c);
                const double rel = resid.norm() / std::max(c.norm(), 1e-300);
                worst_span = std::max(worst_span, rel);
                if (rel > 1e-6) ++bad;
            }
    return {bad == 0, fmt("%d records, %d violations, worst off-span ratio %.3g", checked, bad, worst_span)};
}

// 4 ------------------------------------------------------------------------
Outcome count_algebra() {
    auto g = RngStream(4, "configs").engine();
    int configs = 0, bad = 0;
    std::string first_failure;
    while (configs < 200) {
        const auto n = static_cast<std::size_t>(4 + uniform_index(g, 297));
        const double delta = uniform(g, 0.0, 1.0) < 0.2 ? 1.0 : uniform(g, 0.05, 1.0);
        const auto s = static_cast<std::size_t>(floor_product(static_cast<double>(n), delta));
        if (s < 2) continue;
        const std::size_t pairs = s * (s - 1) / 2;
        const int p = 1 + static_cast<int>(uniform_index(g, std::min<std::size_t>(pairs, 10)));
        ++configs;

        // tiny 2 x 4 records keep the run short; the counting does not depend on shape
        std::vector<EcgRecord> recs;
        const std::size_t extra = uniform_index(g, 5);
        for (int k = 0; k < 2; ++k)
            for (std::size_t i = 0; i < n + (k ? extra : 0); ++i)
                recs.push_back({random_matrix(2, 4, recs.size() + 17 * static_cast<std::size_t>(configs), "tiny"),
                                {k, "c" + std::to_string(k)},
                                "r" + std::to_string(recs.size())});
        FusionConfig cfg;
        cfg.delta = delta;
        cfg.p = p;
        cfg.seed = static_cast<std::uint64_t>(configs);
        const PipelineResult r = run_pipeline(recs, cfg, bior13());

        const std::size_t m = pairs / static_cast<std::size_t>(p);
        const std::size_t n_train = static_cast<std::size_t>(floor_product(static_cast<double>(n), 0.8));
        bool ok = r.report.n == n && r.report.s == s && r.report.fused == pairs && r.report.m == m &&
                  r.report.leftover == pairs - m * static_cast<std::size_t>(p);
        for (const auto& [k, libs] : r.libraries)
            ok = ok && libs.train.prototypes.size() == static_cast<std::size_t>(p) && libs.train.group_size == m &&
                 libs.test.prototypes.size() == 1;
        std::map<int, std::size_t> tr, te;
        for (const auto& x : r.dataset.train) ++tr[x.label.index];
        for (const auto& x : r.dataset.test) ++te[x.label.index];
        for (int k = 0; k < 2; ++k)
            ok = ok && tr[k] == n_train * static_cast<std::size_t>(p) && te[k] == n - n_train;

        // the pair list itself: s(s-1)/2 distinct unordered pairs over s distinct indices
        const auto pl = enumerate_pairs(n, delta, RngStream(cfg.seed).child("pairs").child(std::size_t{0}));
        std::set<std::pair<std::size_t, std::size_t>> uniq;
        std::set<std::size_t> used;
        for (auto [a, b] : pl) {
            ok = ok && a != b && a < n && b < n;
            uniq.insert({std::min(a, b), std::max(a, b)});
            used.insert(a);
            used.insert(b);
        }
        ok = ok && uniq.size() == pairs && pl.size() == pairs && used.size() == s;
        if (!ok) {
            ++bad;
            if (first_failure.empty()) first_failure = fmt(" first failure n=%zu delta=%.3f p=%d", n, delta, p);
        }
    }
    // the reference instance
    const std::size_t paper_pairs = enumerate_pairs(213, 1.0, RngStream(0)).size();
    const bool inst = paper_pairs == 22578;
    return {bad == 0 && inst, fmt("%d configs, %d mismatches; n=213 at delta=1 gives %zu pairs%s", configs, bad,
                                  paper_pairs, first_failure.c_str())};
}

// 5 ------------------------------------------------------------------------
Outcome gradient_checks() {
    struct Arch {
        std::vector<int> widths;
        Loss loss;
    };
    // default network on 144 features for the 3- and 9-class setups, the
    // deeper variants exercised by the CLI tests, and the squared loss
    const std::vector<Arch> archs{{{144, 64, 3}, Loss::CrossEntropy},   {{144, 64, 9}, Loss::CrossEntropy},
                                  {{144, 8, 4, 2}, Loss::CrossEntropy}, {{144, 32, 16, 3}, Loss::CrossEntropy},
                                  {{144, 64, 3}, Loss::SquaredError},   {{144, 3}, Loss::CrossEntropy}};
    double worst = 0.0;
    for (std::size_t i = 0; i < archs.size(); ++i) {
        const Mlp net(archs[i].widths, RngStream(i, "gc"));
        const Eigen::MatrixXd x = random_matrix(144, 8, i, "gc-x");
        auto g = RngStream(i, "gc-y").engine();
        std::vector<int> y(8);
        for (auto& v : y) v = static_cast<int>(uniform_index(g, static_cast<std::size_t>(archs[i].widths.back())));
        worst = std::max(worst, gradient_check(net, x, y, archs[i].loss).max_relative_error);
    }
    return {worst <= 1e-4, fmt("%zu architectures, worst relative error %.3g", archs.size(), worst)};
}

// 6 ------------------------------------------------------------------------
Outcome snr_calibration() {
    SynthOptions opt;
    opt.per_class = {25, 25};
    opt.seed = 6;
    const auto recs = synthesize_records(opt);
    double worst = 0.0;
    int cases = 0;
    for (NoiseKind k : {NoiseKind::BaselineWander, NoiseKind::ElectrodeMotion, NoiseKind::MuscleArtifact})
        for (double db : standard_snr_levels()) {
            std::vector<double> err(recs.size());
            parallel_for(recs.size(), [&](std::size_t i) {
                const EcgRecord y = inject(recs[i], {k, db, RngStream(i, "snr")});
                const Matrix noise = y.leads - recs[i].leads;
                const double measured =
                    10.0 * std::log10(recs[i].leads.squaredNorm() / std::max(noise.squaredNorm(), 1e-300));
                err[i] = std::abs(measured - db);
            });
            for (double e : err) worst = std::max(worst, e);
            cases += static_cast<int>(recs.size());
        }
    return {worst <= 0.1, fmt("%d injections, worst |measured - requested| %.3g dB", cases, worst)};
}

// 7 ------------------------------------------------------------------------
// The criterion asks for >= 0.10. Measured medians at these settings were
// 0.23 to 0.27, so a regression bound of 0.20 is frozen on top of it.
constexpr double kCriterionGain = 0.10;
constexpr double kFrozenGain = 0.20;

Outcome augmentation_benefit() {
    std::vector<double> gains;
    std::string per_seed;
    for (std::uint64_t s = 0; s < 5; ++s) {
        SynthOptions train_opt;
        train_opt.per_class = {20, 200, 200};
        train_opt.seed = s;
        SynthOptions test_opt;
        test_opt.per_class = {60, 60, 60};
        test_opt.seed = 1000 + s;
        const auto train_r = synthesize_records(train_opt);
        const auto test_r = synthesize_records(test_opt);
        FusionConfig fusion;
        fusion.seed = s;
        NetConfig net;
        net.epochs = 30;
        net.steps_per_epoch = 50;
        net.seed = s;
        const ComparisonReport rep = compare_augmentation(train_r, test_r, fusion, net);
        const double base = cli::class_recall(rep.arm("imbalanced").metrics, 0);
        const double reb = cli::class_recall(rep.arm("rebalanced").metrics, 0);
        gains.push_back(reb - base);
        per_seed += fmt(" %.3f", reb - base);
    }
    const double med = cli::detail::median(gains);
    return {med >= kCriterionGain && med >= kFrozenGain,
            fmt("median minority-recall gain %.3f (need >= %.2f, frozen bound %.2f); per seed:%s", med,
                kCriterionGain, kFrozenGain, per_seed.c_str())};
}

// 8 ------------------------------------------------------------------------
Outcome noise_monotonicity() {
    SynthOptions opt;
    opt.per_class = {100, 150, 150};
    opt.seed = 8;
    const auto recs = synthesize_records(opt);
    FusionConfig fusion;
    fusion.delta = 0.3;
    fusion.p = 4;
    fusion.seed = 8;
    const PipelineResult piped = run_pipeline(recs, fusion, bior13());
    const LabeledFeatures train_f = featurize_samples(piped.dataset.train);
    NetConfig net;
    net.seed = 8;
    const Model model = train(train_f, net);

    const std::vector<NoiseKind> kinds{NoiseKind::BaselineWander, NoiseKind::ElectrodeMotion,
                                       NoiseKind::MuscleArtifact};
    const auto sets = sweep(piped.dataset.test, kinds, standard_snr_levels(), RngStream(8));
    std::map<double, double> mean;  // level -> mean accuracy over kinds
    for (const auto& [key, samples] : sets)
        mean[key.snr_db] += evaluate(model, featurize_samples(samples, train_f.classes)).accuracy / 3.0;

    // walk from +12 dB down to -27 dB; accuracy may rise by at most 0.02
    double worst_rise = -1.0;
    std::string curve;
    double prev = 0.0;
    bool first = true;
    for (auto it = mean.rbegin(); it != mean.rend(); ++it) {
        if (!first) worst_rise = std::max(worst_rise, it->second - prev);
        prev = it->second;
        first = false;
        curve += fmt(" %g:%.3f", it->first, it->second);
    }
    return {worst_rise <= 0.02, fmt("largest step-up %.4f; accuracy by dB:%s", worst_rise, curve.c_str())};
}

// 9 ------------------------------------------------------------------------
std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = slurp(e.path());
    return files;
}

Outcome cli_determinism() {
    const fs::path root = fs::temp_directory_path() / "ecgfuse_acceptance_cli";
    fs::remove_all(root);
    fs::create_directories(root);
    const auto q = [](const fs::path& p) { return "'" + p.string() + "'"; };
    struct Step {
        std::string name, args;
    };
    const std::vector<Step> steps{
        {"synth", "synth --counts 8,12 --min-len 3000 --max-len 6000 --seed 9"},
        {"clean", "clean --manifest " + q(root / "synth/manifest.json")},
        {"rebalance", "rebalance --manifest " + q(root / "clean/manifest.json") + " --p 2 --seed 9"},
        {"noise", "noise --dataset " + q(root / "rebalance") + " --kind bw,em,ma --snr-db 12,0,-27 --seed 9"},
        {"train-eval", "train-eval --dataset " + q(root / "rebalance") + " --noise-dir " + q(root / "noise") +
                           " --folds 3 --epochs 5 --seed 9"},
        {"compare", "compare --manifest " + q(root / "clean/manifest.json") + " --seeds 2 --p 2 --epochs 3 --seed 9"},
    };
    std::string detail;
    bool ok = true;
    std::size_t files = 0;
    for (const auto& st : steps) {
        const fs::path out = root / st.name;
        std::map<std::string, std::string> runs[2];
        for (int rep = 0; rep < 2; ++rep) {
            fs::remove_all(out);
            // the second run uses a different worker count on purpose
            const std::string cmd = std::string(ECGFUSE_CLI_PATH) + (rep ? " --jobs 1 " : " --jobs 0 ") + st.args +
                                    " --out " + q(out) + " >" + (root / "log.txt").string() + " 2>&1";
            const int status = std::system(cmd.c_str());
            if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
                ok = false;
                detail += " " + st.name + " failed to run;";
                break;
            }
            runs[rep] = snapshot(out);
        }
        if (runs[0].empty() || runs[0] != runs[1]) {
            ok = false;
            detail += " " + st.name + " differs;";
        }
        files += runs[0].size();
    }
    return {ok, fmt("6 commands run twice, %zu files compared%s", files, detail.c_str())};
}

}  // namespace

int main() {
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
        {"perfect reconstruction", perfect_reconstruction},
        {"fusion equals coefficient average", fusion_average},
        {"cleansing conformance", cleanse_conformance},
        {"count algebra", count_algebra},
        {"gradient check", gradient_checks},
        {"SNR calibration", snr_calibration},
        {"augmentation benefit", augmentation_benefit},
        {"noise monotonicity", noise_monotonicity},
        {"CLI determinism", cli_determinism},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            if (i == 0) set_max_jobs(1);
            o = criteria[i].second();
            set_max_jobs(0);
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failures += o.pass ? 0 : 1;
        std::printf("%s %zu %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str(),
                    seconds_since(t0));
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
    return failures == 0 ? 0 : 1;
}
