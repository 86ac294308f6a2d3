// ecgfuse command-line entry point.
//
// Precedence for every setting: explicit flag > --config file > default.

#include "ecgfuse/cli.hpp"
#include "ecgfuse/parallel.hpp"

#include <CLI11.hpp>

#include <functional>
#include <iostream>

namespace {

using ecgfuse::cli::RunConfig;

struct Binding {
    CLI::Option* option;
    std::function<void(RunConfig&, const RunConfig&)> copy;
};

#define ECGFUSE_COPY(field) [](RunConfig& dst, const RunConfig& src) { dst.field = src.field; }

class Parser {
public:
    Parser() : app_("Wavelet-fusion rebalancing and evaluation of multi-lead ECG records", "ecgfuse") {
        app_.require_subcommand(1);
        app_.add_option("--config", config_path_, "JSON file with settings (flags take precedence)");
        app_.add_option("--jobs", jobs_, "worker threads (0 = all cores)")->check(CLI::NonNegativeNumber);

        auto* synth = sub("synth", "generate a labelled synthetic dataset");
        bind(synth->add_option("--counts", flags_.counts, "records per class")->delimiter(','), ECGFUSE_COPY(counts));
        synth->add_option("--classes", classes_, "number of classes (must match --counts)");
        bind(synth->add_option("--min-len", flags_.min_len, "shortest record in samples"), ECGFUSE_COPY(min_len));
        bind(synth->add_option("--max-len", flags_.max_len, "longest record in samples"), ECGFUSE_COPY(max_len));
        bind(synth->add_option("--synth-noise", flags_.synth_noise, "white noise sigma"), ECGFUSE_COPY(synth_noise));
        bind(synth->add_option("--preset", flags_.preset, "named class mix (cpsc-mini)"), ECGFUSE_COPY(preset));
        common(synth, true);

        auto* clean = sub("clean", "reject short records and normalise length to 12 x 5000");
        bind(clean->add_option("--manifest", flags_.manifest, "input manifest"), ECGFUSE_COPY(manifest));
        bind(clean->add_option("--rank", flags_.rank, "PCA rank used for padding"), ECGFUSE_COPY(rank));
        common(clean, false);

        auto* reb = sub("rebalance", "fuse records into class-balanced train/test splits");
        bind(reb->add_option("--manifest", flags_.manifest, "cleansed manifest"), ECGFUSE_COPY(manifest));
        bind(reb->add_option("--delta", delta_, "fraction of the n originals that are paired, in (0, 1]"),
             [](RunConfig& dst, const RunConfig& src) { dst.delta = src.delta; });
        bind(reb->add_option("--p", flags_.p, "prototypes per class"), ECGFUSE_COPY(p));
        bind(reb->add_option("--split", flags_.split, "train fraction of the originals"), ECGFUSE_COPY(split));
        common(reb, true);

        auto* noise = sub("noise", "inject bw/em/ma noise into a test split at fixed SNRs");
        bind(noise->add_option("--dataset", flags_.dataset, "rebalanced dataset directory (uses test.json)"),
             ECGFUSE_COPY(dataset));
        bind(noise->add_option("--manifest", flags_.manifest, "explicit manifest instead of --dataset"),
             ECGFUSE_COPY(manifest));
        bind(noise->add_option("--noise,--kind", flags_.kinds, "noise kinds: bw, em, ma")->delimiter(','), ECGFUSE_COPY(kinds));
        bind(noise->add_option("--snr-db", flags_.levels, "SNR levels in dB (default: the 20-level sweep)")->delimiter(','),
             ECGFUSE_COPY(levels));
        bind(noise->add_option("--noise-file", flags_.noise_file, "external noise record CSV"),
             ECGFUSE_COPY(noise_file));
        common(noise, true);

        auto* te = sub("train-eval", "cross-validate, train and test the classifier");
        bind(te->add_option("--dataset", flags_.dataset, "rebalanced dataset directory"), ECGFUSE_COPY(dataset));
        bind(te->add_option("--noise-dir", flags_.noise_dir, "output of the noise command to evaluate on"),
             ECGFUSE_COPY(noise_dir));
        bind(te->add_option("--folds", flags_.folds, "cross-validation folds (0 skips)"), ECGFUSE_COPY(folds));
        network(te);
        common(te, true);

        auto* cmp = sub("compare", "imbalanced vs oversampled vs rebalanced training");
        bind(cmp->add_option("--manifest", flags_.manifest, "cleansed training pool"), ECGFUSE_COPY(manifest));
        bind(cmp->add_option("--test-manifest", flags_.test_manifest, "separate test records (else a holdout)"),
             ECGFUSE_COPY(test_manifest));
        bind(cmp->add_option("--holdout", flags_.holdout, "test fraction when no --test-manifest"),
             ECGFUSE_COPY(holdout));
        bind(cmp->add_option("--seeds", flags_.seeds, "consecutive seeds to run"), ECGFUSE_COPY(seeds));
        bind(cmp->add_option("--delta", delta_, "pairing fraction"),
             [](RunConfig& dst, const RunConfig& src) { dst.delta = src.delta; });
        bind(cmp->add_option("--p", flags_.p, "prototypes per class"), ECGFUSE_COPY(p));
        network(cmp);
        common(cmp, true);
    }

    int parse(int argc, char** argv, RunConfig& out) {
        try {
            app_.parse(argc, argv);
        } catch (const CLI::ParseError& e) {
            const int code = app_.exit(e);
            return code == 0 ? -1 : ecgfuse::cli::kInputError;  // -1: help printed, stop successfully
        }
        if (classes_ && *classes_ != flags_.counts.size())
            throw ecgfuse::ArgumentError("--classes " + std::to_string(*classes_) + " does not match " +
                                         std::to_string(flags_.counts.size()) + " --counts values");
        if (delta_) flags_.delta = *delta_;

        out = RunConfig{};
        if (!config_path_.empty()) ecgfuse::cli::apply_json(out, ecgfuse::read_json(config_path_));
        for (const auto& b : bindings_)
            if (b.option->count() > 0) b.copy(out, flags_);
        for (auto* s : app_.get_subcommands()) out.command = s->get_name();
        ecgfuse::set_max_jobs(jobs_);
        return 0;
    }

private:
    CLI::App* sub(const char* name, const char* help) { return app_.add_subcommand(name, help); }

    void bind(CLI::Option* opt, std::function<void(RunConfig&, const RunConfig&)> copy) {
        bindings_.push_back({opt, std::move(copy)});
    }

    void common(CLI::App* app, bool seeded) {
        bind(app->add_option("--out", flags_.out, "output directory"), ECGFUSE_COPY(out));
        if (seeded) bind(app->add_option("--seed", flags_.seed, "random seed"), ECGFUSE_COPY(seed));
    }

    void network(CLI::App* app) {
        bind(app->add_option("--hidden", flags_.hidden, "hidden layer widths")->delimiter(','), ECGFUSE_COPY(hidden));
        bind(app->add_option("--lr", flags_.learning_rate, "Adam learning rate"), ECGFUSE_COPY(learning_rate));
        bind(app->add_option("--batch-size", flags_.batch_size, "mini-batch size"), ECGFUSE_COPY(batch_size));
        bind(app->add_option("--epochs", flags_.epochs, "training epochs"), ECGFUSE_COPY(epochs));
        bind(app->add_option("--steps-per-epoch", flags_.steps_per_epoch, "updates per epoch (0 = one pass)"),
             ECGFUSE_COPY(steps_per_epoch));
        bind(app->add_option("--loss", flags_.loss, "cross-entropy or squared-error"), ECGFUSE_COPY(loss));
    }

    CLI::App app_;
    RunConfig flags_;
    std::vector<Binding> bindings_;
    std::string config_path_;
    unsigned jobs_ = 0;
    std::optional<double> delta_;
    std::optional<std::size_t> classes_;
};

}  // namespace

int main(int argc, char** argv) {
    try {
        Parser parser;
        RunConfig cfg;
        const int code = parser.parse(argc, argv, cfg);
        if (code == -1) return 0;
        if (code != 0) return code;
        ecgfuse::cli::run(cfg);
        return ecgfuse::cli::kOk;
    } catch (...) {
        return ecgfuse::cli::report_failure(std::current_exception());
    }
}
