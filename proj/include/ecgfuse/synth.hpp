#ifndef ECGFUSE_SYNTH_HPP
#define ECGFUSE_SYNTH_HPP

#include "ecgfuse/core.hpp"
#include "ecgfuse/parallel.hpp"
#include "ecgfuse/record_io.hpp"

#include <cstdio>
#include <string>
#include <vector>

namespace ecgfuse {

/// Controls the synthetic multi-lead generator.
///
/// Every record is a train of Gaussian pulses repeated at a class-specific
/// period with a class-specific width and per-lead gain pattern, plus white
/// Gaussian noise. Per-record jitter on rate, amplitude and phase makes
/// neighbouring classes overlap in feature space, so a classifier trained on
/// skewed counts visibly under-recalls the minority class, while the class
/// centroids stay far apart (nearest-centroid on raw records is near 100%).
struct SynthOptions {
    std::vector<std::size_t> per_class;
    Eigen::Index min_len = kSamples;
    Eigen::Index max_len = kSamples;
    Eigen::Index leads = kLeads;
    std::uint64_t seed = 0;
    std::vector<std::string> names;  // defaults to class<k>

    double base_period = 260.0;   // samples between pulses for class 0
    double period_step = 0.10;    // relative period increase per class
    double period_jitter = 0.06;  // relative, uniform
    double amplitude_jitter = 0.10;
    double noise_sigma = 0.80;
};

struct ClassShape {
    double period;
    double width;
    std::vector<double> gains;
};

inline ClassShape synth_class_shape(int k, const SynthOptions& opt) {
    ClassShape s;
    s.period = opt.base_period * (1.0 + opt.period_step * k);
    s.width = 6.0 + 2.0 * (k % 4);
    s.gains.resize(static_cast<std::size_t>(opt.leads));
    for (Eigen::Index l = 0; l < opt.leads; ++l) {
        const double phase = 2.0 * M_PI * static_cast<double>(l) / static_cast<double>(opt.leads);
        s.gains[static_cast<std::size_t>(l)] = 1.0 + 0.35 * std::sin(phase + 0.7 * k);
    }
    return s;
}

inline Matrix synth_signal(int k, Eigen::Index cols, const SynthOptions& opt, std::mt19937_64& g) {
    const ClassShape shape = synth_class_shape(k, opt);
    const double period = shape.period * (1.0 + uniform(g, -opt.period_jitter, opt.period_jitter));
    const double amplitude = 1.0 + opt.amplitude_jitter * normal(g);
    const double offset = uniform(g, 0.0, period);

    Vector pulse(cols);
    for (Eigen::Index t = 0; t < cols; ++t) {
        // distance to the nearest pulse centre
        const double u = std::fmod(static_cast<double>(t) - offset + 10.0 * period, period);
        const double d = std::min(u, period - u);
        pulse(t) = amplitude * std::exp(-0.5 * d * d / (shape.width * shape.width));
    }
    Matrix x(opt.leads, cols);
    for (Eigen::Index l = 0; l < opt.leads; ++l) {
        const double gain = shape.gains[static_cast<std::size_t>(l)];
        for (Eigen::Index t = 0; t < cols; ++t) x(l, t) = gain * pulse(t) + opt.noise_sigma * normal(g);
    }
    return x;
}

/// Generates labelled records in memory, class by class. Deterministic in
/// opt.seed; each record draws from its own substream.
inline std::vector<EcgRecord> synthesize_records(const SynthOptions& opt) {
    const std::size_t C = opt.per_class.size();
    if (C < 2) throw ArgumentError("synthesize: need at least two classes");
    if (!opt.names.empty() && opt.names.size() != C)
        throw ArgumentError("synthesize: " + std::to_string(opt.names.size()) + " names for " +
                            std::to_string(C) + " classes");
    if (opt.min_len < 1 || opt.max_len < opt.min_len) throw ArgumentError("synthesize: bad length range");
    if (opt.leads < 1) throw ArgumentError("synthesize: need at least one lead");
    for (auto n : opt.per_class)
        if (n < 1) throw ArgumentError("synthesize: every class needs at least one record");

    struct Job {
        int label;
        std::size_t ordinal;
    };
    std::vector<Job> jobs;
    for (std::size_t k = 0; k < C; ++k)
        for (std::size_t i = 0; i < opt.per_class[k]; ++i) jobs.push_back({static_cast<int>(k), jobs.size()});

    const RngStream root = RngStream(opt.seed).child("synth");
    std::vector<EcgRecord> out(jobs.size());
    parallel_for(jobs.size(), [&](std::size_t j) {
        auto g = root.child(j).engine();
        const auto span = static_cast<std::uint64_t>(opt.max_len - opt.min_len + 1);
        const Eigen::Index cols = opt.min_len + static_cast<Eigen::Index>(uniform_index(g, span));
        EcgRecord& r = out[j];
        const int k = jobs[j].label;
        r.label = {k, opt.names.empty() ? "class" + std::to_string(k) : opt.names[static_cast<std::size_t>(k)]};
        char id[32];
        std::snprintf(id, sizeof id, "r%06zu", jobs[j].ordinal);
        r.id = id;
        r.leads = synth_signal(k, cols, opt, g);
    });
    return out;
}

/// Writes a synthetic dataset to dir (records/ + manifest.json).
inline DatasetManifest synthesize_dataset(const SynthOptions& opt, const fs::path& dir) {
    std::string notes = "synthetic pulse-train dataset; counts";
    for (auto n : opt.per_class) notes += " " + std::to_string(n);
    return write_records(synthesize_records(opt), dir, opt.seed, notes);
}

/// Class totals of the nine-class CPSC-derived collection, in
/// cpsc_class_names() order.
inline std::vector<std::size_t> cpsc_class_totals() {
    return {9928, 1578, 788, 228, 1701, 642, 748, 826, 213};
}

/// Nine-class preset at 1/scale of the full collection, rounded to nearest.
inline SynthOptions cpsc_mini_preset(std::uint64_t seed, double scale = 50.0) {
    SynthOptions opt;
    for (auto n : cpsc_class_totals())
        opt.per_class.push_back(std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(n / scale))));
    opt.names = cpsc_class_names();
    opt.seed = seed;
    opt.min_len = 3000;
    opt.max_len = 6000;
    return opt;
}

}  // namespace ecgfuse

#endif
