#ifndef ECGFUSE_NOISE_HPP
#define ECGFUSE_NOISE_HPP

#include "ecgfuse/core.hpp"
#include "ecgfuse/fusion.hpp"
#include "ecgfuse/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace ecgfuse {

enum class NoiseKind { BaselineWander, ElectrodeMotion, MuscleArtifact };

inline std::string to_string(NoiseKind k) {
    switch (k) {
        case NoiseKind::BaselineWander: return "bw";
        case NoiseKind::ElectrodeMotion: return "em";
        case NoiseKind::MuscleArtifact: return "ma";
    }
    return "?";
}

inline NoiseKind parse_noise_kind(std::string_view s) {
    if (s == "bw" || s == "BW") return NoiseKind::BaselineWander;
    if (s == "em" || s == "EM") return NoiseKind::ElectrodeMotion;
    if (s == "ma" || s == "MA") return NoiseKind::MuscleArtifact;
    throw ArgumentError("unknown noise kind '" + std::string(s) + "' (expected bw, em or ma)");
}

/// The twenty SNR levels of the robustness sweep, in dB.
inline const std::vector<double>& standard_snr_levels() {
    static const std::vector<double> levels{-27, -18, -12, -10, -9, -8, -7, -6, -5, -4,
                                            -3,  -2,  -1,  0,   1,  2,  3,  6,  9,  12};
    return levels;
}

inline constexpr double kMinSnrDb = -40.0;
inline constexpr double kMaxSnrDb = 40.0;

struct NoiseSpec {
    NoiseKind kind = NoiseKind::BaselineWander;
    double snr_db = 0.0;
    RngStream seed;
};

namespace detail {

inline void normalize_rows_rms(Matrix& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        const double rms = std::sqrt(m.row(r).squaredNorm() / static_cast<double>(m.cols()));
        if (rms > 0.0) m.row(r) /= rms;
    }
}

// Centred circular moving average of odd or even width.
inline Vector circular_box(const Vector& x, Eigen::Index width) {
    const Eigen::Index n = x.size();
    Vector out(n);
    const Eigen::Index lead = width / 2;
    double acc = 0.0;
    for (Eigen::Index k = 0; k < width; ++k) acc += x(wrap(k - lead, n));
    for (Eigen::Index t = 0; t < n; ++t) {
        out(t) = acc / static_cast<double>(width);
        acc += x(wrap(t + width - lead, n)) - x(wrap(t - lead, n));
    }
    return out;
}

inline Vector repeated_box(Vector x, Eigen::Index width, int passes) {
    for (int i = 0; i < passes; ++i) x = circular_box(x, width);
    return x;
}

// Raised-cosine window that is 1 inside [start, start + len) with ramps of
// `ramp` samples on both sides.
inline void add_burst(Vector& env, double start, double len, double ramp) {
    const Eigen::Index n = env.size();
    for (Eigen::Index t = 0; t < n; ++t) {
        const double u = static_cast<double>(t);
        double w = 0.0;
        if (u >= start && u < start + len) {
            w = 1.0;
        } else if (u >= start - ramp && u < start) {
            w = 0.5 - 0.5 * std::cos(M_PI * (u - (start - ramp)) / ramp);
        } else if (u >= start + len && u < start + len + ramp) {
            w = 0.5 + 0.5 * std::cos(M_PI * (u - (start + len)) / ramp);
        }
        env(t) = std::max(env(t), w);
    }
}

}  // namespace detail

/// Parametric noise with unit RMS per lead.
///   bw: 3-6 sinusoids between 0.05 and 0.5 Hz, random amplitude and phase
///   em: white Gaussian noise gated by 1-4 raised-cosine bursts of 0.2-1.5 s
///   ma: white Gaussian noise band-passed to roughly 5-50 Hz as the
///       difference of two cascaded moving averages (9 and 40 samples at
///       500 Hz, two passes each)
/// Each lead draws from its own substream.
inline Matrix generate_noise(NoiseKind kind, Eigen::Index rows, Eigen::Index cols, const RngStream& seed,
                             double fs = kSamplingRateHz) {
    if (rows < 1 || cols < 1) throw ArgumentError("generate_noise: empty shape");
    Matrix out(rows, cols);
    const RngStream base = seed.child(to_string(kind));
    for (Eigen::Index r = 0; r < rows; ++r) {
        auto g = base.child(static_cast<std::size_t>(r)).engine();
        Vector lead = Vector::Zero(cols);
        switch (kind) {
            case NoiseKind::BaselineWander: {
                const int tones = 3 + static_cast<int>(uniform_index(g, 4));
                for (int i = 0; i < tones; ++i) {
                    const double f = uniform(g, 0.05, 0.5);
                    const double a = uniform(g, 0.2, 1.0);
                    const double phi = uniform(g, 0.0, 2.0 * M_PI);
                    for (Eigen::Index t = 0; t < cols; ++t)
                        lead(t) += a * std::sin(2.0 * M_PI * f * static_cast<double>(t) / fs + phi);
                }
                break;
            }
            case NoiseKind::ElectrodeMotion: {
                Vector env = Vector::Zero(cols);
                const int bursts = 1 + static_cast<int>(uniform_index(g, 4));
                for (int i = 0; i < bursts; ++i) {
                    const double len = uniform(g, 0.2, 1.5) * fs;
                    const double start = uniform(g, 0.0, std::max(1.0, static_cast<double>(cols) - len));
                    detail::add_burst(env, start, len, 0.05 * fs);
                }
                for (Eigen::Index t = 0; t < cols; ++t) lead(t) = env(t) * normal(g);
                break;
            }
            case NoiseKind::MuscleArtifact: {
                Vector white(cols);
                for (Eigen::Index t = 0; t < cols; ++t) white(t) = normal(g);
                const auto scale = [&](double samples) {
                    return std::max<Eigen::Index>(1, std::lround(samples * fs / kSamplingRateHz));
                };
                lead = detail::repeated_box(white, scale(9), 2) - detail::repeated_box(white, scale(40), 2);
                break;
            }
        }
        out.row(r) = lead.transpose();
    }
    detail::normalize_rows_rms(out);
    return out;
}

/// Tiles (or crops) an externally supplied noise record to the requested
/// shape and normalises each lead to unit RMS.
inline Matrix fit_external_noise(const Matrix& noise, Eigen::Index rows, Eigen::Index cols) {
    if (noise.size() == 0) throw ArgumentError("external noise record is empty");
    Matrix out(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index t = 0; t < cols; ++t) out(r, t) = noise(r % noise.rows(), t % noise.cols());
    detail::normalize_rows_rms(out);
    if (out.squaredNorm() == 0.0) throw DataError("external noise record has zero power");
    return out;
}

inline double mean_power(const Matrix& x) { return x.squaredNorm() / static_cast<double>(x.size()); }

inline double snr_db(const Matrix& signal, const Matrix& noise) {
    return 10.0 * std::log10(mean_power(signal) / mean_power(noise));
}

/// Scale applied to `noise` so that signal power / scaled noise power hits
/// the requested SNR. Powers are mean squares over the whole matrix.
inline double noise_scale(const Matrix& signal, const Matrix& noise, double target_db) {
    const double ps = mean_power(signal);
    const double pn = mean_power(noise);
    if (!(ps > 0.0)) throw DataError("inject: signal has zero power; SNR is undefined");
    if (!(pn > 0.0)) throw DataError("inject: noise has zero power");
    return std::sqrt(ps / (pn * std::pow(10.0, target_db / 10.0)));
}

/// Returns x + alpha * noise at the requested SNR. The input is not modified.
/// `external` replaces the parametric generator when given.
inline EcgRecord inject(const EcgRecord& record, const NoiseSpec& spec,
                        const std::optional<Matrix>& external = std::nullopt) {
    if (!(spec.snr_db >= kMinSnrDb && spec.snr_db <= kMaxSnrDb))
        throw ArgumentError("inject: SNR " + std::to_string(spec.snr_db) + " dB outside [-40, 40]");
    const Matrix noise = external ? fit_external_noise(*external, record.rows(), record.cols())
                                  : generate_noise(spec.kind, record.rows(), record.cols(), spec.seed);
    const double alpha = noise_scale(record.leads, noise, spec.snr_db);
    EcgRecord out;
    out.leads = record.leads + alpha * noise;
    out.label = record.label;
    out.id = record.id;
    return out;
}

struct SweepKey {
    NoiseKind kind;
    double snr_db;
    friend auto operator<=>(const SweepKey&, const SweepKey&) = default;
};

/// One noisy copy of the test split per (kind, level). Record i reuses one
/// noise realization (substream "sweep/<kind>/<i>") at every level, scaled to
/// each SNR, so levels differ only in noise strength and the result does not
/// depend on sweep order or parallel schedule.
inline std::map<SweepKey, std::vector<Sample>> sweep(std::span<const Sample> test, std::span<const NoiseKind> kinds,
                                                     std::span<const double> levels, const RngStream& seed,
                                                     const std::optional<Matrix>& external = std::nullopt) {
    std::map<SweepKey, std::vector<Sample>> out;
    if (levels.empty() || kinds.empty()) return out;
    if (test.empty()) throw ArgumentError("sweep: empty test split");

    struct Job {
        SweepKey key;
        std::size_t record;
    };
    std::vector<Job> jobs;
    for (NoiseKind k : kinds)
        for (double level : levels) {
            auto& slot = out[{k, level}];
            slot.resize(test.size());
            for (std::size_t i = 0; i < test.size(); ++i) jobs.push_back({{k, level}, i});
        }
    parallel_for(jobs.size(), [&](std::size_t j) {
        const auto& job = jobs[j];
        const Sample& clean = test[job.record];
        NoiseSpec spec{job.key.kind, job.key.snr_db,
                       seed.child("sweep").child(to_string(job.key.kind)).child(job.record)};
        EcgRecord rec{clean.signal, clean.label, clean.id};
        Sample noisy = clean;
        noisy.signal = inject(rec, spec, external).leads;
        out.at(job.key)[job.record] = std::move(noisy);
    });
    return out;
}

}  // namespace ecgfuse

#endif
