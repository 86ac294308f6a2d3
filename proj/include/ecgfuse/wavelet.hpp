#ifndef ECGFUSE_WAVELET_HPP
#define ECGFUSE_WAVELET_HPP

#include "ecgfuse/core.hpp"

#include <array>
#include <cmath>
#include <span>
#include <string>
#include <vector>

namespace ecgfuse {

/// Two-channel analysis/synthesis filter quadruple.
///
/// Analysis convolves and keeps even outputs:
///     a[n] = sum_k x[(2n - k) mod N] dec_lo[k]
/// Synthesis upsamples and convolves with the reconstruction filters, undoing
/// the L-1 sample delay that the analysis/synthesis cascade introduces.
struct FilterBank {
    std::string name;
    std::vector<double> dec_lo;
    std::vector<double> dec_hi;
    std::vector<double> rec_lo;
    std::vector<double> rec_hi;

    std::size_t length() const noexcept { return dec_lo.size(); }
};

/// Biorthogonal 1.3 (spline, 1 vanishing moment on synthesis, 3 on analysis).
inline FilterBank bior13() {
    const double s = std::sqrt(0.5);
    const double a = s / 8.0;
    return FilterBank{
        "bior1.3",
        {-a, a, s, s, a, -a},
        {0.0, 0.0, -s, s, 0.0, 0.0},
        {0.0, 0.0, s, s, 0.0, 0.0},
        {-a, -a, s, -s, a, a},
    };
}

inline FilterBank haar() {
    const double s = std::sqrt(0.5);
    return FilterBank{"haar", {s, s}, {-s, s}, {s, s}, {s, -s}};
}

/// One-level 2-D decomposition. The first letter names the filter applied
/// along leads (rows), the second the filter along time (columns), so `hl`
/// is time-lowpass followed by lead-highpass.
struct SubbandSet {
    Matrix ll, lh, hl, hh;

    SubbandSet& operator+=(const SubbandSet& o) {
        ll += o.ll;
        lh += o.lh;
        hl += o.hl;
        hh += o.hh;
        return *this;
    }
    SubbandSet& operator*=(double w) {
        ll *= w;
        lh *= w;
        hl *= w;
        hh *= w;
        return *this;
    }
    double squared_norm() const {
        return ll.squaredNorm() + lh.squaredNorm() + hl.squaredNorm() + hh.squaredNorm();
    }
};

namespace detail {

inline void require_bank(const FilterBank& fb) {
    const auto L = fb.dec_lo.size();
    if (L == 0 || fb.dec_hi.size() != L || fb.rec_lo.size() != L || fb.rec_hi.size() != L)
        throw ArgumentError("filter bank '" + fb.name + "': all four filters need equal length");
}

inline Eigen::Index wrap(Eigen::Index i, Eigen::Index n) {
    i %= n;
    return i < 0 ? i + n : i;
}

// Convolve-and-downsample every row of x along its columns.
inline void analyze_cols(const Matrix& x, const FilterBank& fb, Matrix& lo, Matrix& hi) {
    const Eigen::Index rows = x.rows(), n = x.cols(), half = n / 2;
    const auto L = static_cast<Eigen::Index>(fb.length());
    lo.setZero(rows, half);
    hi.setZero(rows, half);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const double* in = x.row(r).data();
        double* out_lo = lo.row(r).data();
        double* out_hi = hi.row(r).data();
        for (Eigen::Index j = 0; j < half; ++j) {
            double sl = 0.0, sh = 0.0;
            for (Eigen::Index k = 0; k < L; ++k) {
                const double v = in[wrap(2 * j - k, n)];
                sl += v * fb.dec_lo[static_cast<std::size_t>(k)];
                sh += v * fb.dec_hi[static_cast<std::size_t>(k)];
            }
            out_lo[j] = sl;
            out_hi[j] = sh;
        }
    }
}

// Same along rows (the lead axis).
inline void analyze_rows(const Matrix& x, const FilterBank& fb, Matrix& lo, Matrix& hi) {
    const Eigen::Index m = x.rows(), cols = x.cols(), half = m / 2;
    const auto L = static_cast<Eigen::Index>(fb.length());
    lo.setZero(half, cols);
    hi.setZero(half, cols);
    for (Eigen::Index i = 0; i < half; ++i) {
        for (Eigen::Index k = 0; k < L; ++k) {
            const auto src = x.row(wrap(2 * i - k, m));
            lo.row(i) += fb.dec_lo[static_cast<std::size_t>(k)] * src;
            hi.row(i) += fb.dec_hi[static_cast<std::size_t>(k)] * src;
        }
    }
}

inline Matrix synthesize_cols(const Matrix& lo, const Matrix& hi, const FilterBank& fb) {
    const Eigen::Index rows = lo.rows(), half = lo.cols(), n = 2 * half;
    const auto L = static_cast<Eigen::Index>(fb.length());
    Matrix y = Matrix::Zero(rows, n);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const double* a = lo.row(r).data();
        const double* d = hi.row(r).data();
        double* out = y.row(r).data();
        for (Eigen::Index j = 0; j < half; ++j) {
            for (Eigen::Index k = 0; k < L; ++k) {
                out[wrap(2 * j + k - (L - 1), n)] += a[j] * fb.rec_lo[static_cast<std::size_t>(k)] +
                                                     d[j] * fb.rec_hi[static_cast<std::size_t>(k)];
            }
        }
    }
    return y;
}

inline Matrix synthesize_rows(const Matrix& lo, const Matrix& hi, const FilterBank& fb) {
    const Eigen::Index half = lo.rows(), cols = lo.cols(), m = 2 * half;
    const auto L = static_cast<Eigen::Index>(fb.length());
    Matrix y = Matrix::Zero(m, cols);
    for (Eigen::Index i = 0; i < half; ++i) {
        for (Eigen::Index k = 0; k < L; ++k) {
            y.row(wrap(2 * i + k - (L - 1), m)) +=
                fb.rec_lo[static_cast<std::size_t>(k)] * lo.row(i) +
                fb.rec_hi[static_cast<std::size_t>(k)] * hi.row(i);
        }
    }
    return y;
}

}  // namespace detail

/// Single-level separable 2-D analysis with periodic extension: filter and
/// decimate along time, then along leads. Both dimensions must be even.
inline SubbandSet analyze_2d(const Matrix& x, const FilterBank& fb) {
    detail::require_bank(fb);
    if (x.rows() == 0 || x.cols() == 0 || x.rows() % 2 != 0 || x.cols() % 2 != 0) {
        throw ArgumentError("analyze_2d: shape (" + std::to_string(x.rows()) + ", " +
                            std::to_string(x.cols()) +
                            ") must have even, non-zero dimensions; pad the signal first");
    }
    Matrix v_lo, v_hi;
    detail::analyze_cols(x, fb, v_lo, v_hi);
    SubbandSet s;
    detail::analyze_rows(v_lo, fb, s.ll, s.hl);
    detail::analyze_rows(v_hi, fb, s.lh, s.hh);
    return s;
}

/// Inverse of analyze_2d for the same filter bank.
inline Matrix synthesize_2d(const SubbandSet& s, const FilterBank& fb) {
    detail::require_bank(fb);
    const auto same = [&](const Matrix& m) {
        return m.rows() == s.ll.rows() && m.cols() == s.ll.cols();
    };
    if (!same(s.lh) || !same(s.hl) || !same(s.hh) || s.ll.size() == 0)
        throw ArgumentError("synthesize_2d: subband shapes differ");
    const Matrix v_lo = detail::synthesize_rows(s.ll, s.hl, fb);
    const Matrix v_hi = detail::synthesize_rows(s.lh, s.hh, fb);
    return detail::synthesize_cols(v_lo, v_hi, fb);
}

/// One-level analysis along time only, lead by lead. Returns {low, high},
/// each rows x cols/2.
inline std::pair<Matrix, Matrix> analyze_time(const Matrix& x, const FilterBank& fb) {
    detail::require_bank(fb);
    if (x.cols() == 0 || x.cols() % 2 != 0)
        throw ArgumentError("analyze_time: column count must be even and non-zero");
    std::pair<Matrix, Matrix> out;
    detail::analyze_cols(x, fb, out.first, out.second);
    return out;
}

inline Matrix synthesize_time(const Matrix& lo, const Matrix& hi, const FilterBank& fb) {
    detail::require_bank(fb);
    if (lo.rows() != hi.rows() || lo.cols() != hi.cols())
        throw ArgumentError("synthesize_time: band shapes differ");
    return detail::synthesize_cols(lo, hi, fb);
}

/// Weighted average of signals in the wavelet domain:
///     synthesize_2d(sum_i w_i * analyze_2d(x_i))
/// Accepts pointers so callers can fuse subsets without copying.
inline Matrix fuse_signals(std::span<const Matrix* const> xs, std::span<const double> weights,
                           const FilterBank& fb) {
    if (xs.size() < 2) throw ArgumentError("fuse_signals: need at least two signals");
    if (weights.size() != xs.size())
        throw ArgumentError("fuse_signals: " + std::to_string(weights.size()) + " weights for " +
                            std::to_string(xs.size()) + " signals");
    double total = 0.0;
    for (double w : weights) total += w;
    if (std::abs(total - 1.0) > 1e-9)
        throw ArgumentError("fuse_signals: weights sum to " + std::to_string(total) + ", not 1");
    const Eigen::Index rows = xs[0]->rows(), cols = xs[0]->cols();
    for (const Matrix* x : xs)
        if (x->rows() != rows || x->cols() != cols)
            throw ArgumentError("fuse_signals: signals differ in shape");

    SubbandSet acc = analyze_2d(*xs[0], fb);
    acc *= weights[0];
    for (std::size_t i = 1; i < xs.size(); ++i) {
        SubbandSet s = analyze_2d(*xs[i], fb);
        s *= weights[i];
        acc += s;
    }
    return synthesize_2d(acc, fb);
}

inline Matrix fuse_signals(std::span<const Matrix> xs, std::span<const double> weights,
                           const FilterBank& fb) {
    std::vector<const Matrix*> ptrs;
    ptrs.reserve(xs.size());
    for (const auto& x : xs) ptrs.push_back(&x);
    return fuse_signals(std::span<const Matrix* const>(ptrs), weights, fb);
}

/// Equal weights 1/K.
inline Matrix fuse_signals(std::span<const Matrix> xs, const FilterBank& fb) {
    const std::vector<double> w(xs.size(), xs.empty() ? 0.0 : 1.0 / static_cast<double>(xs.size()));
    return fuse_signals(xs, w, fb);
}

inline Matrix fuse_signals(std::span<const Matrix* const> xs, const FilterBank& fb) {
    const std::vector<double> w(xs.size(), xs.empty() ? 0.0 : 1.0 / static_cast<double>(xs.size()));
    return fuse_signals(xs, w, fb);
}

}  // namespace ecgfuse

#endif
