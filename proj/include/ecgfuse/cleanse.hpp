#ifndef ECGFUSE_CLEANSE_HPP
#define ECGFUSE_CLEANSE_HPP

#include "ecgfuse/core.hpp"
#include "ecgfuse/parallel.hpp"
#include "ecgfuse/record_io.hpp"

#include <Eigen/Eigenvalues>

#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace ecgfuse {

/// Principal axes of a record, treating each time sample as one
/// lead-dimensional observation.
struct PcaModel {
    Vector mean;                  // per lead
    Eigen::MatrixXd components;   // leads x r, orthonormal columns
    Vector explained_variance;    // r eigenvalues, descending
    Vector all_variances;         // every eigenvalue, descending
    int requested_rank = 0;

    int rank() const noexcept { return static_cast<int>(components.cols()); }

    double explained_ratio() const {
        const double total = all_variances.sum();
        return total > 0.0 ? explained_variance.sum() / total : 1.0;
    }

    /// Projection onto the leading components, mapped back to lead space.
    Matrix reconstruct(const Matrix& x) const {
        const Eigen::MatrixXd centered = x.colwise() - mean;
        const Eigen::MatrixXd coeffs = components.transpose() * centered;
        Matrix out = (components * coeffs).colwise() + mean;
        return out;
    }
};

/// Fits a rank-r PCA. If the covariance has fewer than r numerically non-zero
/// eigenvalues, r is lowered to the numerical rank and a warning is logged.
inline PcaModel fit_pca(const Matrix& x, int r) {
    const auto leads = static_cast<int>(x.rows());
    if (r < 1 || r > leads)
        throw ArgumentError("fit_pca: rank " + std::to_string(r) + " outside [1, " +
                            std::to_string(leads) + "]");
    if (x.cols() < x.rows())
        throw ArgumentError("fit_pca: need at least as many samples as leads");
    require_finite(x, "fit_pca");

    PcaModel model;
    model.requested_rank = r;
    model.mean = x.rowwise().mean();
    const Eigen::MatrixXd centered = x.colwise() - model.mean;
    const Eigen::MatrixXd cov =
        (centered * centered.transpose()) / static_cast<double>(x.cols() - 1);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    if (eig.info() != Eigen::Success) throw InternalError("fit_pca: eigendecomposition failed");

    // Eigen returns ascending order.
    const Vector values = eig.eigenvalues().reverse().cwiseMax(0.0);
    const Eigen::MatrixXd vectors = eig.eigenvectors().rowwise().reverse();

    const double tol = 1e-12 * std::max(values(0), std::numeric_limits<double>::min());
    int numerical_rank = 0;
    for (Eigen::Index i = 0; i < values.size(); ++i)
        if (values(i) > tol) ++numerical_rank;
    int keep = r;
    if (numerical_rank < r) {
        keep = std::max(1, numerical_rank);
        log_warning("fit_pca: requested rank " + std::to_string(r) + " exceeds numerical rank " +
                    std::to_string(numerical_rank) + "; using " + std::to_string(keep));
    }
    model.components = vectors.leftCols(keep);
    model.explained_variance = values.head(keep);
    model.all_variances = values;
    return model;
}

// ---------------------------------------------------------------------------

struct CleanseTarget {
    Eigen::Index rows = kLeads;
    Eigen::Index cols = kSamples;
};

struct Rejection {
    std::string id;
    std::string reason;
};

using CleanseResult = std::variant<EcgRecord, Rejection>;

/// Record cleansing:
///   rows != 12 or cols <= 2500   -> rejected
///   cols >= 5000                 -> first 5000 columns
///   otherwise                    -> [x | x_add], where x_add is the first
///                                   (5000 - cols) columns, read cyclically,
///                                   of the rank-r PCA reconstruction of x.
/// The rejection floor is half the target length.
inline CleanseResult cleanse_record(const EcgRecord& record, int r = 5,
                                    CleanseTarget target = {}) {
    const Eigen::Index rows = record.rows(), cols = record.cols();
    const Eigen::Index min_cols = target.cols / 2;
    if (rows != target.rows)
        return Rejection{record.id, "expected " + std::to_string(target.rows) + " leads, found " +
                                        std::to_string(rows)};
    if (cols <= min_cols)
        return Rejection{record.id, std::to_string(cols) + " samples <= " +
                                        std::to_string(min_cols)};

    EcgRecord out;
    out.label = record.label;
    out.id = record.id;
    if (cols >= target.cols) {
        out.leads = record.leads.leftCols(target.cols);
    } else {
        const PcaModel pca = fit_pca(record.leads, r);
        const Matrix recon = pca.reconstruct(record.leads);
        const Eigen::Index missing = target.cols - cols;
        out.leads.resize(rows, target.cols);
        out.leads.leftCols(cols) = record.leads;
        for (Eigen::Index j = 0; j < missing; ++j)
            out.leads.col(cols + j) = recon.col(j % cols);
    }
    if (!out.leads.allFinite()) throw InternalError("cleanse_record: non-finite output for " + record.id);
    return out;
}

struct CleanseReport {
    std::vector<Rejection> rejected;
    std::map<int, std::size_t> surviving_per_class;
};

inline nlohmann::json to_json(const CleanseReport& rep) {
    nlohmann::json j;
    auto& arr = j["rejected"] = nlohmann::json::array();
    for (const auto& r : rep.rejected) arr.push_back({{"id", r.id}, {"reason", r.reason}});
    auto& counts = j["surviving_per_class"] = nlohmann::json::object();
    for (auto& [k, n] : rep.surviving_per_class) counts[std::to_string(k)] = n;
    return j;
}

/// Cleanses records in input order. Classes present in the input that lose
/// every record make the dataset unusable and raise DataError.
inline std::pair<std::vector<EcgRecord>, CleanseReport> cleanse_dataset(
    const std::vector<EcgRecord>& records, int r = 5, CleanseTarget target = {}) {
    std::vector<std::optional<CleanseResult>> results(records.size());
    parallel_for(records.size(), [&](std::size_t i) { results[i] = cleanse_record(records[i], r, target); });

    std::vector<EcgRecord> kept;
    CleanseReport report;
    std::map<int, std::string> names;
    for (const auto& rec : records) {
        names.emplace(rec.label.index, rec.label.name);
        report.surviving_per_class.emplace(rec.label.index, 0);
    }
    for (auto& res : results) {
        if (auto* rec = std::get_if<EcgRecord>(&*res)) {
            ++report.surviving_per_class[rec->label.index];
            kept.push_back(std::move(*rec));
        } else {
            report.rejected.push_back(std::get<Rejection>(*res));
        }
    }
    for (auto& [k, n] : report.surviving_per_class)
        if (n == 0) throw DataError("cleanse_dataset: class '" + names[k] + "' has no surviving records");
    return {std::move(kept), std::move(report)};
}

}  // namespace ecgfuse

#endif
