#include "ecgfuse/cleanse.hpp"
#include "ecgfuse/synth.hpp"

#include "helpers.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <set>

using namespace ecgfuse;
using testing_util::make_record;
using testing_util::max_abs;
using testing_util::random_matrix;

namespace {
// Leads that are correlated mixtures of a few sources, so the spectrum of
// the covariance is spread out (a harder case for PCA than iid noise).
Matrix mixed_record(Eigen::Index cols, std::uint64_t seed) {
    const Matrix sources = random_matrix(4, cols, seed, "sources");
    const Matrix mix = random_matrix(12, 4, seed, "mix");
    return mix * sources + 0.1 * random_matrix(12, cols, seed, "noise");
}
}  // namespace

TEST(Pca, RankOneRecordExplainedByOneComponent) {
    Matrix x(12, 800);
    const Matrix base = random_matrix(1, 800, 1);
    for (Eigen::Index r = 0; r < 12; ++r) x.row(r) = (r + 1.0) * base.row(0);
    const PcaModel m = fit_pca(x, 1);
    EXPECT_GE(m.explained_ratio(), 0.999);
}

TEST(Pca, FullRankReconstructionIsExact) {
    const Matrix x = random_matrix(12, 500, 2);
    const PcaModel m = fit_pca(x, 12);
    EXPECT_LE(max_abs(m.reconstruct(x) - x), 1e-8);
}

TEST(Pca, ExplainedRatioMatchesJacobiOracle) {
    const Matrix x = mixed_record(3000, 3);
    const PcaModel m = fit_pca(x, 3);
    const auto o = oracle::jacobi(oracle::column_covariance(x));
    double top = 0.0, total = 0.0;
    for (std::size_t i = 0; i < o.values.size(); ++i) {
        total += o.values[i];
        if (i < 3) top += o.values[i];
    }
    EXPECT_NEAR(m.explained_ratio(), top / total, 1e-8);
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(m.explained_variance(i), o.values[static_cast<std::size_t>(i)], 1e-8);
}

TEST(Pca, ComponentsOrthonormalAndVariancesSorted) {
    const PcaModel m = fit_pca(mixed_record(2000, 4), 5);
    const Eigen::MatrixXd gram = m.components.transpose() * m.components;
    EXPECT_LE((gram - Eigen::MatrixXd::Identity(5, 5)).cwiseAbs().maxCoeff(), 1e-8);
    for (Eigen::Index i = 0; i < m.explained_variance.size(); ++i) {
        EXPECT_GE(m.explained_variance(i), 0.0);
        if (i) EXPECT_LE(m.explained_variance(i), m.explained_variance(i - 1));
    }
}

TEST(Pca, RankAboveNumericalRankIsLowered) {
    const Matrix sources = random_matrix(2, 600, 5);
    const Matrix x = random_matrix(12, 2, 6) * sources;  // rank 2
    const PcaModel m = fit_pca(x, 5);
    EXPECT_EQ(m.requested_rank, 5);
    EXPECT_EQ(m.rank(), 2);
    EXPECT_LE(max_abs(m.reconstruct(x) - x), 1e-8);
}

TEST(Pca, BadRankRejected) {
    const Matrix x = random_matrix(12, 100, 7);
    EXPECT_THROW(fit_pca(x, 0), ArgumentError);
    EXPECT_THROW(fit_pca(x, 13), ArgumentError);
    EXPECT_THROW(fit_pca(random_matrix(12, 5, 8), 2), ArgumentError);
}

TEST(Cleanse, LongRecordTruncatedToPrefix) {
    const EcgRecord in = make_record(random_matrix(12, 6000, 9), 0, "long");
    const auto out = cleanse_record(in);
    ASSERT_TRUE(std::holds_alternative<EcgRecord>(out));
    const auto& r = std::get<EcgRecord>(out);
    ASSERT_EQ(r.cols(), 5000);
    EXPECT_TRUE(r.leads == in.leads.leftCols(5000));
    EXPECT_EQ(r.id, "long");
    EXPECT_EQ(r.label, in.label);
}

TEST(Cleanse, ExactLengthPassesThrough) {
    const EcgRecord in = make_record(random_matrix(12, 5000, 10), 1, "exact");
    const auto out = cleanse_record(in);
    ASSERT_TRUE(std::holds_alternative<EcgRecord>(out));
    EXPECT_TRUE(std::get<EcgRecord>(out).leads == in.leads);
}

TEST(Cleanse, ShortOrMisshapenRejected) {
    for (Eigen::Index cols : {100, 2400, 2500}) {
        const auto out = cleanse_record(make_record(random_matrix(12, cols, 11), 0, "s"));
        ASSERT_TRUE(std::holds_alternative<Rejection>(out)) << cols;
        EXPECT_EQ(std::get<Rejection>(out).id, "s");
    }
    for (Eigen::Index rows : {11, 13, 1}) {
        const auto out = cleanse_record(make_record(random_matrix(rows, 5000, 12), 0, "r"));
        EXPECT_TRUE(std::holds_alternative<Rejection>(out)) << rows;
    }
    EXPECT_TRUE(std::holds_alternative<EcgRecord>(cleanse_record(make_record(random_matrix(12, 2501, 13), 0, "m"))));
}

TEST(Cleanse, PaddingIsOraclePcaReconstructionPrefix) {
    const Matrix x = mixed_record(3000, 14);
    const auto out = cleanse_record(make_record(x, 0, "pad"), 5);
    ASSERT_TRUE(std::holds_alternative<EcgRecord>(out));
    const Matrix& y = std::get<EcgRecord>(out).leads;
    ASSERT_EQ(y.cols(), 5000);
    EXPECT_TRUE(y.leftCols(3000) == x);
    const Matrix expected = oracle::pca_reconstruct(x, 5);
    EXPECT_LE(max_abs(y.rightCols(2000) - expected.leftCols(2000)), 1e-8);
}

TEST(Cleanse, PaddingReadsReconstructionCyclically) {
    const Matrix x = mixed_record(2600, 15);
    const auto out = cleanse_record(make_record(x, 0, "cyc"), 4);
    const Matrix& y = std::get<EcgRecord>(out).leads;
    const Matrix rec = oracle::pca_reconstruct(x, 4);
    // 2400 padded columns: the first 2400 columns of the reconstruction.
    for (Eigen::Index j = 0; j < 2400; ++j) EXPECT_LE((y.col(2600 + j) - rec.col(j % 2600)).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Cleanse, PaddingLiesInPrincipalSpan) {
    const Matrix x = mixed_record(3500, 16);
    const int r = 3;
    const auto out = cleanse_record(make_record(x, 0, "span"), r);
    const Matrix add = std::get<EcgRecord>(out).leads.rightCols(1500);
    const PcaModel m = fit_pca(x, r);
    // Padding is mean + V c; its centred part must have no component outside V.
    const Eigen::MatrixXd centred = add.colwise() - m.mean;
    const Eigen::MatrixXd residual = centred - m.components * (m.components.transpose() * centred);
    EXPECT_LE(residual.norm(), 1e-6 * centred.norm());
}

TEST(Cleanse, Deterministic) {
    const EcgRecord in = make_record(mixed_record(3100, 17), 0, "det");
    const auto a = std::get<EcgRecord>(cleanse_record(in));
    const auto b = std::get<EcgRecord>(cleanse_record(in));
    EXPECT_TRUE(a.leads == b.leads);
}

TEST(CleanseDataset, UniformLengthsNoRejections) {
    SynthOptions opt;
    opt.per_class = {3, 4};
    opt.seed = 1;
    const auto recs = synthesize_records(opt);
    const auto [clean, report] = cleanse_dataset(recs, 5);
    EXPECT_TRUE(report.rejected.empty());
    EXPECT_EQ(clean.size(), 7u);
    EXPECT_EQ(report.surviving_per_class.at(0), 3u);
    EXPECT_EQ(report.surviving_per_class.at(1), 4u);
}

TEST(CleanseDataset, RejectsExactlyTheShortOnes) {
    SynthOptions opt;
    opt.per_class = {10, 10};
    opt.min_len = 2000;
    opt.max_len = 6000;
    opt.seed = 2;
    const auto recs = synthesize_records(opt);
    const auto [clean, report] = cleanse_dataset(recs, 5);
    std::set<std::string> expected, got;
    for (const auto& r : recs)
        if (r.cols() <= 2500) expected.insert(r.id);
    for (const auto& rej : report.rejected) got.insert(rej.id);
    EXPECT_EQ(got, expected);
    EXPECT_EQ(clean.size() + report.rejected.size(), recs.size());
    for (const auto& r : clean) {
        EXPECT_EQ(r.rows(), 12);
        EXPECT_EQ(r.cols(), 5000);
    }
    const auto j = to_json(report);
    ASSERT_TRUE(j.contains("rejected"));
    EXPECT_EQ(j["rejected"].size(), expected.size());
}

TEST(CleanseDataset, EmptyClassIsHardError) {
    std::vector<EcgRecord> recs{make_record(random_matrix(12, 5000, 18), 0, "a"),
                                make_record(random_matrix(12, 1000, 19), 1, "b")};
    EXPECT_THROW(cleanse_dataset(recs, 5), DataError);
}
