#include "ecgfuse/noise.hpp"

#include "helpers.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace ecgfuse;
using testing_util::max_abs;
using testing_util::random_matrix;

namespace {
const NoiseKind kAllKinds[] = {NoiseKind::BaselineWander, NoiseKind::ElectrodeMotion, NoiseKind::MuscleArtifact};

EcgRecord pulse_record(std::uint64_t seed) {
    Matrix x = 0.3 * random_matrix(12, 5000, seed);
    for (Eigen::Index t = 0; t < 5000; t += 250) x.col(t).array() += 3.0;
    return {x, {0, "class0"}, "rec" + std::to_string(seed)};
}
}  // namespace

TEST(Levels, TwentyStandardLevels) {
    const std::vector<double> expected{-27, -18, -12, -10, -9, -8, -7, -6, -5, -4,
                                       -3,  -2,  -1,  0,   1,  2,  3,  6,  9,  12};
    EXPECT_EQ(standard_snr_levels(), expected);
}

TEST(Kinds, ParseAndPrint) {
    for (NoiseKind k : kAllKinds) EXPECT_EQ(parse_noise_kind(to_string(k)), k);
    EXPECT_EQ(parse_noise_kind("MA"), NoiseKind::MuscleArtifact);
    EXPECT_THROW(parse_noise_kind("pink"), ArgumentError);
}

TEST(Generate, UnitRmsPerLead) {
    for (NoiseKind k : kAllKinds)
        for (auto [r, c] : {std::pair{12, 5000}, {3, 777}, {1, 64}}) {
            const Matrix n = generate_noise(k, r, c, RngStream(1));
            for (Eigen::Index i = 0; i < n.rows(); ++i)
                EXPECT_NEAR(std::sqrt(n.row(i).squaredNorm() / static_cast<double>(c)), 1.0, 1e-6)
                    << to_string(k) << " " << r << "x" << c;
        }
}

TEST(Generate, DeterministicInSeed) {
    for (NoiseKind k : kAllKinds) {
        const Matrix a = generate_noise(k, 12, 5000, RngStream(5));
        const Matrix b = generate_noise(k, 12, 5000, RngStream(5));
        const Matrix c = generate_noise(k, 12, 5000, RngStream(6));
        EXPECT_TRUE(a == b);
        EXPECT_FALSE(a == c);
    }
}

TEST(Generate, LeadsDifferFromEachOther) {
    for (NoiseKind k : kAllKinds) {
        const Matrix n = generate_noise(k, 12, 5000, RngStream(7));
        EXPECT_GT(max_abs(n.row(0) - n.row(1)), 0.1) << to_string(k);
    }
}

TEST(Generate, BaselineWanderBelowOneHertz) {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const Matrix n = generate_noise(NoiseKind::BaselineWander, 12, 5000, RngStream(seed));
        EXPECT_GE(oracle::band_share(n, kSamplingRateHz, 0.0, 1.0), 0.95);
    }
}

TEST(Generate, MuscleArtifactInFiveToFiftyHertz) {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const Matrix n = generate_noise(NoiseKind::MuscleArtifact, 12, 5000, RngStream(seed));
        EXPECT_GE(oracle::band_share(n, kSamplingRateHz, 5.0, 50.0), 0.95);
    }
}

TEST(Generate, ElectrodeMotionIsBursty) {
    const Matrix n = generate_noise(NoiseKind::ElectrodeMotion, 12, 5000, RngStream(8));
    // power in 0.2 s windows of lead 0: bursts leave long quiet stretches
    double lo = 1e300, hi = 0.0;
    for (Eigen::Index s = 0; s + 100 <= 5000; s += 100) {
        const double p = n.row(0).segment(s, 100).squaredNorm();
        lo = std::min(lo, p);
        hi = std::max(hi, p);
    }
    EXPECT_GT(hi, 100.0 * lo + 1e-12);
}

TEST(Inject, MeasuredSnrMatchesRequest) {
    for (NoiseKind k : kAllKinds)
        for (double db : standard_snr_levels()) {
            const EcgRecord x = pulse_record(3);
            const EcgRecord y = inject(x, {k, db, RngStream(9)});
            EXPECT_NEAR(snr_db(x.leads, y.leads - x.leads), db, 0.1) << to_string(k) << " " << db;
        }
}

TEST(Inject, ZeroDbMeansEqualPower) {
    const EcgRecord x = pulse_record(4);
    const EcgRecord y = inject(x, {NoiseKind::MuscleArtifact, 0.0, RngStream(1)});
    EXPECT_NEAR(10.0 * std::log10(mean_power(x.leads) / mean_power(y.leads - x.leads)), 0.0, 0.1);
}

TEST(Inject, FortyDbBarelyChangesUnitPowerSignal) {
    EcgRecord x{random_matrix(12, 5000, 10), {0, "c"}, "u"};
    x.leads /= std::sqrt(mean_power(x.leads));
    const EcgRecord y = inject(x, {NoiseKind::BaselineWander, 40.0, RngStream(2)});
    EXPECT_LE(std::sqrt(mean_power(y.leads - x.leads)), 0.01 + 1e-12);
}

TEST(Inject, InputUntouchedAndMetadataKept) {
    const EcgRecord x = pulse_record(5);
    const Matrix before = x.leads;
    const EcgRecord y = inject(x, {NoiseKind::ElectrodeMotion, -5.0, RngStream(3)});
    EXPECT_TRUE(x.leads == before);
    EXPECT_EQ(y.id, x.id);
    EXPECT_EQ(y.label, x.label);
}

TEST(Inject, Errors) {
    const EcgRecord zero{Matrix::Zero(12, 100), {0, "c"}, "z"};
    EXPECT_THROW(inject(zero, {NoiseKind::BaselineWander, 0.0, RngStream(0)}), DataError);
    const EcgRecord x = pulse_record(6);
    EXPECT_THROW(inject(x, {NoiseKind::BaselineWander, 41.0, RngStream(0)}), ArgumentError);
    EXPECT_THROW(inject(x, {NoiseKind::BaselineWander, -40.5, RngStream(0)}), ArgumentError);
    EXPECT_THROW(inject(x, {NoiseKind::BaselineWander, std::nan(""), RngStream(0)}), ArgumentError);
    EXPECT_THROW(inject(x, {NoiseKind::BaselineWander, 0.0, RngStream(0)}, Matrix::Zero(2, 2)), DataError);
}

TEST(Inject, ExternalNoiseTiled) {
    const EcgRecord x = pulse_record(7);
    const Matrix ext = random_matrix(3, 700, 11);
    const EcgRecord y = inject(x, {NoiseKind::BaselineWander, 6.0, RngStream(0)}, ext);
    EXPECT_NEAR(snr_db(x.leads, y.leads - x.leads), 6.0, 0.1);
    // lead 3 reuses external lead 0 and column 700 reuses column 0
    const Matrix added = y.leads - x.leads;
    EXPECT_LE(max_abs(added.row(3) - added.row(0)), 1e-12);
    EXPECT_NEAR(added(0, 700), added(0, 0), 1e-12);
}

TEST(Sweep, EmptyLevelsEmptyMap) {
    std::vector<Sample> test{{Matrix::Ones(2, 4), {0, "c"}, "a", "a", 0}};
    const std::vector<NoiseKind> kinds{NoiseKind::BaselineWander};
    EXPECT_TRUE(sweep(test, kinds, std::vector<double>{}, RngStream(0)).empty());
    EXPECT_THROW(sweep(std::vector<Sample>{}, kinds, std::vector<double>{1.0}, RngStream(0)), ArgumentError);
}

TEST(Sweep, CountsMatchBookkeeping) {
    // 43 test records for each of 9 classes (n = 213, p = 4).
    std::vector<Sample> test;
    for (int k = 0; k < 9; ++k)
        for (int i = 0; i < 43; ++i)
            test.push_back({random_matrix(2, 8, static_cast<std::uint64_t>(k * 100 + i)), {k, "c"}, "s", "s", 0});
    const std::vector<NoiseKind> kinds(std::begin(kAllKinds), std::end(kAllKinds));
    const auto out = sweep(test, kinds, standard_snr_levels(), RngStream(1));
    EXPECT_EQ(out.size(), 60u);
    std::map<NoiseKind, std::size_t> per_kind;
    for (const auto& [key, samples] : out) per_kind[key.kind] += samples.size();
    for (NoiseKind k : kAllKinds) EXPECT_EQ(per_kind[k], 20u * 387u);
}

TEST(Sweep, FigureConfigurationsAndDeterminism) {
    std::vector<Sample> test;
    for (int i = 0; i < 5; ++i)
        test.push_back({pulse_record(static_cast<std::uint64_t>(i)).leads, {i % 2, "c"}, "s" + std::to_string(i), "o", 0});
    const std::vector<NoiseKind> kinds{NoiseKind::ElectrodeMotion, NoiseKind::MuscleArtifact};
    const std::vector<double> levels{12, -7};
    const auto a = sweep(test, kinds, levels, RngStream(2));
    const auto b = sweep(test, kinds, levels, RngStream(2));
    ASSERT_EQ(a.size(), 4u);
    for (const auto& [key, samples] : a) {
        ASSERT_EQ(samples.size(), 5u);
        for (std::size_t i = 0; i < samples.size(); ++i) {
            EXPECT_TRUE(samples[i].signal == b.at(key)[i].signal);
            EXPECT_EQ(samples[i].id, test[i].id);
            EXPECT_NEAR(snr_db(test[i].signal, samples[i].signal - test[i].signal), key.snr_db, 0.1);
        }
    }
}

TEST(Sweep, OneRealisationPerRecordAcrossLevels) {
    std::vector<Sample> test{{pulse_record(1).leads, {0, "c"}, "a", "a", 0}};
    const std::vector<NoiseKind> kinds{NoiseKind::MuscleArtifact};
    const std::vector<double> levels{0, 6};
    const auto out = sweep(test, kinds, levels, RngStream(3));
    const Matrix n0 = out.at({NoiseKind::MuscleArtifact, 0.0})[0].signal - test[0].signal;
    const Matrix n6 = out.at({NoiseKind::MuscleArtifact, 6.0})[0].signal - test[0].signal;
    const double ratio = std::pow(10.0, -6.0 / 20.0);
    EXPECT_LE(max_abs(n6 - ratio * n0), 1e-9 * max_abs(n0));
}
