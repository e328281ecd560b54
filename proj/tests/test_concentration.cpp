#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "msense/concentration.hpp"
#include "msense/linalg.hpp"
#include "msense/stats.hpp"

using namespace msense;

namespace {

SymMatrix random_sym(std::size_t d, std::uint64_t seed) {
    CounterRng rng(seed, Stream::operand);
    SymMatrix s(d);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = i; j < d; ++j) s.set(i, j, rng.normal());
    return s;
}

struct ThreadsEnv {
    explicit ThreadsEnv(const char* v) { setenv("MSENSE_THREADS", v, 1); }
    ~ThreadsEnv() { unsetenv("MSENSE_THREADS"); }
};

} // namespace

TEST(NoiseTerm, HomogeneousInSigma) {
    const MCReport a = mc_noise_term(6, 1.0, 50, 20, 3);
    const MCReport b = mc_noise_term(6, 2.5, 50, 20, 3);
    ASSERT_EQ(a.values.size(), 20u);
    for (std::size_t t = 0; t < 20; ++t) EXPECT_NEAR(b.values[t], 2.5 * a.values[t], 1e-13);
    EXPECT_NEAR(a.reference_scale, std::sqrt(6.0 / 50.0), 1e-15);
    EXPECT_NEAR(a.ratio_median, a.median / a.reference_scale, 1e-15);
}

TEST(NoiseTerm, ZeroSigmaGivesZero) {
    const MCReport r = mc_noise_term(5, 0.0, 30, 5, 1);
    for (double v : r.values) EXPECT_EQ(v, 0.0);
    EXPECT_EQ(r.ratio_median, 0.0);
}

TEST(NoiseTerm, RootNSlope) {
    std::vector<double> ns, med;
    for (std::size_t n : {50, 200, 800, 3200}) {
        ns.push_back(static_cast<double>(n));
        med.push_back(mc_noise_term(8, 1.0, n, 30, 4).median);
    }
    EXPECT_NEAR(loglog_fit(ns, med).slope, -0.5, 0.1);
}

TEST(NoiseTerm, Errors) {
    EXPECT_THROW(mc_noise_term(0, 1.0, 10, 5, 1), invalid_input);
    EXPECT_THROW(mc_noise_term(3, 1.0, 0, 5, 1), invalid_input);
    EXPECT_THROW(mc_noise_term(3, 1.0, 10, 0, 1), invalid_input);
    EXPECT_THROW(mc_noise_term(3, -1.0, 10, 5, 1), invalid_input);
}

TEST(Expectation, UnitAndIsotropic) {
    const SymMatrix u(Matrix{{1.0, 2.0}, {2.0, 3.0}});
    EXPECT_EQ(sensing_expectation(u, EntryVariance::unit), (Matrix{{1.0, 4.0}, {4.0, 3.0}}));
    EXPECT_EQ(sensing_expectation(u, EntryVariance::isotropic), u.matrix());
}

TEST(Deviation, MeanMatchesExpectationWithinFourSE) {
    const SymMatrix u = random_sym(4, 2);
    for (auto variance : {EntryVariance::unit, EntryVariance::isotropic}) {
        const DeviationReport r = mc_sensing_deviation(u, 500, 40, 5, {Distribution::gaussian, variance});
        EXPECT_EQ(r.expected, sensing_expectation(u, variance));
        for (std::size_t i = 0; i < 4; ++i)
            for (std::size_t j = 0; j < 4; ++j) {
                ASSERT_GT(r.std_error(i, j), 0.0);
                // 16 entries: a 4-SE band keeps the family-wise false-failure rate small.
                EXPECT_LE(std::abs(r.mean(i, j) - r.expected(i, j)), 4.0 * r.std_error(i, j))
                    << to_string(variance) << " " << i << "," << j;
            }
    }
}

TEST(Deviation, RootNSlopeUnderIsotropic) {
    const SymMatrix u = random_sym(6, 3);
    std::vector<double> ns, med;
    for (std::size_t n : {100, 400, 1600, 6400}) {
        ns.push_back(static_cast<double>(n));
        med.push_back(mc_sensing_deviation(u, n, 20, 6, {Distribution::gaussian, EntryVariance::isotropic}).mc.median);
    }
    EXPECT_NEAR(loglog_fit(ns, med).slope, -0.5, 0.1);
}

TEST(Deviation, HomogeneousInU) {
    const SymMatrix u = random_sym(5, 4);
    const EnsembleSpec iso{Distribution::gaussian, EntryVariance::isotropic};
    const DeviationReport a = mc_sensing_deviation(u, 60, 10, 2, iso);
    const DeviationReport b = mc_sensing_deviation(u * 3.0, 60, 10, 2, iso);
    for (std::size_t t = 0; t < 10; ++t) EXPECT_NEAR(b.mc.values[t], 3.0 * a.mc.values[t], 1e-12);
    EXPECT_NEAR(b.mc.ratio_median, a.mc.ratio_median, 1e-13);
}

TEST(Deviation, Errors) {
    EXPECT_THROW(mc_sensing_deviation(SymMatrix(3), 10, 5, 1), invalid_input);
    EXPECT_THROW(mc_sensing_deviation(SymMatrix::identity(3), 0, 5, 1), invalid_input);
}

TEST(SecondMoment, IdentityClosedForms) {
    const SymMatrix u = SymMatrix::identity(3);
    const Matrix stated = second_moment_stated_form(u);
    const Matrix exact = second_moment_gaussian_form(u, EntryVariance::unit);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_DOUBLE_EQ(stated(i, i), 4.0);
        EXPECT_DOUBLE_EQ(exact(i, i), 10.0);
        for (std::size_t j = 0; j < 3; ++j)
            if (i != j) {
                EXPECT_EQ(stated(i, j), 0.0);
                EXPECT_EQ(exact(i, j), 0.0);
            }
    }
}

TEST(SecondMoment, ZeroOperand) {
    const MomentReport r = mc_second_moment(SymMatrix(3), 100, 1);
    for (double v : r.estimate.data()) EXPECT_EQ(v, 0.0);
    EXPECT_EQ(r.max_abs_z_stated, 0.0);
    EXPECT_EQ(*r.max_abs_z_exact, 0.0);
}

TEST(SecondMoment, FormsAgreeInOneDimension) {
    const SymMatrix u(Matrix{{1.7}});
    EXPECT_NEAR(second_moment_stated_form(u)(0, 0), 2 * 1.7 * 1.7, 1e-14);
    EXPECT_NEAR(second_moment_gaussian_form(u, EntryVariance::unit)(0, 0), 2 * 1.7 * 1.7, 1e-14);
}

// Long Monte Carlo run: the Isserlis form fits, the stated diagonal form is far off.
TEST(SecondMoment, ExactFormFitsAndStatedFormDoesNot) {
    const SymMatrix u = random_sym(4, 9);
    const MomentReport r = mc_second_moment(u, 40000, 21);
    ASSERT_TRUE(r.max_abs_z_exact.has_value());
    EXPECT_LT(*r.max_abs_z_exact, 4.5);
    EXPECT_GT(r.max_abs_z_stated, 10.0);
    const MomentReport iso = mc_second_moment(u, 40000, 22, {Distribution::gaussian, EntryVariance::isotropic});
    EXPECT_LT(*iso.max_abs_z_exact, 4.5);
}

TEST(SecondMoment, RademacherHasNoExactForm) {
    const MomentReport r = mc_second_moment(random_sym(3, 1), 100, 1, {Distribution::rademacher, EntryVariance::unit});
    EXPECT_FALSE(r.exact_form.has_value());
    EXPECT_THROW(mc_second_moment(SymMatrix(3), 1, 1), invalid_input);
}

TEST(ASquared, MatchesDimensionUnderUnitVariance) {
    const MomentReport r = mc_A_squared(20, 10000, 3);
    EXPECT_LT(r.max_abs_z_stated, 5.0);
    for (std::size_t i = 0; i < 20; ++i) EXPECT_NEAR(r.estimate(i, i), 20.0, 1.0);
    const MomentReport iso = mc_A_squared(20, 10000, 3, {Distribution::gaussian, EntryVariance::isotropic});
    EXPECT_NEAR(iso.exact_form->operator()(0, 0), 10.5, 1e-15);
    EXPECT_LT(*iso.max_abs_z_exact, 5.0);
}

TEST(ASquared, ScalarAndRademacher) {
    const MomentReport one = mc_A_squared(1, 50000, 4);
    EXPECT_NEAR(one.estimate(0, 0), 1.0, 0.05);
    // Rademacher: each diagonal entry of A^2 is a sum of d squared signs.
    const MomentReport rad = mc_A_squared(5, 50, 4, {Distribution::rademacher, EntryVariance::unit});
    for (std::size_t i = 0; i < 5; ++i) {
        EXPECT_DOUBLE_EQ(rad.estimate(i, i), 5.0);
        EXPECT_EQ(rad.std_error(i, i), 0.0);
    }
    EXPECT_THROW(mc_A_squared(0, 10, 1), invalid_input);
}

TEST(Determinism, IndependentOfThreadCount) {
    const SymMatrix u = random_sym(5, 5);
    MCReport n1, n4;
    DeviationReport d1, d4;
    MomentReport m1, m4;
    {
        ThreadsEnv env("1");
        n1 = mc_noise_term(5, 1.0, 70, 9, 8);
        d1 = mc_sensing_deviation(u, 70, 9, 8);
        m1 = mc_second_moment(u, 3000, 8);
    }
    {
        ThreadsEnv env("4");
        n4 = mc_noise_term(5, 1.0, 70, 9, 8);
        d4 = mc_sensing_deviation(u, 70, 9, 8);
        m4 = mc_second_moment(u, 3000, 8);
    }
    EXPECT_EQ(n1.values, n4.values);
    EXPECT_EQ(d1.mc.values, d4.mc.values);
    EXPECT_EQ(d1.mean, d4.mean);
    EXPECT_EQ(m1.estimate, m4.estimate);
    EXPECT_EQ(m1.std_error, m4.std_error);
}

TEST(Serialization, JsonAndCsv) {
    const MCReport r = mc_noise_term(4, 1.0, 20, 3, 1);
    const auto j = to_json(r);
    EXPECT_EQ(j["statistic"], "noise_term");
    EXPECT_EQ(j["trials"], 3);
    EXPECT_DOUBLE_EQ(j["median"].get<double>(), r.median);

    const auto mj = to_json(mc_A_squared(2, 10, 1));
    EXPECT_EQ(mj["estimate"].size(), 2u);
    EXPECT_TRUE(mj.contains("max_abs_z_exact"));

    const auto path = std::filesystem::temp_directory_path() / "msense_trials_test.csv";
    write_trials_csv(r, path.string());
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "trial,value");
    for (std::size_t t = 0; t < 3; ++t) {
        ASSERT_TRUE(std::getline(in, line));
        const auto cells = split(line, ',');
        ASSERT_EQ(cells.size(), 2u);
        EXPECT_EQ(parse_double(cells[1]), r.values[t]);
    }
    std::filesystem::remove(path);
    EXPECT_THROW(write_trials_csv(r, "/nonexistent-dir/x.csv"), std::runtime_error);
}
