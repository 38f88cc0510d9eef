#include "fpconv/ensemble.hpp"

#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace fpconv;

namespace {

double unitarity_defect(const CMatrix& u)
{
    return (u.adjoint() * u - CMatrix::Identity(u.rows(), u.cols())).cwiseAbs().maxCoeff();
}

std::vector<double> random_diag(std::size_t n, std::uint64_t seed)
{
    Engine rng = make_engine(seed);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    std::vector<double> d(n);
    for (double& x : d)
        x = unif(rng);
    return d;
}

CVector unit(Eigen::Index n, std::size_t i)
{
    CVector e = CVector::Zero(n);
    e(static_cast<Eigen::Index>(i)) = 1.0;
    return e;
}

// Two-sample Kolmogorov-Smirnov statistic and its asymptotic p-value.
double ks_pvalue(std::vector<double> x, std::vector<double> y)
{
    std::sort(x.begin(), x.end());
    std::sort(y.begin(), y.end());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < x.size() && j < y.size()) {
        const double t = std::min(x[i], y[j]);
        while (i < x.size() && x[i] <= t)
            ++i;
        while (j < y.size() && y[j] <= t)
            ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / x.size() - static_cast<double>(j) / y.size()));
    }
    const double ne = static_cast<double>(x.size()) * y.size() / (x.size() + y.size());
    const double lambda = (std::sqrt(ne) + 0.12 + 0.11 / std::sqrt(ne)) * d;
    double p = 0.0;
    for (int k = 1; k <= 100; ++k)
        p += 2.0 * ((k % 2) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lambda * lambda);
    return std::clamp(p, 0.0, 1.0);
}

std::vector<double> eigen_angles(const CMatrix& u)
{
    Eigen::ComplexEigenSolver<CMatrix> es(u, false);
    std::vector<double> out;
    for (Eigen::Index k = 0; k < es.eigenvalues().size(); ++k)
        out.push_back(std::arg(es.eigenvalues()(k)));
    return out;
}

} // namespace

TEST(SampleHaar, Unitary)
{
    for (std::size_t n : {1u, 2u, 5u, 64u, 200u})
        for (std::uint64_t s : {0u, 7u})
            EXPECT_LE(unitarity_defect(sample_haar(n, s).u), 1e-12) << n;
}

TEST(SampleHaar, ScalarCase)
{
    const auto u = sample_haar(1, 3);
    EXPECT_NEAR(std::abs(u.u(0, 0)), 1.0, 1e-15);
}

TEST(SampleHaar, RejectsZero) { EXPECT_THROW(sample_haar(0, 1), ValidationError); }

TEST(SampleHaar, Deterministic)
{
    EXPECT_EQ(sample_haar(16, 42).u, sample_haar(16, 42).u);
    EXPECT_NE(sample_haar(16, 42).u, sample_haar(16, 43).u);
}

TEST(SampleHaar, FirstEntrySecondMoment)
{
    constexpr int samples = 10000;
    std::vector<double> x(samples);
    for (int s = 0; s < samples; ++s)
        x[s] = std::norm(sample_haar(8, derive_seed(11, {static_cast<std::uint64_t>(s)})).u(0, 0));
    const double mean = std::accumulate(x.begin(), x.end(), 0.0) / samples;
    double var = 0.0;
    for (double v : x)
        var += (v - mean) * (v - mean);
    const double se = std::sqrt(var / (samples - 1) / samples);
    EXPECT_LE(std::abs(mean - 1.0 / 8.0), 3.0 * se);
}

TEST(SampleHaar, LeftInvariance)
{
    constexpr std::size_t n = 32;
    const CMatrix v = sample_haar(n, 999).u;
    std::vector<double> plain, rotated_angles;
    for (std::uint64_t s = 0; s < 400; ++s) {
        auto a = eigen_angles(sample_haar(n, derive_seed(1, {s})).u);
        auto b = eigen_angles(v * sample_haar(n, derive_seed(2, {s})).u);
        plain.insert(plain.end(), a.begin(), a.end());
        rotated_angles.insert(rotated_angles.end(), b.begin(), b.end());
    }
    EXPECT_GT(ks_pvalue(plain, rotated_angles), 1e-3);
}

TEST(SampleHaar, DiagonalPhasesAreNotRemovedFromRows)
{
    // Without phase correction the QR convention leaves diag(R) real; the
    // corrected sampler must give U_11 a uniform phase.
    double mean_re = 0.0;
    constexpr int samples = 4000;
    for (int s = 0; s < samples; ++s) {
        const cplx u = sample_haar(4, derive_seed(5, {static_cast<std::uint64_t>(s)})).u(0, 0);
        mean_re += u.real() / std::abs(u);
    }
    EXPECT_LT(std::abs(mean_re / samples), 4.0 / std::sqrt(samples));
}

TEST(BuildH, ZeroB)
{
    EnsembleSpec spec{4, {1, 2, 3, 4}, {0, 0, 0, 0}, 0};
    const CMatrix h = build_h(spec, sample_haar(4, 1));
    CMatrix expected = CMatrix::Zero(4, 4);
    expected.diagonal() << 1, 2, 3, 4;
    EXPECT_LE((h - expected).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(BuildH, ScalarIgnoresPhase)
{
    EnsembleSpec spec{1, {0.0}, {2.5}, 0};
    const CMatrix h = build_h(spec, sample_haar(1, 9));
    EXPECT_NEAR(std::abs(h(0, 0) - cplx(2.5, 0.0)), 0.0, 1e-14);
}

TEST(BuildH, Trace)
{
    const std::size_t n = 50;
    EnsembleSpec spec{n, random_diag(n, 1), random_diag(n, 2), 0};
    const CMatrix h = build_h(spec, sample_haar(n, 3));
    const double expected = std::accumulate(spec.a_diag.begin(), spec.a_diag.end(), 0.0) +
                            std::accumulate(spec.b_diag.begin(), spec.b_diag.end(), 0.0);
    EXPECT_NEAR(h.trace().real(), expected, 1e-10 * n);
    EXPECT_EQ(max_abs_asymmetry(h), 0.0);
}

TEST(BuildH, DimensionMismatch)
{
    EnsembleSpec spec{3, {1, 2, 3}, {0, 0, 0}, 0};
    EXPECT_THROW(build_h(spec, sample_haar(4, 1)), ValidationError);
    EnsembleSpec bad{3, {1, 2}, {0, 0, 0}, 0};
    EXPECT_THROW(build_h(bad, sample_haar(3, 1)), ValidationError);
}

TEST(Centered, ZeroTrace)
{
    const auto c = centered({1.0, 2.0, 6.0});
    EXPECT_NEAR(c[0] + c[1] + c[2], 0.0, 1e-15);
    EXPECT_NEAR(c[2], 3.0, 1e-15);
}

TEST(EigenH, Diagonal)
{
    CMatrix h = CMatrix::Zero(3, 3);
    h.diagonal() << 3, 1, 2;
    const auto s = eigen_h(h);
    ASSERT_EQ(s.eigenvalues.size(), 3u);
    EXPECT_NEAR(s.eigenvalues[0], 1.0, 1e-14);
    EXPECT_NEAR(s.eigenvalues[1], 2.0, 1e-14);
    EXPECT_NEAR(s.eigenvalues[2], 3.0, 1e-14);
}

TEST(EigenH, CenteredTraceVanishes)
{
    const std::size_t n = 100;
    EnsembleSpec spec{n, centered(random_diag(n, 4)), centered(random_diag(n, 5)), 0};
    const auto s = eigen_h(build_h(spec, sample_haar(n, 6)));
    EXPECT_NEAR(std::accumulate(s.eigenvalues.begin(), s.eigenvalues.end(), 0.0), 0.0, 1e-8 * n);
    EXPECT_TRUE(std::is_sorted(s.eigenvalues.begin(), s.eigenvalues.end()));
}

TEST(EigenH, CommutingCase)
{
    EnsembleSpec spec{2, {1, -1}, {1, -1}, 0};
    const HaarUnitary id{CMatrix::Identity(2, 2)};
    const auto s = eigen_h(build_h(spec, id));
    EXPECT_NEAR(s.eigenvalues[0], -2.0, 1e-14);
    EXPECT_NEAR(s.eigenvalues[1], 2.0, 1e-14);
}

TEST(EigenH, BackwardStable)
{
    const std::size_t n = 80;
    EnsembleSpec spec{n, random_diag(n, 7), random_diag(n, 8), 0};
    const CMatrix h = build_h(spec, sample_haar(n, 9));
    const auto s = eigen_h(h, true);
    ASSERT_TRUE(s.eigenvectors.has_value());
    const double norm = h.operatorNorm();
    for (Eigen::Index k = 0; k < h.rows(); ++k) {
        const CVector x = s.eigenvectors->col(k);
        EXPECT_LE((h * x - s.eigenvalues[static_cast<std::size_t>(k)] * x).norm(), 1e-10 * norm);
    }
}

TEST(EigenH, RejectsNonHermitian)
{
    CMatrix h = CMatrix::Zero(2, 2);
    h(0, 1) = 1.0;
    EXPECT_THROW(eigen_h(h), ValidationError);
}

TEST(EmpiricalIntervalMass, Examples)
{
    SpectralData s;
    s.eigenvalues = {1.0, 2.0, 3.0};
    EXPECT_NEAR(empirical_interval_mass(s, 1.0, 3.0), 2.0 / 3.0, 1e-15);
    EXPECT_EQ(empirical_interval_mass(s, -1e300, 1e300), 1.0);
    EXPECT_EQ(empirical_interval_mass(s, 2.2, 2.8), 0.0);
    EXPECT_THROW(empirical_interval_mass(s, 1.0, 1.0), ValidationError);
}

TEST(PartialDecomposition, Identities)
{
    for (std::size_t n : {1u, 2u, 7u, 40u}) {
        const auto u = sample_haar(n, 100 + n);
        const auto b = random_diag(n, 200 + n);
        const CMatrix bt = rotated(u, b);
        for (std::size_t i = 0; i < n; i += std::max<std::size_t>(1, n / 5)) {
            const auto d = partial_decomposition(u, b, i);
            const CVector ei = unit(static_cast<Eigen::Index>(n), i);
            EXPECT_NEAR(d.r.norm(), std::sqrt(2.0), 1e-10);
            EXPECT_LE((d.big_r * d.big_r - CMatrix::Identity(n, n)).cwiseAbs().maxCoeff(), 1e-10);
            EXPECT_LE((d.big_r - d.big_r.adjoint()).cwiseAbs().maxCoeff(), 1e-15);
            EXPECT_LE((d.big_r * ei + d.h).norm(), 1e-12);
            EXPECT_LE((d.big_r * d.h + ei).norm(), 1e-12);
            EXPECT_LE((u.u + std::polar(1.0, d.theta) * d.big_r * d.u_bracket).cwiseAbs().maxCoeff(), 1e-12);
            EXPECT_LE((d.u_bracket * ei - ei).norm(), 1e-12);
            EXPECT_LE((d.b_tilde * ei - b[i] * ei).norm(), 1e-12);
            EXPECT_LE(unitarity_defect(d.u_bracket), 1e-12);
            // Identities that follow from R e_i = -h and B~ = R B~<i> R.
            const Eigen::RowVectorXcd lhs1 = d.h.adjoint() * d.b_tilde * d.big_r + ei.adjoint() * bt;
            const Eigen::RowVectorXcd lhs2 = ei.adjoint() * d.b_tilde * d.big_r + b[i] * d.h.adjoint();
            EXPECT_LE(lhs1.norm(), 1e-10);
            EXPECT_LE(lhs2.norm(), 1e-10);
            EXPECT_NEAR(d.g_norm, 1.0, 0.0);
            EXPECT_NEAR(d.ell, std::sqrt(2.0) / (ei + d.h).norm(), 1e-15);
        }
    }
}

TEST(PartialDecomposition, Errors)
{
    const auto u = sample_haar(3, 1);
    EXPECT_THROW(partial_decomposition(u, {1, 2, 3}, 3), ValidationError);
    EXPECT_THROW(partial_decomposition(u, {1, 2}, 0), ValidationError);
    HaarUnitary perm{CMatrix::Zero(2, 2)};
    perm.u(0, 1) = 1.0;
    perm.u(1, 0) = 1.0;
    EXPECT_THROW(partial_decomposition(perm, {1, 2}, 0), DegeneratePhaseError);
}

TEST(HBracket, RankAtMostTwo)
{
    const std::size_t n = 30;
    EnsembleSpec spec{n, random_diag(n, 1), random_diag(n, 2), 0};
    const auto u = sample_haar(n, 3);
    const CMatrix h = build_h(spec, u);
    for (std::size_t i : {0u, 13u, 29u}) {
        const auto d = partial_decomposition(u, spec.b_diag, i);
        Eigen::JacobiSVD<CMatrix> svd(h - h_bracket(spec, d));
        const auto& sv = svd.singularValues();
        EXPECT_GT(sv(0), 1e-3);
        for (Eigen::Index k = 2; k < sv.size(); ++k)
            EXPECT_LE(sv(k), 1e-10);
    }
}

TEST(HBracket, TrivialCases)
{
    EnsembleSpec zero_b{3, {1, 2, 3}, {0, 0, 0}, 0};
    const auto u = sample_haar(3, 4);
    const auto d = partial_decomposition(u, zero_b.b_diag, 1);
    EXPECT_LE((h_bracket(zero_b, d) - build_h(zero_b, u)).cwiseAbs().maxCoeff(), 1e-15);

    EnsembleSpec one{1, {0.5}, {-2.0}, 0};
    const auto u1 = sample_haar(1, 5);
    const auto d1 = partial_decomposition(u1, one.b_diag, 0);
    EXPECT_LE(std::abs(h_bracket(one, d1)(0, 0) - cplx(-1.5, 0.0)), 1e-14);
    EXPECT_LE(std::abs(build_h(one, u1)(0, 0) - cplx(-1.5, 0.0)), 1e-15);
}

TEST(GaussianColumn, EllConsistency)
{
    constexpr std::size_t n = 1024;
    Engine rng = make_engine(77);
    std::vector<double> c;
    for (int s = 0; s < 100; ++s) {
        const auto col = gaussian_column(n, static_cast<std::size_t>(s) % n, rng);
        EXPECT_GE(col.g_ii, 0.0);
        c.push_back(std::abs(col.ell * col.ell - (1.0 - col.g_ii)) * n);
    }
    std::nth_element(c.begin(), c.begin() + 50, c.end());
    EXPECT_LE(c[50], 10.0);
}

TEST(Spectrum, InvariantUnderCommutingConjugation)
{
    const std::size_t n = 12;
    EnsembleSpec spec{n, random_diag(n, 1), std::vector<double>(n, 0.0), 0};
    const auto u = sample_haar(n, 2);
    const HaarUnitary vu{sample_haar(n, 3).u * u.u};
    const auto s = eigen_h(build_h(spec, vu));
    auto a = spec.a_diag;
    std::sort(a.begin(), a.end());
    for (std::size_t k = 0; k < n; ++k)
        EXPECT_NEAR(s.eigenvalues[k], a[k], 1e-12);
}

TEST(Spectrum, CsvExport)
{
    SpectralData s;
    s.eigenvalues = {-0.5, 0.1};
    EXPECT_EQ(spectrum_csv(s), "-0.5\n0.10000000000000001\n");
}

TEST(QuantileSample, Examples)
{
    const auto bern = make_measure({-1.0, 1.0}, {0.5, 0.5});
    EXPECT_EQ(quantile_sample(bern, 4), (std::vector<double>{-1, -1, 1, 1}));
    EXPECT_EQ(quantile_sample(bern, 3), (std::vector<double>{-1, -1, 1}));
    const auto skew = make_measure({0.0, 1.0}, {0.25, 0.75});
    EXPECT_EQ(quantile_sample(skew, 4), (std::vector<double>{0, 1, 1, 1}));
}
