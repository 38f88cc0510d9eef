#include "fpconv/diagnostics.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace fpconv;

namespace {

const cplx I{0.0, 1.0};

std::vector<double> random_diag(std::size_t n, std::uint64_t seed)
{
    Engine rng = make_engine(seed);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    std::vector<double> d(n);
    for (double& x : d)
        x = unif(rng);
    return d;
}

std::vector<double> bernoulli_diag(std::size_t n) { return quantile_sample(make_measure({-1.0, 1.0}, {0.5, 0.5}), n); }

struct Instance {
    EnsembleSpec spec;
    HaarUnitary u;
    CMatrix h;
};

Instance instance(std::vector<double> a, std::vector<double> b, std::uint64_t seed)
{
    Instance x;
    x.spec = EnsembleSpec{a.size(), std::move(a), std::move(b), seed};
    x.u = sample_haar(x.spec.n, seed);
    x.h = build_h(x.spec, x.u);
    return x;
}

CMatrix diag(const std::vector<double>& d)
{
    CMatrix m = CMatrix::Zero(static_cast<Eigen::Index>(d.size()), static_cast<Eigen::Index>(d.size()));
    for (std::size_t k = 0; k < d.size(); ++k)
        m(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k)) = d[k];
    return m;
}

SubordinationPair reference(const Instance& x, cplx z)
{
    return solve_subordination(make_uniform_measure(x.spec.a_diag), make_uniform_measure(x.spec.b_diag), z);
}

double quantile(std::vector<double> v, double q)
{
    const auto k = static_cast<std::size_t>(q * static_cast<double>(v.size() - 1));
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), v.end());
    return v[k];
}

} // namespace

TEST(Green, ScalarExamples)
{
    {
        EnsembleSpec spec{1, {2.0}, {0.0}, 0};
        const auto s = green(build_h(spec, sample_haar(1, 1)), spec, SpectralParam(0.0, 1.0));
        EXPECT_LE(std::abs(s.g(0, 0) - 1.0 / (2.0 - I)), 1e-15);
        EXPECT_LE(std::abs(s.m_h - 1.0 / (2.0 - I)), 1e-15);
    }
    {
        EnsembleSpec spec{1, {0.0}, {0.0}, 0};
        const auto s = green(build_h(spec, sample_haar(1, 1)), spec, SpectralParam(0.4, 0.7));
        EXPECT_LE(std::abs(s.upsilon), 1e-15);
    }
    {
        EnsembleSpec spec{1, {1.0}, {2.0}, 0};
        const auto s = green(build_h(spec, sample_haar(1, 2)), spec, SpectralParam(0.0, 1.0));
        EXPECT_LE(std::abs(s.upsilon - 2.0 / (3.0 - I)), 1e-14);
        EXPECT_LE(std::abs(s.omega_b_c - (I - 2.0)), 1e-14);
        EXPECT_LE(std::abs(s.psi - 1.0), 1e-15);
    }
}

TEST(Green, SnapshotInvariants)
{
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
        const std::size_t n = 24 + 8 * seed;
        const auto x = instance(random_diag(n, 10 + seed), random_diag(n, 20 + seed), seed);
        for (double eta : {1.0, 0.05, 0.002}) {
            const SpectralParam zp(0.3 - 0.1 * seed, eta);
            const cplx z = zp.z();
            const auto s = green(x.h, x.spec, x.u, zp);
            CMatrix hz = x.h;
            hz.diagonal().array() -= z;
            EXPECT_LE((hz * s.g - CMatrix::Identity(n, n)).cwiseAbs().maxCoeff(), 1e-10 * (1.0 + 1.0 / eta));
            EXPECT_GT(s.m_h.imag(), 0.0);
            EXPECT_LE(std::abs(-1.0 / s.m_h - (s.omega_a_c + s.omega_b_c - z)), 1e-10 * (1.0 + 1.0 / (eta * eta)));

            // Explicit products against the trace shortcuts.
            const CMatrix a = diag(x.spec.a_diag);
            const CMatrix bt = rotated(x.u, x.spec.b_diag);
            const CMatrix bg = bt * s.g;
            CMatrix az = a;
            az.diagonal().array() -= z;
            EXPECT_LE((bg - CMatrix::Identity(n, n) + az * s.g).cwiseAbs().maxCoeff(), 1e-10 * (1.0 + 1.0 / eta));
            const double scale = 1.0 + std::abs(s.m_h);
            EXPECT_LE(std::abs(ntrace(bg) - s.tr_bg), 1e-9 * scale);
            EXPECT_LE(std::abs(ntrace(bg * bt) - s.tr_bgb), 1e-9 * scale);
            EXPECT_LE(std::abs(ntrace(a * s.g) - s.tr_ag), 1e-9 * scale);
            const cplx ups = ntrace(bg) - ntrace(bg) * ntrace(bg) + ntrace(s.g) * ntrace(bg * bt);
            EXPECT_LE(std::abs(ups - s.upsilon), 1e-9 * scale * scale);

            // Role swap: calH = U* A U + B has the same normalized resolvent trace.
            CMatrix cal_h = x.u.u.adjoint() * a * x.u.u;
            cal_h.diagonal() += to_eigen(x.spec.b_diag).cast<cplx>();
            cal_h = hermitize(cal_h);
            EXPECT_LE(std::abs(ntrace(resolvent(cal_h, z)) - s.m_h), 1e-10 * (1.0 + 1.0 / eta));
        }
    }
}

TEST(Green, ResolventIdentity)
{
    const auto x = instance(random_diag(30, 1), random_diag(30, 2), 3);
    const cplx z1(0.1, 0.3), z2(-0.4, 0.05);
    const CMatrix g1 = resolvent(x.h, z1);
    const CMatrix g2 = resolvent(x.h, z2);
    EXPECT_LE((g1 - g2 - (z1 - z2) * g1 * g2).cwiseAbs().maxCoeff(), 1e-8 / (0.3 * 0.05));
}

TEST(RowQuantities, ScalarExamples)
{
    {
        EnsembleSpec spec{1, {0.0}, {0.0}, 0};
        const auto u = sample_haar(1, 4);
        const auto s = green(build_h(spec, u), spec, SpectralParam(0.2, 0.5));
        const auto r = row_quantities(s, partial_decomposition(u, spec.b_diag, 0));
        EXPECT_LE(std::abs(r.z_i), 1e-15);
    }
    {
        EnsembleSpec spec{1, {0.0}, {1.0}, 0};
        const auto u = sample_haar(1, 5);
        const auto s = green(build_h(spec, u), spec, SpectralParam(0.0, 1.0));
        const auto r = row_quantities(s, partial_decomposition(u, spec.b_diag, 0));
        EXPECT_LE(std::abs(r.z_i - 0.5 * I), 1e-15);
        EXPECT_LE(std::abs(row_quantities_all(s, u, spec.b_diag)[0].z_i - 0.5 * I), 1e-15);
    }
}

TEST(RowQuantities, ZeroBGivesZeroS)
{
    const std::size_t n = 10;
    const auto x = instance(random_diag(n, 1), std::vector<double>(n, 0.0), 2);
    const auto s = green(x.h, x.spec, SpectralParam(0.1, 0.2));
    for (std::size_t i = 0; i < n; ++i)
        EXPECT_LE(std::abs(row_quantities(s, partial_decomposition(x.u, x.spec.b_diag, i)).s_i), 1e-15);
    for (const auto& r : row_quantities_all(s, x.u, x.spec.b_diag))
        EXPECT_LE(std::abs(r.s_i), 1e-14);
}

TEST(RowQuantities, FastRouteMatchesDecomposition)
{
    const std::size_t n = 40;
    const auto x = instance(random_diag(n, 3), random_diag(n, 4), 5);
    const auto s = green(x.h, x.spec, SpectralParam(-0.2, 0.03));
    const auto fast = row_quantities_all(s, x.u, x.spec.b_diag);
    const CMatrix bg = rotated(x.u, x.spec.b_diag) * s.g;
    for (std::size_t i = 0; i < n; ++i) {
        const auto exact = row_quantities(s, partial_decomposition(x.u, x.spec.b_diag, i));
        const double scale = 1.0 + s.g.cwiseAbs().maxCoeff();
        EXPECT_LE(std::abs(fast[i].s_i - exact.s_i), 1e-10 * scale) << i;
        EXPECT_LE(std::abs(fast[i].t_i - exact.t_i), 1e-10 * scale) << i;
        EXPECT_LE(std::abs(fast[i].z_i - exact.z_i), 1e-14 * scale * scale);
        const auto ii = static_cast<Eigen::Index>(i);
        const cplx z_direct = bg(ii, ii) * ntrace(s.g) - s.g(ii, ii) * (ntrace(bg) - s.upsilon);
        EXPECT_LE(std::abs(exact.z_i - z_direct), 1e-10 * scale * scale);
    }
}

TEST(RowQuantities, IndexMismatch)
{
    const auto x = instance(random_diag(4, 1), random_diag(4, 2), 3);
    const auto y = instance(random_diag(5, 1), random_diag(5, 2), 3);
    const auto s = green(x.h, x.spec, SpectralParam(0.0, 1.0));
    EXPECT_THROW(row_quantities(s, partial_decomposition(y.u, y.spec.b_diag, 4)), ValidationError);
}

TEST(WeightedAverage, Examples)
{
    std::vector<RowDiagnostics> rows(3);
    for (auto& r : rows)
        r.z_i = cplx(0.3, -0.2);
    EXPECT_LE(std::abs(weighted_average(rows, std::vector<cplx>(3, 1.0)) - cplx(0.3, -0.2)), 1e-16);
    EXPECT_EQ(weighted_average(rows, std::vector<cplx>(3, 0.0)), cplx(0.0, 0.0));
    std::vector<RowDiagnostics> pm(2);
    pm[0].z_i = 1.0;
    pm[1].z_i = -1.0;
    EXPECT_EQ(weighted_average(pm, std::vector<cplx>(2, 1.0)), cplx(0.0, 0.0));
    EXPECT_THROW(weighted_average(pm, std::vector<cplx>{1.0, 1.1}), ValidationError);
    EXPECT_THROW(weighted_average(pm, std::vector<cplx>{1.0}), ValidationError);
    EXPECT_NO_THROW(weighted_average(pm, std::vector<cplx>{std::polar(1.0, 0.7), 1.0}));
}

TEST(LocalLawError, TrivialEnsembles)
{
    const cplx z(0.3, 0.4);
    {
        const auto x = instance(std::vector<double>(5, 0.0), std::vector<double>(5, 0.0), 1);
        const auto s = green(x.h, x.spec, SpectralParam(z));
        EXPECT_LE(std::abs(local_law_error(s, reference(x, z), std::vector<cplx>(5, 1.0))), 1e-10);
        EXPECT_LE(std::abs(s.m_h + 1.0 / z), 1e-12);
    }
    {
        const auto x = instance({0.7}, {-1.3}, 2);
        const auto s = green(x.h, x.spec, SpectralParam(z));
        const auto ref = reference(x, z);
        EXPECT_LE(std::abs(omega_b_of(ref) - (z + 1.3)), 1e-10);
        EXPECT_LE(std::abs(local_law_error(s, ref, std::vector<cplx>{1.0})), 1e-10);
    }
}

TEST(LocalLawError, DetectsSwappedReference)
{
    const std::size_t n = 16;
    const auto x = instance(random_diag(n, 1), centered(random_diag(n, 2)), 3);
    const cplx z(0.1, 0.5);
    const auto s = green(x.h, x.spec, SpectralParam(z));
    const auto swapped =
        solve_subordination(make_uniform_measure(x.spec.b_diag), make_uniform_measure(x.spec.a_diag), z);
    EXPECT_THROW(local_law_error(s, swapped, std::vector<cplx>(n, 1.0)), ValidationError);
    EXPECT_NO_THROW(local_law_error(s, reference(x, z), std::vector<cplx>(n, 1.0)));
}

TEST(LocalLawError, UnitWeightsGiveStieltjesDifference)
{
    const std::size_t n = 20;
    const auto x = instance(random_diag(n, 4), random_diag(n, 5), 6);
    const cplx z(0.0, 0.2);
    const auto s = green(x.h, x.spec, SpectralParam(z));
    const auto ref = reference(x, z);
    EXPECT_LE(std::abs(local_law_error(s, ref, std::vector<cplx>(n, 1.0)) - (s.m_h - ref.m_value)), 1e-12);
}

TEST(MonteCarlo, LocalLawAndUpsilonAtN512)
{
    constexpr std::size_t n = 512;
    const SpectralParam zp(0.0, 0.05);
    std::vector<double> m_err, ups;
    const auto a = bernoulli_diag(n);
    const auto ref = solve_subordination(make_uniform_measure(a), make_uniform_measure(a), zp.z());
    double psi2 = 0.0;
    for (std::uint64_t r = 0; r < 50; ++r) {
        const auto x = instance(a, a, derive_seed(2024, {r}));
        const auto s = green(x.h, x.spec, zp);
        psi2 = s.psi * s.psi;
        m_err.push_back(std::abs(local_law_error(s, ref, std::vector<cplx>(n, 1.0))));
        ups.push_back(std::abs(s.upsilon));
    }
    const auto within = std::count_if(m_err.begin(), m_err.end(), [&](double e) { return e <= 100.0 * psi2; });
    EXPECT_GE(within, 48);
    EXPECT_TRUE(domination_test("upsilon", ups, psi2, n, 0.25, 0.95).passed);
}

TEST(MonteCarlo, EntrywiseAndRowCentering)
{
    for (std::size_t n : {256u, 512u}) {
        const SpectralParam zp(0.0, 20.0 / static_cast<double>(n));
        const auto a = bernoulli_diag(n);
        const auto ref = solve_subordination(make_uniform_measure(a), make_uniform_measure(a), zp.z());
        std::vector<double> entry, s_err, t_err;
        double psi = 0.0;
        for (std::uint64_t r = 0; r < 20; ++r) {
            const auto x = instance(a, a, derive_seed(7, {n, r}));
            const auto s = green(x.h, x.spec, zp);
            psi = s.psi;
            entry.push_back(entrywise_error(s, omega_b_of(ref)));
            const auto rows = row_quantities_all(s, x.u, x.spec.b_diag);
            const auto [se, te] = row_centering_errors(s, rows, omega_b_of(ref));
            s_err.push_back(se);
            t_err.push_back(te);
        }
        EXPECT_TRUE(domination_test("entrywise", entry, psi, n, 0.3, 0.9).passed) << n;
        EXPECT_TRUE(domination_test("s_centering", s_err, psi, n, 0.3, 0.9).passed) << n;
        EXPECT_TRUE(domination_test("t_max", t_err, psi, n, 0.3, 0.9).passed) << n;
    }
}

TEST(DominationTest, Examples)
{
    const auto zero = domination_test("x", std::vector<double>(10, 0.0), 0.1, 100, 0.25, 0.9);
    EXPECT_EQ(zero.exceed_fraction, 0.0);
    EXPECT_TRUE(zero.passed);
    const double twice = 2.0 * std::pow(100.0, 0.25) * 0.1;
    const auto over = domination_test("x", std::vector<double>(10, twice), 0.1, 100, 0.25, 0.9);
    EXPECT_EQ(over.exceed_fraction, 1.0);
    EXPECT_FALSE(over.passed);
    std::vector<double> mixed(10, 0.0);
    mixed[0] = twice;
    EXPECT_TRUE(domination_test("x", mixed, 0.1, 100, 0.25, 0.9).passed);
    mixed[1] = twice;
    EXPECT_FALSE(domination_test("x", mixed, 0.1, 100, 0.25, 0.9).passed);
    EXPECT_THROW(domination_test("x", {}, 0.1, 100, 0.25, 0.9), ValidationError);
    EXPECT_THROW(domination_test("x", {1.0}, 0.1, 100, 0.0, 0.9), ValidationError);
}

TEST(RankOneCheck, TrivialCases)
{
    const SpectralParam zp(0.2, 0.3);
    {
        const auto x = instance(random_diag(6, 1), std::vector<double>(6, 0.0), 2);
        const auto s = green(x.h, x.spec, zp);
        const auto r = rank_one_check(s, partial_decomposition(x.u, x.spec.b_diag, 3), zp);
        EXPECT_LE(std::max({r.tr_g, r.tr_bg, r.tr_bgb}), 1e-12);
    }
    {
        const auto x = instance({0.4}, {0.9}, 3);
        const auto s = green(x.h, x.spec, zp);
        const auto r = rank_one_check(s, partial_decomposition(x.u, x.spec.b_diag, 0), zp);
        EXPECT_LE(std::max({r.tr_g, r.tr_bg, r.tr_bgb}), 1e-12);
    }
}

TEST(RankOneCheck, BoundedByPsiSquared)
{
    constexpr std::size_t n = 256;
    const SpectralParam zp(0.0, 0.1);
    const auto a = bernoulli_diag(n);
    std::vector<double> worst;
    for (std::uint64_t r = 0; r < 50; ++r) {
        const auto x = instance(a, a, derive_seed(31, {r}));
        const auto s = green(x.h, x.spec, zp);
        const auto q = rank_one_check(s, partial_decomposition(x.u, x.spec.b_diag, r % n), zp);
        worst.push_back(std::max({q.tr_g, q.tr_bg, q.tr_bgb}));
    }
    EXPECT_LE(quantile(worst, 0.95), 50.0);
}

TEST(C1C2, Examples)
{
    auto [c1, c2] = c1_c2_identity(I, 2.0 * I, I, -1.0);
    EXPECT_LE(std::abs(c1), 1e-12);
    EXPECT_LE(std::abs(c2), 1e-12);
    std::tie(c1, c2) = c1_c2_identity({0.3, 0.7}, {1.0, 2.0}, {0.5, 0.1}, {0.2, -0.4});
    EXPECT_LE(std::abs(c1), 1e-10);
    EXPECT_LE(std::abs(c2), 1e-10);
    Engine rng = make_engine(3);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    double worst = 0.0;
    for (int k = 0; k < 100; ++k) {
        const auto [a, b] = c1_c2_identity({u(rng), u(rng)}, {u(rng), u(rng)}, {u(rng), u(rng)}, {u(rng), u(rng)});
        worst = std::max({worst, std::abs(a), std::abs(b)});
    }
    EXPECT_LE(worst, 1e-9);
}

TEST(GaussianLdp, TrivialCases)
{
    constexpr std::size_t n = 16;
    const CVector y = CVector::Constant(n, 1.0 / 4.0);
    const auto [lin, quad] = gaussian_ldp_check(n, 30, 1, y, std::vector<double>(n, 0.0), 0.3, 0.95);
    EXPECT_EQ(*std::max_element(quad.samples.begin(), quad.samples.end()), 0.0);
    EXPECT_TRUE(quad.passed);
    const auto [lin0, quad0] = gaussian_ldp_check(n, 30, 1, CVector::Zero(n), random_diag(n, 1), 0.3, 0.95);
    EXPECT_EQ(*std::max_element(lin0.samples.begin(), lin0.samples.end()), 0.0);
    EXPECT_TRUE(lin0.passed);
    EXPECT_THROW(gaussian_ldp_check(n, 29, 1, y, std::vector<double>(n, 0.0), 0.3, 0.95), ValidationError);
}

TEST(GaussianLdp, BothPass)
{
    constexpr std::size_t n = 256;
    const CVector y = CVector::Constant(n, 1.0 / 16.0);
    const auto x = centered(random_diag(n, 9));
    const auto [lin, quad] = gaussian_ldp_check(n, 200, 5, y, x, 0.3, 0.95);
    EXPECT_TRUE(lin.passed);
    EXPECT_TRUE(quad.passed);
}

TEST(DiagnosticsCsv, Format)
{
    EXPECT_STREQ(diagnostics_csv_header, "N,seed,E,eta,m_err,omega_a_err,omega_b_err,upsilon,max_z,avg_z,psi");
    DiagnosticsRow r;
    r.n = 4;
    r.seed = 9;
    r.e = 0.5;
    r.eta = 0.25;
    r.psi = 1.0;
    EXPECT_EQ(to_csv(r), "4,9,0.5,0.25,0,0,0,0,0,0,1");
}
