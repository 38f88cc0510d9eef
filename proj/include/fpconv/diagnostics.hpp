#ifndef FPCONV_DIAGNOSTICS_HPP
#define FPCONV_DIAGNOSTICS_HPP

// Green function of H = A + B~ (B~ = U B U*) and the tracial and row
// quantities built from it.

#include "fpconv/ensemble.hpp"
#include "fpconv/errors.hpp"
#include "fpconv/measures.hpp"
#include "fpconv/subordination.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace fpconv {

struct GreenSnapshot {
    SpectralParam z;
    CMatrix g;            // (H - z)^{-1}
    cplx m_h;             // tr G
    cplx tr_ag;           // tr AG
    cplx tr_bg;           // tr B~G
    cplx tr_bgb;          // tr B~GB~
    cplx omega_a_c;       // z - tr AG / m_h
    cplx omega_b_c;       // z - tr B~G / m_h
    cplx upsilon;
    double psi = 0.0;     // 1/sqrt(N eta)
    std::vector<double> a_diag;
    std::vector<cplx> bg_diag;  // (B~G)_ii

    std::size_t n() const noexcept { return a_diag.size(); }
};

/// Normalized trace.
inline cplx ntrace(const CMatrix& m) { return m.trace() / static_cast<double>(m.rows()); }

/// (H - z)^{-1} by LU solves against the identity.
inline CMatrix resolvent(const CMatrix& h, cplx z)
{
    require_upper_half_plane(z);
    const Eigen::Index n = h.rows();
    CMatrix shifted = h;
    shifted.diagonal().array() -= z;
    Eigen::PartialPivLU<CMatrix> lu(shifted);
    CMatrix g = lu.solve(CMatrix::Identity(n, n));
    if (!g.allFinite())
        throw NumericalError("resolvent solve produced non-finite entries");
    return g;
}

namespace detail {

// Traces of a snapshot from G, diag(A) and the product diagonal (B~G)_ii.
// tr B~GB~ uses B~GB~ = B~ - A + z + (A - z)G(A - z), valid since H = A + B~.
inline void fill_traces(GreenSnapshot& s, double tr_b)
{
    const auto n = static_cast<Eigen::Index>(s.a_diag.size());
    const double nn = static_cast<double>(n);
    const cplx z = s.z.z();
    cplx tr_ag{0.0, 0.0}, tr_bg{0.0, 0.0}, quad{0.0, 0.0};
    double tr_a = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double a = s.a_diag[static_cast<std::size_t>(i)];
        tr_a += a;
        tr_ag += a * s.g(i, i);
        tr_bg += s.bg_diag[static_cast<std::size_t>(i)];
        quad += (a - z) * (a - z) * s.g(i, i);
    }
    s.m_h = ntrace(s.g);
    s.tr_ag = tr_ag / nn;
    s.tr_bg = tr_bg / nn;
    s.tr_bgb = tr_b / nn - tr_a / nn + z + quad / nn;
    s.omega_a_c = z - s.tr_ag / s.m_h;
    s.omega_b_c = z - s.tr_bg / s.m_h;
    s.upsilon = s.tr_bg - s.tr_bg * s.tr_bg + s.m_h * s.tr_bgb;
    s.psi = 1.0 / std::sqrt(nn * s.z.eta);
}

} // namespace detail

/// Snapshot for H = A + B~ with B~ = H - A. tr B is taken from b_diag.
inline GreenSnapshot green(const CMatrix& h, const EnsembleSpec& spec, SpectralParam z)
{
    spec.validate();
    if (static_cast<std::size_t>(h.rows()) != spec.n || h.rows() != h.cols())
        throw ValidationError("matrix does not match the ensemble dimension");
    GreenSnapshot s;
    s.z = z;
    s.a_diag = spec.a_diag;
    s.g = resolvent(h, z.z());
    const auto n = h.rows();
    s.bg_diag.resize(spec.n);
    // (B~G)_ii = sum_j B~_ij G_ji with B~ = H - A off the diagonal unchanged.
    for (Eigen::Index i = 0; i < n; ++i) {
        cplx acc = (h(i, i) - spec.a_diag[static_cast<std::size_t>(i)]) * s.g(i, i);
        for (Eigen::Index j = 0; j < n; ++j)
            if (j != i)
                acc += h(i, j) * s.g(j, i);
        s.bg_diag[static_cast<std::size_t>(i)] = acc;
    }
    double tr_b = 0.0;
    for (double b : spec.b_diag)
        tr_b += b;
    detail::fill_traces(s, tr_b);
    return s;
}

inline GreenSnapshot green(const CMatrix& h, const EnsembleSpec& spec, const HaarUnitary& u, SpectralParam z)
{
    if (u.n() != spec.n)
        throw ValidationError("unitary does not match the ensemble dimension");
    return green(h, spec, z);
}

struct RowDiagnostics {
    std::size_t i = 0;
    cplx s_i;
    cplx t_i;
    cplx z_i;
};

/// Z_i = (B~G)_ii tr G - G_ii (tr B~G - Upsilon).
inline cplx z_row(const GreenSnapshot& s, std::size_t i)
{
    const auto ii = static_cast<Eigen::Index>(i);
    return s.bg_diag[i] * s.m_h - s.g(ii, ii) * (s.tr_bg - s.upsilon);
}

/// S_i = h* B~<i> G e_i and T_i = h* G e_i from an explicit decomposition.
inline RowDiagnostics row_quantities(const GreenSnapshot& s, const Decomposition& d)
{
    if (d.i >= s.n() || static_cast<std::size_t>(d.h.size()) != s.n())
        throw ValidationError("decomposition index or size does not match the snapshot");
    const auto ii = static_cast<Eigen::Index>(d.i);
    const CVector gi = s.g.col(ii);
    RowDiagnostics r;
    r.i = d.i;
    r.t_i = d.h.dot(gi);
    r.s_i = d.h.dot(d.b_tilde * gi);
    r.z_i = z_row(s, d.i);
    return r;
}

/// All rows at O(N^2) total. Uses h* R = -e_i*, so
/// S_i = -[(B~G)_ii - (B~r)_i (r* G e_i)], with (B~r)_i = ell (B~_ii + b_i |v_i|)
/// and r* G e_i = ell (G_ii + T_i), T_i = e^{i theta} v* G e_i.
inline std::vector<RowDiagnostics> row_quantities_all(const GreenSnapshot& s, const HaarUnitary& u,
                                                      const std::vector<double>& b_diag)
{
    const std::size_t n = s.n();
    if (u.n() != n || b_diag.size() != n)
        throw ValidationError("unitary or diagonal does not match the snapshot");
    std::vector<RowDiagnostics> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        const auto v = u.u.col(ii);
        const cplx vi = v(ii);
        if (std::abs(vi) < 1e-14)
            throw DegeneratePhaseError("column " + std::to_string(i) + " has a vanishing diagonal entry");
        const cplx phase = vi / std::abs(vi);
        const double ell = 1.0 / std::sqrt(1.0 + std::abs(vi));
        double bt_ii = 0.0;
        for (Eigen::Index k = 0; k < v.size(); ++k)
            bt_ii += b_diag[static_cast<std::size_t>(k)] * std::norm(u.u(ii, k));
        RowDiagnostics r;
        r.i = i;
        r.t_i = phase * v.dot(s.g.col(ii));
        const cplx btr = ell * (bt_ii + b_diag[i] * std::abs(vi));
        const cplx rg = ell * (s.g(ii, ii) + r.t_i);
        r.s_i = -(s.bg_diag[i] - btr * rg);
        r.z_i = z_row(s, i);
        out[i] = r;
    }
    return out;
}

/// (1/N) sum d_i Z_i.
inline cplx weighted_average(std::span<const RowDiagnostics> rows, std::span<const cplx> weights)
{
    if (rows.size() != weights.size())
        throw ValidationError("rows and weights differ in length");
    if (rows.empty())
        throw ValidationError("weighted average needs at least one row");
    cplx acc{0.0, 0.0};
    for (std::size_t k = 0; k < rows.size(); ++k) {
        if (std::abs(weights[k]) > 1.0 + 1e-12)
            throw ValidationError("weight " + std::to_string(k) + " has modulus above 1");
        acc += weights[k] * rows[k].z_i;
    }
    return acc / static_cast<double>(rows.size());
}

/// omega_B from a pair solved as solve_subordination(mu_A, mu_B, ...): the
/// argument of F_{mu_A}, i.e. the second slot.
inline cplx omega_b_of(const SubordinationPair& p) { return p.omega2; }
inline cplx omega_a_of(const SubordinationPair& p) { return p.omega1; }

/// Reject a reference pair whose slots are swapped relative to (mu_A, mu_B):
/// m_{mu_A}(omega_B) must reproduce the convolution's Stieltjes transform.
inline void check_reference_convention(const GreenSnapshot& s, const SubordinationPair& ref)
{
    const cplx w = omega_b_of(ref);
    cplx m{0.0, 0.0};
    for (double a : s.a_diag)
        m += 1.0 / (a - w);
    m /= static_cast<double>(s.n());
    if (std::abs(m - ref.m_value) > 1e-8 * (1.0 + std::abs(ref.m_value)))
        throw ValidationError("reference subordination pair does not match the (mu_A, mu_B) slot convention");
}

/// (1/N) sum d_i (G_ii - 1/(a_i - omega_B)).
inline cplx local_law_error(const GreenSnapshot& s, const SubordinationPair& ref, std::span<const cplx> weights)
{
    if (weights.size() != s.n())
        throw ValidationError("weights do not match the snapshot dimension");
    check_reference_convention(s, ref);
    const cplx w = omega_b_of(ref);
    cplx acc{0.0, 0.0};
    for (std::size_t i = 0; i < s.n(); ++i) {
        if (std::abs(weights[i]) > 1.0 + 1e-12)
            throw ValidationError("weight " + std::to_string(i) + " has modulus above 1");
        const auto ii = static_cast<Eigen::Index>(i);
        acc += weights[i] * (s.g(ii, ii) - 1.0 / (s.a_diag[i] - w));
    }
    return acc / static_cast<double>(s.n());
}

/// max_ij |G_ij - delta_ij / (a_i - omega_B)|.
inline double entrywise_error(const GreenSnapshot& s, cplx omega_b)
{
    double worst = 0.0;
    const auto n = static_cast<Eigen::Index>(s.n());
    for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index i = 0; i < n; ++i) {
            cplx e = s.g(i, j);
            if (i == j)
                e -= 1.0 / (s.a_diag[static_cast<std::size_t>(i)] - omega_b);
            worst = std::max(worst, std::abs(e));
        }
    return worst;
}

/// max_i |S_i + (z - omega_B)/(a_i - omega_B)| and max_i |T_i|.
inline std::pair<double, double> row_centering_errors(const GreenSnapshot& s, std::span<const RowDiagnostics> rows,
                                                      cplx omega_b)
{
    const cplx z = s.z.z();
    double s_err = 0.0, t_err = 0.0;
    for (const auto& r : rows) {
        s_err = std::max(s_err, std::abs(r.s_i + (z - omega_b) / (s.a_diag[r.i] - omega_b)));
        t_err = std::max(t_err, std::abs(r.t_i));
    }
    return {s_err, t_err};
}

struct DominationStat {
    std::string statistic_name;
    std::vector<double> samples;
    double bound = 0.0;
    double epsilon = 0.0;
    double exceed_fraction = 0.0;
    double pass_fraction = 0.0;
    bool passed = false;
};

/// Finite-N reading of X < Y: the fraction of samples with |X| > n^eps * bound
/// must not exceed 1 - pass_fraction.
inline DominationStat domination_test(std::string name, std::vector<double> samples, double bound, std::size_t n,
                                      double epsilon, double pass_fraction)
{
    if (samples.empty())
        throw ValidationError("domination test needs samples");
    if (!(bound >= 0.0) || !(epsilon > 0.0) || n == 0)
        throw ValidationError("domination test needs bound >= 0, epsilon > 0 and n >= 1");
    if (!(pass_fraction >= 0.0 && pass_fraction <= 1.0))
        throw ValidationError("pass_fraction must lie in [0, 1]");
    const double threshold = std::pow(static_cast<double>(n), epsilon) * bound;
    std::size_t exceed = 0;
    for (double x : samples)
        if (!(std::abs(x) <= threshold))
            ++exceed;
    DominationStat st;
    st.statistic_name = std::move(name);
    st.samples = std::move(samples);
    st.bound = bound;
    st.epsilon = epsilon;
    st.pass_fraction = pass_fraction;
    st.exceed_fraction = static_cast<double>(exceed) / static_cast<double>(st.samples.size());
    st.passed = st.exceed_fraction <= 1.0 - pass_fraction + 1e-12;
    return st;
}

struct RankOneRatios {
    double tr_g = 0.0;
    double tr_bg = 0.0;
    double tr_bgb = 0.0;
};

/// |tr G - tr G<i>|, |tr B~<i>G<i> - tr B~G| and |tr B~<i>G<i>B~<i> - tr B~GB~|,
/// each divided by Psi^2, with G<i> the resolvent of H<i> = A + B~<i>.
inline RankOneRatios rank_one_check(const GreenSnapshot& s, const Decomposition& d, SpectralParam z)
{
    if (static_cast<std::size_t>(d.b_tilde.rows()) != s.n())
        throw ValidationError("decomposition does not match the snapshot");
    const auto n = d.b_tilde.rows();
    CMatrix hb = d.b_tilde;
    hb.diagonal() += to_eigen(s.a_diag).cast<cplx>();
    GreenSnapshot b;
    b.z = z;
    b.a_diag = s.a_diag;
    b.g = resolvent(hb, z.z());
    b.bg_diag.resize(s.n());
    for (Eigen::Index i = 0; i < n; ++i)
        b.bg_diag[static_cast<std::size_t>(i)] = d.b_tilde.row(i) * b.g.col(i);
    detail::fill_traces(b, d.b_tilde.trace().real());
    const double psi2 = s.psi * s.psi;
    return {std::abs(s.m_h - b.m_h) / psi2, std::abs(b.tr_bg - s.tr_bg) / psi2, std::abs(b.tr_bgb - s.tr_bgb) / psi2};
}

/// The two polynomial expressions C1, C2 in (m, m', omega, z); both vanish identically.
inline std::pair<cplx, cplx> c1_c2_identity(cplx m, cplx omega, cplx z, cplx m_prime)
{
    const cplx d = omega - z;
    const cplx c1 = (z - omega) * m - (z - omega) * (z - omega) * m * m + m * (d + d * d * m);
    const cplx c2 = -(m + d * m_prime) + 2.0 * (z - omega) * m * (m + d * m_prime) +
                    m * (1.0 + 2.0 * d * m + d * d * m_prime) + m_prime * (d + d * d * m);
    return {c1, c2};
}

/// Large deviation check for g ~ N_C(0, sigma^2 I), sigma^2 = 1/n:
/// |y* g| against sigma |y|_2 and |g* X g - sigma^2 Tr X| against sigma^2 |X|_HS.
/// X is diagonal, given by x_diag.
inline std::pair<DominationStat, DominationStat> gaussian_ldp_check(std::size_t n, std::size_t replicas,
                                                                    std::uint64_t seed, const CVector& y,
                                                                    const std::vector<double>& x_diag,
                                                                    double epsilon, double pass_fraction)
{
    if (replicas < 30)
        throw ValidationError("gaussian_ldp_check needs at least 30 replicas");
    if (static_cast<std::size_t>(y.size()) != n || x_diag.size() != n)
        throw ValidationError("y and X must have dimension n");
    const double sigma2 = 1.0 / static_cast<double>(n);
    double tr_x = 0.0, hs = 0.0;
    for (double x : x_diag) {
        tr_x += x;
        hs += x * x;
    }
    hs = std::sqrt(hs);
    std::vector<double> lin(replicas), quad(replicas);
    for (std::size_t r = 0; r < replicas; ++r) {
        Engine rng = make_engine(derive_seed(seed, {r}));
        std::normal_distribution<double> normal(0.0, std::sqrt(0.5 * sigma2));
        cplx ys{0.0, 0.0};
        double q = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            const double re = normal(rng);
            const double im = normal(rng);
            const cplx g(re, im);
            ys += std::conj(y(static_cast<Eigen::Index>(k))) * g;
            q += x_diag[k] * std::norm(g);
        }
        lin[r] = std::abs(ys);
        quad[r] = std::abs(q - sigma2 * tr_x);
    }
    return {domination_test("linear_form", std::move(lin), std::sqrt(sigma2) * y.norm(), n, epsilon, pass_fraction),
            domination_test("quadratic_form", std::move(quad), sigma2 * hs, n, epsilon, pass_fraction)};
}

inline constexpr const char* diagnostics_csv_header = "N,seed,E,eta,m_err,omega_a_err,omega_b_err,upsilon,max_z,avg_z,psi";

struct DiagnosticsRow {
    std::size_t n = 0;
    std::uint64_t seed = 0;
    double e = 0.0;
    double eta = 0.0;
    double m_err = 0.0;
    double omega_a_err = 0.0;
    double omega_b_err = 0.0;
    double upsilon = 0.0;
    double max_z = 0.0;
    double avg_z = 0.0;
    double psi = 0.0;
};

inline std::string to_csv(const DiagnosticsRow& r)
{
    char buf[512];
    std::snprintf(buf, sizeof buf, "%zu,%llu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g", r.n,
                  static_cast<unsigned long long>(r.seed), r.e, r.eta, r.m_err, r.omega_a_err, r.omega_b_err,
                  r.upsilon, r.max_z, r.avg_z, r.psi);
    return buf;
}

/// One diagnostics row against the reference pair of (mu_A, mu_B) at the snapshot's z.
inline DiagnosticsRow diagnose(const GreenSnapshot& s, const SubordinationPair& ref, std::span<const RowDiagnostics> rows,
                               std::uint64_t seed)
{
    DiagnosticsRow r;
    r.n = s.n();
    r.seed = seed;
    r.e = s.z.e;
    r.eta = s.z.eta;
    const std::vector<cplx> ones(s.n(), cplx(1.0, 0.0));
    r.m_err = std::abs(local_law_error(s, ref, ones));
    r.omega_a_err = std::abs(s.omega_a_c - omega_a_of(ref));
    r.omega_b_err = std::abs(s.omega_b_c - omega_b_of(ref));
    r.upsilon = std::abs(s.upsilon);
    for (const auto& row : rows)
        r.max_z = std::max(r.max_z, std::abs(row.z_i));
    r.avg_z = std::abs(weighted_average(rows, ones));
    r.psi = s.psi;
    return r;
}

} // namespace fpconv

#endif
