#ifndef FPCONV_ENSEMBLE_HPP
#define FPCONV_ENSEMBLE_HPP

// The random matrix model H = A + U B U* with U Haar on U(N), and the
// column-wise partial randomness decomposition U = -e^{i theta_i} R_i U<i>.

#include "fpconv/errors.hpp"
#include "fpconv/measures.hpp"
#include "fpconv/rng.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace fpconv {

using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using RVector = Eigen::VectorXd;

/// Diagonal data of A and B plus the seed of the Haar sample.
struct EnsembleSpec {
    std::size_t n = 0;
    std::vector<double> a_diag;
    std::vector<double> b_diag;
    std::uint64_t seed = 0;

    void validate(double norm_bound = std::numeric_limits<double>::infinity()) const
    {
        if (n == 0)
            throw ValidationError("ensemble dimension must be positive");
        if (a_diag.size() != n || b_diag.size() != n)
            throw ValidationError("ensemble diagonals must have length n = " + std::to_string(n));
        for (const auto* d : {&a_diag, &b_diag})
            for (double x : *d)
                if (!std::isfinite(x) || std::abs(x) > norm_bound)
                    throw ValidationError("ensemble diagonal entry " + std::to_string(x) + " exceeds the norm bound");
    }
};

/// Subtract the mean so that tr = 0.
inline std::vector<double> centered(std::vector<double> d)
{
    if (d.empty())
        return d;
    const double mean = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(d.size());
    for (double& x : d)
        x -= mean;
    return d;
}

struct HaarUnitary {
    CMatrix u;
    std::size_t n() const noexcept { return static_cast<std::size_t>(u.rows()); }
};

/// n x n matrix of i.i.d. standard complex Gaussians (E|z|^2 = 1).
inline CMatrix ginibre(std::size_t n, Engine& rng)
{
    std::normal_distribution<double> normal(0.0, std::sqrt(0.5));
    CMatrix z(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (Eigen::Index j = 0; j < z.cols(); ++j)
        for (Eigen::Index i = 0; i < z.rows(); ++i) {
            const double re = normal(rng);
            const double im = normal(rng);
            z(i, j) = cplx(re, im);
        }
    return z;
}

/// Haar unitary from the QR factorization of a Ginibre matrix with the phases
/// of diag(R) moved into Q, so that Z = (Q Lambda)(Lambda* R) has a
/// positive-diagonal triangular factor.
inline HaarUnitary sample_haar(std::size_t n, std::uint64_t seed)
{
    if (n == 0)
        throw ValidationError("Haar sample needs n >= 1");
    Engine rng = make_engine(seed);
    const CMatrix z = ginibre(n, rng);
    Eigen::HouseholderQR<CMatrix> qr(z);
    HaarUnitary out{qr.householderQ()};
    const CMatrix& r = qr.matrixQR();
    for (Eigen::Index k = 0; k < r.rows(); ++k) {
        const cplx d = r(k, k);
        const double mod = std::abs(d);
        out.u.col(k) *= mod > 0.0 ? d / mod : cplx(1.0, 0.0);
    }
    return out;
}

inline double max_abs_asymmetry(const CMatrix& h) { return (h - h.adjoint()).cwiseAbs().maxCoeff(); }

inline CMatrix hermitize(const CMatrix& h) { return 0.5 * (h + h.adjoint()); }

inline RVector to_eigen(const std::vector<double>& v)
{
    return Eigen::Map<const RVector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

/// U diag(b) U*.
inline CMatrix rotated(const HaarUnitary& u, const std::vector<double>& b_diag)
{
    if (b_diag.size() != u.n())
        throw ValidationError("diagonal length does not match the unitary");
    const CMatrix ub = u.u * to_eigen(b_diag).asDiagonal();
    return hermitize(ub * u.u.adjoint());
}

/// H = diag(a) + U diag(b) U*, Hermitized.
inline CMatrix build_h(const EnsembleSpec& spec, const HaarUnitary& u)
{
    spec.validate();
    if (u.n() != spec.n)
        throw ValidationError("unitary dimension " + std::to_string(u.n()) + " does not match n = " +
                              std::to_string(spec.n));
    CMatrix h = rotated(u, spec.b_diag);
    h.diagonal() += to_eigen(spec.a_diag).cast<cplx>();
    return h;
}

struct SpectralData {
    std::vector<double> eigenvalues;  // ascending
    CMatrix h;
    std::optional<CMatrix> eigenvectors;
};

/// Full spectrum of a Hermitian matrix (Householder tridiagonalization +
/// implicit symmetric QR).
inline SpectralData eigen_h(const CMatrix& h, bool with_vectors = false)
{
    if (h.rows() != h.cols())
        throw ValidationError("eigen_h needs a square matrix");
    if (h.size() > 0 && max_abs_asymmetry(h) > 1e-8)
        throw ValidationError("eigen_h input is not Hermitian");
    Eigen::SelfAdjointEigenSolver<CMatrix> es(h, with_vectors ? Eigen::ComputeEigenvectors : Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success)
        throw NumericalError("Hermitian eigensolver failed");
    SpectralData out;
    out.eigenvalues.assign(es.eigenvalues().data(), es.eigenvalues().data() + es.eigenvalues().size());
    std::sort(out.eigenvalues.begin(), out.eigenvalues.end());
    out.h = h;
    if (with_vectors)
        out.eigenvectors = es.eigenvectors();
    return out;
}

/// #{lambda in (lo, hi]} / n.
inline double empirical_interval_mass(const SpectralData& s, double lo, double hi)
{
    if (!(hi > lo))
        throw ValidationError("interval needs lo < hi");
    const auto& ev = s.eigenvalues;
    const auto first = std::upper_bound(ev.begin(), ev.end(), lo);
    const auto last = std::upper_bound(ev.begin(), ev.end(), hi);
    return static_cast<double>(last - first) / static_cast<double>(ev.size());
}

/// Partial randomness decomposition of U along column i (0-based):
/// U = -e^{i theta} R U<i>, R = I - r r*, r = sqrt2 (e_i + h)/|e_i + h|, h = e^{-i theta} v.
struct Decomposition {
    std::size_t i = 0;
    CVector v;            // U e_i
    double theta = 0.0;   // arg v_i
    CVector h;            // e^{-i theta} v
    double g_norm = 1.0;  // |g_i|_2 when built from a Gaussian vector
    double ell = 1.0;     // sqrt2 / |e_i + h|
    CVector r;
    CMatrix big_r;        // I - r r*
    CMatrix u_bracket;    // U<i>, has e_i as i-th column
    CMatrix b_tilde;      // U<i> B U<i>*
};

class DegeneratePhaseError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

namespace detail {

inline void fill_reflection(Decomposition& d, Eigen::Index n)
{
    CVector ei = CVector::Zero(n);
    ei(static_cast<Eigen::Index>(d.i)) = 1.0;
    const CVector s = ei + d.h;
    const double norm = s.norm();
    d.ell = std::sqrt(2.0) / norm;
    d.r = d.ell * s;
    d.big_r = CMatrix::Identity(n, n) - d.r * d.r.adjoint();
}

} // namespace detail

inline Decomposition partial_decomposition(const HaarUnitary& u, const std::vector<double>& b_diag, std::size_t i)
{
    const auto n = static_cast<Eigen::Index>(u.n());
    if (i >= u.n())
        throw ValidationError("decomposition index out of range");
    if (b_diag.size() != u.n())
        throw ValidationError("diagonal length does not match the unitary");
    const auto ii = static_cast<Eigen::Index>(i);
    Decomposition d;
    d.i = i;
    d.v = u.u.col(ii);
    if (std::abs(d.v(ii)) < 1e-14)
        throw DegeneratePhaseError("column " + std::to_string(i) + " has a vanishing diagonal entry");
    d.theta = std::arg(d.v(ii));
    const cplx phase = std::polar(1.0, -d.theta);
    d.h = phase * d.v;
    d.g_norm = 1.0;
    detail::fill_reflection(d, n);
    // R^2 = I, so U<i> = -e^{-i theta} R U.
    d.u_bracket = -phase * (d.big_r * u.u);
    d.b_tilde = hermitize((d.u_bracket * to_eigen(b_diag).asDiagonal()) * d.u_bracket.adjoint());
    return d;
}

/// H<i> = A + B~<i>, independent of the i-th column of U.
inline CMatrix h_bracket(const EnsembleSpec& spec, const Decomposition& d)
{
    if (static_cast<std::size_t>(d.b_tilde.rows()) != spec.n)
        throw ValidationError("decomposition does not match the ensemble dimension");
    CMatrix h = d.b_tilde;
    h.diagonal() += to_eigen(spec.a_diag).cast<cplx>();
    return h;
}

/// Column data built from an explicit Gaussian vector g~ ~ N_C(0, I/n):
/// v = g~/|g~|, g = e^{-i theta} g~ (so g_ii >= 0), h = g/|g|, ell = sqrt2/|e_i + h|.
struct GaussianColumn {
    CVector g;
    double g_ii = 0.0;
    double g_norm = 0.0;
    double ell = 0.0;
};

inline GaussianColumn gaussian_column(std::size_t n, std::size_t i, Engine& rng)
{
    std::normal_distribution<double> normal(0.0, std::sqrt(0.5 / static_cast<double>(n)));
    CVector gt(static_cast<Eigen::Index>(n));
    for (Eigen::Index k = 0; k < gt.size(); ++k) {
        const double re = normal(rng);
        const double im = normal(rng);
        gt(k) = cplx(re, im);
    }
    const auto ii = static_cast<Eigen::Index>(i);
    GaussianColumn c;
    c.g = std::polar(1.0, -std::arg(gt(ii))) * gt;
    c.g_ii = c.g(ii).real();
    c.g_norm = c.g.norm();
    CVector s = c.g / c.g_norm;
    s(ii) += 1.0;
    c.ell = std::sqrt(2.0) / s.norm();
    return c;
}

/// Atoms of a quantile discretization: a_k = inf{x : F(x) >= (k - 1/2)/n}, k = 1..n.
inline std::vector<double> quantile_sample(const DiscreteMeasure& mu, std::size_t n)
{
    std::vector<double> out(n);
    const auto& a = mu.atoms();
    const auto& w = mu.weights();
    std::size_t k = 0;
    double cum = w[0];
    for (std::size_t j = 0; j < n; ++j) {
        const double level = (static_cast<double>(j) + 0.5) / static_cast<double>(n);
        while (k + 1 < a.size() && cum < level - 1e-14)
            cum += w[++k];
        out[j] = a[k];
    }
    return out;
}

/// Spectrum as CSV, one eigenvalue per line.
inline std::string spectrum_csv(const SpectralData& s)
{
    std::string out;
    char buf[64];
    for (double x : s.eigenvalues) {
        std::snprintf(buf, sizeof buf, "%.17g\n", x);
        out += buf;
    }
    return out;
}

} // namespace fpconv

#endif
