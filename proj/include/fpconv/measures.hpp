#ifndef FPCONV_MEASURES_HPP
#define FPCONV_MEASURES_HPP

// Discrete probability measures on the real line and their transforms.

#include "fpconv/errors.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace fpconv {

using cplx = std::complex<double>;

/// z = E + i eta with eta > 0.
struct SpectralParam {
    double e = 0.0;
    double eta = 1.0;

    SpectralParam() = default;
    SpectralParam(double e_, double eta_) : e(e_), eta(eta_)
    {
        if (!(eta_ > 0.0) || !std::isfinite(e_) || !std::isfinite(eta_))
            throw ValidationError("spectral parameter needs finite E and eta > 0");
    }
    explicit SpectralParam(cplx z) : SpectralParam(z.real(), z.imag()) {}

    cplx z() const noexcept { return {e, eta}; }
};

class MeasureError : public ValidationError {
public:
    enum class Kind { empty, length_mismatch, negative_weight, non_finite_atom, non_finite_weight, zero_mass, not_normalized };

    MeasureError(Kind kind, const std::string& what) : ValidationError(what), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

/// Finitely supported probability measure: sorted, duplicate-free atoms with
/// weights summing to one. Only constructible through make_measure.
class DiscreteMeasure {
public:
    const std::vector<double>& atoms() const noexcept { return atoms_; }
    const std::vector<double>& weights() const noexcept { return weights_; }
    std::size_t size() const noexcept { return atoms_.size(); }
    double min_atom() const noexcept { return atoms_.front(); }
    double max_atom() const noexcept { return atoms_.back(); }
    bool is_point_mass() const noexcept { return atoms_.size() == 1; }

    friend bool operator==(const DiscreteMeasure&, const DiscreteMeasure&) = default;

private:
    friend DiscreteMeasure make_measure(std::span<const double>, std::span<const double>);
    std::vector<double> atoms_;
    std::vector<double> weights_;
};

/// Atoms closer than this are merged.
inline constexpr double atom_merge_tolerance = 1e-12;

inline DiscreteMeasure make_measure(std::span<const double> atoms, std::span<const double> weights)
{
    using K = MeasureError::Kind;
    if (atoms.empty() || weights.empty())
        throw MeasureError(K::empty, "measure needs at least one atom");
    if (atoms.size() != weights.size())
        throw MeasureError(K::length_mismatch, "atoms and weights differ in length");
    double total = 0.0;
    for (std::size_t k = 0; k < atoms.size(); ++k) {
        if (!std::isfinite(atoms[k]))
            throw MeasureError(K::non_finite_atom, "atom " + std::to_string(k) + " is not finite");
        if (!std::isfinite(weights[k]))
            throw MeasureError(K::non_finite_weight, "weight " + std::to_string(k) + " is not finite");
        if (weights[k] < 0.0)
            throw MeasureError(K::negative_weight, "weight " + std::to_string(k) + " is negative");
        total += weights[k];
    }
    if (total <= 0.0)
        throw MeasureError(K::zero_mass, "measure has zero total mass");
    if (std::abs(total - 1.0) > 1e-9)
        throw MeasureError(K::not_normalized, "weights sum to " + std::to_string(total) + ", expected 1");

    std::vector<std::size_t> order(atoms.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return atoms[a] < atoms[b]; });

    DiscreteMeasure mu;
    for (std::size_t k : order) {
        if (!mu.atoms_.empty() && atoms[k] - mu.atoms_.back() <= atom_merge_tolerance) {
            mu.weights_.back() += weights[k];
            continue;
        }
        mu.atoms_.push_back(atoms[k]);
        mu.weights_.push_back(weights[k]);
    }
    // Renormalize only when visibly off, so normalizing twice is a no-op.
    const double sum = std::accumulate(mu.weights_.begin(), mu.weights_.end(), 0.0);
    if (std::abs(sum - 1.0) > 1e-14)
        for (double& w : mu.weights_)
            w /= sum;
    return mu;
}

inline DiscreteMeasure make_measure(const std::vector<double>& atoms, const std::vector<double>& weights)
{
    return make_measure(std::span<const double>(atoms), std::span<const double>(weights));
}

/// Empirical measure (1/n) sum delta_{x_k}.
inline DiscreteMeasure make_uniform_measure(std::span<const double> atoms)
{
    std::vector<double> w(atoms.size(), atoms.empty() ? 0.0 : 1.0 / static_cast<double>(atoms.size()));
    return make_measure(atoms, std::span<const double>(w));
}

inline DiscreteMeasure point_mass(double a)
{
    return make_measure(std::vector<double>{a}, std::vector<double>{1.0});
}

inline void require_upper_half_plane(cplx z)
{
    if (!(z.imag() > 0.0) || !std::isfinite(z.real()) || !std::isfinite(z.imag()))
        throw ValidationError("spectral argument must lie in the open upper half-plane");
}

/// m(z) = sum_k w_k / (a_k - z).
inline cplx stieltjes(const DiscreteMeasure& mu, cplx z)
{
    require_upper_half_plane(z);
    cplx m{0.0, 0.0};
    const auto& a = mu.atoms();
    const auto& w = mu.weights();
    for (std::size_t k = 0; k < a.size(); ++k)
        m += w[k] / (a[k] - z);
    return m;
}

inline cplx stieltjes(const DiscreteMeasure& mu, SpectralParam z) { return stieltjes(mu, z.z()); }

/// Stieltjes transform together with its derivative m'(z) = sum_k w_k/(a_k - z)^2.
inline std::pair<cplx, cplx> stieltjes_with_derivative(const DiscreteMeasure& mu, cplx z)
{
    require_upper_half_plane(z);
    cplx m{0.0, 0.0};
    cplx dm{0.0, 0.0};
    const auto& a = mu.atoms();
    const auto& w = mu.weights();
    for (std::size_t k = 0; k < a.size(); ++k) {
        const cplx r = 1.0 / (a[k] - z);
        m += w[k] * r;
        dm += w[k] * r * r;
    }
    return {m, dm};
}

/// Negative reciprocal Stieltjes transform F = -1/m.
inline cplx f_transform(const DiscreteMeasure& mu, cplx z) { return -1.0 / stieltjes(mu, z); }
inline cplx f_transform(const DiscreteMeasure& mu, SpectralParam z) { return f_transform(mu, z.z()); }

/// F'(z) = m'(z) / m(z)^2.
inline cplx f_prime(const DiscreteMeasure& mu, cplx z)
{
    const auto [m, dm] = stieltjes_with_derivative(mu, z);
    return dm / (m * m);
}
inline cplx f_prime(const DiscreteMeasure& mu, SpectralParam z) { return f_prime(mu, z.z()); }

/// Right-continuous CDF: sum of weights of atoms <= x.
inline double cdf(const DiscreteMeasure& mu, double x)
{
    const auto& a = mu.atoms();
    const auto& w = mu.weights();
    const auto end = std::upper_bound(a.begin(), a.end(), x);
    double s = 0.0;
    for (auto it = a.begin(); it != end; ++it)
        s += w[static_cast<std::size_t>(it - a.begin())];
    return std::min(s, 1.0);
}

/// Mass of the half-open interval (lo, hi].
inline double interval_mass(const DiscreteMeasure& mu, double lo, double hi)
{
    const auto& a = mu.atoms();
    const auto& w = mu.weights();
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k)
        if (a[k] > lo && a[k] <= hi)
            s += w[k];
    return s;
}

namespace detail {

inline bool lexicographically_less(const DiscreteMeasure& x, const DiscreteMeasure& y)
{
    if (x.atoms() != y.atoms())
        return x.atoms() < y.atoms();
    return x.weights() < y.weights();
}

// Envelope test F(x-eps)-eps <= G(x) <= F(x+eps)+eps. Both sides are monotone
// step functions, so it is enough to test each at the jumps of the function
// that must stay below.
inline bool levy_envelope_holds(const DiscreteMeasure& f, const DiscreteMeasure& g, double eps)
{
    constexpr double slack = 1e-13;
    for (double a : f.atoms())
        if (cdf(f, a) > cdf(g, a + eps) + eps + slack)
            return false;
    for (double b : g.atoms())
        if (cdf(g, b) > cdf(f, b + eps) + eps + slack)
            return false;
    return true;
}

} // namespace detail

/// Levy distance between the step CDFs of two discrete measures, by bisection
/// over eps to absolute tolerance 1e-10.
inline double levy_distance(const DiscreteMeasure& mu1, const DiscreteMeasure& mu2)
{
    const DiscreteMeasure& f = detail::lexicographically_less(mu2, mu1) ? mu2 : mu1;
    const DiscreteMeasure& g = &f == &mu1 ? mu2 : mu1;
    if (f == g || detail::levy_envelope_holds(f, g, 0.0))
        return 0.0;
    double lo = 0.0;
    double hi = 1.0;
    while (hi - lo > 1e-10) {
        const double mid = 0.5 * (lo + hi);
        if (detail::levy_envelope_holds(f, g, mid))
            hi = mid;
        else
            lo = mid;
    }
    return hi;
}

/// Density estimate on a grid; values are clamped at zero.
struct GridDensity {
    std::vector<double> grid;
    std::vector<double> values;
    double eta_used = 0.0;
    /// Grid indices whose evaluation failed (value reported as 0).
    std::vector<std::size_t> failed;
};

inline void validate_eta_schedule(std::span<const double> schedule)
{
    if (schedule.size() < 2)
        throw ValidationError("eta schedule needs at least two entries");
    for (std::size_t k = 0; k < schedule.size(); ++k) {
        if (!(schedule[k] > 0.0))
            throw ValidationError("eta schedule entries must be positive");
        if (k > 0 && !(schedule[k] < schedule[k - 1]))
            throw ValidationError("eta schedule must be strictly decreasing");
    }
}

inline void validate_grid(std::span<const double> grid)
{
    for (std::size_t k = 1; k < grid.size(); ++k)
        if (!(grid[k] > grid[k - 1]))
            throw ValidationError("grid must be strictly increasing");
}

/// Linear-in-eta Richardson step on the two smallest scales of a schedule:
/// Im m(E + i eta)/pi = f(E) + c eta.
inline double richardson_density(std::span<const double> etas, std::span<const double> im_m)
{
    const std::size_t n = etas.size();
    const double e1 = etas[n - 2];
    const double e2 = etas[n - 1];
    const double y1 = im_m[n - 2] / M_PI;
    const double y2 = im_m[n - 1] / M_PI;
    return std::max(0.0, (e1 * y2 - e2 * y1) / (e1 - e2));
}

/// Numerical Stieltjes inversion f(E) ~ (1/pi) Im m(E + i eta), extrapolated
/// eta -> 0 across `eta_schedule` (strictly decreasing). For each grid point
/// the evaluator is called in schedule order, so stateful evaluators may
/// continue from the previous scale.
inline GridDensity invert_density(const std::function<cplx(cplx)>& m_evaluator, std::span<const double> grid,
                                  std::span<const double> eta_schedule)
{
    validate_eta_schedule(eta_schedule);
    validate_grid(grid);
    GridDensity out;
    out.grid.assign(grid.begin(), grid.end());
    out.values.reserve(grid.size());
    out.eta_used = eta_schedule.back();
    std::vector<double> im(eta_schedule.size());
    for (double e : grid) {
        for (std::size_t k = 0; k < eta_schedule.size(); ++k)
            im[k] = m_evaluator(cplx(e, eta_schedule[k])).imag();
        out.values.push_back(richardson_density(eta_schedule, im));
    }
    return out;
}

/// Composite trapezoid rule over a (possibly non-uniform) grid.
inline double trapezoid(std::span<const double> x, std::span<const double> y)
{
    double s = 0.0;
    for (std::size_t k = 1; k < x.size(); ++k)
        s += 0.5 * (x[k] - x[k - 1]) * (y[k] + y[k - 1]);
    return s;
}

} // namespace fpconv

#endif
