#ifndef FPCONV_SUBORDINATION_HPP
#define FPCONV_SUBORDINATION_HPP

// Subordination system for the free additive convolution mu1 [+] mu2:
//
//   Phi_1 = F_{mu1}(w2) - w1 - w2 + z = 0
//   Phi_2 = F_{mu2}(w1) - w1 - w2 + z = 0
//
// and the derived Stieltjes transform, density, interval masses and
// regular-bulk windows.

#include "fpconv/errors.hpp"
#include "fpconv/measures.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace fpconv {

struct SubordinationPair {
    cplx omega1;
    cplx omega2;
    cplx f_value;  // F(z) = F_{mu1}(omega2)
    cplx m_value;  // -1 / f_value
    double residual = std::numeric_limits<double>::infinity();
    std::size_t iterations = 0;
};

struct SolverOptions {
    double tol = 1e-12;
    std::size_t max_iter = 10000;
    std::size_t newton_max_iter = 50;
    /// Fixed-point residual below which the solver hands over to Newton.
    double newton_switch = 1e-8;

    friend bool operator==(const SolverOptions&, const SolverOptions&) = default;
};

/// Raised when neither the fixed-point map nor Newton reach the tolerance;
/// carries the best iterate seen.
class ConvergenceError : public NumericalError {
public:
    ConvergenceError(const std::string& what, SubordinationPair best) : NumericalError(what), best_(best) {}
    const SubordinationPair& best() const noexcept { return best_; }

private:
    SubordinationPair best_;
};

class UnstablePointError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

/// Both components of Phi_{mu1,mu2}(omega1, omega2, z).
inline std::array<cplx, 2> phi_residual(const DiscreteMeasure& mu1, const DiscreteMeasure& mu2, cplx omega1,
                                        cplx omega2, cplx z)
{
    const cplx shift = -omega1 - omega2 + z;
    return {f_transform(mu1, omega2) + shift, f_transform(mu2, omega1) + shift};
}

inline double residual_norm(const std::array<cplx, 2>& phi) { return std::hypot(std::abs(phi[0]), std::abs(phi[1])); }

namespace detail {

inline SubordinationPair make_pair(const DiscreteMeasure& mu1, const DiscreteMeasure& mu2, cplx w1, cplx w2, cplx z,
                                   std::size_t iterations)
{
    SubordinationPair p;
    p.omega1 = w1;
    p.omega2 = w2;
    p.f_value = f_transform(mu1, w2);
    p.m_value = -1.0 / p.f_value;
    p.residual = residual_norm(phi_residual(mu1, mu2, w1, w2, z));
    p.iterations = iterations;
    return p;
}

// Upper half-plane with the Im w >= Im z constraint that every solution obeys.
inline bool admissible(cplx w, cplx z) { return std::isfinite(w.real()) && std::isfinite(w.imag()) && w.imag() >= z.imag() * (1.0 - 1e-12); }

} // namespace detail

/// Solve the subordination system at z.
///
/// Iterates the analytic self-map w2 -> z + H2(z + H1(w2)), H_j(w) = F_{mu_j}(w) - w,
/// of the upper half-plane (Denjoy-Wolff) in chunks of 32 steps; after each
/// chunk (or earlier, once the residual is below newton_switch or the map
/// stalls) damped Newton on Phi is tried from the best iterate. Throws
/// ConvergenceError carrying the best iterate when both budgets run out.
inline SubordinationPair solve_subordination(const DiscreteMeasure& mu1, const DiscreteMeasure& mu2, cplx z,
                                             const SolverOptions& opt = {},
                                             const std::optional<SubordinationPair>& warm_start = std::nullopt)
{
    require_upper_half_plane(z);
    if (!(opt.tol > 0.0))
        throw ValidationError("solver tolerance must be positive");

    auto h1 = [&](cplx w) { return f_transform(mu1, w) - w; };
    auto h2 = [&](cplx w) { return f_transform(mu2, w) - w; };

    cplx w2 = cplx(0.0, 1.0) + z;
    if (warm_start && detail::admissible(warm_start->omega2, z))
        w2 = warm_start->omega2;

    SubordinationPair best = detail::make_pair(mu1, mu2, z + h1(w2), w2, z, 0);
    std::size_t fp_steps = 0;
    std::size_t it = 0;

    // Damped Newton on (w1, w2) from the best iterate; Jacobian
    // [[-1, F1'(w2) - 1], [F2'(w1) - 1, -1]]. Returns true once within tol.
    const std::size_t newton_budget = std::min(opt.newton_max_iter, opt.max_iter);
    auto newton = [&]() {
        cplx w1 = best.omega1;
        cplx w2n = best.omega2;
        double res = best.residual;
        for (std::size_t k = 0; k < newton_budget && res > opt.tol; ++k) {
            const auto phi = phi_residual(mu1, mu2, w1, w2n, z);
            const cplx j12 = f_prime(mu1, w2n) - 1.0;
            const cplx j21 = f_prime(mu2, w1) - 1.0;
            const cplx det = 1.0 - j12 * j21;
            if (std::abs(det) < 1e-300)
                break;
            const cplx d1 = (phi[0] + j12 * phi[1]) / det;
            const cplx d2 = (j21 * phi[0] + phi[1]) / det;
            double lambda = 1.0;
            bool accepted = false;
            for (int halving = 0; halving < 30; ++halving, lambda *= 0.5) {
                const cplx t1 = w1 + lambda * d1;
                const cplx t2 = w2n + lambda * d2;
                if (!detail::admissible(t1, z) || !detail::admissible(t2, z))
                    continue;
                const double r = residual_norm(phi_residual(mu1, mu2, t1, t2, z));
                if (r < res) {
                    w1 = t1;
                    w2n = t2;
                    res = r;
                    accepted = true;
                    break;
                }
            }
            ++it;
            if (!accepted)
                break;
            if (res < best.residual)
                best = detail::make_pair(mu1, mu2, w1, w2n, z, it);
        }
        return best.residual <= opt.tol;
    };

    // Fixed-point chunks, each followed by a Newton attempt.
    constexpr std::size_t chunk = 32;
    bool stalled = false;
    while (best.residual > opt.tol) {
        if (fp_steps >= opt.max_iter || stalled)
            break;
        w2 = best.omega2;
        const std::size_t chunk_end = std::min(opt.max_iter, fp_steps + chunk);
        while (fp_steps < chunk_end) {
            const cplx w2_next = z + h2(z + h1(w2));
            const double step = std::abs(w2_next - w2);
            w2 = w2_next;
            ++fp_steps;
            ++it;
            const cplx w1 = z + h1(w2);
            const double res = residual_norm(phi_residual(mu1, mu2, w1, w2, z));
            if (res < best.residual)
                best = detail::make_pair(mu1, mu2, w1, w2, z, it);
            if (res <= opt.tol || res < opt.newton_switch)
                break;
            if (step <= 1e-15 * std::max(1.0, std::abs(w2))) {
                stalled = true;
                break;
            }
        }
        if (best.residual <= opt.tol || newton())
            break;
    }
    best.iterations = it;
    if (!(best.residual <= opt.tol))
        throw ConvergenceError("subordination solver did not converge: residual " + std::to_string(best.residual) +
                                   " > tol " + std::to_string(opt.tol),
                               best);
    return best;
}

struct StabilityReport {
    double s_constant = 1.0;
    cplx fprime1;  // F'_{mu1}(omega2)
    cplx fprime2;  // F'_{mu2}(omega1)
    double im_omega1 = 0.0;
    double im_omega2 = 0.0;
    double abs_omega1 = 0.0;
    double abs_omega2 = 0.0;
};

/// Smallest singular value of a complex 2x2 matrix [[a, b], [c, d]].
inline double smallest_singular_value(cplx a, cplx b, cplx c, cplx d)
{
    const double fro2 = std::norm(a) + std::norm(b) + std::norm(c) + std::norm(d);
    const double det = std::abs(a * d - b * c);
    // sigma_max^2 + sigma_min^2 = fro2, sigma_max * sigma_min = |det|.
    const double disc = std::sqrt(std::max(0.0, fro2 * fro2 - 4.0 * det * det));
    const double smax2 = 0.5 * (fro2 + disc);
    return smax2 > 0.0 ? det / std::sqrt(smax2) : 0.0;
}

/// Norm of the inverse linearization of Phi at a solved pair.
inline StabilityReport stability_constant(const DiscreteMeasure& mu1, const DiscreteMeasure& mu2,
                                          const SubordinationPair& pair)
{
    StabilityReport r;
    r.fprime1 = f_prime(mu1, pair.omega2);
    r.fprime2 = f_prime(mu2, pair.omega1);
    const double smin = smallest_singular_value(-1.0, r.fprime1 - 1.0, r.fprime2 - 1.0, -1.0);
    if (smin < 1e-14)
        throw UnstablePointError("linearized subordination system is singular (sigma_min = " + std::to_string(smin) +
                                 ")");
    r.s_constant = 1.0 / smin;
    r.im_omega1 = pair.omega1.imag();
    r.im_omega2 = pair.omega2.imag();
    r.abs_omega1 = std::abs(pair.omega1);
    r.abs_omega2 = std::abs(pair.omega2);
    return r;
}

/// m_{mu1 [+] mu2}(z).
inline cplx free_conv_stieltjes(const DiscreteMeasure& mu1, const DiscreteMeasure& mu2, cplx z,
                                const SolverOptions& opt = {})
{
    return solve_subordination(mu1, mu2, z, opt).m_value;
}

inline const std::vector<double>& default_eta_schedule()
{
    static const std::vector<double> s{4e-3, 2e-3, 1e-3};
    return s;
}

/// Density of the absolutely continuous part of mu1 [+] mu2 on a grid. Each
/// grid point sweeps eta down the schedule, warm-starting from the previous
/// scale; failed points are listed in GridDensity::failed and reported as 0.
inline GridDensity convolution_density(const DiscreteMeasure& mu1, const DiscreteMeasure& mu2,
                                       std::span<const double> grid,
                                       std::span<const double> eta_schedule = default_eta_schedule(),
                                       const SolverOptions& opt = {})
{
    validate_eta_schedule(eta_schedule);
    validate_grid(grid);
    GridDensity out;
    out.grid.assign(grid.begin(), grid.end());
    out.values.assign(grid.size(), 0.0);
    out.eta_used = eta_schedule.back();
    std::vector<double> im(eta_schedule.size());
    for (std::size_t g = 0; g < grid.size(); ++g) {
        std::optional<SubordinationPair> warm;
        try {
            for (std::size_t k = 0; k < eta_schedule.size(); ++k) {
                warm = solve_subordination(mu1, mu2, cplx(grid[g], eta_schedule[k]), opt, warm);
                im[k] = warm->m_value.imag();
            }
            out.values[g] = richardson_density(eta_schedule, im);
        } catch (const NumericalError&) {
            out.failed.push_back(g);
        }
    }
    return out;
}

struct BulkWindow {
    double lo = 0.0;
    double hi = 0.0;
    double min_density = 0.0;
};

struct BulkOptions {
    double density_floor = 0.05;
    double density_cap = 1e3;
    /// Points with |F(E + i eta_min)| below this are excluded.
    double f_threshold = 1e-6;
    /// Points where Im m changes by more than this fraction between the two
    /// smallest scales are excluded (the density is not finite there, e.g. at
    /// square-root edges).
    double max_relative_drift = 0.25;
    std::vector<double> eta_schedule = default_eta_schedule();
    SolverOptions solver = {};
};

namespace detail {

struct ScanPoint {
    double density = 0.0;
    double abs_f = 0.0;
    double drift = 0.0;
    bool ok = false;
};

inline ScanPoint scan_point(const DiscreteMeasure& mu1, const DiscreteMeasure& mu2, double e,
                            std::span<const double> schedule, const SolverOptions& opt)
{
    ScanPoint p;
    std::vector<double> im(schedule.size());
    std::optional<SubordinationPair> warm;
    try {
        for (std::size_t k = 0; k < schedule.size(); ++k) {
            warm = solve_subordination(mu1, mu2, cplx(e, schedule[k]), opt, warm);
            im[k] = warm->m_value.imag();
        }
    } catch (const NumericalError&) {
        return p;
    }
    p.density = richardson_density(schedule, im);
    p.abs_f = std::abs(warm->f_value);
    const double last = im.back();
    const double prev = im[im.size() - 2];
    p.drift = std::abs(last - prev) / std::max(std::abs(last), 1e-300);
    p.ok = true;
    return p;
}

inline bool regular(const ScanPoint& p, const BulkOptions& o)
{
    return p.ok && p.density >= o.density_floor && p.density <= o.density_cap && p.abs_f >= o.f_threshold &&
           p.drift <= o.max_relative_drift;
}

} // namespace detail

/// Maximal intervals of a uniform scan on which the convolution density lies
/// in [floor, cap] and |F| stays above the threshold.
inline std::vector<BulkWindow> regular_bulk(const DiscreteMeasure& mu1, const DiscreteMeasure& mu2, double scan_lo,
                                            double scan_hi, std::size_t resolution, const BulkOptions& opt = {})
{
    if (!(scan_hi > scan_lo) || resolution < 2)
        throw ValidationError("bulk scan needs lo < hi and at least two points");
    if (!(opt.density_floor > 0.0))
        throw ValidationError("bulk density floor must be positive");
    validate_eta_schedule(opt.eta_schedule);
    std::vector<BulkWindow> windows;
    const double step = (scan_hi - scan_lo) / static_cast<double>(resolution - 1);
    std::optional<BulkWindow> open;
    double last_good = 0.0;
    for (std::size_t k = 0; k < resolution; ++k) {
        const double e = scan_lo + step * static_cast<double>(k);
        const auto p = detail::scan_point(mu1, mu2, e, opt.eta_schedule, opt.solver);
        if (detail::regular(p, opt)) {
            if (!open)
                open = BulkWindow{e, e, p.density};
            open->min_density = std::min(open->min_density, p.density);
            last_good = e;
        } else if (open) {
            open->hi = last_good;
            if (open->hi > open->lo)
                windows.push_back(*open);
            open.reset();
        }
    }
    if (open) {
        open->hi = last_good;
        if (open->hi > open->lo)
            windows.push_back(*open);
    }
    return windows;
}

struct IntervalMassOptions {
    std::vector<double> eta_schedule = default_eta_schedule();
    /// Bulk membership check on the integration nodes.
    double density_floor = 1e-4;
    double density_cap = 1e3;
    double f_threshold = 1e-6;
    double max_relative_drift = 0.25;
    SolverOptions solver = {};
};

/// Cumulative mass of mu1 [+] mu2 over [lo, hi] from trapezoid quadrature of
/// the inverted density on the dyadic lattice k * h (h = 2^-11, halved until
/// the interval holds at least 2000 cells). Masses of abutting intervals add
/// exactly because node values do not depend on the interval.
class ConvolutionCdf {
public:
    ConvolutionCdf(const DiscreteMeasure& mu1, const DiscreteMeasure& mu2, double lo, double hi,
                   const IntervalMassOptions& opt = {})
        : lo_(lo), hi_(hi)
    {
        if (!(hi > lo) || !std::isfinite(lo) || !std::isfinite(hi))
            throw ValidationError("interval needs finite lo < hi");
        if (mu1.is_point_mass() || mu2.is_point_mass()) {
            // delta_s [+] mu is mu shifted by s.
            shift_ = mu1.is_point_mass() ? mu1.min_atom() : mu2.min_atom();
            shifted_ = mu1.is_point_mass() ? mu2 : mu1;
            return;
        }
        double h = std::ldexp(1.0, -11);
        while ((hi - lo) / h < 2000.0)
            h *= 0.5;
        const auto k0 = static_cast<long long>(std::floor(lo / h)) + 1;
        const auto k1 = static_cast<long long>(std::ceil(hi / h)) - 1;
        nodes_.push_back(lo);
        for (long long k = k0; k <= k1; ++k)
            nodes_.push_back(static_cast<double>(k) * h);
        if (hi > nodes_.back())
            nodes_.push_back(hi);
        // A lattice node can coincide with lo; keep nodes strictly increasing.
        nodes_.erase(std::unique(nodes_.begin(), nodes_.end(), [](double a, double b) { return !(b > a); }),
                     nodes_.end());

        BulkOptions check;
        check.density_floor = opt.density_floor;
        check.density_cap = opt.density_cap;
        check.f_threshold = opt.f_threshold;
        check.max_relative_drift = opt.max_relative_drift;
        density_.reserve(nodes_.size());
        for (double e : nodes_) {
            const auto p = detail::scan_point(mu1, mu2, e, opt.eta_schedule, opt.solver);
            if (!detail::regular(p, check))
                throw ValidationError("interval [" + std::to_string(lo) + ", " + std::to_string(hi) +
                                      "] leaves the regular bulk near E = " + std::to_string(e));
            density_.push_back(p.density);
        }
        cumulative_.assign(nodes_.size(), 0.0);
        for (std::size_t k = 1; k < nodes_.size(); ++k)
            cumulative_[k] = cumulative_[k - 1] + 0.5 * (nodes_[k] - nodes_[k - 1]) * (density_[k] + density_[k - 1]);
    }

    double lo() const noexcept { return lo_; }
    double hi() const noexcept { return hi_; }

    /// Mass of [lo, x] (of (lo, x] in the pure-shift case), x clamped into [lo, hi].
    double cumulative(double x) const
    {
        x = std::clamp(x, lo_, hi_);
        if (shifted_)
            return fpconv::interval_mass(*shifted_, lo_ - shift_, x - shift_);
        const auto it = std::upper_bound(nodes_.begin(), nodes_.end(), x);
        const auto k = static_cast<std::size_t>(std::max<std::ptrdiff_t>(it - nodes_.begin() - 1, 0));
        if (k + 1 >= nodes_.size())
            return cumulative_.back();
        const double t = x - nodes_[k];
        const double slope = (density_[k + 1] - density_[k]) / (nodes_[k + 1] - nodes_[k]);
        return cumulative_[k] + t * (density_[k] + 0.5 * slope * t);
    }

    /// Mass of the subinterval [a, b] of [lo, hi].
    double mass(double a, double b) const
    {
        if (shifted_)
            return fpconv::interval_mass(*shifted_, std::clamp(a, lo_, hi_) - shift_, std::clamp(b, lo_, hi_) - shift_);
        return cumulative(b) - cumulative(a);
    }

    const std::vector<double>& nodes() const noexcept { return nodes_; }
    const std::vector<double>& density() const noexcept { return density_; }

private:
    double lo_;
    double hi_;
    std::vector<double> nodes_;
    std::vector<double> density_;
    std::vector<double> cumulative_;
    std::optional<DiscreteMeasure> shifted_;
    double shift_ = 0.0;
};

/// Mass that mu1 [+] mu2 gives to [lo, hi]; the interval must lie in the
/// regular bulk (checked on every quadrature node).
inline double convolution_interval_mass(const DiscreteMeasure& mu1, const DiscreteMeasure& mu2, double lo, double hi,
                                        const IntervalMassOptions& opt = {})
{
    const ConvolutionCdf table(mu1, mu2, lo, hi, opt);
    return table.mass(lo, hi);
}

} // namespace fpconv

#endif
