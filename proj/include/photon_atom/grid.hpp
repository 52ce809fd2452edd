#ifndef PHOTON_ATOM_GRID_HPP
#define PHOTON_ATOM_GRID_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <photon_atom/errors.hpp>

namespace photon_atom {

/// Uniform time grid t_k = start + k * step, in nanoseconds.
///
/// Histogram bins reuse the same type: sample k is then the bin
/// [time(k), time(k) + step).
struct TimeGrid
{
    double start = 0.0;
    double step = 0.05;
    std::size_t size = 0;

    double time(std::size_t k) const
    {
        return start + static_cast<double>(k) * step;
    }

    /// Last sample time (or, for bins, the start of the last bin).
    double back() const { return size == 0 ? start : time(size - 1); }

    std::vector<double> times() const
    {
        std::vector<double> t(size);
        for (std::size_t k = 0; k < size; ++k)
            t[k] = time(k);
        return t;
    }

    /// Grid with t = 0 on a sample and covering [-half_span, +half_span].
    static TimeGrid symmetric(double half_span, double step)
    {
        if (!(step > 0.0) || !(half_span >= 0.0))
            throw PhysicsError("time grid needs step > 0 and half_span >= 0");
        auto n = static_cast<std::size_t>(std::ceil(half_span / step - 1e-9));
        return TimeGrid{-static_cast<double>(n) * step, step, 2 * n + 1};
    }

    /// Default envelope grid: 0.05 ns steps over [-8 tau_p, +8 tau_p].
    static TimeGrid for_envelope(double tau_p, double step = 0.05,
                                 double spans = 8.0)
    {
        return symmetric(spans * tau_p, step);
    }

    /// Bins of width `width` tiling [lo, hi]; bin edges sit on integer
    /// multiples of `width` so that t = 0 is an edge.
    static TimeGrid bins(double lo, double hi, double width)
    {
        if (!(width > 0.0) || !(hi > lo))
            throw PhysicsError("bin range needs hi > lo and width > 0");
        const double first = std::floor(lo / width + 1e-9);
        const double last = std::ceil(hi / width - 1e-9);
        return TimeGrid{first * width, width,
                        static_cast<std::size_t>(last - first)};
    }

    bool same_as(const TimeGrid& other, double tol = 1e-9) const
    {
        return size == other.size && std::abs(start - other.start) <= tol &&
               std::abs(step - other.step) <= tol;
    }

    /// Index of the sample located at t (within 1e-6 of a step), if any.
    std::optional<std::size_t> index_of(double t) const
    {
        const double x = (t - start) / step;
        const double k = std::round(x);
        if (std::abs(x - k) > 1e-6 || k < 0.0 ||
            k > static_cast<double>(size) - 1.0)
            return std::nullopt;
        return static_cast<std::size_t>(k);
    }
};

/// Closed time interval [lo, hi] in ns.
struct TimeWindow
{
    double lo = 0.0;
    double hi = 0.0;

    bool contains(double t) const { return t >= lo - 1e-9 && t <= hi + 1e-9; }
    double width() const { return hi - lo; }
};

/// Samples of a piecewise-smooth function that may jump at sample points.
///
/// Segment k spans [t_k, t_{k+1}] and is integrated with the trapezoid rule
/// using right[k] and left[k+1], so a jump at a sample never leaks into the
/// neighbouring segment.
struct PiecewiseCurve
{
    TimeGrid grid;
    std::vector<double> left;
    std::vector<double> right;

    static PiecewiseCurve continuous(TimeGrid grid, std::vector<double> v)
    {
        PiecewiseCurve c{grid, v, std::move(v)};
        return c;
    }

    /// Integral over [a, b] with linear interpolation inside segments;
    /// the function is zero outside the grid.
    double integrate(double a, double b) const
    {
        if (grid.size < 2 || b <= a)
            return 0.0;
        const double h = grid.step;
        const double t0 = grid.start;
        a = std::max(a, t0);
        b = std::min(b, grid.back());
        if (b <= a)
            return 0.0;
        auto seg_lo = static_cast<std::size_t>(std::floor((a - t0) / h));
        auto seg_hi = static_cast<std::size_t>(std::ceil((b - t0) / h));
        seg_hi = std::min(seg_hi, grid.size - 1);
        double total = 0.0;
        for (std::size_t k = seg_lo; k < seg_hi; ++k) {
            const double ta = grid.time(k);
            const double lo = std::max(a, ta);
            const double hi = std::min(b, ta + h);
            if (hi <= lo)
                continue;
            const double ya = right[k];
            const double yb = left[k + 1];
            auto at = [&](double t) { return ya + (yb - ya) * (t - ta) / h; };
            total += 0.5 * (at(lo) + at(hi)) * (hi - lo);
        }
        return total;
    }

    double integrate() const { return integrate(grid.start, grid.back()); }

    /// Per-bin averages over the bins of `bins` (bin k is [t_k, t_k + dt)).
    std::vector<double> bin_averages(const TimeGrid& bins) const
    {
        std::vector<double> out(bins.size);
        for (std::size_t i = 0; i < bins.size; ++i) {
            const double a = bins.time(i);
            out[i] = integrate(a, a + bins.step) / bins.step;
        }
        return out;
    }
};

/// Average of f over each bin, by 16-point Gauss-Legendre quadrature.
/// f must be smooth inside a bin; jumps are allowed at bin edges.
inline std::vector<double>
bin_average(const std::function<double(double)>& f, const TimeGrid& bins,
            int subdivisions = 1)
{
    // nodes/weights on [-1, 1]
    static constexpr std::array<double, 8> x = {
        0.0950125098376374, 0.2816035507792589, 0.4580167776572274,
        0.6178762444026438, 0.7554044083550030, 0.8656312023878318,
        0.9445750230732326, 0.9894009349916499};
    static constexpr std::array<double, 8> w = {
        0.1894506104550685, 0.1826034150449236, 0.1691565193950025,
        0.1495959888165767, 0.1246289712555339, 0.0951585116824928,
        0.0622535239386479, 0.0271524594117541};
    std::vector<double> out(bins.size);
    for (std::size_t i = 0; i < bins.size; ++i) {
        const double h = bins.step / subdivisions;
        double sum = 0.0;
        for (int s = 0; s < subdivisions; ++s) {
            const double a = bins.time(i) + s * h;
            const double mid = a + 0.5 * h;
            for (std::size_t j = 0; j < x.size(); ++j) {
                sum += w[j] * (f(mid - 0.5 * h * x[j]) + f(mid + 0.5 * h * x[j]));
            }
        }
        out[i] = 0.5 * sum / subdivisions;
    }
    return out;
}

} // namespace photon_atom

#endif
