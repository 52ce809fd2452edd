#ifndef PHOTON_ATOM_DYNAMICS_HPP
#define PHOTON_ATOM_DYNAMICS_HPP

#include <algorithm>
#include <cmath>
#include <complex>
#include <span>
#include <vector>

#include <photon_atom/envelopes.hpp>
#include <photon_atom/errors.hpp>
#include <photon_atom/grid.hpp>

namespace photon_atom {

/// Two-level atom: excited-state lifetime tau0 (ns) and spatial overlap
/// lambda of the excitation mode with the atomic dipole mode.
struct AtomParams
{
    double tau0 = 26.2;
    double lambda = 0.033;

    /// Gamma_0 = 1/tau0 in 1/ns.
    double linewidth() const { return 1.0 / tau0; }
    /// Coupling sqrt(lambda / tau0) of the photon field to the amplitude.
    double coupling() const { return std::sqrt(lambda / tau0); }

    void validate() const
    {
        if (!(tau0 > 0.0) || !std::isfinite(tau0))
            throw PhysicsError("atomic lifetime tau0 must be > 0");
        if (!(lambda >= 0.0 && lambda <= 1.0))
            throw PhysicsError("spatial overlap lambda must lie in [0, 1]");
    }
};

enum class TraceProvenance {
    AnalyticDecaying,
    AnalyticRising,
    OdeNumeric,
    ReconForward,
    ReconBackward
};

/// Excited-state population on a time grid.
///
/// `sigma` is filled only for reconstructed traces and `amplitude` (the
/// complex excited-state amplitude) only for ODE traces. Reconstructed
/// values may be slightly negative; they are never clipped.
struct ExcitationTrace
{
    TimeGrid grid;
    std::vector<double> p_e;
    std::vector<double> sigma;
    std::vector<complex> amplitude;
    TraceProvenance provenance = TraceProvenance::OdeNumeric;

    struct Peak
    {
        double value = 0.0;
        double time = 0.0;
        std::size_t index = 0;
        double sigma = 0.0;
    };

    Peak peak() const
    {
        Peak p;
        if (p_e.empty())
            return p;
        const auto it = std::max_element(p_e.begin(), p_e.end());
        p.index = static_cast<std::size_t>(it - p_e.begin());
        p.value = *it;
        p.time = grid.time(p.index);
        if (!sigma.empty())
            p.sigma = sigma[p.index];
        return p;
    }
};

// ---- closed forms ---------------------------------------------------------

namespace analytic {

/// |tau_p - tau0| below which the degenerate tau_p = tau0 branch is used.
inline constexpr double degenerate_threshold_ns = 1e-9;

inline double xi_decaying(double tau_p, double t)
{
    return t < 0.0 ? 0.0 : std::exp(-t / (2.0 * tau_p)) / std::sqrt(tau_p);
}

inline double xi_rising(double tau_p, double t)
{
    return t > 0.0 ? 0.0 : std::exp(t / (2.0 * tau_p)) / std::sqrt(tau_p);
}

/// Excited-state amplitude driven by a decaying photon (real, >= 0).
inline double amplitude_decaying(const AtomParams& atom, double tau_p, double t)
{
    if (t <= 0.0)
        return 0.0;
    const double tau0 = atom.tau0;
    const double d = tau_p - tau0;
    if (std::abs(d) < degenerate_threshold_ns)
        return std::sqrt(atom.lambda) * t / tau0 * std::exp(-t / (2.0 * tau0));
    // exp(-t/2tau_p) - exp(-t/2tau0) without cancellation
    const double diff =
        std::exp(-t / (2.0 * tau0)) * std::expm1(t * d / (2.0 * tau_p * tau0));
    return 2.0 * std::sqrt(atom.lambda * tau0 * tau_p) * diff / d;
}

/// Excited-state amplitude driven by a rising photon (real, >= 0).
inline double amplitude_rising(const AtomParams& atom, double tau_p, double t)
{
    const double tau0 = atom.tau0;
    const double a = 2.0 * std::sqrt(atom.lambda * tau0 * tau_p) / (tau_p + tau0);
    return t < 0.0 ? a * std::exp(t / (2.0 * tau_p))
                   : a * std::exp(-t / (2.0 * tau0));
}

/// P_e for a decaying photon, both branches.
inline double pe_decaying(const AtomParams& atom, double tau_p, double t)
{
    if (t <= 0.0)
        return 0.0;
    const double tau0 = atom.tau0;
    if (std::abs(tau_p - tau0) < degenerate_threshold_ns)
        return atom.lambda * t * t / (tau0 * tau0) * std::exp(-t / tau0);
    const double e = amplitude_decaying(atom, tau_p, t);
    return e * e;
}

/// Textbook form of the tau_p != tau0 branch (kept for cross-checks).
inline double pe_decaying_direct(const AtomParams& atom, double tau_p, double t)
{
    if (t < 0.0)
        return 0.0;
    const double tau0 = atom.tau0;
    const double pre = 4.0 * atom.lambda * tau0 * tau_p /
                       ((tau0 - tau_p) * (tau0 - tau_p));
    const double b = std::exp(-t / (2.0 * tau0)) - std::exp(-t / (2.0 * tau_p));
    return pre * b * b;
}

inline double pe_rising(const AtomParams& atom, double tau_p, double t)
{
    const double tau0 = atom.tau0;
    const double pre =
        4.0 * atom.lambda * tau0 * tau_p / ((tau_p + tau0) * (tau_p + tau0));
    return t < 0.0 ? pre * std::exp(t / tau_p) : pre * std::exp(-t / tau0);
}

inline double xi(EnvelopeShape shape, double tau_p, double t)
{
    return shape == EnvelopeShape::ExpRising ? xi_rising(tau_p, t)
                                             : xi_decaying(tau_p, t);
}

inline double amplitude(const AtomParams& atom, EnvelopeShape shape,
                        double tau_p, double t)
{
    return shape == EnvelopeShape::ExpRising ? amplitude_rising(atom, tau_p, t)
                                             : amplitude_decaying(atom, tau_p, t);
}

/// R_f0(t) = |xi(t)|^2.
inline double r_f0(EnvelopeShape shape, double tau_p, double t)
{
    const double x = xi(shape, tau_p, t);
    return x * x;
}

/// R_f(t) = |xi - sqrt(lambda/tau0) e|^2.
inline double r_f(const AtomParams& atom, EnvelopeShape shape, double tau_p,
                  double t)
{
    const double v = xi(shape, tau_p, t) -
                     atom.coupling() * amplitude(atom, shape, tau_p, t);
    return v * v;
}

/// delta(t) = R_f0(t) - R_f(t).
inline double delta(const AtomParams& atom, EnvelopeShape shape, double tau_p,
                    double t)
{
    return r_f0(shape, tau_p, t) - r_f(atom, shape, tau_p, t);
}

/// Bin averages of the analytic delta(t); bins should have t = 0 on an edge.
inline std::vector<double> binned_delta(const AtomParams& atom,
                                        EnvelopeShape shape, double tau_p,
                                        const TimeGrid& bins)
{
    return bin_average(
        [&](double t) { return delta(atom, shape, tau_p, t); }, bins, 2);
}

} // namespace analytic

namespace detail {

inline ExcitationTrace sample_trace(const TimeGrid& grid, TraceProvenance prov,
                                    auto&& f)
{
    ExcitationTrace tr;
    tr.grid = grid;
    tr.provenance = prov;
    tr.p_e.resize(grid.size);
    for (std::size_t k = 0; k < grid.size; ++k)
        tr.p_e[k] = f(grid.time(k));
    return tr;
}

} // namespace detail

/// P_e(t) for an exponentially decaying photon, evaluated in closed form.
inline ExcitationTrace analytic_pe_decaying(const AtomParams& atom,
                                            double tau_p, const TimeGrid& grid)
{
    atom.validate();
    if (!(tau_p > 0.0))
        throw PhysicsError("photon coherence time tau_p must be > 0");
    return detail::sample_trace(grid, TraceProvenance::AnalyticDecaying,
                                [&](double t) {
                                    return analytic::pe_decaying(atom, tau_p, t);
                                });
}

/// P_e(t) for an exponentially rising photon; maximal at t = 0.
inline ExcitationTrace analytic_pe_rising(const AtomParams& atom, double tau_p,
                                          const TimeGrid& grid)
{
    atom.validate();
    if (!(tau_p > 0.0))
        throw PhysicsError("photon coherence time tau_p must be > 0");
    return detail::sample_trace(grid, TraceProvenance::AnalyticRising,
                                [&](double t) {
                                    return analytic::pe_rising(atom, tau_p, t);
                                });
}

// ---- amplitude equation of motion ----------------------------------------

struct OdeOptions
{
    /// RK4 steps per envelope grid interval.
    int substeps = 1;
    /// Re-solve with half the step and reject if the peak moves by more
    /// than `step_tolerance` (relative).
    bool check_step = true;
    double step_tolerance = 1e-4;
};

namespace detail {

inline std::vector<complex> integrate_amplitude(const AtomParams& atom,
                                                const PhotonEnvelope& env,
                                                int substeps)
{
    const auto& grid = env.grid();
    const double g = atom.coupling();
    const double decay = 0.5 / atom.tau0;
    const double h = grid.step / substeps;
    auto rhs = [&](complex e, complex x) { return -decay * e + g * x; };
    auto drive = [&](std::size_t k, int num, int den) -> complex {
        if (num == 0)
            return env.right_limit(k);
        if (num == den)
            return env.left_limit(k + 1);
        return env.interior(k, static_cast<double>(num) / den);
    };

    std::vector<complex> e(grid.size);
    complex state{};
    e[0] = state;
    const int den = 2 * substeps;
    for (std::size_t k = 0; k + 1 < grid.size; ++k) {
        for (int s = 0; s < substeps; ++s) {
            const complex x0 = drive(k, 2 * s, den);
            const complex xm = drive(k, 2 * s + 1, den);
            const complex x1 = drive(k, 2 * s + 2, den);
            const complex k1 = rhs(state, x0);
            const complex k2 = rhs(state + 0.5 * h * k1, xm);
            const complex k3 = rhs(state + 0.5 * h * k2, xm);
            const complex k4 = rhs(state + h * k3, x1);
            state += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        e[k + 1] = state;
    }
    return e;
}

inline double peak_population(std::span<const complex> e)
{
    double m = 0.0;
    for (const auto& v : e)
        m = std::max(m, std::norm(v));
    return m;
}

} // namespace detail

/// Integrates de/dt = -e/(2 tau0) + sqrt(lambda/tau0) xi(t) from e = 0 at
/// the grid start with classical RK4; P_e = |e|^2.
inline ExcitationTrace solve_amplitude_ode(const AtomParams& atom,
                                           const PhotonEnvelope& env,
                                           const OdeOptions& opts = {})
{
    atom.validate();
    if (opts.substeps < 1)
        throw PhysicsError("ODE substeps must be >= 1");
    auto e = detail::integrate_amplitude(atom, env, opts.substeps);
    if (opts.check_step) {
        const auto fine = detail::integrate_amplitude(atom, env, 2 * opts.substeps);
        const double p = detail::peak_population(e);
        const double q = detail::peak_population(fine);
        if (p > 0.0 && std::abs(p - q) > opts.step_tolerance * q)
            throw PhysicsError("ODE step too coarse: halving the step moves the "
                               "peak population by more than the tolerance");
    }
    ExcitationTrace tr;
    tr.grid = env.grid();
    tr.provenance = TraceProvenance::OdeNumeric;
    tr.p_e.resize(e.size());
    for (std::size_t k = 0; k < e.size(); ++k)
        tr.p_e[k] = std::norm(e[k]);
    tr.amplitude = std::move(e);
    return tr;
}

// ---- detection rates -------------------------------------------------------

namespace detail {

inline void check_same_grid(const TimeGrid& a, const TimeGrid& b)
{
    if (!a.same_as(b))
        throw DataFormatError("time grids of envelope and trace differ");
}

/// Complex excited-state amplitude of a trace; analytic and reconstructed
/// traces carry only P_e, so the real root is used (exact for real envelopes).
inline complex trace_amplitude(const ExcitationTrace& tr, std::size_t k)
{
    if (!tr.amplitude.empty())
        return tr.amplitude[k];
    return std::sqrt(std::max(tr.p_e[k], 0.0));
}

} // namespace detail

/// Forward detection rate with the atom, sample-wise |xi - sqrt(L/tau0) e|^2.
inline std::vector<double> forward_rate(const AtomParams& atom,
                                        const PhotonEnvelope& env,
                                        const ExcitationTrace& trace)
{
    detail::check_same_grid(env.grid(), trace.grid);
    const double g = atom.coupling();
    std::vector<double> r(env.size());
    for (std::size_t k = 0; k < env.size(); ++k)
        r[k] = std::norm(env[k] - g * detail::trace_amplitude(trace, k));
    return r;
}

/// Forward rate with one-sided limits at envelope support edges.
inline PiecewiseCurve forward_rate_curve(const AtomParams& atom,
                                         const PhotonEnvelope& env,
                                         const ExcitationTrace& trace)
{
    detail::check_same_grid(env.grid(), trace.grid);
    const double g = atom.coupling();
    PiecewiseCurve c{env.grid(), std::vector<double>(env.size()),
                     std::vector<double>(env.size())};
    for (std::size_t k = 0; k < env.size(); ++k) {
        const complex e = g * detail::trace_amplitude(trace, k);
        c.left[k] = std::norm(env.left_limit(k) - e);
        c.right[k] = std::norm(env.right_limit(k) - e);
    }
    return c;
}

/// delta = R_f0 - R_f, pointwise.
inline std::vector<double> delta_rate(std::span<const double> r_f0,
                                      std::span<const double> r_f)
{
    if (r_f0.size() != r_f.size())
        throw DataFormatError("rate curves have different lengths");
    std::vector<double> d(r_f0.size());
    for (std::size_t k = 0; k < d.size(); ++k)
        d[k] = r_f0[k] - r_f[k];
    return d;
}

/// Backward detection rate R_b = eta_b P_e / tau0.
inline std::vector<double> backward_rate(const AtomParams& atom,
                                         const ExcitationTrace& trace,
                                         double eta_b)
{
    atom.validate();
    if (!(eta_b >= 0.0 && eta_b <= 1.0))
        throw PhysicsError("collection efficiency eta_b must lie in [0, 1]");
    std::vector<double> r(trace.p_e.size());
    for (std::size_t k = 0; k < r.size(); ++k)
        r[k] = eta_b * trace.p_e[k] / atom.tau0;
    return r;
}

/// Total extinction lambda (1 - lambda) 4 tau_p / (tau0 + tau_p); the same
/// for decaying and rising envelopes.
inline double extinction_closed_form(const AtomParams& atom, double tau_p)
{
    atom.validate();
    if (!(tau_p > 0.0))
        throw PhysicsError("photon coherence time tau_p must be > 0");
    return atom.lambda * (1.0 - atom.lambda) * 4.0 * tau_p / (atom.tau0 + tau_p);
}

/// Windowed extinction: dt * sum of delta(t_i) over samples with t_i in
/// the window.
inline double extinction_numeric(std::span<const double> delta,
                                 const TimeGrid& grid, const TimeWindow& window)
{
    if (delta.size() != grid.size)
        throw DataFormatError("delta samples do not match the time grid");
    double sum = 0.0;
    for (std::size_t i = 0; i < grid.size; ++i)
        if (window.contains(grid.time(i)))
            sum += delta[i];
    return sum * grid.step;
}

/// Default extinction windows, reaching 14 ns into the photon-free side.
inline TimeWindow default_window(EnvelopeShape shape)
{
    return shape == EnvelopeShape::ExpRising ? TimeWindow{-100.0, 14.0}
                                             : TimeWindow{-14.0, 100.0};
}

// ---- full forward model ----------------------------------------------------

/// Everything the detectors see for one envelope: the ODE trace and the
/// rate curves with their one-sided limits at envelope jumps.
struct ScatteringModel
{
    ExcitationTrace trace;
    PiecewiseCurve r_f0;
    PiecewiseCurve r_f;
    PiecewiseCurve p_e;

    std::vector<double> delta_left() const { return delta_rate(r_f0.left, r_f.left); }
    std::vector<double> delta_right() const { return delta_rate(r_f0.right, r_f.right); }

    PiecewiseCurve delta() const
    {
        return PiecewiseCurve{r_f0.grid, delta_left(), delta_right()};
    }
};

inline ScatteringModel simulate_scattering(const AtomParams& atom,
                                           const PhotonEnvelope& env,
                                           const OdeOptions& opts = {})
{
    ScatteringModel m;
    m.trace = solve_amplitude_ode(atom, env, opts);
    m.r_f0 = env.intensity();
    m.r_f = forward_rate_curve(atom, env, m.trace);
    m.p_e = PiecewiseCurve::continuous(env.grid(), m.trace.p_e);
    return m;
}

} // namespace photon_atom

#endif
