#ifndef PHOTON_ATOM_RECONSTRUCTION_HPP
#define PHOTON_ATOM_RECONSTRUCTION_HPP

#include <cmath>
#include <vector>

#include <photon_atom/dynamics.hpp>
#include <photon_atom/errors.hpp>
#include <photon_atom/histogram.hpp>

namespace photon_atom {

/// Detection probability per unit time per bin, with 1 sigma.
struct RateSeries
{
    TimeGrid bins;
    std::vector<double> rate;
    std::vector<double> sigma;
    std::vector<bool> zero_count;
};

/// R(t_i) = G(t_i) / (eta dt), with G the per-herald coincidence
/// probability counts / n_heralds. Zero-count bins get rate and sigma 0.
inline RateSeries counts_to_rate(const CoincidenceHistogram& hist, double eta)
{
    hist.validate();
    if (hist.n_heralds == 0)
        throw DataFormatError("histogram has zero heralds");
    if (!(eta > 0.0))
        throw PhysicsError("efficiency for rate conversion must be > 0");
    const double scale = 1.0 / (static_cast<double>(hist.n_heralds) * eta * hist.dt());
    RateSeries r{hist.bins, {}, {}, {}};
    r.rate.resize(hist.bins.size);
    r.sigma.resize(hist.bins.size);
    r.zero_count.resize(hist.bins.size);
    for (std::size_t i = 0; i < hist.bins.size; ++i) {
        r.rate[i] = hist.counts[i] * scale;
        r.sigma[i] = std::sqrt(std::max(hist.var(i), 0.0)) * scale;
        r.zero_count[i] = hist.counts[i] == 0.0;
    }
    return r;
}

struct AccidentalCorrection
{
    CoincidenceHistogram corrected;
    double floor = 0.0;       // counts per bin
    double floor_sigma = 0.0;
    std::size_t background_bins = 0;
};

/// Subtracts a flat accidental floor, estimated as the mean count of the
/// bins lying entirely outside `signal`. At least `min_background_ns` of
/// such bins are required. The floor uncertainty is added to every bin's
/// variance (bin-to-bin correlation of the subtraction is not tracked).
inline AccidentalCorrection subtract_accidentals(const CoincidenceHistogram& hist,
                                                 const TimeWindow& signal,
                                                 double min_background_ns = 20.0)
{
    hist.validate();
    double sum = 0.0, var = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < hist.bins.size; ++i) {
        const double a = hist.bins.time(i);
        const double b = a + hist.dt();
        if (b <= signal.lo + 1e-9 || a >= signal.hi - 1e-9) {
            sum += hist.counts[i];
            var += hist.var(i);
            ++n;
        }
    }
    if (n == 0 || static_cast<double>(n) * hist.dt() < min_background_ns - 1e-9)
        throw DataFormatError("not enough out-of-window bins to estimate the "
                              "accidental floor");
    AccidentalCorrection out;
    out.background_bins = n;
    out.floor = sum / static_cast<double>(n);
    out.floor_sigma = std::sqrt(var) / static_cast<double>(n);
    out.corrected = hist;
    out.corrected.variance.resize(hist.bins.size);
    for (std::size_t i = 0; i < hist.bins.size; ++i) {
        out.corrected.variance[i] = hist.var(i) + out.floor_sigma * out.floor_sigma;
        out.corrected.counts[i] = hist.counts[i] - out.floor;
    }
    return out;
}

/// Excited-state population from the forward rates by integrating
/// dP/dt = delta(t) - (1 - lambda) P / tau0 bin by bin, starting from
/// P = 0 at the first bin edge.
///
/// delta is taken constant over each bin (it is a bin average), for which
/// the per-bin propagator is exact:
///   P_{i+1} = P_i e^{-a dt} + delta_i (1 - e^{-a dt}) / a,  a = (1-lambda)/tau0.
/// Sample i of the result is P at the bin start t_i.
inline ExcitationTrace reconstruct_forward(const RateSeries& r_f0,
                                           const RateSeries& r_f,
                                           const AtomParams& atom)
{
    atom.validate();
    if (!r_f0.bins.same_as(r_f.bins, 1e-6) || r_f0.rate.size() != r_f.rate.size())
        throw DataFormatError("forward rate curves are on different bin grids");
    const double dt = r_f0.bins.step;
    const double a = (1.0 - atom.lambda) / atom.tau0;
    const double decay = std::exp(-a * dt);
    const double gain = a > 0.0 ? -std::expm1(-a * dt) / a : dt;

    ExcitationTrace tr;
    tr.grid = r_f0.bins;
    tr.provenance = TraceProvenance::ReconForward;
    const std::size_t n = r_f0.rate.size();
    tr.p_e.assign(n, 0.0);
    tr.sigma.assign(n, 0.0);
    double p = 0.0, var = 0.0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const double d = r_f0.rate[i] - r_f.rate[i];
        const double vd = r_f0.sigma[i] * r_f0.sigma[i] + r_f.sigma[i] * r_f.sigma[i];
        p = p * decay + d * gain;
        var = var * decay * decay + vd * gain * gain;
        tr.p_e[i + 1] = p;
        tr.sigma[i + 1] = std::sqrt(var);
    }
    return tr;
}

/// delta(t_i) = R_f0 - R_f with propagated sigma.
inline RateSeries delta_series(const RateSeries& r_f0, const RateSeries& r_f)
{
    if (!r_f0.bins.same_as(r_f.bins, 1e-6))
        throw DataFormatError("forward rate curves are on different bin grids");
    RateSeries d{r_f0.bins, delta_rate(r_f0.rate, r_f.rate), {}, {}};
    d.sigma.resize(d.rate.size());
    d.zero_count.resize(d.rate.size());
    for (std::size_t i = 0; i < d.rate.size(); ++i) {
        d.sigma[i] = std::hypot(r_f0.sigma[i], r_f.sigma[i]);
        d.zero_count[i] = r_f0.zero_count[i] && r_f.zero_count[i];
    }
    return d;
}

/// P_e(t_i) = G_b(t_i) / (eta_f_tilde eta_q eta_b Gamma_0 dt), the bin
/// average of P_e over [t_i, t_i + dt).
inline ExcitationTrace reconstruct_backward(const CoincidenceHistogram& g_b,
                                            const EfficiencyChain& chain,
                                            const AtomParams& atom)
{
    atom.validate();
    g_b.validate();
    if (!(chain.eta_f_tilde > 0.0) || !(chain.eta_q > 0.0) || !(chain.eta_b > 0.0))
        throw PhysicsError("backward reconstruction needs nonzero efficiencies");
    if (g_b.n_heralds == 0)
        throw DataFormatError("histogram has zero heralds");
    const double scale = 1.0 / (static_cast<double>(g_b.n_heralds) *
                                chain.backward_efficiency() * atom.linewidth() *
                                g_b.dt());
    ExcitationTrace tr;
    tr.grid = g_b.bins;
    tr.provenance = TraceProvenance::ReconBackward;
    tr.p_e.resize(g_b.bins.size);
    tr.sigma.resize(g_b.bins.size);
    for (std::size_t i = 0; i < g_b.bins.size; ++i) {
        tr.p_e[i] = g_b.counts[i] * scale;
        tr.sigma[i] = std::sqrt(std::max(g_b.var(i), 0.0)) * scale;
    }
    return tr;
}

/// Averages a trace of point values (linear in between) over `bins`;
/// sigma is interpolated at the bin centres.
inline ExcitationTrace average_over_bins(const ExcitationTrace& points,
                                         const TimeGrid& bins)
{
    ExcitationTrace out;
    out.grid = bins;
    out.provenance = points.provenance;
    out.p_e = PiecewiseCurve::continuous(points.grid, points.p_e).bin_averages(bins);
    if (!points.sigma.empty()) {
        out.sigma.resize(bins.size);
        for (std::size_t i = 0; i < bins.size; ++i) {
            const double t = bins.time(i) + 0.5 * bins.step;
            const double x = (t - points.grid.start) / points.grid.step;
            if (x <= 0.0 || x >= static_cast<double>(points.grid.size - 1)) {
                out.sigma[i] = 0.0;
                continue;
            }
            const auto k = static_cast<std::size_t>(x);
            const double f = x - static_cast<double>(k);
            out.sigma[i] = (1.0 - f) * points.sigma[k] + f * points.sigma[k + 1];
        }
    }
    return out;
}

struct Extinction
{
    double epsilon = 0.0;
    double sigma = 0.0;
    TimeWindow window;
};

/// epsilon = dt * sum over bins with t_i in the window of delta(t_i).
inline Extinction extinction_from_data(const RateSeries& r_f0,
                                       const RateSeries& r_f,
                                       const TimeWindow& window)
{
    const auto d = delta_series(r_f0, r_f);
    Extinction e{0.0, 0.0, window};
    double var = 0.0;
    for (std::size_t i = 0; i < d.rate.size(); ++i) {
        if (!window.contains(d.bins.time(i)))
            continue;
        e.epsilon += d.rate[i];
        var += d.sigma[i] * d.sigma[i];
    }
    e.epsilon *= d.bins.step;
    e.sigma = std::sqrt(var) * d.bins.step;
    return e;
}

} // namespace photon_atom

#endif
