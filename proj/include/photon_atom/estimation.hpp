#ifndef PHOTON_ATOM_ESTIMATION_HPP
#define PHOTON_ATOM_ESTIMATION_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include <photon_atom/dynamics.hpp>
#include <photon_atom/envelopes.hpp>
#include <photon_atom/errors.hpp>
#include <photon_atom/histogram.hpp>

namespace photon_atom {

// ---- damped least squares --------------------------------------------------

struct LmOptions
{
    int max_iterations = 200;
    double initial_damping = 1e-3;
    /// Relative finite-difference step for the Jacobian.
    double fd_step = 1e-6;
    /// Converged when the relative chi-square decrease falls below this.
    double tolerance = 1e-12;
};

struct LmResult
{
    Eigen::VectorXd params;
    Eigen::MatrixXd covariance;
    double chi2 = 0.0;
    int iterations = 0;
    bool converged = false;
    /// chi-square after every accepted step, starting with the initial point.
    std::vector<double> chi2_history;
};

/// Levenberg-Marquardt on weighted residuals (model - data) / sigma, with
/// box bounds enforced by projection and an active set for parameters
/// pinned at a bound. Only steps that lower chi-square are
/// accepted, so the history is non-increasing.
template <class Residuals>
LmResult levenberg_marquardt(Residuals&& residuals, Eigen::VectorXd x,
                             const Eigen::VectorXd& lower,
                             const Eigen::VectorXd& upper,
                             const LmOptions& opts = {})
{
    const auto np = x.size();
    auto project = [&](Eigen::VectorXd v) {
        return v.cwiseMax(lower).cwiseMin(upper).eval();
    };
    auto jacobian = [&](const Eigen::VectorXd& at, const Eigen::VectorXd& r0) {
        Eigen::MatrixXd jac(r0.size(), np);
        for (Eigen::Index j = 0; j < np; ++j) {
            const double h = opts.fd_step * std::max(std::abs(at[j]), 1e-3);
            Eigen::VectorXd hi = at, lo = at;
            hi[j] = std::min(at[j] + h, upper[j]);
            lo[j] = std::max(at[j] - h, lower[j]);
            if (hi[j] == lo[j])
                throw PhysicsError("fit parameter bounds leave no room for a derivative");
            const Eigen::VectorXd rh = hi[j] == at[j] ? r0 : residuals(hi);
            const Eigen::VectorXd rl = lo[j] == at[j] ? r0 : residuals(lo);
            jac.col(j) = (rh - rl) / (hi[j] - lo[j]);
        }
        return jac;
    };

    LmResult out;
    x = project(x);
    Eigen::VectorXd r = residuals(x);
    double chi2 = r.squaredNorm();
    if (!std::isfinite(chi2))
        throw PhysicsError("fit objective is not finite at the starting point");
    out.chi2_history.push_back(chi2);
    double mu = opts.initial_damping;
    Eigen::MatrixXd jac = jacobian(x, r);

    for (int it = 1; it <= opts.max_iterations; ++it) {
        out.iterations = it;
        Eigen::MatrixXd a = jac.transpose() * jac;
        Eigen::VectorXd g = jac.transpose() * r;
        // parameters pinned at a bound with the descent pointing outside are
        // held, so the step solves only for the free ones
        for (Eigen::Index j = 0; j < np; ++j)
            if ((x[j] <= lower[j] && g[j] > 0.0) || (x[j] >= upper[j] && g[j] < 0.0)) {
                a.row(j).setZero();
                a.col(j).setZero();
                a(j, j) = 1.0;
                g[j] = 0.0;
            }
        bool accepted = false;
        while (mu < 1e16) {
            Eigen::MatrixXd damped = a;
            for (Eigen::Index j = 0; j < np; ++j)
                damped(j, j) += mu * std::max(a(j, j), 1e-300);
            const Eigen::VectorXd step = damped.ldlt().solve(-g);
            const Eigen::VectorXd trial = project(x + step);
            const Eigen::VectorXd rt = residuals(trial);
            const double chi2_trial = rt.squaredNorm();
            if (std::isfinite(chi2_trial) && chi2_trial <= chi2) {
                const double gain = chi2 - chi2_trial;
                const bool tiny_step = (trial - x).norm() <=
                                       1e-14 * (x.norm() + 1e-14);
                x = trial;
                r = rt;
                chi2 = chi2_trial;
                out.chi2_history.push_back(chi2);
                mu = std::max(mu / 10.0, 1e-12);
                accepted = true;
                if (gain <= opts.tolerance * std::max(chi2, 1e-300) || tiny_step)
                    out.converged = true;
                break;
            }
            mu *= 10.0;
        }
        if (!accepted)
            out.converged = true; // no downhill direction left: at a minimum
        if (out.converged)
            break;
        jac = jacobian(x, r);
    }
    if (!out.converged)
        throw PhysicsError("fit did not converge within the iteration limit");
    jac = jacobian(x, r);
    out.params = x;
    out.chi2 = chi2;
    const Eigen::MatrixXd a = jac.transpose() * jac;
    out.covariance = a.completeOrthogonalDecomposition().pseudoInverse();
    return out;
}

// ---- envelope fit -----------------------------------------------------------

/// Fraction of a unit-norm exponential photon's intensity falling in [a, b).
inline double exponential_bin_fraction(EnvelopeShape shape, double tau_p,
                                       double a, double b)
{
    if (shape == EnvelopeShape::ExpRising) {
        const double hi = std::min(b, 0.0), lo = std::min(a, 0.0);
        return hi > lo ? std::exp(hi / tau_p) - std::exp(lo / tau_p) : 0.0;
    }
    const double hi = std::max(b, 0.0), lo = std::max(a, 0.0);
    return hi > lo ? std::exp(-lo / tau_p) - std::exp(-hi / tau_p) : 0.0;
}

/// Poisson sigma approximated as sqrt(max(variance, 1)).
inline double count_sigma(const CoincidenceHistogram& h, std::size_t i)
{
    return std::sqrt(std::max(h.var(i), 1.0));
}

/// Objective of the envelope fit. Gaussian uses sigma = sqrt(max(counts, 1));
/// Poisson minimizes the likelihood deviance, which stays unbiased when the
/// tail bins hold only a few counts.
enum class CountWeighting { Gaussian, Poisson };

/// Signed square root of a bin's Poisson deviance 2 (mu - c + c ln(c / mu)).
inline double deviance_residual(double mu, double c)
{
    mu = std::max(mu, 1e-300);
    const double d = c > 0.0 ? mu - c + c * std::log(c / mu) : mu;
    return std::copysign(std::sqrt(2.0 * std::max(d, 0.0)), mu - c);
}

struct EnvelopeFitOptions
{
    EnvelopeShape shape = EnvelopeShape::ExpDecaying;
    CountWeighting weighting = CountWeighting::Poisson;
    std::optional<TimeWindow> window; // default: extinction window of shape
    std::optional<double> tau_p_guess;
    /// Accidental counts per bin added to the model.
    double background = 0.0;
    LmOptions lm;
};

struct EnvelopeFit
{
    double tau_p = 0.0;
    double tau_p_sigma = 0.0;
    double amplitude = 0.0; // expected total counts of the photon
    double amplitude_sigma = 0.0;
    double eta_f = 0.0;     // amplitude / n_heralds
    double chi2 = 0.0;
    double chi2_reduced = 0.0;
    int n_iterations = 0;
    std::size_t bins_used = 0;
    TimeWindow window;
    std::vector<double> chi2_history;
};

/// Weighted least-squares fit of amplitude * int_bin |xi|^2 to G_f0.
///
/// Bins whose start lies in the window are used, except bins where both
/// the counts and the model are structurally zero (outside the photon's
/// support), which carry no information.
inline EnvelopeFit fit_envelope(const CoincidenceHistogram& g_f0,
                                const EnvelopeFitOptions& opts = {})
{
    g_f0.validate();
    if (opts.shape != EnvelopeShape::ExpDecaying &&
        opts.shape != EnvelopeShape::ExpRising)
        throw PhysicsError("envelope fit supports decaying or rising shapes");
    const TimeWindow window = opts.window.value_or(default_window(opts.shape));

    std::vector<std::size_t> used;
    std::size_t nonzero = 0;
    double m1 = 0.0, total = 0.0;
    for (std::size_t i = 0; i < g_f0.bins.size; ++i) {
        const double a = g_f0.bins.time(i);
        if (!window.contains(a))
            continue;
        const bool in_support =
            exponential_bin_fraction(opts.shape, 1.0, a, a + g_f0.dt()) > 0.0;
        if (!in_support && g_f0.counts[i] == 0.0 && opts.background == 0.0)
            continue;
        used.push_back(i);
        if (g_f0.counts[i] != 0.0)
            ++nonzero;
        const double c = std::max(g_f0.counts[i] - opts.background, 0.0);
        const double t = std::abs(a + 0.5 * g_f0.dt());
        total += c;
        m1 += c * t;
    }
    if (nonzero < 20)
        throw PhysicsError("envelope fit needs at least 20 bins with counts");
    auto [lo_it, hi_it] = std::minmax_element(
        used.begin(), used.end(), [&](std::size_t x, std::size_t y) {
            return g_f0.counts[x] < g_f0.counts[y];
        });
    if (g_f0.counts[*hi_it] - g_f0.counts[*lo_it] <= 0.0)
        throw PhysicsError("envelope fit: data are flat");

    // one-sided exponential: mean |t| = tau_p
    const double tau0 = opts.tau_p_guess.value_or(
        std::max(m1 / total, 2.0 * g_f0.dt()));
    double frac = 0.0;
    for (auto i : used)
        frac += exponential_bin_fraction(opts.shape, tau0, g_f0.bins.time(i),
                                         g_f0.bins.time(i) + g_f0.dt());
    const double amp0 = total / std::max(frac, 1e-12);

    auto residuals = [&](const Eigen::VectorXd& p) {
        Eigen::VectorXd r(static_cast<Eigen::Index>(used.size()));
        for (std::size_t j = 0; j < used.size(); ++j) {
            const auto i = used[j];
            const double a = g_f0.bins.time(i);
            const double model =
                p[1] * exponential_bin_fraction(opts.shape, p[0], a, a + g_f0.dt()) +
                opts.background;
            r[static_cast<Eigen::Index>(j)] =
                opts.weighting == CountWeighting::Poisson
                    ? deviance_residual(model, g_f0.counts[i])
                    : (model - g_f0.counts[i]) / count_sigma(g_f0, i);
        }
        return r;
    };
    Eigen::VectorXd x0(2), lo(2), hi(2);
    x0 << tau0, amp0;
    lo << 1e-3, 0.0;
    hi << 1e4, std::numeric_limits<double>::infinity();
    const auto res = levenberg_marquardt(residuals, x0, lo, hi, opts.lm);

    EnvelopeFit fit;
    fit.tau_p = res.params[0];
    fit.amplitude = res.params[1];
    fit.tau_p_sigma = std::sqrt(std::max(res.covariance(0, 0), 0.0));
    fit.amplitude_sigma = std::sqrt(std::max(res.covariance(1, 1), 0.0));
    fit.eta_f = fit.amplitude / static_cast<double>(g_f0.n_heralds);
    fit.chi2 = res.chi2;
    fit.bins_used = used.size();
    fit.chi2_reduced = res.chi2 / static_cast<double>(used.size() - 2);
    fit.n_iterations = res.iterations;
    fit.window = window;
    fit.chi2_history = res.chi2_history;
    return fit;
}

// ---- spatial overlap fit ----------------------------------------------------

struct LambdaFitOptions
{
    EnvelopeShape shape = EnvelopeShape::ExpDecaying;
    CountWeighting weighting = CountWeighting::Poisson;
    double tau_p = 13.3;
    /// Uncertainty of tau_p when it comes from a fit; its effect on lambda
    /// is added to lambda_sigma in quadrature.
    double tau_p_sigma = 0.0;
    std::optional<TimeWindow> window;
    /// Gaussian only: forward coincidence probability used to turn counts
    /// into rates; default is sum(G_f0) / n_heralds. The Poisson fit treats
    /// it as a free nuisance parameter instead.
    std::optional<double> eta_f;
    /// Accidental counts per bin, the same in both histograms per herald.
    double background = 0.0;
    double lambda_guess = 0.0; // 0: start from the measured extinction
    LmOptions lm;
};

struct LambdaFit
{
    double lambda = 0.0;
    double lambda_sigma = 0.0;
    /// Part of lambda_sigma propagated from tau_p_sigma.
    double lambda_sigma_tau_p = 0.0;
    double chi2 = 0.0;
    double chi2_reduced = 0.0;
    int n_iterations = 0;
    std::size_t bins_used = 0;
    TimeWindow window;
    double eta_f = 0.0;
};

/// The closed-form delta(t) stays defined above lambda = 1, so the search
/// extends there and an unphysical estimate is reported as an error rather
/// than clipped.
inline constexpr double lambda_search_max = 2.0;

namespace detail {

inline LambdaFit fit_lambda_at_tau_p(const CoincidenceHistogram& g_f0,
                                     const CoincidenceHistogram& g_f, double tau0,
                                     const LambdaFitOptions& opts)
{
    g_f0.validate();
    g_f.validate();
    check_same_bins(g_f0, g_f);
    if (!(tau0 > 0.0) || !(opts.tau_p > 0.0))
        throw PhysicsError("lambda fit needs tau0 > 0 and tau_p > 0");
    if (g_f0.n_heralds == 0 || g_f.n_heralds == 0)
        throw DataFormatError("histogram has zero heralds");
    if (opts.shape != EnvelopeShape::ExpDecaying &&
        opts.shape != EnvelopeShape::ExpRising)
        throw PhysicsError("lambda fit supports decaying or rising shapes");
    const TimeWindow window = opts.window.value_or(default_window(opts.shape));
    const double n0 = static_cast<double>(g_f0.n_heralds);
    const double n1 = static_cast<double>(g_f.n_heralds);
    const double bg0 = opts.background;
    const double bg1 = opts.background * n1 / n0;

    const double dt = g_f0.dt();
    std::vector<std::size_t> used;
    double signal0 = 0.0, signal1 = 0.0, frac_total = 0.0;
    for (std::size_t i = 0; i < g_f0.bins.size; ++i) {
        const double a = g_f0.bins.time(i);
        if (!window.contains(a))
            continue;
        if (g_f0.counts[i] == 0.0 && g_f.counts[i] == 0.0 && a + dt <= 0.0 &&
            opts.shape == EnvelopeShape::ExpDecaying && bg0 == 0.0)
            continue; // before a decaying photon arrives nothing can change
        used.push_back(i);
        signal0 += g_f0.counts[i] - bg0;
        signal1 += g_f.counts[i] - bg1;
        frac_total += exponential_bin_fraction(opts.shape, opts.tau_p, a, a + dt);
    }
    if (used.size() < 3)
        throw PhysicsError("lambda fit needs at least 3 bins");
    const double eta = opts.eta_f.value_or(
        (g_f0.total() - bg0 * static_cast<double>(g_f0.bins.size)) / n0);
    if (!(eta > 0.0) || !(signal0 > 0.0))
        throw PhysicsError("lambda fit needs a nonzero forward efficiency");

    TimeGrid sub{g_f0.bins.time(used.front()), dt, used.back() - used.front() + 1};
    std::vector<double> frac(used.size());
    for (std::size_t j = 0; j < used.size(); ++j) {
        const double a = g_f0.bins.time(used[j]);
        frac[j] = exponential_bin_fraction(opts.shape, opts.tau_p, a, a + dt);
    }
    auto delta_model = [&](double lambda) {
        const AtomParams atom{tau0, lambda};
        return analytic::binned_delta(atom, opts.shape, opts.tau_p, sub);
    };

    double guess = opts.lambda_guess;
    if (guess <= 0.0) {
        const double eps = (signal0 / n0 - signal1 / n1) / (signal0 / n0);
        guess = std::clamp(eps * (tau0 + opts.tau_p) / (4.0 * opts.tau_p), 1e-4, 0.5);
    }

    LambdaFit fit;
    fit.window = window;
    fit.bins_used = used.size();
    if (opts.weighting == CountWeighting::Poisson) {
        const auto m = static_cast<Eigen::Index>(used.size());
        auto residuals = [&](const Eigen::VectorXd& p) {
            const auto d = delta_model(p[0]);
            Eigen::VectorXd r(2 * m);
            for (std::size_t j = 0; j < used.size(); ++j) {
                const auto i = used[j];
                const double f1 = std::max(frac[j] - dt * d[i - used.front()], 0.0);
                const auto k = static_cast<Eigen::Index>(j);
                r[k] = deviance_residual(n0 * p[1] * frac[j] + bg0, g_f0.counts[i]);
                r[m + k] = deviance_residual(n1 * p[1] * f1 + bg1, g_f.counts[i]);
            }
            return r;
        };
        Eigen::VectorXd x0(2), lo(2), hi(2);
        x0 << guess, signal0 / (n0 * std::max(frac_total, 1e-12));
        lo << 0.0, 0.0;
        hi << lambda_search_max, 1.0;
        const auto res = levenberg_marquardt(residuals, x0, lo, hi, opts.lm);
        if (res.params[0] > 1.0)
            throw PhysicsError("fitted lambda is outside [0, 1]");
        fit.lambda = res.params[0];
        fit.lambda_sigma = std::sqrt(std::max(res.covariance(0, 0), 0.0));
        fit.eta_f = res.params[1];
        fit.chi2 = res.chi2;
        fit.chi2_reduced = res.chi2 / static_cast<double>(2 * used.size() - 2);
        fit.n_iterations = res.iterations;
        return fit;
    }

    const double s0 = 1.0 / (n0 * eta * dt);
    const double s1 = 1.0 / (n1 * eta * dt);
    std::vector<double> measured, sigma;
    for (auto i : used) {
        measured.push_back((g_f0.counts[i] - bg0) * s0 - (g_f.counts[i] - bg1) * s1);
        sigma.push_back(std::hypot(count_sigma(g_f0, i) * s0, count_sigma(g_f, i) * s1));
    }
    auto residuals = [&](const Eigen::VectorXd& p) {
        const auto d = delta_model(p[0]);
        Eigen::VectorXd r(static_cast<Eigen::Index>(used.size()));
        for (std::size_t j = 0; j < used.size(); ++j)
            r[static_cast<Eigen::Index>(j)] =
                (d[used[j] - used.front()] - measured[j]) / sigma[j];
        return r;
    };
    Eigen::VectorXd x0(1), lo(1), hi(1);
    x0 << guess;
    lo << 0.0;
    hi << lambda_search_max;
    const auto res = levenberg_marquardt(residuals, x0, lo, hi, opts.lm);
    if (res.params[0] > 1.0)
        throw PhysicsError("fitted lambda is outside [0, 1]");
    fit.lambda = res.params[0];
    fit.lambda_sigma = std::sqrt(std::max(res.covariance(0, 0), 0.0));
    fit.eta_f = eta;
    fit.chi2 = res.chi2;
    fit.chi2_reduced = res.chi2 / static_cast<double>(used.size() - 1);
    fit.n_iterations = res.iterations;
    return fit;
}

} // namespace detail

/// Fits lambda with tau_p held fixed, by matching the binned analytic
/// delta(t) = R_f0 - R_f to the data. With tau_p_sigma set, lambda is refitted
/// at tau_p +- tau_p_sigma and the spread enters lambda_sigma.
///
/// Gaussian: least squares of the measured delta(t_i) with
/// sigma = sqrt(max(counts, 1)) per histogram. Poisson: joint likelihood of
/// both histograms with expected counts N eta int_bin R_f0 and
/// N eta int_bin (R_f0 - delta), where eta is fitted alongside lambda.
inline LambdaFit fit_lambda(const CoincidenceHistogram& g_f0,
                            const CoincidenceHistogram& g_f, double tau0,
                            const LambdaFitOptions& opts = {})
{
    auto fit = detail::fit_lambda_at_tau_p(g_f0, g_f, tau0, opts);
    if (opts.tau_p_sigma > 0.0) {
        // refit with tau_p moved by one sigma either way
        auto shifted = opts;
        shifted.lambda_guess = fit.lambda > 0.0 ? fit.lambda : opts.lambda_guess;
        const double hi = opts.tau_p + opts.tau_p_sigma;
        const double lo = std::max(opts.tau_p - opts.tau_p_sigma, 0.5 * opts.tau_p);
        shifted.tau_p = hi;
        const double up = detail::fit_lambda_at_tau_p(g_f0, g_f, tau0, shifted).lambda;
        shifted.tau_p = lo;
        const double down = detail::fit_lambda_at_tau_p(g_f0, g_f, tau0, shifted).lambda;
        fit.lambda_sigma_tau_p = std::abs(up - down) / (hi - lo) * opts.tau_p_sigma;
        fit.lambda_sigma = std::hypot(fit.lambda_sigma, fit.lambda_sigma_tau_p);
    }
    return fit;
}

// ---- spectral overlap -------------------------------------------------------

/// Normalized overlap of the photon power spectrum S_p with the atomic
/// Lorentzian L_a (FWHM 1/(2 pi tau0) in ordinary frequency):
///
///   O = (int S_p L_a)^2 / (int S_p^2 int L_a^2).
///
/// O = 1 only for identical line shapes. For Lorentzian photons of
/// coherence time tau_p it equals 4 tau_p tau0 / (tau_p + tau0)^2, the mode
/// overlap of exponentially decaying photons with time constants tau_p and
/// tau0, and it is the same for decaying and rising envelopes.
inline double spectral_overlap(const PhotonEnvelope& env, const AtomParams& atom)
{
    atom.validate();
    const auto s = power_spectrum(env, 0.05);
    const double half = 0.5 * 1e3 / (2.0 * std::numbers::pi * atom.tau0); // MHz
    double sl = 0.0, ss = 0.0, ll = 0.0;
    for (std::size_t i = 0; i < s.density.size(); ++i) {
        const double f = s.frequency_mhz[i];
        const double l = half / (std::numbers::pi * (f * f + half * half));
        sl += s.density[i] * l;
        ss += s.density[i] * s.density[i];
        ll += l * l;
    }
    return sl * sl / (ss * ll);
}

} // namespace photon_atom

#endif
