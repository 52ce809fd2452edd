#ifndef PHOTON_ATOM_CAVITY_HPP
#define PHOTON_ATOM_CAVITY_HPP

#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <vector>

#include <photon_atom/envelopes.hpp>
#include <photon_atom/errors.hpp>
#include <photon_atom/fft.hpp>
#include <photon_atom/grid.hpp>

namespace photon_atom {

/// Speed of light in mm/ns.
inline constexpr double speed_of_light_mm_per_ns = 299.792458;

/// Asymmetric Fabry-Perot cavity used in reflection on the herald arm.
///
/// Reflectances are intensity reflectances. The back mirror only loses
/// light; its transmission is discarded.
struct CavityParams
{
    double length_mm = 125.0;
    double finesse = 103.0;
    double r_in = 0.943;
    double r_back = 0.9995;
    /// Cavity resonance relative to the herald centre frequency, MHz.
    double detuning_mhz = 0.0;

    void validate() const
    {
        if (!(length_mm > 0.0))
            throw PhysicsError("cavity length must be > 0");
        if (!(finesse > 0.0))
            throw PhysicsError("cavity finesse must be > 0");
        if (!(r_in > 0.0 && r_in <= 1.0) || !(r_back > 0.0 && r_back <= 1.0))
            throw PhysicsError("mirror reflectances must lie in (0, 1]");
        if (!std::isfinite(detuning_mhz))
            throw PhysicsError("cavity detuning must be finite");
    }

    /// Round-trip time 2L/c, ns.
    double round_trip_ns() const { return 2.0 * length_mm / speed_of_light_mm_per_ns; }
    /// Free spectral range c/2L, GHz.
    double fsr_ghz() const { return 1.0 / round_trip_ns(); }
    /// Linewidth FSR/finesse, MHz.
    double linewidth_mhz() const { return 1e3 * fsr_ghz() / finesse; }
};

/// Energy decay time tau_c = 1 / (2 pi linewidth) = finesse / (2 pi FSR), ns.
inline double cavity_decay_time(const CavityParams& cav)
{
    cav.validate();
    return cav.finesse / (2.0 * std::numbers::pi * cav.fsr_ghz());
}

/// Amplitude reflection coefficient at herald frequency offset `freq_mhz`
/// (two-mirror Airy formula, exp(-i w t) convention).
inline complex reflection_coefficient(const CavityParams& cav, double freq_mhz)
{
    const double r1 = std::sqrt(cav.r_in);
    const double r2 = std::sqrt(cav.r_back);
    const double phi = 2.0 * std::numbers::pi * (freq_mhz - cav.detuning_mhz) *
                       1e-3 * cav.round_trip_ns();
    const complex round_trip = std::polar(1.0, -phi);
    return (-r1 + r2 * round_trip) / (1.0 - r1 * r2 * round_trip);
}

/// Reflection response on a frequency grid (MHz, relative to the herald
/// centre). The grid must be at least one cavity linewidth wide.
inline std::vector<complex> reflection_response(const CavityParams& cav,
                                                std::span<const double> freq_mhz)
{
    cav.validate();
    if (freq_mhz.size() < 2 ||
        std::abs(freq_mhz.back() - freq_mhz.front()) < cav.linewidth_mhz())
        throw PhysicsError("frequency grid is narrower than the cavity line");
    std::vector<complex> r(freq_mhz.size());
    for (std::size_t i = 0; i < r.size(); ++i)
        r[i] = reflection_coefficient(cav, freq_mhz[i]);
    return r;
}

/// Single-pole approximation of the reflection near one resonance:
/// r(w) = far + residue / (kappa + i (w - w_c)), w in rad/ns.
struct PoleModel
{
    complex far;
    complex on_resonance;
    double kappa = 0.0;   // amplitude decay rate, 1/ns
    double omega_c = 0.0; // resonance offset, rad/ns

    complex residue() const { return kappa * (on_resonance - far); }

    complex response(double omega) const
    {
        return far + residue() / complex(kappa, omega - omega_c);
    }

    /// Energy decay time of the stored field, ns.
    double decay_time() const { return 0.5 / kappa; }
};

inline PoleModel pole_model(const CavityParams& cav)
{
    cav.validate();
    const double r1 = std::sqrt(cav.r_in);
    const double r2 = std::sqrt(cav.r_back);
    const double rho = r1 * r2;
    PoleModel m;
    m.far = -(r1 + r2) / (1.0 + rho);
    m.on_resonance = rho < 1.0 ? complex((r2 - r1) / (1.0 - rho)) : complex(-1.0);
    // a perfect in-coupler stores no field, so the pole carries no weight
    m.kappa = rho < 1.0 && r1 < 1.0 ? -std::log(rho) / cav.round_trip_ns() : 1.0;
    m.omega_c = 2.0 * std::numbers::pi * cav.detuning_mhz * 1e-3;
    return m;
}

/// Reflection impulse response discretized on the grid step: h[0] holds
/// the prompt reflection as a single-bin impulse of area `far` plus the
/// half-weight first tail sample; h[k] = residue exp(-(kappa - i w_c) u_k) dt.
inline std::vector<complex> impulse_response(const CavityParams& cav,
                                             const TimeGrid& grid)
{
    const auto m = pole_model(cav);
    const double dt = grid.step;
    std::vector<complex> h(grid.size);
    const complex a = m.residue();
    const complex rate(-m.kappa, m.omega_c);
    for (std::size_t k = 0; k < h.size(); ++k)
        h[k] = a * std::exp(rate * (static_cast<double>(k) * dt)) * dt;
    h[0] = m.far + 0.5 * h[0];
    return h;
}

enum class FilterMethod { TimeDomain, FrequencyDomain };

struct ShapedProbe
{
    PhotonEnvelope envelope;
    /// Norm of the conditional amplitude before renormalization (<= 1).
    double raw_norm = 0.0;
    double tau_c = 0.0;
    /// tau_c and tau_p differ by more than a factor of 5.
    bool poor_match = false;
};

namespace detail {

/// phi_j = sum_k h_k f_{j+k} by direct summation.
inline std::vector<complex> correlate_direct(std::span<const complex> h,
                                             std::span<const complex> f)
{
    const std::size_t n = f.size();
    std::vector<complex> out(n);
    for (std::size_t j = 0; j < n; ++j) {
        complex s{};
        const std::size_t kmax = std::min(h.size(), n - j);
        for (std::size_t k = 0; k < kmax; ++k)
            s += h[k] * f[j + k];
        out[j] = s;
    }
    return out;
}

/// Same correlation by zero-padded FFT.
inline std::vector<complex> correlate_fft(std::span<const complex> h,
                                          std::span<const complex> f)
{
    const std::size_t n = f.size();
    const std::size_t p = fft::next_pow2(2 * std::max(n, h.size()));
    std::vector<complex> fp(p), gp(p);
    std::copy(f.begin(), f.end(), fp.begin());
    gp[0] = h[0];
    for (std::size_t k = 1; k < h.size(); ++k)
        gp[p - k] = h[k];
    auto ff = fft::forward(fp);
    const auto gg = fft::forward(gp);
    for (std::size_t m = 0; m < p; ++m)
        ff[m] *= gg[m];
    auto c = fft::inverse(ff);
    c.resize(n);
    return c;
}

} // namespace detail

/// Conditional probe envelope after reflecting the herald off the cavity.
///
/// The photon pair amplitude psi(t_h, t_p) = Theta(t_p - t_h)
/// exp(-(t_p - t_h) / 2 tau_p) is filtered along the herald time with the
/// cavity impulse response h and projected on herald detection at t_h = 0:
/// phi(t) = integral h(u) f(t + u) du. On resonance this produces a
/// precursor rising as exp(t / 2 tau_c) for t < 0.
inline ShapedProbe shape_conditional_probe(const CavityParams& cav, double tau_p,
                                           const TimeGrid& grid,
                                           FilterMethod method =
                                               FilterMethod::TimeDomain)
{
    cav.validate();
    const auto input = make_decaying(tau_p, grid);
    const auto h = impulse_response(cav, grid);
    auto phi = method == FilterMethod::TimeDomain
                   ? detail::correlate_direct(h, input.amplitude())
                   : detail::correlate_fft(h, input.amplitude());

    PhotonEnvelope env(EnvelopeShape::CavityShaped, tau_p, grid,
                       std::vector<complex>(phi.begin(), phi.end()));
    // PhotonEnvelope rescales by 1/sqrt(raw norm)
    const std::size_t ref = env.support_begin();
    const double ratio = std::abs(phi[ref]) / std::abs(env[ref]);
    const double tau_c = pole_model(cav).decay_time();
    return ShapedProbe{std::move(env), ratio * ratio, tau_c,
                       tau_c > 5.0 * tau_p || tau_p > 5.0 * tau_c};
}

} // namespace photon_atom

#endif
