#ifndef PHOTON_ATOM_ENVELOPES_HPP
#define PHOTON_ATOM_ENVELOPES_HPP

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <photon_atom/csv.hpp>
#include <photon_atom/errors.hpp>
#include <photon_atom/fft.hpp>
#include <photon_atom/grid.hpp>

namespace photon_atom {

using complex = std::complex<double>;

enum class EnvelopeShape { ExpDecaying, ExpRising, Tabulated, CavityShaped };

inline const char* to_string(EnvelopeShape s)
{
    switch (s) {
    case EnvelopeShape::ExpDecaying: return "decaying";
    case EnvelopeShape::ExpRising: return "rising";
    case EnvelopeShape::Tabulated: return "tabulated";
    case EnvelopeShape::CavityShaped: return "cavity";
    }
    return "?";
}

/// Single-photon temporal amplitude xi(t) sampled on a uniform grid,
/// in ns^-1/2.
///
/// The envelope is zero outside its support, the closed index range between
/// the first and last nonzero samples. Support edges that are not grid ends
/// are treated as jumps (Heaviside edges): the one-sided limit from outside
/// is zero. All quadratures use the trapezoid rule with these limits, and
/// the stored amplitude is normalized so that this quadrature of |xi|^2 is 1.
class PhotonEnvelope
{
public:
    PhotonEnvelope(EnvelopeShape shape, double tau_p, TimeGrid grid,
                   std::vector<complex> amplitude)
        : shape_(shape), tau_p_(tau_p), grid_(grid),
          amplitude_(std::move(amplitude))
    {
        if (!(tau_p_ > 0.0) || !std::isfinite(tau_p_))
            throw PhysicsError("photon coherence time tau_p must be > 0");
        if (amplitude_.size() != grid_.size || grid_.size < 2)
            throw DataFormatError("envelope samples do not match the time grid");
        for (const auto& a : amplitude_)
            if (!std::isfinite(a.real()) || !std::isfinite(a.imag()))
                throw DataFormatError("envelope contains NaN or Inf samples");
        find_support();
        const double n = norm();
        if (!(n > 0.0))
            throw DataFormatError("envelope has zero norm");
        const double scale = 1.0 / std::sqrt(n);
        for (auto& a : amplitude_)
            a *= scale;
    }

    EnvelopeShape shape() const { return shape_; }
    double tau_p() const { return tau_p_; }
    /// Spectral FWHM Gamma_p = 1/tau_p, angular frequency in 1/ns.
    double linewidth() const { return 1.0 / tau_p_; }
    const TimeGrid& grid() const { return grid_; }
    std::span<const complex> amplitude() const { return amplitude_; }
    complex operator[](std::size_t k) const { return amplitude_[k]; }
    std::size_t size() const { return amplitude_.size(); }

    /// Support as [begin, end) sample indices.
    std::size_t support_begin() const { return begin_; }
    std::size_t support_end() const { return end_; }

    complex left_limit(std::size_t k) const
    {
        if (k < begin_ || k >= end_)
            return {};
        if (k == begin_ && k > 0)
            return {};
        return amplitude_[k];
    }

    complex right_limit(std::size_t k) const
    {
        if (k < begin_ || k >= end_)
            return {};
        if (k + 1 == end_ && k + 1 < grid_.size)
            return {};
        return amplitude_[k];
    }

    /// Value inside segment k at fraction 0 < frac < 1, by cubic Lagrange
    /// interpolation over samples that all lie in the support.
    complex interior(std::size_t k, double frac) const
    {
        if (k < begin_ || k + 1 >= end_)
            return {};
        const std::size_t n = end_ - begin_;
        if (n < 4)
            return amplitude_[k] + (amplitude_[k + 1] - amplitude_[k]) * frac;
        std::size_t s = k > begin_ ? k - 1 : begin_;
        s = std::min(s, end_ - 4);
        const double x = static_cast<double>(k - s) + frac;
        complex sum{};
        for (std::size_t i = 0; i < 4; ++i) {
            double w = 1.0;
            for (std::size_t j = 0; j < 4; ++j)
                if (j != i)
                    w *= (x - static_cast<double>(j)) /
                         (static_cast<double>(i) - static_cast<double>(j));
            sum += w * amplitude_[s + i];
        }
        return sum;
    }

    /// Interpolated amplitude at an arbitrary time (zero off the grid).
    complex at(double t) const
    {
        const double x = (t - grid_.start) / grid_.step;
        if (x < -1e-9 || x > static_cast<double>(grid_.size - 1) + 1e-9)
            return {};
        const double kf = std::round(x);
        if (std::abs(x - kf) < 1e-9)
            return amplitude_[static_cast<std::size_t>(kf)];
        const auto k = static_cast<std::size_t>(std::floor(x));
        return interior(k, x - static_cast<double>(k));
    }

    /// Trapezoid quadrature of |xi|^2 respecting support edges.
    double norm() const { return intensity().integrate(); }

    /// |xi(t)|^2 with its one-sided limits.
    PiecewiseCurve intensity() const
    {
        PiecewiseCurve c{grid_, std::vector<double>(size()),
                         std::vector<double>(size())};
        for (std::size_t k = 0; k < size(); ++k) {
            c.left[k] = std::norm(left_limit(k));
            c.right[k] = std::norm(right_limit(k));
        }
        return c;
    }

    /// Sample-wise t -> -t mirror; requires a grid symmetric about 0.
    PhotonEnvelope time_reversed() const
    {
        if (std::abs(grid_.start + grid_.back()) > 1e-9 * grid_.step)
            throw DataFormatError("time reversal needs a grid symmetric about t=0");
        std::vector<complex> rev(amplitude_.rbegin(), amplitude_.rend());
        EnvelopeShape s = shape_;
        if (s == EnvelopeShape::ExpDecaying)
            s = EnvelopeShape::ExpRising;
        else if (s == EnvelopeShape::ExpRising)
            s = EnvelopeShape::ExpDecaying;
        return PhotonEnvelope(s, tau_p_, grid_, std::move(rev));
    }

private:
    void find_support()
    {
        begin_ = grid_.size;
        end_ = 0;
        for (std::size_t k = 0; k < amplitude_.size(); ++k) {
            if (amplitude_[k] != complex{}) {
                begin_ = std::min(begin_, k);
                end_ = k + 1;
            }
        }
        if (end_ == 0)
            throw DataFormatError("envelope is identically zero");
    }

    EnvelopeShape shape_;
    double tau_p_;
    TimeGrid grid_;
    std::vector<complex> amplitude_;
    std::size_t begin_ = 0;
    std::size_t end_ = 0;
};

namespace detail {

inline void check_exponential_grid(double tau_p, const TimeGrid& grid,
                                   bool rising)
{
    if (!(tau_p > 0.0) || !std::isfinite(tau_p))
        throw PhysicsError("photon coherence time tau_p must be > 0");
    if (grid.size < 2 || !(grid.step > 0.0))
        throw PhysicsError("envelope grid is empty");
    if (grid.start > 1e-12 || grid.back() < -1e-12)
        throw PhysicsError("envelope grid must contain t = 0");
    // fraction of the continuum norm held by the grid
    const double reach = rising ? -grid.start : grid.back();
    const double held = 1.0 - std::exp(-reach / tau_p);
    if (held < 0.999)
        throw PhysicsError("envelope grid holds less than 99.9% of the photon norm");
}

} // namespace detail

/// xi(t) = tau_p^-1/2 exp(-t / 2 tau_p) for t >= 0, else 0.
inline PhotonEnvelope make_decaying(double tau_p, const TimeGrid& grid)
{
    detail::check_exponential_grid(tau_p, grid, false);
    std::vector<complex> a(grid.size);
    for (std::size_t k = 0; k < grid.size; ++k) {
        const double t = grid.time(k);
        if (t >= -1e-12 * grid.step)
            a[k] = std::exp(-std::max(t, 0.0) / (2.0 * tau_p)) / std::sqrt(tau_p);
    }
    return PhotonEnvelope(EnvelopeShape::ExpDecaying, tau_p, grid, std::move(a));
}

/// xi(t) = tau_p^-1/2 exp(+t / 2 tau_p) for t <= 0, else 0.
inline PhotonEnvelope make_rising(double tau_p, const TimeGrid& grid)
{
    detail::check_exponential_grid(tau_p, grid, true);
    std::vector<complex> a(grid.size);
    for (std::size_t k = 0; k < grid.size; ++k) {
        const double t = grid.time(k);
        if (t <= 1e-12 * grid.step)
            a[k] = std::exp(std::min(t, 0.0) / (2.0 * tau_p)) / std::sqrt(tau_p);
    }
    return PhotonEnvelope(EnvelopeShape::ExpRising, tau_p, grid, std::move(a));
}

/// Intensity-weighted rms duration; equals tau_p for one-sided exponentials.
inline double rms_duration(std::span<const complex> samples, const TimeGrid& grid)
{
    double w = 0.0, m1 = 0.0, m2 = 0.0;
    for (std::size_t k = 0; k < samples.size(); ++k) {
        const double p = std::norm(samples[k]);
        const double t = grid.time(k);
        w += p;
        m1 += p * t;
        m2 += p * t * t;
    }
    if (!(w > 0.0))
        return 0.0;
    m1 /= w;
    return std::sqrt(std::max(m2 / w - m1 * m1, 0.0));
}

/// Renormalized user-supplied envelope. tau_p defaults to the rms duration.
inline PhotonEnvelope make_tabulated(std::span<const complex> samples,
                                     const TimeGrid& grid, double tau_p = 0.0)
{
    if (samples.size() != grid.size)
        throw DataFormatError("tabulated samples do not match the time grid");
    for (const auto& s : samples)
        if (!std::isfinite(s.real()) || !std::isfinite(s.imag()))
            throw DataFormatError("tabulated envelope contains NaN or Inf");
    if (std::all_of(samples.begin(), samples.end(),
                    [](complex s) { return s == complex{}; }))
        throw DataFormatError("tabulated envelope is identically zero");
    if (tau_p <= 0.0)
        tau_p = std::max(rms_duration(samples, grid), grid.step);
    return PhotonEnvelope(EnvelopeShape::Tabulated, tau_p, grid,
                          std::vector<complex>(samples.begin(), samples.end()));
}

/// |<a|b>|^2 for envelopes on the same grid.
inline double mode_overlap(const PhotonEnvelope& a, const PhotonEnvelope& b)
{
    if (!a.grid().same_as(b.grid()))
        throw DataFormatError("overlap needs envelopes on the same grid");
    complex sum{};
    for (std::size_t k = 0; k + 1 < a.size(); ++k)
        sum += std::conj(a.right_limit(k)) * b.right_limit(k) +
               std::conj(a.left_limit(k + 1)) * b.left_limit(k + 1);
    sum *= 0.5 * a.grid().step;
    return std::norm(sum);
}

/// Power spectral density in ordinary frequency (MHz), ascending.
struct Spectrum
{
    std::vector<double> frequency_mhz;
    std::vector<double> density; // per MHz, unit integral

    double step_mhz() const
    {
        return frequency_mhz.size() > 1 ? frequency_mhz[1] - frequency_mhz[0] : 0.0;
    }

    /// Full width at half maximum with linear interpolation of the crossings.
    double fwhm_mhz() const
    {
        const auto peak_it = std::max_element(density.begin(), density.end());
        const auto p = static_cast<std::size_t>(peak_it - density.begin());
        const double half = 0.5 * *peak_it;
        auto crossing = [&](std::size_t i, std::size_t j) {
            // density[i] >= half > density[j]
            const double f = (density[i] - half) / (density[i] - density[j]);
            return frequency_mhz[i] + f * (frequency_mhz[j] - frequency_mhz[i]);
        };
        std::size_t r = p;
        while (r + 1 < density.size() && density[r + 1] >= half)
            ++r;
        std::size_t l = p;
        while (l > 0 && density[l - 1] >= half)
            --l;
        if (r + 1 >= density.size() || l == 0)
            return frequency_mhz.back() - frequency_mhz.front();
        return crossing(r, r + 1) - crossing(l, l - 1);
    }
};

/// |FT xi|^2 by zero-padded FFT, normalized to unit integral over MHz.
///
/// Samples at support edges enter with half weight (trapezoid rule), so the
/// discrete transform approximates the continuum transform to O(dt^2).
inline Spectrum power_spectrum(const PhotonEnvelope& env,
                               double resolution_mhz = 0.1)
{
    const double dt = env.grid().step;
    // frequencies in 1/ns = GHz; resolution 1/(N dt) GHz
    const auto wanted =
        static_cast<std::size_t>(std::ceil(1.0 / (resolution_mhz * 1e-3 * dt)));
    const std::size_t n = fft::next_pow2(std::max(wanted, 2 * env.size()));
    std::vector<complex> buf(n);
    for (std::size_t k = 0; k < env.size(); ++k)
        buf[k] = 0.5 * (env.left_limit(k) + env.right_limit(k)) * dt;
    const auto ft = fft::forward(buf);

    Spectrum s;
    s.frequency_mhz.resize(n);
    s.density.resize(n);
    for (std::size_t m = 0; m < n; ++m) {
        // fftshift so frequencies ascend
        const std::size_t src = (m + n / 2) % n;
        s.frequency_mhz[m] = 1e3 * fft::bin_frequency(src, n, dt);
        s.density[m] = std::norm(ft[src]);
    }
    double total = 0.0;
    for (double d : s.density)
        total += d;
    total *= s.step_mhz();
    for (double& d : s.density)
        d /= total;
    return s;
}

// ---- CSV: t_ns, re_amplitude, im_amplitude -------------------------------

inline std::string envelope_to_csv(const PhotonEnvelope& env,
                                   std::uint64_t input_hash = 0)
{
    std::ostringstream out;
    out << provenance_line(input_hash) << "\n";
    out << "t_ns,re_amplitude,im_amplitude\n";
    for (std::size_t k = 0; k < env.size(); ++k)
        out << fmt_double(env.grid().time(k)) << ','
            << fmt_double(env[k].real()) << ',' << fmt_double(env[k].imag())
            << '\n';
    return out.str();
}

/// Reads a tabulated envelope; the time column must be uniform.
inline PhotonEnvelope envelope_from_csv(std::istream& in, double tau_p = 0.0)
{
    const auto table = read_csv(in);
    const auto t = table.values("t_ns");
    const auto re = table.values("re_amplitude");
    const auto im = table.values("im_amplitude");
    if (t.size() < 2)
        throw DataFormatError("envelope CSV needs at least two rows");
    const double step = (t.back() - t.front()) / static_cast<double>(t.size() - 1);
    TimeGrid grid{t.front(), step, t.size()};
    for (std::size_t k = 0; k < t.size(); ++k)
        if (std::abs(t[k] - grid.time(k)) > 1e-6 * step)
            throw DataFormatError("envelope CSV time column is not uniform");
    std::vector<complex> a(t.size());
    for (std::size_t k = 0; k < t.size(); ++k)
        a[k] = {re[k], im[k]};
    return make_tabulated(a, grid, tau_p);
}

} // namespace photon_atom

#endif
