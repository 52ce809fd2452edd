#ifndef PHOTON_ATOM_FFT_HPP
#define PHOTON_ATOM_FFT_HPP

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace photon_atom::fft {

/// Unnormalized forward DFT, X_m = sum_k x_k exp(-2 pi i m k / N).
std::vector<std::complex<double>> forward(std::span<const std::complex<double>> in);

/// Inverse DFT including the 1/N factor.
std::vector<std::complex<double>> inverse(std::span<const std::complex<double>> in);

inline std::size_t next_pow2(std::size_t n)
{
    std::size_t p = 1;
    while (p < n)
        p <<= 1;
    return p;
}

/// Frequency of DFT bin m for sample spacing dt, in units of 1/dt,
/// mapped to the symmetric range [-1/(2 dt), 1/(2 dt)).
inline double bin_frequency(std::size_t m, std::size_t n, double dt)
{
    const auto half = static_cast<std::ptrdiff_t>(n / 2);
    auto idx = static_cast<std::ptrdiff_t>(m);
    if (idx >= half)
        idx -= static_cast<std::ptrdiff_t>(n);
    return static_cast<double>(idx) / (static_cast<double>(n) * dt);
}

} // namespace photon_atom::fft

#endif
