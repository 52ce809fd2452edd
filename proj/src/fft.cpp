#include <photon_atom/fft.hpp>

#include <mutex>

#include <fftw3.h>

namespace photon_atom::fft {

namespace {

// FFTW planning is not thread-safe; execution is.
std::mutex planner_mutex;

std::vector<std::complex<double>> transform(std::span<const std::complex<double>> in, int sign)
{
    std::vector<std::complex<double>> buf(in.begin(), in.end());
    if (buf.empty())
        return buf;
    auto* data = reinterpret_cast<fftw_complex*>(buf.data());
    fftw_plan plan;
    {
        std::lock_guard lock(planner_mutex);
        plan = fftw_plan_dft_1d(static_cast<int>(buf.size()), data, data, sign, FFTW_ESTIMATE);
    }
    fftw_execute(plan);
    {
        std::lock_guard lock(planner_mutex);
        fftw_destroy_plan(plan);
    }
    return buf;
}

} // namespace

std::vector<std::complex<double>> forward(std::span<const std::complex<double>> in)
{
    return transform(in, FFTW_FORWARD);
}

std::vector<std::complex<double>> inverse(std::span<const std::complex<double>> in)
{
    auto out = transform(in, FFTW_BACKWARD);
    const double scale = 1.0 / static_cast<double>(out.size());
    for (auto& v : out)
        v *= scale;
    return out;
}

} // namespace photon_atom::fft
