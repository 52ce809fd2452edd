#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include <photon_atom/envelopes.hpp>

using namespace photon_atom;

namespace {

const double tau_p = 13.3;

TimeGrid default_grid() { return TimeGrid::for_envelope(tau_p); }

double fwhm_of(double tp)
{
    const auto env = make_decaying(tp, TimeGrid::for_envelope(tp, 0.05, 16.0));
    return power_spectrum(env, 0.02).fwhm_mhz();
}

} // namespace

TEST(Grid, SymmetricGridHasZeroOnASample)
{
    const auto g = TimeGrid::symmetric(106.4, 0.05);
    ASSERT_TRUE(g.index_of(0.0).has_value());
    EXPECT_NEAR(g.start, -g.back(), 1e-12);
    EXPECT_LE(g.start, -106.4 + 1e-9);
}

TEST(Grid, BinsStartOnMultiplesOfTheWidth)
{
    const auto b = TimeGrid::bins(-114.0, 114.0, 2.0);
    EXPECT_DOUBLE_EQ(b.start, -114.0);
    EXPECT_EQ(b.size, 114u);
    const auto c = TimeGrid::bins(-115.0, 115.0, 5.0);
    EXPECT_EQ(c.size, 46u);
}

TEST(Grid, PiecewiseIntegralRespectsJumps)
{
    // unit step at t = 0 sampled on [-1, 1]
    const TimeGrid g{-1.0, 0.5, 5};
    PiecewiseCurve c{g, {0, 0, 0, 1, 1}, {0, 0, 1, 1, 1}};
    EXPECT_NEAR(c.integrate(), 1.0, 1e-15);
    EXPECT_NEAR(c.integrate(-1.0, 0.25), 0.25, 1e-15);
}

TEST(MakeDecaying, ValueAtZeroPlus)
{
    const auto env = make_decaying(tau_p, default_grid());
    const auto k0 = *env.grid().index_of(0.0);
    // the grid holds 1 - e^-8 of the continuum norm; renormalizing to the
    // stored grid raises the amplitude by that factor's inverse square root
    EXPECT_NEAR(env[k0].real(), 1.0 / std::sqrt(tau_p * (1 - std::exp(-8.0))), 1e-6);
    EXPECT_NEAR(env[k0].real(), 0.2742, 1e-4);
}

TEST(MakeDecaying, UnitNorm)
{
    EXPECT_NEAR(make_decaying(tau_p, default_grid()).norm(), 1.0, 1e-12);
    EXPECT_NEAR(make_decaying(2.0, TimeGrid::for_envelope(2.0)).norm(), 1.0, 1e-12);
}

TEST(MakeDecaying, NormMatchesContinuumQuadrature)
{
    // continuum norm held by [0, 8 tau_p] is 1 - e^-8; the renormalization
    // factor must be close to that, not to a Riemann-sum value
    const auto g = default_grid();
    std::vector<complex> raw(g.size);
    for (std::size_t k = 0; k < g.size; ++k)
        if (g.time(k) >= 0)
            raw[k] = std::exp(-g.time(k) / (2 * tau_p)) / std::sqrt(tau_p);
    const auto env = make_decaying(tau_p, g);
    const auto k0 = *g.index_of(0.0);
    const double scale = env[k0].real() / raw[k0].real();
    EXPECT_NEAR(1.0 / (scale * scale), 1.0 - std::exp(-8.0), 2e-6);
}

TEST(MakeDecaying, ZeroBeforeArrival)
{
    const auto env = make_decaying(tau_p, default_grid());
    EXPECT_EQ(env.at(-5.0), complex{});
    EXPECT_EQ(env.at(-0.01), complex{});
}

TEST(MakeDecaying, Errors)
{
    EXPECT_THROW(make_decaying(0.0, default_grid()), PhysicsError);
    EXPECT_THROW(make_decaying(-1.0, default_grid()), PhysicsError);
    // holds only 1 - e^-2 of the norm
    EXPECT_THROW(make_decaying(tau_p, TimeGrid::symmetric(2 * tau_p, 0.05)), PhysicsError);
    // t = 0 missing
    EXPECT_THROW(make_decaying(tau_p, TimeGrid{1.0, 0.05, 4000}), PhysicsError);
}

TEST(MakeRising, ValueAtZeroMinusAndSupport)
{
    const auto env = make_rising(tau_p, default_grid());
    const auto k0 = *env.grid().index_of(0.0);
    EXPECT_NEAR(env[k0].real(), 0.2742, 1e-4);
    EXPECT_EQ(env.at(5.0), complex{});
    EXPECT_NEAR(env.norm(), 1.0, 1e-12);
}

TEST(MakeRising, IsTimeReverseOfDecaying)
{
    for (double tp : {0.7, 5.0, 13.3, 26.2}) {
        const auto g = TimeGrid::for_envelope(tp, 0.05);
        const auto down = make_decaying(tp, g);
        const auto up = make_rising(tp, g);
        const auto rev = up.time_reversed();
        EXPECT_EQ(rev.shape(), EnvelopeShape::ExpDecaying);
        for (std::size_t k = 0; k < g.size; ++k)
            ASSERT_NEAR(std::abs(rev[k] - down[k]), 0.0, 1e-14) << "tau_p " << tp;
    }
}

TEST(MakeTabulated, RoundTripOfDecaying)
{
    const auto g = default_grid();
    const auto down = make_decaying(tau_p, g);
    const auto tab = make_tabulated(down.amplitude(), g, tau_p);
    EXPECT_EQ(tab.shape(), EnvelopeShape::Tabulated);
    for (std::size_t k = 0; k < g.size; ++k)
        ASSERT_NEAR(std::abs(tab[k] - down[k]), 0.0, 1e-15);
}

TEST(MakeTabulated, ScaleInvariant)
{
    const auto g = default_grid();
    std::mt19937_64 rng(7);
    std::normal_distribution<double> n;
    std::vector<complex> s(g.size), s7(g.size);
    for (std::size_t k = 0; k < g.size; ++k) {
        s[k] = {n(rng), n(rng)};
        s7[k] = 7.0 * s[k];
    }
    const auto a = make_tabulated(s, g);
    const auto b = make_tabulated(s7, g);
    EXPECT_NEAR(a.norm(), 1.0, 1e-12);
    for (std::size_t k = 0; k < g.size; ++k)
        ASSERT_NEAR(std::abs(a[k] - b[k]), 0.0, 1e-14);
}

TEST(MakeTabulated, RejectsDegenerateInput)
{
    const auto g = default_grid();
    std::vector<complex> zeros(g.size);
    EXPECT_THROW(make_tabulated(zeros, g), DataFormatError);
    auto bad = zeros;
    bad[10] = {std::nan(""), 0.0};
    EXPECT_THROW(make_tabulated(bad, g), DataFormatError);
    bad[10] = {std::numeric_limits<double>::infinity(), 0.0};
    EXPECT_THROW(make_tabulated(bad, g), DataFormatError);
    EXPECT_THROW(make_tabulated(std::vector<complex>(3, 1.0), g), DataFormatError);
}

TEST(MakeTabulated, DefaultTauIsRmsDuration)
{
    const auto g = TimeGrid::for_envelope(tau_p, 0.05, 30.0);
    const auto tab = make_tabulated(make_decaying(tau_p, g).amplitude(), g);
    EXPECT_NEAR(tab.tau_p(), tau_p, 0.01);
}

TEST(EnvelopeCsv, RoundTrip)
{
    const auto g = TimeGrid::for_envelope(2.5, 0.05);
    std::vector<complex> s(g.size);
    for (std::size_t k = 0; k < g.size; ++k)
        s[k] = std::polar(std::exp(-std::pow(g.time(k) / 3.0, 2)), 0.1 * g.time(k));
    const auto env = make_tabulated(s, g, 2.5);
    std::istringstream in(envelope_to_csv(env, 42));
    const auto back = envelope_from_csv(in, 2.5);
    ASSERT_EQ(back.size(), env.size());
    for (std::size_t k = 0; k < env.size(); ++k)
        ASSERT_NEAR(std::abs(back[k] - env[k]), 0.0, 1e-15);
}

TEST(EnvelopeCsv, RejectsNonUniformTime)
{
    std::istringstream in("t_ns,re_amplitude,im_amplitude\n0,1,0\n1,1,0\n3,1,0\n");
    EXPECT_THROW(envelope_from_csv(in), DataFormatError);
    std::istringstream missing("t_ns,re\n0,1\n1,1\n");
    EXPECT_THROW(envelope_from_csv(missing), DataFormatError);
}

TEST(PowerSpectrum, UnitIntegral)
{
    const auto s = power_spectrum(make_decaying(tau_p, default_grid()));
    double total = 0.0;
    for (double d : s.density)
        total += d;
    EXPECT_NEAR(total * s.step_mhz(), 1.0, 1e-12);
}

TEST(PowerSpectrum, IdenticalForRisingAndDecaying)
{
    const auto g = default_grid();
    const auto a = power_spectrum(make_decaying(tau_p, g));
    const auto b = power_spectrum(make_rising(tau_p, g));
    const double peak = *std::max_element(a.density.begin(), a.density.end());
    ASSERT_EQ(a.density.size(), b.density.size());
    for (std::size_t m = 0; m < a.density.size(); ++m) {
        if (a.density[m] < 1e-3 * peak)
            continue;
        ASSERT_NEAR(b.density[m] / a.density[m], 1.0, 1e-6) << a.frequency_mhz[m];
    }
}

TEST(PowerSpectrum, LorentzianWidth)
{
    const double expected = 1e3 / (2 * std::numbers::pi * tau_p);
    EXPECT_NEAR(expected, 11.97, 0.005);
    EXPECT_NEAR(fwhm_of(tau_p), expected, 0.01 * expected);
}

TEST(PowerSpectrum, WidthHalvesWhenTauDoubles)
{
    EXPECT_NEAR(fwhm_of(2 * tau_p) / fwhm_of(tau_p), 0.5, 0.01);
}

TEST(ModeOverlap, SelfAndOrthogonalShapes)
{
    const auto g = TimeGrid::for_envelope(tau_p, 0.01);
    const auto down = make_decaying(tau_p, g);
    const auto up = make_rising(tau_p, g);
    EXPECT_NEAR(mode_overlap(down, down), 1.0, 1e-12);
    // the supports only touch at t = 0
    EXPECT_LT(mode_overlap(down, up), 1e-6);
    // two decaying exponentials: 4 t1 t2 / (t1 + t2)^2
    const auto g2 = TimeGrid::for_envelope(26.2, 0.01, 20.0);
    EXPECT_NEAR(mode_overlap(make_decaying(tau_p, g2), make_decaying(26.2, g2)),
                4 * 13.3 * 26.2 / std::pow(13.3 + 26.2, 2), 1e-5);
}
