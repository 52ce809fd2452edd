#include <cmath>

#include <gtest/gtest.h>

#include <photon_atom/reconstruction.hpp>
#include <photon_atom/synthesis.hpp>

using namespace photon_atom;

namespace {

const AtomParams atom{};
const double tau_p = 13.3;
const EfficiencyChain chain{};

PhotonEnvelope nominal_photon(EnvelopeShape shape)
{
    const auto g = TimeGrid::symmetric(16 * tau_p, 0.05);
    return shape == EnvelopeShape::ExpRising ? make_rising(tau_p, g) : make_decaying(tau_p, g);
}

// rate series with zero uncertainty from analytic bin averages
RateSeries analytic_rates(EnvelopeShape shape, const TimeGrid& bins, bool with_atom)
{
    RateSeries r{bins, {}, std::vector<double>(bins.size, 0.0),
                 std::vector<bool>(bins.size, false)};
    r.rate = bin_average(
        [&](double t) {
            return with_atom ? analytic::r_f(atom, shape, tau_p, t)
                             : analytic::r_f0(shape, tau_p, t);
        },
        bins, 2);
    return r;
}

double analytic_pe(EnvelopeShape shape, double t)
{
    return shape == EnvelopeShape::ExpRising ? analytic::pe_rising(atom, tau_p, t)
                                             : analytic::pe_decaying(atom, tau_p, t);
}

double max_forward_error(EnvelopeShape shape, double dt)
{
    const auto bins = TimeGrid::bins(-114.0, 114.0, dt);
    const auto tr = reconstruct_forward(analytic_rates(shape, bins, false),
                                        analytic_rates(shape, bins, true), atom);
    double worst = 0.0;
    for (std::size_t i = 0; i < bins.size; ++i)
        worst = std::max(worst, std::abs(tr.p_e[i] - analytic_pe(shape, bins.time(i))));
    return worst;
}

CoincidenceHistogram flat_histogram(double per_bin, std::uint64_t n)
{
    CoincidenceHistogram h;
    h.bins = TimeGrid::bins(-114.0, 114.0, 2.0);
    h.counts.assign(h.bins.size, per_bin);
    h.n_heralds = n;
    return h;
}

} // namespace

TEST(CountsToRate, Conversion)
{
    auto h = flat_histogram(4.0, 1000);
    h.counts[3] = 0.0;
    const auto r = counts_to_rate(h, 0.5);
    EXPECT_DOUBLE_EQ(r.rate[0], 4.0 / (1000 * 0.5 * 2.0));
    EXPECT_DOUBLE_EQ(r.sigma[0], 2.0 / (1000 * 0.5 * 2.0));
    EXPECT_EQ(r.rate[3], 0.0);
    EXPECT_EQ(r.sigma[3], 0.0);
    EXPECT_TRUE(r.zero_count[3]);
    EXPECT_FALSE(r.zero_count[0]);
}

TEST(CountsToRate, ScalingCountsAndHeraldsLeavesRate)
{
    auto a = flat_histogram(3.0, 1000);
    auto b = flat_histogram(30.0, 10000);
    a.counts[7] = 11;
    b.counts[7] = 110;
    const auto ra = counts_to_rate(a, chain.eta_f);
    const auto rb = counts_to_rate(b, chain.eta_f);
    for (std::size_t i = 0; i < ra.rate.size(); ++i)
        ASSERT_NEAR(ra.rate[i], rb.rate[i], 1e-12 * ra.rate[i]);
}

TEST(CountsToRate, Errors)
{
    EXPECT_THROW(counts_to_rate(flat_histogram(1.0, 0), 0.1), DataFormatError);
    EXPECT_THROW(counts_to_rate(flat_histogram(1.0, 10), 0.0), PhysicsError);
}

TEST(CountsToRate, SynthesizedNoAtomMatchesEnvelope)
{
    const auto env = nominal_photon(EnvelopeShape::ExpDecaying);
    const auto s = synthesize(env, atom, chain, 10'000'000, SynthesisBins{}, 20261018);
    const auto r = counts_to_rate(s.g_f0, chain.eta_f);
    const auto truth = bin_average(
        [](double t) { return analytic::r_f0(EnvelopeShape::ExpDecaying, tau_p, t); },
        r.bins, 2);
    int used = 0, outside = 0;
    for (std::size_t i = 0; i < r.rate.size(); ++i) {
        if (r.zero_count[i])
            continue;
        ++used;
        if (std::abs(r.rate[i] - truth[i]) > 3 * r.sigma[i])
            ++outside;
    }
    EXPECT_GT(used, 40);
    // 3 sigma per bin: at most one excursion expected among ~55 bins
    EXPECT_LE(outside, 1);
}

TEST(SubtractAccidentals, RecoversInjectedFloor)
{
    EfficiencyChain c = chain;
    c.accidental_rate = 2.5e-8; // 0.5 counts per 2 ns bin
    const auto s = synthesize(nominal_photon(EnvelopeShape::ExpDecaying), atom, c,
                              10'000'000, SynthesisBins{}, 8);
    const auto corr = subtract_accidentals(s.g_f0, TimeWindow{-14.0, 1e9});
    EXPECT_EQ(corr.background_bins, 50u);
    EXPECT_NEAR(corr.floor, 0.5, 2 * corr.floor_sigma);
    EXPECT_GT(corr.floor_sigma, 0.0);
}

TEST(SubtractAccidentals, ZeroAccidentals)
{
    const auto s = synthesize(nominal_photon(EnvelopeShape::ExpDecaying), atom, chain,
                              10'000'000, SynthesisBins{}, 8);
    const auto corr = subtract_accidentals(s.g_f0, TimeWindow{-14.0, 1e9});
    EXPECT_EQ(corr.floor, 0.0);
    EXPECT_EQ(corr.corrected.counts, s.g_f0.counts);
}

TEST(SubtractAccidentals, FloorOnlyInputIsConsistentWithZero)
{
    std::mt19937_64 rng(3);
    std::poisson_distribution<int> pois(2.0);
    auto h = flat_histogram(0.0, 1'000'000);
    for (auto& c : h.counts)
        c = pois(rng);
    const auto corr = subtract_accidentals(h, TimeWindow{-50.0, 50.0});
    double sum = 0.0, var = 0.0;
    for (std::size_t i = 0; i < h.bins.size; ++i) {
        if (!TimeWindow{-50.0, 50.0}.contains(h.bins.time(i)))
            continue;
        sum += corr.corrected.counts[i];
        var += corr.corrected.var(i);
    }
    EXPECT_LT(std::abs(sum), 3 * std::sqrt(var));
}

TEST(SubtractAccidentals, NeedsBackgroundBins)
{
    const auto h = flat_histogram(1.0, 100);
    EXPECT_THROW(subtract_accidentals(h, TimeWindow{-200.0, 200.0}), DataFormatError);
    // 18 ns of background is not enough
    EXPECT_THROW(subtract_accidentals(h, TimeWindow{-96.0, 1e9}), DataFormatError);
    EXPECT_NO_THROW(subtract_accidentals(h, TimeWindow{-94.0, 1e9}));
}

TEST(ReconstructForward, AnalyticRisingPeak)
{
    const auto bins = TimeGrid::bins(-114.0, 114.0, 2.0);
    const auto tr = reconstruct_forward(analytic_rates(EnvelopeShape::ExpRising, bins, false),
                                        analytic_rates(EnvelopeShape::ExpRising, bins, true),
                                        atom);
    EXPECT_NEAR(tr.peak().value, 0.0295, 2e-4);
    EXPECT_NEAR(tr.peak().time, 0.0, 1e-9);
}

TEST(ReconstructForward, DiscretizationErrorAndConvergence)
{
    for (auto shape : {EnvelopeShape::ExpRising, EnvelopeShape::ExpDecaying}) {
        const double e2 = max_forward_error(shape, 2.0);
        const double e1 = max_forward_error(shape, 1.0);
        EXPECT_LT(e2, 2e-4) << to_string(shape);
        EXPECT_GE(e2 / e1, 3.0) << to_string(shape);
    }
}

TEST(ReconstructForward, ZeroDeltaGivesZero)
{
    const auto bins = TimeGrid::bins(-114.0, 114.0, 2.0);
    const auto r = analytic_rates(EnvelopeShape::ExpDecaying, bins, false);
    const auto tr = reconstruct_forward(r, r, atom);
    for (double p : tr.p_e)
        ASSERT_EQ(p, 0.0);
}

TEST(ReconstructForward, LinearInDelta)
{
    const auto bins = TimeGrid::bins(-114.0, 114.0, 2.0);
    const auto r0 = analytic_rates(EnvelopeShape::ExpRising, bins, false);
    const auto r1 = analytic_rates(EnvelopeShape::ExpRising, bins, true);
    auto r_scaled = r1;
    const double alpha = 2.7;
    for (std::size_t i = 0; i < r1.rate.size(); ++i)
        r_scaled.rate[i] = r0.rate[i] - alpha * (r0.rate[i] - r1.rate[i]);
    const auto a = reconstruct_forward(r0, r1, atom);
    const auto b = reconstruct_forward(r0, r_scaled, atom);
    for (std::size_t i = 0; i < a.p_e.size(); ++i)
        ASSERT_NEAR(b.p_e[i], alpha * a.p_e[i], 1e-14);
}

TEST(ReconstructForward, RejectsGridMismatch)
{
    const auto a = analytic_rates(EnvelopeShape::ExpRising, TimeGrid::bins(-114, 114, 2), false);
    const auto b = analytic_rates(EnvelopeShape::ExpRising, TimeGrid::bins(-114, 114, 1), false);
    EXPECT_THROW(reconstruct_forward(a, b, atom), DataFormatError);
}

TEST(ReconstructForward, RoundTripThroughExpectedHistograms)
{
    for (auto shape : {EnvelopeShape::ExpRising, EnvelopeShape::ExpDecaying}) {
        const auto h = expected_histograms(nominal_photon(shape), atom, chain, 100'000'000,
                                           SynthesisBins{});
        const auto tr = reconstruct_forward(counts_to_rate(h.g_f0, chain.eta_f),
                                            counts_to_rate(h.g_f, chain.eta_f), atom);
        double worst = 0.0;
        for (std::size_t i = 0; i < tr.grid.size; ++i)
            worst = std::max(worst, std::abs(tr.p_e[i] - analytic_pe(shape, tr.grid.time(i))));
        EXPECT_LT(worst, 2e-4) << to_string(shape);
    }
}

TEST(ReconstructBackward, Formula)
{
    CoincidenceHistogram g;
    g.bins = TimeGrid::bins(-115.0, 115.0, 5.0);
    g.counts.assign(g.bins.size, 0.0);
    g.counts[20] = 17;
    g.n_heralds = 10'000'000;
    g.channel = Channel::Backward;
    const auto tr = reconstruct_backward(g, chain, atom);
    const double expected = 17.0 / (1e7 * 0.0155 * 0.56 * 0.0126 * (1 / 26.2) * 5);
    EXPECT_NEAR(tr.p_e[20], expected, 1e-12 * expected);
    EXPECT_NEAR(tr.sigma[20], expected / std::sqrt(17.0), 1e-12 * expected);
    EXPECT_EQ(tr.p_e[0], 0.0);
    EXPECT_EQ(tr.sigma[0], 0.0);

    EfficiencyChain bad = chain;
    bad.eta_b = 0.0;
    EXPECT_THROW(reconstruct_backward(g, bad, atom), PhysicsError);
}

TEST(ReconstructBackward, MatchesBinnedPopulationOnExpectedData)
{
    for (auto shape : {EnvelopeShape::ExpRising, EnvelopeShape::ExpDecaying}) {
        const auto h = expected_histograms(nominal_photon(shape), atom, chain, 10'000'000,
                                           SynthesisBins{});
        const auto tr = reconstruct_backward(h.g_b, chain, atom);
        const auto truth = bin_average([&](double t) { return analytic_pe(shape, t); },
                                       tr.grid, 2);
        for (std::size_t i = 0; i < tr.grid.size; ++i)
            ASSERT_NEAR(tr.p_e[i], truth[i], 2e-5) << tr.grid.time(i);
    }
}

TEST(ReconstructBackward, AgreesWithForwardOnSharedTruth)
{
    const auto shape = EnvelopeShape::ExpRising;
    const auto s = synthesize(nominal_photon(shape), atom, chain, 10'000'000,
                              SynthesisBins{}, 12);
    const auto fwd = reconstruct_forward(counts_to_rate(s.g_f0, chain.eta_f),
                                         counts_to_rate(s.g_f, chain.eta_f), atom);
    const auto fwd_b = average_over_bins(fwd, s.g_b.bins);
    const auto bwd = reconstruct_backward(s.g_b, chain, atom);
    int used = 0, agree = 0;
    for (std::size_t i = 0; i < bwd.grid.size; ++i) {
        if (!default_window(shape).contains(bwd.grid.time(i)))
            continue;
        ++used;
        const double sb = bwd.sigma[i] > 0 ? bwd.sigma[i] : bwd.p_e[i];
        if (std::abs(bwd.p_e[i] - fwd_b.p_e[i]) <= 2 * std::hypot(sb, fwd_b.sigma[i]))
            ++agree;
    }
    EXPECT_GT(used, 15);
    EXPECT_GE(agree, static_cast<int>(std::ceil(0.95 * used)));
}

TEST(Extinction, FullSupportAnalytic)
{
    const auto bins = TimeGrid::bins(-114.0, 114.0, 2.0);
    for (auto shape : {EnvelopeShape::ExpRising, EnvelopeShape::ExpDecaying}) {
        const auto e = extinction_from_data(analytic_rates(shape, bins, false),
                                            analytic_rates(shape, bins, true),
                                            TimeWindow{-114.0, 114.0});
        EXPECT_NEAR(e.epsilon, 0.0429, 1e-4) << to_string(shape);
        EXPECT_EQ(e.sigma, 0.0);
    }
}

TEST(Extinction, DefaultWindowsOnExpectedData)
{
    for (auto shape : {EnvelopeShape::ExpRising, EnvelopeShape::ExpDecaying}) {
        const auto h = expected_histograms(nominal_photon(shape), atom, chain, 10'000'000,
                                           SynthesisBins{});
        const auto e = extinction_from_data(counts_to_rate(h.g_f0, chain.eta_f),
                                            counts_to_rate(h.g_f, chain.eta_f),
                                            default_window(shape));
        EXPECT_GE(e.epsilon, 0.039) << to_string(shape);
        EXPECT_LE(e.epsilon, 0.047) << to_string(shape);
    }
}

TEST(Extinction, NoAtomIsConsistentWithZero)
{
    AtomParams none = atom;
    none.lambda = 0.0;
    const auto s = synthesize(nominal_photon(EnvelopeShape::ExpDecaying), none, chain,
                              10'000'000, SynthesisBins{}, 31);
    const auto e = extinction_from_data(counts_to_rate(s.g_f0, chain.eta_f),
                                        counts_to_rate(s.g_f, chain.eta_f),
                                        default_window(EnvelopeShape::ExpDecaying));
    EXPECT_GT(e.sigma, 0.0);
    EXPECT_LT(std::abs(e.epsilon), 3 * e.sigma);
}

TEST(Extinction, SynthesizedDataNearClosedForm)
{
    const auto shape = EnvelopeShape::ExpDecaying;
    const auto s = synthesize(nominal_photon(shape), atom, chain, 10'000'000,
                              SynthesisBins{}, 32);
    const auto e = extinction_from_data(counts_to_rate(s.g_f0, chain.eta_f),
                                        counts_to_rate(s.g_f, chain.eta_f),
                                        default_window(shape));
    EXPECT_LT(std::abs(e.epsilon - 0.0429), 3 * e.sigma);
}
