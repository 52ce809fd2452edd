#ifndef PHOTON_ATOM_SYNTHESIS_HPP
#define PHOTON_ATOM_SYNTHESIS_HPP

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <random>
#include <thread>
#include <vector>

#include <photon_atom/dynamics.hpp>
#include <photon_atom/envelopes.hpp>
#include <photon_atom/errors.hpp>
#include <photon_atom/histogram.hpp>

namespace photon_atom {

struct SynthesisBins
{
    TimeGrid forward = TimeGrid::bins(-114.0, 114.0, 2.0);
    TimeGrid backward = TimeGrid::bins(-115.0, 115.0, 5.0);
};

/// Per-herald, per-bin probability of a true coincidence in each channel.
struct ChannelProbabilities
{
    std::vector<double> forward_no_atom;
    std::vector<double> forward_with_atom;
    std::vector<double> backward;
};

/// Detection probabilities implied by the scattering model and the chain:
/// eta_f int_bin R_f0 / int R_f0 (no atom), eta_f int_bin R_f / int R_f0
/// (atom) and eta_f_tilde eta_q eta_b int_bin P_e dt / tau0 (backward).
inline ChannelProbabilities
detection_probabilities(const ScatteringModel& model, const AtomParams& atom,
                        const EfficiencyChain& chain, const SynthesisBins& bins)
{
    chain.validate();
    const double norm = model.r_f0.integrate();
    ChannelProbabilities p;
    p.forward_no_atom = model.r_f0.bin_averages(bins.forward);
    p.forward_with_atom = model.r_f.bin_averages(bins.forward);
    p.backward = model.p_e.bin_averages(bins.backward);
    for (auto& v : p.forward_no_atom)
        v *= chain.eta_f * bins.forward.step / norm;
    for (auto& v : p.forward_with_atom)
        v *= chain.eta_f * bins.forward.step / norm;
    for (auto& v : p.backward)
        v *= chain.backward_efficiency() * bins.backward.step / atom.tau0;

    // accidentals count towards the one-coincidence-per-herald budget
    const double acc_fwd = chain.accidental_rate * bins.forward.step *
                           static_cast<double>(bins.forward.size);
    const double acc_bwd = chain.accidental_rate * bins.backward.step *
                           static_cast<double>(bins.backward.size);
    for (const auto* ch : {&p.forward_no_atom, &p.forward_with_atom, &p.backward}) {
        double total = ch == &p.backward ? acc_bwd : acc_fwd;
        for (double v : *ch) {
            if (v < -1e-15)
                throw PhysicsError("negative detection probability");
            total += v;
        }
        if (total > 1.0)
            throw PhysicsError("detection probability per herald exceeds 1");
    }
    return p;
}

struct SynthesisResult
{
    CoincidenceHistogram g_f0;
    CoincidenceHistogram g_f;
    CoincidenceHistogram g_b;
};

/// Worker count: PHOTON_ATOM_THREADS caps the hardware concurrency.
inline unsigned worker_threads()
{
    unsigned n = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("PHOTON_ATOM_THREADS")) {
        const long cap = std::strtol(env, nullptr, 10);
        if (cap >= 1)
            n = std::min<unsigned>(n, static_cast<unsigned>(cap));
    }
    return n;
}

namespace detail {

inline constexpr std::uint64_t herald_block = 1ULL << 20;

inline std::mt19937_64 block_rng(std::uint64_t seed, std::uint64_t block,
                                 std::uint32_t stream)
{
    std::seed_seq seq{static_cast<std::uint32_t>(seed),
                      static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(block),
                      static_cast<std::uint32_t>(block >> 32), stream};
    return std::mt19937_64(seq);
}

/// Categorical draw for `heralds` independent heralds, each producing at
/// most one coincidence: a multinomial over bins plus "no detection",
/// sampled as a chain of conditional binomials.
inline void multinomial_into(std::vector<std::int64_t>& counts,
                             const std::vector<double>& p,
                             std::uint64_t heralds, std::mt19937_64& rng)
{
    auto remaining = static_cast<std::int64_t>(heralds);
    double mass = 1.0;
    for (std::size_t i = 0; i < p.size() && remaining > 0; ++i) {
        if (p[i] <= 0.0)
            continue;
        const double q = std::clamp(p[i] / mass, 0.0, 1.0);
        std::binomial_distribution<std::int64_t> draw(remaining, q);
        const std::int64_t x = draw(rng);
        counts[i] += x;
        remaining -= x;
        mass -= p[i];
        if (mass <= 0.0)
            break;
    }
}

inline void poisson_into(std::vector<std::int64_t>& counts, double mean,
                         std::mt19937_64& rng)
{
    if (mean <= 0.0)
        return;
    std::poisson_distribution<std::int64_t> draw(mean);
    for (auto& c : counts)
        c += draw(rng);
}

} // namespace detail

/// Monte Carlo coincidence histograms for `n_heralds` heralded photons.
///
/// Heralds are processed in fixed blocks of 2^20, each with its own
/// generator seeded from (seed, block, channel); results are independent of
/// the number of worker threads. Accidentals are a uniform Poisson
/// background with mean accidental_rate * dt per herald and bin.
inline SynthesisResult synthesize(const PhotonEnvelope& env,
                                  const AtomParams& atom,
                                  const EfficiencyChain& chain,
                                  std::uint64_t n_heralds,
                                  const SynthesisBins& bins, std::uint64_t seed,
                                  unsigned threads = 0)
{
    if (n_heralds == 0)
        throw PhysicsError("number of heralds must be > 0");
    atom.validate();
    chain.validate();
    const auto model = simulate_scattering(atom, env);
    const auto probs = detection_probabilities(model, atom, chain, bins);

    const std::uint64_t n_blocks = (n_heralds + detail::herald_block - 1) /
                                   detail::herald_block;
    if (threads == 0)
        threads = worker_threads();
    threads = static_cast<unsigned>(
        std::min<std::uint64_t>(threads, n_blocks));

    struct Partial
    {
        std::vector<std::int64_t> f0, f, b;
    };
    std::vector<Partial> partial(threads);
    std::atomic<std::uint64_t> next{0};

    auto work = [&](unsigned w) {
        auto& acc = partial[w];
        acc.f0.assign(bins.forward.size, 0);
        acc.f.assign(bins.forward.size, 0);
        acc.b.assign(bins.backward.size, 0);
        for (std::uint64_t blk; (blk = next.fetch_add(1)) < n_blocks;) {
            const std::uint64_t first = blk * detail::herald_block;
            const std::uint64_t m = std::min(detail::herald_block, n_heralds - first);
            auto r0 = detail::block_rng(seed, blk, 0);
            auto r1 = detail::block_rng(seed, blk, 1);
            auto r2 = detail::block_rng(seed, blk, 2);
            detail::multinomial_into(acc.f0, probs.forward_no_atom, m, r0);
            detail::multinomial_into(acc.f, probs.forward_with_atom, m, r1);
            detail::multinomial_into(acc.b, probs.backward, m, r2);
            const double fwd_bg = chain.accidental_rate * bins.forward.step *
                                  static_cast<double>(m);
            const double bwd_bg = chain.accidental_rate * bins.backward.step *
                                  static_cast<double>(m);
            detail::poisson_into(acc.f0, fwd_bg, r0);
            detail::poisson_into(acc.f, fwd_bg, r1);
            detail::poisson_into(acc.b, bwd_bg, r2);
        }
    };
    if (threads <= 1) {
        work(0);
    } else {
        std::vector<std::jthread> pool;
        for (unsigned w = 0; w < threads; ++w)
            pool.emplace_back(work, w);
    }

    auto merge = [&](auto member, const TimeGrid& grid, Channel ch) {
        CoincidenceHistogram h;
        h.bins = grid;
        h.counts.assign(grid.size, 0.0);
        h.n_heralds = n_heralds;
        h.channel = ch;
        h.seed = seed;
        for (const auto& p : partial)
            for (std::size_t i = 0; i < grid.size; ++i)
                h.counts[i] += static_cast<double>((p.*member)[i]);
        return h;
    };
    return SynthesisResult{
        merge(&Partial::f0, bins.forward, Channel::ForwardNoAtom),
        merge(&Partial::f, bins.forward, Channel::ForwardWithAtom),
        merge(&Partial::b, bins.backward, Channel::Backward)};
}

/// Noiseless histograms: expected counts n_heralds * p (+ accidentals).
inline SynthesisResult expected_histograms(const PhotonEnvelope& env,
                                           const AtomParams& atom,
                                           const EfficiencyChain& chain,
                                           std::uint64_t n_heralds,
                                           const SynthesisBins& bins)
{
    atom.validate();
    const auto model = simulate_scattering(atom, env);
    const auto probs = detection_probabilities(model, atom, chain, bins);
    const auto n = static_cast<double>(n_heralds);
    auto make = [&](const std::vector<double>& p, const TimeGrid& grid,
                    Channel ch) {
        CoincidenceHistogram h;
        h.bins = grid;
        h.n_heralds = n_heralds;
        h.channel = ch;
        h.counts.resize(grid.size);
        for (std::size_t i = 0; i < grid.size; ++i)
            h.counts[i] = n * (p[i] + chain.accidental_rate * grid.step);
        return h;
    };
    return SynthesisResult{
        make(probs.forward_no_atom, bins.forward, Channel::ForwardNoAtom),
        make(probs.forward_with_atom, bins.forward, Channel::ForwardWithAtom),
        make(probs.backward, bins.backward, Channel::Backward)};
}

} // namespace photon_atom

#endif
