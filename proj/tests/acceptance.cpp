// Acceptance run: one PASS/FAIL line per criterion with the measured value,
// the pinned tolerance and the wall time. Exit status is nonzero if any
// criterion fails.

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include <photon_atom/photon_atom.hpp>

using namespace photon_atom;
namespace fs = std::filesystem;

namespace {

const std::string cli = PHOTON_ATOM_CLI;
const std::string configs = PHOTON_ATOM_CONFIGS;

// statistics fixed before any end-to-end run
constexpr std::uint64_t seed = 20261018;
constexpr std::uint64_t n_heralds = 10'000'000;

const AtomParams nominal_atom{26.2, 0.033};
constexpr double nominal_tau_p = 13.3;
constexpr double nominal_epsilon = 0.0429;

struct Outcome
{
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args)
{
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

int failures = 0;

// runs one criterion; a runtime limit of 0 means none
void criterion(const std::string& id, const std::string& name, double limit_s,
               const std::function<Outcome()>& body)
{
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::string timing = fmt("%.3g s", secs);
    if (limit_s > 0) {
        timing += fmt(" (limit %g s)", limit_s);
        if (secs > limit_s) {
            o.pass = false;
            timing += " too slow";
        }
    }
    if (!o.pass)
        ++failures;
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << id << "] " << name << ": " << o.detail
              << " | " << timing << std::endl;
}

struct Dataset
{
    SynthesisResult data;
    AnalysisResult analysis;
};

Dataset end_to_end(const std::string& shape)
{
    const auto cfg = load_simulation_config(configs + "/" + shape + ".json");
    Dataset d;
    d.data = synthesize(build_envelope(cfg), cfg.atom, cfg.chain, n_heralds, cfg.bins, seed);
    const auto params =
        parse_analysis_params(read_text_file(configs + "/analyze_" + shape + ".json"));
    d.analysis = analyze(d.data.g_f0, d.data.g_f, d.data.g_b, params);
    return d;
}

int run_cli(const std::string& args)
{
    const std::string cmd = cli + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

} // namespace

int main()
{
    std::cout << "photon-atom " << version << " acceptance, seed " << seed << ", "
              << n_heralds << " heralds per dataset\n";

    criterion("1", "closed-form extinction", 1e-3, [] {
        const double eps = extinction_closed_form(nominal_atom, nominal_tau_p);
        return Outcome{std::abs(eps - nominal_epsilon) <= 1e-4,
                       fmt("epsilon = %.6f, target %.4f +- 0.0001", eps, nominal_epsilon)};
    });

    criterion("2", "analytic peak-excitation ratio", 1.0, [] {
        const double up = analytic::pe_rising(nominal_atom, nominal_tau_p, 0.0);
        const double down = analytic_pe_decaying(nominal_atom, nominal_tau_p,
                                                 TimeGrid{0.0, 1e-3, 200'001})
                                .peak()
                                .value;
        const double increase = up / down - 1.0;
        return Outcome{std::abs(increase - 0.78) <= 0.01,
                       fmt("P_up/P_down - 1 = %.4f (%.5f / %.5f), target 0.78 +- 0.01",
                           increase, up, down)};
    });

    criterion("3", "perfect absorption limit", 0, [] {
        const AtomParams atom{26.2, 1.0};
        const double p = analytic::pe_rising(atom, atom.tau0, 0.0);
        return Outcome{std::abs(p - 1.0) <= 1e-9, fmt("P_e(0) = %.12f, target 1 +- 1e-9", p)};
    });

    criterion("4", "RK4 vs closed form", 5.0, [] {
        bool pass = true;
        std::string detail;
        for (auto shape : {EnvelopeShape::ExpDecaying, EnvelopeShape::ExpRising}) {
            auto make = [&](const TimeGrid& g) {
                return shape == EnvelopeShape::ExpRising ? make_rising(nominal_tau_p, g)
                                                         : make_decaying(nominal_tau_p, g);
            };
            auto reference = [&](double t) {
                return shape == EnvelopeShape::ExpRising
                           ? analytic::pe_rising(nominal_atom, nominal_tau_p, t)
                           : analytic::pe_decaying(nominal_atom, nominal_tau_p, t);
            };
            // max-abs error at 0.01 ns against the continuum solution
            const auto grid = TimeGrid::for_envelope(nominal_tau_p, 0.01, 20.0);
            const auto ode = solve_amplitude_ode(nominal_atom, make(grid));
            double err = 0.0;
            for (std::size_t k = 0; k < grid.size; ++k)
                err = std::max(err, std::abs(ode.p_e[k] - reference(grid.time(k))));

            // order: at 0.01 ns the integrator error sits at round-off, so the
            // step-halving ratio is taken at 0.4 -> 0.2 ns, against the solution
            // for the discretely normalized photon
            auto integrator_error = [&](double step) {
                const auto g = TimeGrid::for_envelope(nominal_tau_p, step, 40.0);
                const auto env = make(g);
                OdeOptions o;
                o.check_step = false;
                const auto tr = solve_amplitude_ode(nominal_atom, env, o);
                const double c2 = std::norm(env[*g.index_of(0.0)]) * nominal_tau_p;
                double e = 0.0;
                for (std::size_t k = 0; k < g.size; ++k)
                    e = std::max(e, std::abs(tr.p_e[k] - c2 * reference(g.time(k))));
                return e;
            };
            const double ratio = integrator_error(0.4) / integrator_error(0.2);
            pass = pass && err < 1e-6 && ratio >= 8.0;
            detail += fmt("%s%s: max err %.2e (< 1e-6), halving ratio %.1f (>= 8)",
                          detail.empty() ? "" : "; ", to_string(shape), err, ratio);
        }
        return Outcome{pass, detail};
    });

    criterion("5", "extinction independent of shape", 0, [] {
        // full support: the re-emission tail is below 1e-12 by 800 ns
        const auto bins = TimeGrid::bins(-800.0, 800.0, 0.05);
        const TimeWindow all{-1e9, 1e9};
        const double down = extinction_numeric(
            analytic::binned_delta(nominal_atom, EnvelopeShape::ExpDecaying, nominal_tau_p, bins),
            bins, all);
        const double up = extinction_numeric(
            analytic::binned_delta(nominal_atom, EnvelopeShape::ExpRising, nominal_tau_p, bins),
            bins, all);
        return Outcome{std::abs(up - down) <= 1e-6,
                       fmt("epsilon_down = %.8f, epsilon_up = %.8f, |diff| = %.1e (<= 1e-6)",
                           down, up, std::abs(up - down))};
    });

    std::optional<Dataset> decaying, rising;
    criterion("6", "end-to-end synthetic reproduction", 120.0, [&] {
        decaying = end_to_end("decaying");
        rising = end_to_end("rising");
        const auto& ed = decaying->analysis.extinction;
        const auto& eu = rising->analysis.extinction;
        const bool eps_ok = std::abs(ed.epsilon - nominal_epsilon) <= 3 * ed.sigma &&
                            std::abs(eu.epsilon - nominal_epsilon) <= 3 * eu.sigma;
        const auto pd = decaying->analysis.pe_forward.peak();
        const auto pu = rising->analysis.pe_forward.peak();
        const double ratio = pu.value / pd.value;
        const double sigma = ratio * std::hypot(pu.sigma / pu.value, pd.sigma / pd.value);
        const bool peak_ok = std::abs(ratio - 1.0 - 0.78) <= 2 * sigma;
        return Outcome{
            eps_ok && peak_ok,
            fmt("epsilon_down = %.4f +- %.4f, epsilon_up = %.4f +- %.4f (within 3 sigma of "
                "%.4f); peak increase %.3f +- %.3f (within 2 sigma of 0.78)",
                ed.epsilon, ed.sigma, eu.epsilon, eu.sigma, nominal_epsilon, ratio - 1.0, sigma)};
    });

    criterion("7", "forward/backward consistency", 0, [&] {
        if (!decaying || !rising)
            return Outcome{false, "end-to-end datasets unavailable"};
        bool pass = true;
        std::string detail;
        for (const auto* d : {&*decaying, &*rising}) {
            const auto& a = d->analysis;
            const double frac = a.compared_bins ? static_cast<double>(a.consistent_bins) /
                                                      static_cast<double>(a.compared_bins)
                                                : 0.0;
            pass = pass && a.compared_bins > 0 && frac >= 0.95;
            detail += fmt("%s %zu/%zu bins within 2 sigma; ",
                          d == &*decaying ? "decaying" : "rising", a.consistent_bins,
                          a.compared_bins);
        }
        return Outcome{pass, detail + "need >= 95%"};
    });

    {
        CavityParams cav = config::cavity_from(config::load(configs + "/cavity.json"));
        auto overlaps = [&](double detuning) {
            cav.detuning_mhz = detuning;
            const double span = 16.0 * std::max(nominal_tau_p, pole_model(cav).decay_time());
            const auto grid = TimeGrid::symmetric(span, 0.05);
            const auto probe = shape_conditional_probe(cav, nominal_tau_p, grid);
            return std::pair{mode_overlap(probe.envelope, make_rising(nominal_tau_p, grid)),
                             mode_overlap(probe.envelope, make_decaying(nominal_tau_p, grid))};
        };
        criterion("8a", "cavity shaping on resonance", 5.0, [&] {
            const double up = overlaps(0.0).first;
            return Outcome{up > 0.9, fmt("overlap with rising = %.4f (> 0.9)", up)};
        });
        criterion("8b", "cavity shaping at 70 MHz", 5.0, [&] {
            const double down = overlaps(70.0).second;
            return Outcome{down > 0.99, fmt("overlap with decaying = %.4f (> 0.99)", down)};
        });
        criterion("8c", "cavity decay time", 0, [&] {
            const double tc = cavity_decay_time(cav);
            return Outcome{std::abs(tc - 13.67) <= 0.005 && std::abs(tc - 13.6) <= 0.5,
                           fmt("tau_c = %.3f ns (13.67 +- 0.005, inside 13.6 +- 0.5)", tc)};
        });
    }

    criterion("9", "fit recovery on the decaying dataset", 30.0, [&] {
        if (!decaying)
            return Outcome{false, "end-to-end dataset unavailable"};
        const auto& s = decaying->data;
        const auto env = fit_envelope(s.g_f0);
        LambdaFitOptions lo;
        lo.tau_p = env.tau_p;
        lo.tau_p_sigma = env.tau_p_sigma;
        const auto lam = fit_lambda(s.g_f0, s.g_f, nominal_atom.tau0, lo);
        const double dt = env.tau_p - nominal_tau_p;
        const double dl = lam.lambda - nominal_atom.lambda;
        const bool tau_ok = std::abs(dt) <= 0.3 && std::abs(dt) <= 2 * env.tau_p_sigma;
        const bool lam_ok = std::abs(dl) <= 0.004 && std::abs(dl) <= 2 * lam.lambda_sigma;
        const bool chi_ok = env.chi2_reduced >= 0.8 && env.chi2_reduced <= 1.2 &&
                            lam.chi2_reduced >= 0.8 && lam.chi2_reduced <= 1.2;
        return Outcome{
            tau_ok && lam_ok && chi_ok,
            fmt("tau_p = %.3f +- %.3f ns (%.1f sigma) [%s]; lambda = %.5f +- %.5f (%.1f sigma) "
                "[%s]; reduced chi2 %.3f / %.3f [%s]; need |tau_p - 13.3| <= 0.3, "
                "|lambda - 0.033| <= 0.004, both within 2 sigma, chi2 in [0.8, 1.2]",
                env.tau_p, env.tau_p_sigma, dt / env.tau_p_sigma, tau_ok ? "ok" : "off",
                lam.lambda, lam.lambda_sigma, dl / lam.lambda_sigma, lam_ok ? "ok" : "off",
                env.chi2_reduced, lam.chi2_reduced, chi_ok ? "ok" : "off")};
    });

    criterion("10", "byte-identical synth output", 0, [] {
        const auto dir = fs::temp_directory_path() / "photon_atom_acceptance";
        fs::remove_all(dir);
        const std::string common = "synth " + configs + "/decaying.json --heralds " +
                                   std::to_string(n_heralds) + " --seed " + std::to_string(seed) +
                                   " --out-dir ";
        const int a = run_cli(common + (dir / "a").string());
        const int b = run_cli(common + (dir / "b").string());
        if (a != 0 || b != 0)
            return Outcome{false, fmt("synth exit codes %d, %d", a, b)};
        int same = 0, total = 0;
        for (const auto* f : {"g_f0.csv", "g_f.csv", "g_b.csv", "g_f0.json", "g_f.json",
                              "g_b.json"}) {
            ++total;
            const auto x = slurp(dir / "a" / f);
            if (!x.empty() && x == slurp(dir / "b" / f))
                ++same;
        }
        fs::remove_all(dir);
        return Outcome{same == total, fmt("%d/%d files identical", same, total)};
    });

    std::cout << (failures ? fmt("%d criteria failed", failures) : std::string("all criteria passed"))
              << std::endl;
    return failures ? 1 : 0;
}
