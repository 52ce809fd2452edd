// photon-atom: simulate, synthesize and analyze single-photon scattering
// off a two-level atom. Exit codes: 0 ok, 2 config, 3 physics, 4 data format.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <photon_atom/photon_atom.hpp>

namespace fs = std::filesystem;
using namespace photon_atom;

namespace {

enum ExitCode { Ok = 0, Failure = 1, BadConfig = 2, BadPhysics = 3, BadData = 4 };

void write_outputs(const OutputFiles& files, const std::string& dir)
{
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec)
        throw ConfigError("cannot create output directory '" + dir + "'");
    for (const auto& [name, text] : files)
        write_text_file((fs::path(dir) / name).string(), text);
}

std::optional<TimeWindow> parse_window(const std::vector<double>& v)
{
    if (v.empty())
        return std::nullopt;
    if (v.size() != 2 || !(v[1] > v[0]))
        throw ConfigError("--window-ns expects a,b with a < b");
    return TimeWindow{v[0], v[1]};
}

std::string read_data_file(const std::string& path)
{
    try {
        return read_text_file(path);
    } catch (const ConfigError& e) {
        throw DataFormatError(e.what());
    }
}

/// Hash over the concatenated contents of all inputs.
std::uint64_t hash_files(const std::vector<std::string>& texts)
{
    std::uint64_t h = fnv1a("");
    for (const auto& t : texts)
        h = fnv1a(t, h);
    return h;
}

struct Histograms
{
    CoincidenceHistogram g_f0, g_f;
    std::optional<CoincidenceHistogram> g_b;
    std::vector<std::string> texts;
};

Histograms load_histograms(const std::vector<std::string>& paths)
{
    if (paths.size() < 2 || paths.size() > 3)
        throw ConfigError("expected g_f0.csv g_f.csv [g_b.csv]");
    Histograms h;
    for (const auto& p : paths) {
        h.texts.push_back(read_data_file(p));
        h.texts.push_back(read_data_file(sidecar_path(p)));
    }
    h.g_f0 = read_histogram(paths[0]);
    h.g_f = read_histogram(paths[1]);
    if (paths.size() == 3)
        h.g_b = read_histogram(paths[2]);
    return h;
}

json fit_report(const std::optional<EnvelopeFit>& env, const std::optional<LambdaFit>& lam,
                double tau_p, const TimeWindow& window, std::uint64_t hash)
{
    json j{{"generator", "photon-atom " + std::string(version)},
           {"input_hash", hex64(hash)},
           {"tau_p_ns", tau_p},
           {"window_ns", {window.lo, window.hi}}};
    if (env) {
        j["tau_p_sigma"] = env->tau_p_sigma;
        j["amplitude"] = env->amplitude;
        j["eta_f"] = env->eta_f;
        j["chi2_reduced"] = env->chi2_reduced;
        j["n_iterations"] = env->n_iterations;
    }
    if (lam) {
        j["lambda"] = lam->lambda;
        j["lambda_sigma"] = lam->lambda_sigma;
        j["lambda_chi2_reduced"] = lam->chi2_reduced;
        j["lambda_n_iterations"] = lam->n_iterations;
        if (!env) {
            j["chi2_reduced"] = lam->chi2_reduced;
            j["n_iterations"] = lam->n_iterations;
        }
        // geometry expectation for a tightly focused mode: about 3 %
        j["lambda_in_expected_range"] = lam->lambda >= 0.02 && lam->lambda <= 0.05;
    }
    return j;
}

CavityParams load_cavity(const std::string& path)
{
    const auto j = config::load(path);
    return config::cavity_from(j.contains("cavity") ? j.at("cavity") : j);
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Single-photon absorption by a two-level atom: forward model, "
                 "synthetic coincidence data and analysis."};
    app.set_version_flag("--version", std::string(version));
    app.require_subcommand(1);

    std::string config_path, out_dir = ".";
    std::uint64_t seed = 1, heralds = 0;
    double dt_ns = 0.0, detuning = 0.0;
    std::vector<double> window_ns;
    std::vector<std::string> inputs;

    auto* simulate = app.add_subcommand("simulate", "P_e(t) and detection rates for a config");
    simulate->add_option("config_file", config_path, "simulation config (JSON)");
    simulate->add_option("--config", config_path, "simulation config (JSON)");

    auto* synth = app.add_subcommand("synth", "synthetic coincidence histograms");
    synth->add_option("config_file", config_path, "simulation config (JSON)");
    synth->add_option("--config", config_path, "simulation config (JSON)");
    synth->add_option("--heralds", heralds, "number of heralds")->required();
    synth->add_option("--seed", seed, "random seed");

    auto* analyze_cmd = app.add_subcommand("analyze", "reconstruct P_e and extinction from histograms");
    analyze_cmd->add_option("histograms", inputs, "g_f0.csv g_f.csv [g_b.csv]")->required();
    analyze_cmd->add_option("--config", config_path, "analysis parameters (JSON)")->required();

    std::string cavity_path;
    double tau_p_arg = 0.0;
    auto* shape = app.add_subcommand("shape", "cavity-shaped conditional photon envelope");
    shape->add_option("cavity", cavity_path, "cavity parameters (JSON)")->required();
    shape->add_option("tau_p", tau_p_arg, "photon coherence time in ns")->required();
    shape->add_option("--detuning-mhz", detuning, "cavity detuning from the photon in MHz");

    auto* fit = app.add_subcommand("fit", "fit tau_p (and lambda) to histograms");
    fit->add_option("histograms", inputs, "g_f0.csv [g_f.csv]")->required();
    fit->add_option("--config", config_path, "analysis parameters (JSON)")->required();

    auto* extinction = app.add_subcommand("extinction", "extinction from a config or from histograms");
    extinction->add_option("histograms", inputs, "g_f0.csv g_f.csv");
    extinction->add_option("--config", config_path, "simulation config or analysis parameters");

    for (auto* sc : {simulate, synth, analyze_cmd, shape, fit, extinction})
        sc->add_option("--out-dir", out_dir, "output directory");
    for (auto* sc : {simulate, synth, shape})
        sc->add_option("--dt-ns", dt_ns, "envelope grid step in ns");
    for (auto* sc : {analyze_cmd, fit, extinction})
        sc->add_option("--window-ns", window_ns, "analysis window a,b in ns")->delimiter(',');

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return BadConfig;
    }

    try {
        auto load_sim = [&] {
            if (config_path.empty())
                throw ConfigError("no config file given");
            auto c = load_simulation_config(config_path);
            if (dt_ns > 0.0) {
                const double span = -c.grid.start;
                c.grid = TimeGrid::symmetric(span, dt_ns);
            }
            return c;
        };

        if (*simulate) {
            const auto files = run_simulate(load_sim());
            write_outputs(files, out_dir);
            std::cout << files.at("summary.json");
        } else if (*synth) {
            const auto files = run_synth(load_sim(), heralds, seed);
            write_outputs(files, out_dir);
        } else if (*analyze_cmd) {
            const auto params_text = read_text_file(config_path);
            auto params = parse_analysis_params(params_text);
            if (auto w = parse_window(window_ns))
                params.window = w;
            const auto h = load_histograms(inputs);
            auto texts = h.texts;
            texts.push_back(params_text);
            params.input_hash = hash_files(texts);
            const auto result = analyze(h.g_f0, h.g_f, h.g_b, params);
            const auto files = analysis_files(result, params);
            write_outputs(files, out_dir);
            std::cout << files.at("report.json");
        } else if (*shape) {
            auto cav = load_cavity(cavity_path);
            cav.detuning_mhz = detuning;
            if (!(tau_p_arg > 0.0))
                throw PhysicsError("photon coherence time tau_p must be > 0");
            const double tau_c = pole_model(cav).decay_time();
            const auto grid = TimeGrid::symmetric(
                16.0 * std::max(tau_p_arg, std::min(tau_c, 1e3)),
                dt_ns > 0.0 ? dt_ns : 0.05);
            const auto probe = shape_conditional_probe(cav, tau_p_arg, grid);
            const auto hash = fnv1a(read_text_file(cavity_path) + "|" +
                                    fmt_double(tau_p_arg) + "|" + fmt_double(detuning));
            write_outputs({{"envelope.csv", envelope_to_csv(probe.envelope, hash)}}, out_dir);
            const json j{
                {"generator", "photon-atom " + std::string(version)},
                {"input_hash", hex64(hash)},
                {"detuning_mhz", detuning},
                {"tau_p_ns", tau_p_arg},
                {"tau_c_ns", cavity_decay_time(cav)},
                {"raw_norm", probe.raw_norm},
                {"poor_match", probe.poor_match},
                {"overlap_rising", mode_overlap(probe.envelope, make_rising(tau_p_arg, grid))},
                {"overlap_decaying", mode_overlap(probe.envelope, make_decaying(tau_p_arg, grid))},
            };
            std::cout << j.dump(2) << "\n";
        } else if (*fit) {
            if (inputs.empty() || inputs.size() > 2)
                throw ConfigError("expected g_f0.csv [g_f.csv]");
            const auto params_text = read_text_file(config_path);
            const auto params = parse_analysis_params(params_text);
            std::vector<std::string> texts{params_text};
            for (const auto& p : inputs) {
                texts.push_back(read_data_file(p));
                texts.push_back(read_data_file(sidecar_path(p)));
            }
            const auto window = parse_window(window_ns)
                                    .value_or(params.window.value_or(default_window(params.shape)));
            const auto g_f0 = read_histogram(inputs[0]);
            // accidental floor from the photon-free side, as in analyze
            const double floor =
                params.subtract_accidentals
                    ? subtract_accidentals(g_f0, detail::forward_signal_region(params.shape, window))
                          .floor
                    : 0.0;
            std::optional<EnvelopeFit> env;
            double tau_p = params.tau_p.value_or(0.0);
            if (!params.tau_p) {
                EnvelopeFitOptions o;
                o.shape = params.shape;
                o.window = window;
                o.background = floor;
                env = fit_envelope(g_f0, o);
                tau_p = env->tau_p;
            }
            std::optional<LambdaFit> lam;
            if (inputs.size() == 2) {
                LambdaFitOptions o;
                o.shape = params.shape;
                o.tau_p = tau_p;
                o.tau_p_sigma = env ? env->tau_p_sigma : 0.0;
                o.window = window;
                o.background = floor;
                lam = fit_lambda(g_f0, read_histogram(inputs[1]), params.atom.tau0, o);
            }
            const auto rep = fit_report(env, lam, tau_p, window, hash_files(texts)).dump(2) + "\n";
            write_outputs({{"fit.json", rep}}, out_dir);
            std::cout << rep;
        } else if (*extinction) {
            json j{{"generator", "photon-atom " + std::string(version)}};
            if (inputs.empty()) {
                const auto c = load_sim();
                c.atom.validate();
                const auto model = simulate_scattering(c.atom, build_envelope(c));
                const auto w = parse_window(window_ns).value_or(default_window(c.shape));
                j["input_hash"] = hex64(c.input_hash);
                if (c.shape == EnvelopeShape::ExpDecaying || c.shape == EnvelopeShape::ExpRising)
                    j["epsilon_closed_form"] = extinction_closed_form(c.atom, c.tau_p);
                j["epsilon"] = model.delta().integrate();
                j["epsilon_window"] = model.delta().integrate(w.lo, w.hi);
                j["window_ns"] = {w.lo, w.hi};
            } else {
                if (inputs.size() != 2)
                    throw ConfigError("expected g_f0.csv g_f.csv");
                const auto h = load_histograms(inputs);
                auto shape_kind = EnvelopeShape::ExpDecaying;
                auto texts = h.texts;
                if (!config_path.empty()) {
                    texts.push_back(read_text_file(config_path));
                    shape_kind = parse_analysis_params(texts.back()).shape;
                }
                check_same_bins(h.g_f0, h.g_f);
                const auto w = parse_window(window_ns).value_or(default_window(shape_kind));
                const double eta = h.g_f0.total() / static_cast<double>(h.g_f0.n_heralds);
                const auto e = extinction_from_data(counts_to_rate(h.g_f0, eta),
                                                    counts_to_rate(h.g_f, eta), w);
                j["input_hash"] = hex64(hash_files(texts));
                j["epsilon"] = e.epsilon;
                j["epsilon_sigma"] = e.sigma;
                j["window_ns"] = {w.lo, w.hi};
            }
            const auto rep = j.dump(2) + "\n";
            write_outputs({{"extinction.json", rep}}, out_dir);
            std::cout << rep;
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return BadConfig;
    } catch (const PhysicsError& e) {
        std::cerr << "physics error: " << e.what() << "\n";
        return BadPhysics;
    } catch (const DataFormatError& e) {
        std::cerr << "data format error: " << e.what() << "\n";
        return BadData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return Failure;
    }
    return Ok;
}
