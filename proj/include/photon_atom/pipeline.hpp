#ifndef PHOTON_ATOM_PIPELINE_HPP
#define PHOTON_ATOM_PIPELINE_HPP

// Config parsing and the end-to-end routines behind the command-line tool.
// Every routine returns file contents keyed by file name, so the tool only
// decides where they are written.

#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include <photon_atom/cavity.hpp>
#include <photon_atom/csv.hpp>
#include <photon_atom/dynamics.hpp>
#include <photon_atom/envelopes.hpp>
#include <photon_atom/errors.hpp>
#include <photon_atom/estimation.hpp>
#include <photon_atom/histogram.hpp>
#include <photon_atom/reconstruction.hpp>
#include <photon_atom/synthesis.hpp>

namespace photon_atom {

using json = nlohmann::json;
using OutputFiles = std::map<std::string, std::string>;

// ---- config access ----------------------------------------------------------

namespace config {

inline const json& require(const json& j, const std::string& key,
                           const std::string& where = "")
{
    if (!j.is_object() || !j.contains(key))
        throw ConfigError("missing key '" + where + key + "'");
    return j.at(key);
}

template <class T>
T get(const json& j, const std::string& key, const std::string& where = "")
{
    const auto& v = require(j, key, where);
    try {
        return v.get<T>();
    } catch (const json::exception&) {
        throw ConfigError("key '" + where + key + "' has the wrong type");
    }
}

template <class T>
T get_or(const json& j, const std::string& key, T fallback,
         const std::string& where = "")
{
    if (!j.is_object() || !j.contains(key))
        return fallback;
    return get<T>(j, key, where);
}

inline json parse(const std::string& text, const std::string& name)
{
    try {
        auto j = json::parse(text);
        if (!j.is_object())
            throw ConfigError(name + ": top level must be a JSON object");
        return j;
    } catch (const json::parse_error& e) {
        throw ConfigError(name + ": " + e.what());
    }
}

inline json load(const std::string& path) { return parse(read_text_file(path), path); }

inline EnvelopeShape shape_from_string(const std::string& s)
{
    if (s == "decaying")
        return EnvelopeShape::ExpDecaying;
    if (s == "rising")
        return EnvelopeShape::ExpRising;
    if (s == "tabulated")
        return EnvelopeShape::Tabulated;
    if (s == "cavity")
        return EnvelopeShape::CavityShaped;
    throw ConfigError("unknown envelope shape '" + s + "'");
}

inline EfficiencyChain chain_from(const json& j)
{
    EfficiencyChain c;
    if (!j.contains("chain"))
        return c;
    const auto& ch = j.at("chain");
    c.eta_f = get_or(ch, "eta_f", c.eta_f, "chain.");
    c.eta_f_tilde = get_or(ch, "eta_f_tilde", c.eta_f_tilde, "chain.");
    c.eta_b = get_or(ch, "eta_b", c.eta_b, "chain.");
    c.eta_q = get_or(ch, "eta_q", c.eta_q, "chain.");
    c.accidental_rate = get_or(ch, "accidental_rate", c.accidental_rate, "chain.");
    return c;
}

inline CavityParams cavity_from(const json& j)
{
    CavityParams c;
    c.length_mm = get_or(j, "length_mm", c.length_mm, "cavity.");
    c.finesse = get_or(j, "finesse", c.finesse, "cavity.");
    c.r_in = get_or(j, "r_in", c.r_in, "cavity.");
    c.r_back = get_or(j, "r_back", c.r_back, "cavity.");
    c.detuning_mhz = get_or(j, "detuning_mhz", c.detuning_mhz, "cavity.");
    return c;
}

inline TimeGrid bins_from(const json& j, const std::string& key, TimeGrid fallback)
{
    if (!j.is_object() || !j.contains(key))
        return fallback;
    const auto v = get<std::vector<double>>(j, key, "bins.");
    if (v.size() != 3)
        throw ConfigError("key 'bins." + key + "' must be [lo, hi, width]");
    return TimeGrid::bins(v[0], v[1], v[2]);
}

inline std::optional<TimeWindow> window_from(const json& j, const std::string& key)
{
    if (!j.contains(key))
        return std::nullopt;
    const auto v = get<std::vector<double>>(j, key);
    if (v.size() != 2 || !(v[1] > v[0]))
        throw ConfigError("key '" + key + "' must be [lo, hi] with lo < hi");
    return TimeWindow{v[0], v[1]};
}

} // namespace config

// ---- simulation config -------------------------------------------------------

struct SimulationConfig
{
    AtomParams atom;
    double tau_p = 13.3;
    EnvelopeShape shape = EnvelopeShape::ExpDecaying;
    std::string envelope_csv; // tabulated only, resolved path
    CavityParams cavity;      // cavity only
    TimeGrid grid;
    EfficiencyChain chain;
    SynthesisBins bins;
    std::uint64_t input_hash = 0;
};

/// Parses a simulation config. Relative envelope CSV paths are resolved
/// against `base_dir`. Physics validation is left to the routines.
inline SimulationConfig parse_simulation_config(const std::string& text,
                                                const std::string& base_dir = ".")
{
    const json j = config::parse(text, "config");
    SimulationConfig c;
    c.input_hash = fnv1a(text);
    c.atom.tau0 = config::get<double>(j, "tau0_ns");
    c.tau_p = config::get<double>(j, "tau_p_ns");
    c.atom.lambda = config::get<double>(j, "lambda");
    const auto& env = config::require(j, "envelope");
    c.shape = config::shape_from_string(config::get<std::string>(env, "shape", "envelope."));
    if (c.shape == EnvelopeShape::Tabulated) {
        std::filesystem::path p = config::get<std::string>(env, "csv", "envelope.");
        if (p.is_relative())
            p = std::filesystem::path(base_dir) / p;
        c.envelope_csv = p.string();
    }
    if (c.shape == EnvelopeShape::CavityShaped && env.contains("cavity"))
        c.cavity = config::cavity_from(env.at("cavity"));

    const json grid = j.contains("grid") ? j.at("grid") : json::object();
    const double step = config::get_or(grid, "step_ns", 0.05, "grid.");
    // A rising photon cut off at -T leaves the atom short of amplitude
    // exp(-T / 2 tau_p - T / 2 tau0) at t = 0, so 16 tau_p rather than 8;
    // the span also covers the histogram range to keep the re-emission tail.
    const double span = config::get_or(
        grid, "half_span_ns", std::max(16.0 * std::max(c.tau_p, 0.0), 120.0), "grid.");
    c.grid = TimeGrid::symmetric(span, step);
    c.chain = config::chain_from(j);
    const json bins = j.contains("bins") ? j.at("bins") : json::object();
    c.bins.forward = config::bins_from(bins, "forward_ns", c.bins.forward);
    c.bins.backward = config::bins_from(bins, "backward_ns", c.bins.backward);
    return c;
}

inline SimulationConfig load_simulation_config(const std::string& path)
{
    const auto dir = std::filesystem::path(path).parent_path().string();
    return parse_simulation_config(read_text_file(path), dir.empty() ? "." : dir);
}

inline PhotonEnvelope build_envelope(const SimulationConfig& c)
{
    if (!(c.tau_p > 0.0))
        throw PhysicsError("photon coherence time tau_p must be > 0");
    switch (c.shape) {
    case EnvelopeShape::ExpDecaying: return make_decaying(c.tau_p, c.grid);
    case EnvelopeShape::ExpRising: return make_rising(c.tau_p, c.grid);
    case EnvelopeShape::CavityShaped:
        return shape_conditional_probe(c.cavity, c.tau_p, c.grid).envelope;
    case EnvelopeShape::Tabulated: {
        std::ifstream in(c.envelope_csv);
        if (!in)
            throw ConfigError("cannot open envelope CSV '" + c.envelope_csv + "'");
        return envelope_from_csv(in, c.tau_p);
    }
    }
    throw ConfigError("unknown envelope shape");
}

// ---- simulate ------------------------------------------------------------------

inline OutputFiles run_simulate(const SimulationConfig& c)
{
    c.atom.validate();
    const auto env = build_envelope(c);
    const auto model = simulate_scattering(c.atom, env);
    const auto& grid = env.grid();
    const auto delta = model.delta_left();
    const auto r_b = backward_rate(c.atom, model.trace, c.chain.backward_efficiency());

    std::ostringstream trace, rates;
    trace << provenance_line(c.input_hash) << "\n" << "t_ns,p_e\n";
    rates << provenance_line(c.input_hash) << "\n"
          << "t_ns,r_f0,r_f,r_b,delta\n";
    for (std::size_t k = 0; k < grid.size; ++k) {
        const double t = grid.time(k);
        trace << fmt_double(t) << ',' << fmt_double(model.trace.p_e[k]) << '\n';
        rates << fmt_double(t) << ',' << fmt_double(model.r_f0.left[k]) << ','
              << fmt_double(model.r_f.left[k]) << ',' << fmt_double(r_b[k]) << ','
              << fmt_double(delta[k]) << '\n';
    }

    const TimeWindow window = default_window(c.shape);
    const auto peak = model.trace.peak();
    json summary{
        {"generator", "photon-atom " + std::string(version)},
        {"input_hash", hex64(c.input_hash)},
        {"shape", to_string(c.shape)},
        {"tau0_ns", c.atom.tau0},
        {"tau_p_ns", env.tau_p()},
        {"lambda", c.atom.lambda},
        {"peak_pe", peak.value},
        {"peak_time_ns", peak.time},
        // the rate difference integrated over the whole envelope support
        {"epsilon", model.delta().integrate()},
        {"epsilon_window", model.delta().integrate(window.lo, window.hi)},
        {"window_ns", {window.lo, window.hi}},
    };
    if (c.shape == EnvelopeShape::ExpDecaying || c.shape == EnvelopeShape::ExpRising)
        summary["epsilon_closed_form"] = extinction_closed_form(c.atom, c.tau_p);
    return {{"trace.csv", trace.str()},
            {"rates.csv", rates.str()},
            {"summary.json", summary.dump(2) + "\n"}};
}

// ---- synth --------------------------------------------------------------------

inline OutputFiles run_synth(const SimulationConfig& c, std::uint64_t n_heralds,
                             std::uint64_t seed, unsigned threads = 0)
{
    const auto env = build_envelope(c);
    const auto res = synthesize(env, c.atom, c.chain, n_heralds, c.bins, seed, threads);
    OutputFiles out;
    auto put = [&](const std::string& stem, const CoincidenceHistogram& h) {
        out[stem + ".csv"] = histogram_to_csv(h, c.input_hash);
        out[stem + ".json"] = histogram_sidecar(h, c.input_hash).dump(2) + "\n";
    };
    put("g_f0", res.g_f0);
    put("g_f", res.g_f);
    put("g_b", res.g_b);
    return out;
}

// ---- analysis parameters -------------------------------------------------------

struct AnalysisParams
{
    AtomParams atom;
    std::optional<double> tau_p; // fitted when absent
    std::optional<double> lambda; // fitted when absent
    EnvelopeShape shape = EnvelopeShape::ExpDecaying;
    EfficiencyChain chain;
    /// Forward efficiency used to turn counts into rates. Absent: the
    /// measured sum(G_f0) / n_heralds after accidental subtraction.
    std::optional<double> eta_f;
    std::optional<TimeWindow> window;
    bool subtract_accidentals = true;
    std::uint64_t input_hash = 0;
};

inline AnalysisParams parse_analysis_params(const std::string& text)
{
    const json j = config::parse(text, "params");
    AnalysisParams p;
    p.input_hash = fnv1a(text);
    p.atom.tau0 = config::get<double>(j, "tau0_ns");
    if (j.contains("tau_p_ns"))
        p.tau_p = config::get<double>(j, "tau_p_ns");
    if (j.contains("lambda"))
        p.lambda = config::get<double>(j, "lambda");
    p.shape = config::shape_from_string(config::get_or<std::string>(j, "shape", "decaying"));
    if (p.shape != EnvelopeShape::ExpDecaying && p.shape != EnvelopeShape::ExpRising)
        throw ConfigError("analysis supports shape 'decaying' or 'rising'");
    p.chain = config::chain_from(j);
    if (j.contains("chain") && j.at("chain").contains("eta_f"))
        p.eta_f = p.chain.eta_f;
    p.window = config::window_from(j, "window_ns");
    p.subtract_accidentals = config::get_or(j, "subtract_accidentals", true);
    return p;
}

// ---- analyze -------------------------------------------------------------------

struct AnalysisResult
{
    AccidentalCorrection forward_floor;
    CoincidenceHistogram g_f0;
    CoincidenceHistogram g_f;
    std::optional<CoincidenceHistogram> g_b;
    double eta_f = 0.0;
    RateSeries r_f0;
    RateSeries r_f;
    RateSeries delta;
    ExcitationTrace pe_forward;
    std::optional<ExcitationTrace> pe_backward;
    /// Forward trace averaged over the backward bins.
    std::optional<ExcitationTrace> pe_forward_on_backward;
    Extinction extinction;
    std::optional<EnvelopeFit> envelope_fit;
    std::optional<LambdaFit> lambda_fit;
    AtomParams atom_used;
    double tau_p_used = 0.0;
    std::size_t consistent_bins = 0;
    std::size_t compared_bins = 0;
};

namespace detail {

/// Region holding signal in a forward histogram. A decaying photon arrives
/// at t = 0 and a rising one ends there; the side without photon is
/// signal-free and carries only accidentals.
inline TimeWindow forward_signal_region(EnvelopeShape shape, const TimeWindow& w)
{
    return shape == EnvelopeShape::ExpRising ? TimeWindow{-1e9, w.hi}
                                             : TimeWindow{w.lo, 1e9};
}

/// The backward channel sees the atom from the first photon arrival on;
/// for a rising photon the excitation starts around -5 tau_p.
inline TimeWindow backward_signal_region(EnvelopeShape shape, double tau_p,
                                         const TimeWindow& w)
{
    return shape == EnvelopeShape::ExpRising
               ? TimeWindow{-std::max(5.0 * tau_p, 14.0), 1e9}
               : TimeWindow{w.lo, 1e9};
}

} // namespace detail

/// Full analysis of one measurement: accidental subtraction, rates, delta,
/// forward (and, with G_b, backward) reconstruction, extinction and fits.
///
/// The accidental floor of the forward channels is estimated once from the
/// photon-free side of G_f0 and subtracted from both forward histograms;
/// with an atom present G_f also carries the atomic re-emission tail, so
/// its own out-of-window bins are not signal-free.
inline AnalysisResult analyze(const CoincidenceHistogram& g_f0_raw,
                              const CoincidenceHistogram& g_f_raw,
                              const std::optional<CoincidenceHistogram>& g_b_raw,
                              const AnalysisParams& params)
{
    g_f0_raw.validate();
    g_f_raw.validate();
    check_same_bins(g_f0_raw, g_f_raw);
    params.atom.validate();
    const TimeWindow window = params.window.value_or(default_window(params.shape));

    AnalysisResult r;
    r.g_f0 = g_f0_raw;
    r.g_f = g_f_raw;
    if (params.subtract_accidentals) {
        r.forward_floor = subtract_accidentals(
            g_f0_raw, detail::forward_signal_region(params.shape, window));
        const double fvar = r.forward_floor.floor_sigma * r.forward_floor.floor_sigma;
        r.g_f0 = r.forward_floor.corrected;
        // per-herald floor rescaled in case the herald counts differ
        const double scale = static_cast<double>(g_f_raw.n_heralds) /
                             static_cast<double>(g_f0_raw.n_heralds);
        r.g_f.variance.resize(r.g_f.bins.size);
        for (std::size_t i = 0; i < r.g_f.bins.size; ++i) {
            r.g_f.variance[i] = g_f_raw.var(i) + fvar * scale * scale;
            r.g_f.counts[i] = g_f_raw.counts[i] - r.forward_floor.floor * scale;
        }
    }

    r.eta_f = params.eta_f.value_or(r.g_f0.total() /
                                    static_cast<double>(r.g_f0.n_heralds));
    if (!(r.eta_f > 0.0))
        throw PhysicsError("forward histogram has no counts above the accidental floor");
    r.r_f0 = counts_to_rate(r.g_f0, r.eta_f);
    r.r_f = counts_to_rate(r.g_f, r.eta_f);
    r.delta = delta_series(r.r_f0, r.r_f);
    r.extinction = extinction_from_data(r.r_f0, r.r_f, window);

    // fits: tau_p first, then lambda with tau_p held
    r.tau_p_used = params.tau_p.value_or(0.0);
    if (!params.tau_p) {
        EnvelopeFitOptions o;
        o.shape = params.shape;
        o.window = window;
        o.background = r.forward_floor.floor;
        r.envelope_fit = fit_envelope(g_f0_raw, o);
        r.tau_p_used = r.envelope_fit->tau_p;
    }
    r.atom_used = params.atom;
    if (params.lambda) {
        r.atom_used.lambda = *params.lambda;
    } else {
        LambdaFitOptions o;
        o.shape = params.shape;
        o.tau_p = r.tau_p_used;
        if (r.envelope_fit)
            o.tau_p_sigma = r.envelope_fit->tau_p_sigma;
        o.window = window;
        o.background = r.forward_floor.floor;
        r.lambda_fit = fit_lambda(g_f0_raw, g_f_raw, params.atom.tau0, o);
        r.atom_used.lambda = r.lambda_fit->lambda;
    }
    r.atom_used.validate();
    r.pe_forward = reconstruct_forward(r.r_f0, r.r_f, r.atom_used);

    if (g_b_raw) {
        g_b_raw->validate();
        r.g_b = *g_b_raw;
        if (params.subtract_accidentals)
            r.g_b = subtract_accidentals(
                        *g_b_raw, detail::backward_signal_region(
                                      params.shape, r.tau_p_used, window))
                        .corrected;
        r.pe_backward = reconstruct_backward(*r.g_b, params.chain, r.atom_used);
        r.pe_forward_on_backward = average_over_bins(r.pe_forward, r.g_b->bins);
        const auto& fb = *r.pe_forward_on_backward;
        const auto& bb = *r.pe_backward;
        // backward sigma with the sqrt(max(counts, 1)) floor so that empty
        // bins still carry an uncertainty
        const double scale = 1.0 / (static_cast<double>(r.g_b->n_heralds) *
                                    params.chain.backward_efficiency() *
                                    r.atom_used.linewidth() * r.g_b->dt());
        for (std::size_t i = 0; i < bb.p_e.size(); ++i) {
            const double a = bb.grid.time(i);
            if (!window.contains(a) || !window.contains(a + bb.grid.step))
                continue;
            ++r.compared_bins;
            const double sb = std::sqrt(std::max(r.g_b->var(i), 1.0)) * scale;
            if (std::abs(fb.p_e[i] - bb.p_e[i]) <= 2.0 * std::hypot(fb.sigma[i], sb))
                ++r.consistent_bins;
        }
    }
    return r;
}

inline json analysis_report(const AnalysisResult& r, const AnalysisParams& p)
{
    const auto peak = r.pe_forward.peak();
    json rep{
        {"generator", "photon-atom " + std::string(version)},
        {"input_hash", hex64(p.input_hash)},
        {"shape", to_string(p.shape)},
        {"n_heralds", r.g_f0.n_heralds},
        {"eta_f", r.eta_f},
        {"accidental_floor", r.forward_floor.floor},
        {"epsilon", r.extinction.epsilon},
        {"epsilon_sigma", r.extinction.sigma},
        {"window_ns", {r.extinction.window.lo, r.extinction.window.hi}},
        {"peak_pe", peak.value},
        {"peak_pe_sigma", peak.sigma},
        {"peak_time_ns", peak.time},
        {"tau_p_ns", r.tau_p_used},
        {"lambda", r.atom_used.lambda},
    };
    rep[p.shape == EnvelopeShape::ExpRising ? "epsilon_up" : "epsilon_down"] =
        r.extinction.epsilon;
    if (r.envelope_fit) {
        rep["tau_p_sigma"] = r.envelope_fit->tau_p_sigma;
        rep["tau_p_chi2_reduced"] = r.envelope_fit->chi2_reduced;
    }
    if (r.lambda_fit) {
        rep["lambda_sigma"] = r.lambda_fit->lambda_sigma;
        rep["lambda_chi2_reduced"] = r.lambda_fit->chi2_reduced;
    }
    if (r.pe_backward) {
        rep["backward_bins_compared"] = r.compared_bins;
        rep["backward_bins_within_2sigma"] = r.consistent_bins;
    }
    return rep;
}

inline OutputFiles analysis_files(const AnalysisResult& r, const AnalysisParams& p)
{
    const auto prov = provenance_line(p.input_hash) + "\n";
    std::ostringstream d, fwd;
    d << prov << "t_ns,delta,sigma\n";
    for (std::size_t i = 0; i < r.delta.rate.size(); ++i)
        d << fmt_double(r.delta.bins.time(i)) << ',' << fmt_double(r.delta.rate[i])
          << ',' << fmt_double(r.delta.sigma[i]) << '\n';
    fwd << prov << "t_ns,p_e,sigma\n";
    for (std::size_t i = 0; i < r.pe_forward.p_e.size(); ++i)
        fwd << fmt_double(r.pe_forward.grid.time(i)) << ','
            << fmt_double(r.pe_forward.p_e[i]) << ','
            << fmt_double(r.pe_forward.sigma[i]) << '\n';
    OutputFiles out{{"delta.csv", d.str()},
                    {"pe_forward.csv", fwd.str()},
                    {"report.json", analysis_report(r, p).dump(2) + "\n"}};
    if (r.pe_backward) {
        std::ostringstream b;
        b << prov << "bin_start_ns,p_e,sigma,p_e_forward,sigma_forward\n";
        for (std::size_t i = 0; i < r.pe_backward->p_e.size(); ++i)
            b << fmt_double(r.pe_backward->grid.time(i)) << ','
              << fmt_double(r.pe_backward->p_e[i]) << ','
              << fmt_double(r.pe_backward->sigma[i]) << ','
              << fmt_double(r.pe_forward_on_backward->p_e[i]) << ','
              << fmt_double(r.pe_forward_on_backward->sigma[i]) << '\n';
        out["pe_backward.csv"] = b.str();
    }
    return out;
}

} // namespace photon_atom

#endif
