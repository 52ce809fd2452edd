#ifndef PHOTON_ATOM_HISTOGRAM_HPP
#define PHOTON_ATOM_HISTOGRAM_HPP

#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include <photon_atom/csv.hpp>
#include <photon_atom/errors.hpp>
#include <photon_atom/grid.hpp>

namespace photon_atom {

/// Detection efficiencies of the experiment; all dimensionless except
/// the accidental rate (per herald per ns).
struct EfficiencyChain
{
    double eta_f = 3.70e-3;     // forward coincidence probability per herald
    double eta_f_tilde = 0.0155; // forward heralding efficiency, corrected
    double eta_b = 0.0126;      // backward collection efficiency
    double eta_q = 0.56;        // backward detector quantum efficiency
    double accidental_rate = 0.0;

    void validate() const
    {
        auto unit = [](double v, const char* name) {
            if (!(v >= 0.0 && v <= 1.0))
                throw PhysicsError(std::string(name) + " must lie in [0, 1]");
        };
        unit(eta_f, "eta_f");
        unit(eta_f_tilde, "eta_f_tilde");
        unit(eta_b, "eta_b");
        unit(eta_q, "eta_q");
        if (!(accidental_rate >= 0.0) || !std::isfinite(accidental_rate))
            throw PhysicsError("accidental_rate must be >= 0");
    }

    /// Probability per herald that a backward photon is registered, per
    /// unit of emitted population: eta_f_tilde eta_q eta_b.
    double backward_efficiency() const { return eta_f_tilde * eta_q * eta_b; }
};

enum class Channel { ForwardNoAtom, ForwardWithAtom, Backward };

inline const char* to_string(Channel c)
{
    switch (c) {
    case Channel::ForwardNoAtom: return "forward_no_atom";
    case Channel::ForwardWithAtom: return "forward_with_atom";
    case Channel::Backward: return "backward";
    }
    return "?";
}

inline Channel channel_from_string(const std::string& s)
{
    if (s == "forward_no_atom")
        return Channel::ForwardNoAtom;
    if (s == "forward_with_atom")
        return Channel::ForwardWithAtom;
    if (s == "backward")
        return Channel::Backward;
    throw DataFormatError("unknown histogram channel '" + s + "'");
}

/// Herald-conditioned coincidence histogram.
///
/// Raw histograms hold integer counts. After accidental subtraction counts
/// may be fractional and `variance` carries the propagated per-bin variance;
/// when `variance` is empty the counts are Poisson.
struct CoincidenceHistogram
{
    TimeGrid bins;
    std::vector<double> counts;
    std::vector<double> variance;
    std::uint64_t n_heralds = 0;
    Channel channel = Channel::ForwardNoAtom;
    std::uint64_t seed = 0;

    double dt() const { return bins.step; }

    double total() const { return std::accumulate(counts.begin(), counts.end(), 0.0); }

    double var(std::size_t i) const
    {
        return variance.empty() ? std::max(counts[i], 0.0) : variance[i];
    }

    void validate() const
    {
        if (counts.size() != bins.size)
            throw DataFormatError("histogram counts do not match its bins");
        if (!variance.empty() && variance.size() != counts.size())
            throw DataFormatError("histogram variance does not match its bins");
    }
};

inline void check_same_bins(const CoincidenceHistogram& a,
                            const CoincidenceHistogram& b)
{
    if (!a.bins.same_as(b.bins, 1e-6))
        throw DataFormatError("histograms are on different bin grids");
}

// ---- CSV + JSON sidecar ----------------------------------------------------

inline std::string histogram_to_csv(const CoincidenceHistogram& h,
                                    std::uint64_t input_hash = 0)
{
    std::ostringstream out;
    out << provenance_line(input_hash) << "\n";
    out << "bin_start_ns,bin_end_ns,counts\n";
    for (std::size_t i = 0; i < h.bins.size; ++i) {
        const double a = h.bins.time(i);
        out << fmt_double(a) << ',' << fmt_double(a + h.bins.step) << ','
            << fmt_double(h.counts[i]) << '\n';
    }
    return out.str();
}

inline nlohmann::json histogram_sidecar(const CoincidenceHistogram& h,
                                        std::uint64_t input_hash = 0)
{
    return nlohmann::json{{"n_heralds", h.n_heralds},
                          {"channel", to_string(h.channel)},
                          {"dt_ns", h.bins.step},
                          {"seed", h.seed},
                          {"generator", "photon-atom " + std::string(version)},
                          {"input_hash", hex64(input_hash)}};
}

/// Parses histogram CSV text plus its sidecar.
inline CoincidenceHistogram histogram_from_csv(std::istream& csv,
                                               const nlohmann::json& sidecar)
{
    const auto table = read_csv(csv);
    const auto lo = table.values("bin_start_ns");
    const auto hi = table.values("bin_end_ns");
    auto counts = table.values("counts");
    if (lo.empty())
        throw DataFormatError("histogram CSV has no bins");
    CoincidenceHistogram h;
    const double dt = hi.front() - lo.front();
    h.bins = TimeGrid{lo.front(), dt, lo.size()};
    for (std::size_t i = 0; i < lo.size(); ++i) {
        if (std::abs(lo[i] - h.bins.time(i)) > 1e-6 * dt ||
            std::abs(hi[i] - lo[i] - dt) > 1e-6 * dt)
            throw DataFormatError("histogram bins are not uniform");
        if (counts[i] < 0.0)
            throw DataFormatError("histogram has negative counts");
    }
    h.counts = std::move(counts);
    try {
        h.n_heralds = sidecar.at("n_heralds").get<std::uint64_t>();
        h.channel = channel_from_string(sidecar.at("channel").get<std::string>());
        if (sidecar.contains("seed"))
            h.seed = sidecar.at("seed").get<std::uint64_t>();
        if (sidecar.contains("dt_ns") &&
            std::abs(sidecar.at("dt_ns").get<double>() - dt) > 1e-6 * dt)
            throw DataFormatError("sidecar dt_ns disagrees with the CSV bins");
    } catch (const nlohmann::json::exception& e) {
        throw DataFormatError(std::string("histogram sidecar: ") + e.what());
    }
    if (h.n_heralds == 0)
        throw DataFormatError("histogram sidecar has zero heralds");
    return h;
}

/// Sidecar path convention: foo.csv -> foo.json.
inline std::string sidecar_path(const std::string& csv_path)
{
    const auto dot = csv_path.rfind('.');
    const auto slash = csv_path.find_last_of('/');
    if (dot == std::string::npos || (slash != std::string::npos && dot < slash))
        return csv_path + ".json";
    return csv_path.substr(0, dot) + ".json";
}

inline CoincidenceHistogram read_histogram(const std::string& csv_path)
{
    std::ifstream csv(csv_path);
    if (!csv)
        throw DataFormatError("cannot open '" + csv_path + "'");
    nlohmann::json side;
    try {
        side = nlohmann::json::parse(read_text_file(sidecar_path(csv_path)));
    } catch (const ConfigError& e) {
        throw DataFormatError(e.what());
    } catch (const nlohmann::json::exception& e) {
        throw DataFormatError("cannot parse histogram sidecar: " +
                              std::string(e.what()));
    }
    return histogram_from_csv(csv, side);
}

} // namespace photon_atom

#endif
