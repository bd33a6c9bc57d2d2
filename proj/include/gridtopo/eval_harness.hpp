#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "gridtopo/grid_model.hpp"
#include "gridtopo/info_core.hpp"
#include "gridtopo/synth_lab.hpp"

namespace gridtopo {

struct EdgeComparison {
    int false_edges = 0;
    int missing_edges = 0;
    int true_edges = 0;
    double error_rate = 0.0;  // percent
};

/// Unordered comparison; duplicates collapse. Throws InputError for an empty truth.
EdgeComparison compare_edges(const std::vector<std::pair<int, int>>& truth, const std::vector<std::pair<int, int>>& estimate);
/// 100 (false + missing) / |truth|.
double error_rate(const std::vector<std::pair<int, int>>& truth, const std::vector<std::pair<int, int>>& estimate);

/// One synthetic experiment. Voltages are the integrated increments from a
/// flat start; `samples` counts voltage samples before subsampling.
struct Scenario {
    std::string feeder = "fig4";
    int samples = 8760;
    Frame frame = Frame::Sequence;
    Source source = Source::Complex;
    NoiseSpec noise;
    double label_fraction = 0.0;
    double der_scale = 1.0;
    double der_fraction = 0.2;
    int resolution = 1;
    double injection_scale = kDefaultInjectionScale;
    /// When positive, bus injections are rescaled to this largest per-phase
    /// voltage-increment std before DER scaling; injection_scale then only
    /// sets the relative spread.
    double increment_scale = kDefaultIncrementScale;
    double substation_scale = 0.0;
    bool mesh = false;
    bool identify_phases = false;
};

struct ReplicateResult {
    int index = 0;
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    EdgeComparison edges;
    double phase_accuracy = 0.0;  // NaN unless phases were identified
    double min_margin = 0.0;      // smallest assignment margin; NaN unless identified
    int corrupted_buses = 0;
    int diagnosed_buses = 0;
    bool chord_found = false;
    bool rooted = false;
};

struct Summary {
    double mean = 0.0;
    double stddev = 0.0;  // sample standard deviation; 0 for one value
};

struct EvalReport {
    Scenario scenario;
    int replicates = 0;
    std::uint64_t base_seed = 0;
    std::vector<ReplicateResult> results;  // ordered by replicate index
    Summary error_rate;
    Summary false_edges;
    Summary missing_edges;
    Summary phase_accuracy;  // over replicates that identified phases
    int failures = 0;
    std::optional<double> wall_seconds;

    /// Fraction of successful replicates with zero error.
    double exact_fraction() const;
};

/// splitmix64(base ^ index).
std::uint64_t replicate_seed(std::uint64_t base_seed, int index);

/// Synthetic measurements for one replicate (ground-truth labels kept in the panel).
VoltagePanel simulate_panel(const GridTopology& topology, const Scenario& scenario, std::uint64_t seed);

ReplicateResult run_replicate(const GridTopology& topology, const Scenario& scenario, std::uint64_t seed, int index = 0);

/// Replicates run in parallel; aggregation is in index order. Per-replicate
/// failures are recorded, not thrown.
EvalReport monte_carlo(const GridTopology& topology, const Scenario& scenario, int replicates, std::uint64_t base_seed);
EvalReport monte_carlo(const Scenario& scenario, int replicates, std::uint64_t base_seed);

enum class SweepAxis { DataLength, Noise, LabelFraction, DerScale, Resolution };
std::string to_string(SweepAxis axis);
SweepAxis sweep_axis_from_string(std::string_view s);
Scenario with_axis_value(Scenario scenario, SweepAxis axis, double value);

struct SweepReport {
    SweepAxis axis = SweepAxis::DataLength;
    std::vector<double> values;
    std::vector<EvalReport> points;
};

SweepReport sweep(const GridTopology& topology, SweepAxis axis, const std::vector<double>& values, const Scenario& scenario,
                  int replicates, std::uint64_t base_seed);

nlohmann::ordered_json to_json(const Scenario& scenario);
nlohmann::ordered_json to_json(const EvalReport& report);
nlohmann::ordered_json to_json(const SweepReport& report);
/// Header plus one row per sweep value.
std::string sweep_csv(const SweepReport& report);

}  // namespace gridtopo
