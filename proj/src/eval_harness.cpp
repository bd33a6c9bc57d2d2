#include "gridtopo/eval_harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>
#include <set>

#include "gridtopo/error.hpp"
#include "gridtopo/feeders.hpp"
#include "gridtopo/phase_id.hpp"
#include "gridtopo/topo_est.hpp"

namespace gridtopo {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

enum SeedStream : std::uint64_t { kInjection = 1, kDer = 2, kNoise = 3, kLabels = 4 };

std::uint64_t stream_seed(std::uint64_t seed, SeedStream s) { return splitmix64(seed ^ (0xA5A5A5A5ULL * s)); }

Summary summarize(const std::vector<double>& xs) {
    Summary s;
    if (xs.empty()) {
        s.mean = kNaN;
        s.stddev = kNaN;
        return s;
    }
    double sum = 0.0;
    for (double x : xs) sum += x;
    s.mean = sum / static_cast<double>(xs.size());
    if (xs.size() > 1) {
        double ss = 0.0;
        for (double x : xs) ss += (x - s.mean) * (x - s.mean);
        s.stddev = std::sqrt(ss / static_cast<double>(xs.size() - 1));
    }
    return s;
}

std::string fmt(double x) {
    if (std::isnan(x)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", x);
    return buf;
}

nlohmann::ordered_json summary_json(const Summary& s) { return {{"mean", s.mean}, {"std", s.stddev}}; }

}  // namespace

EdgeComparison compare_edges(const std::vector<std::pair<int, int>>& truth, const std::vector<std::pair<int, int>>& estimate) {
    auto norm = [](const std::vector<std::pair<int, int>>& edges) {
        std::set<std::pair<int, int>> out;
        for (auto [a, b] : edges) out.insert({std::min(a, b), std::max(a, b)});
        return out;
    };
    const auto t = norm(truth);
    const auto e = norm(estimate);
    if (t.empty()) throw InputError("true edge set is empty");
    EdgeComparison c;
    c.true_edges = static_cast<int>(t.size());
    for (const auto& x : e)
        if (!t.count(x)) ++c.false_edges;
    for (const auto& x : t)
        if (!e.count(x)) ++c.missing_edges;
    c.error_rate = 100.0 * (c.false_edges + c.missing_edges) / static_cast<double>(c.true_edges);
    return c;
}

double error_rate(const std::vector<std::pair<int, int>>& truth, const std::vector<std::pair<int, int>>& estimate) {
    return compare_edges(truth, estimate).error_rate;
}

double EvalReport::exact_fraction() const {
    int ok = 0;
    int exact = 0;
    for (const auto& r : results) {
        if (!r.ok) continue;
        ++ok;
        if (r.edges.false_edges == 0 && r.edges.missing_edges == 0) ++exact;
    }
    return ok ? static_cast<double>(exact) / ok : 0.0;
}

std::uint64_t replicate_seed(std::uint64_t base_seed, int index) {
    return splitmix64(base_seed ^ static_cast<std::uint64_t>(index));
}

VoltagePanel simulate_panel(const GridTopology& topology, const Scenario& scenario, std::uint64_t seed) {
    InjectionSpec spec = default_injection(topology, stream_seed(seed, kInjection), scenario.injection_scale, scenario.substation_scale);
    if (scenario.increment_scale > 0.0) normalize_injection(spec, topology, scenario.increment_scale);
    if (scenario.der_scale != 1.0) {
        std::vector<int> buses;
        for (int b = 1; b < topology.num_buses(); ++b) buses.push_back(b);
        std::mt19937_64 rng(stream_seed(seed, kDer));
        std::shuffle(buses.begin(), buses.end(), rng);
        const int count = static_cast<int>(std::ceil(scenario.der_fraction * static_cast<double>(buses.size()) - 1e-9));
        buses.resize(std::clamp(count, 0, static_cast<int>(buses.size())));
        scale_injection(spec, buses, scenario.der_scale);
    }
    VoltagePanel v = integrate_voltages(generate_increments(topology, spec, scenario.samples), flat_start(topology));
    // Each stage copies the panel, so no-op stages are skipped.
    if (scenario.resolution != 1) v = subsample(v, scenario.resolution);
    if (scenario.source == Source::Magnitude) v = to_magnitude_only(v);
    if (scenario.noise.bound != 0.0) v = apply_noise(v, scenario.noise, stream_seed(seed, kNoise));
    if (scenario.label_fraction != 0.0) v = corrupt_labels(v, scenario.label_fraction, stream_seed(seed, kLabels));
    return v;
}

ReplicateResult run_replicate(const GridTopology& topology, const Scenario& scenario, std::uint64_t seed, int index) {
    ReplicateResult r;
    r.index = index;
    r.seed = seed;
    r.phase_accuracy = kNaN;
    r.min_margin = kNaN;
    try {
        const VoltagePanel v = simulate_panel(topology, scenario, seed);
        const IncrementPanel inc = difference(v);
        EstimateOptions opts;
        opts.mesh = scenario.mesh;
        if (topology.children_of(0).size() == 1) opts.declared_root = topology.children_of(0).front();
        const EstimateResult est = estimate_topology(inc, scenario.frame, scenario.source, opts);

        std::vector<std::pair<int, int>> truth;
        for (auto [a, b] : topology.all_edges())
            if (a != 0) truth.emplace_back(a, b);
        r.edges = compare_edges(truth, est.estimate.pairs(false));
        r.rooted = est.estimate.rooted();
        r.chord_found = !topology.chords().empty() && !est.estimate.chords.empty() && r.edges.error_rate == 0.0;

        if (scenario.identify_phases) {
            const PhaseAssignment a = assign_phases(est.estimate, v);
            r.phase_accuracy = phase_accuracy(a, v.labels);
            for (int b = 1; b < v.num_buses(); ++b) {
                if (!v.labels[b].is_identity()) ++r.corrupted_buses;
                if (!std::isnan(a.margin[b]) && (std::isnan(r.min_margin) || a.margin[b] < r.min_margin)) r.min_margin = a.margin[b];
            }
            r.diagnosed_buses = static_cast<int>(diagnose_labels(a, std::vector<ChannelMap>(v.num_buses())).size());
        }
        r.ok = true;
    } catch (const Error& e) {
        r.ok = false;
        r.error = e.what();
    }
    return r;
}

EvalReport monte_carlo(const GridTopology& topology, const Scenario& scenario, int replicates, std::uint64_t base_seed) {
    if (replicates < 1) throw InputError("need at least one replicate");
    EvalReport report;
    report.scenario = scenario;
    report.replicates = replicates;
    report.base_seed = base_seed;
    report.results.resize(replicates);
#if defined(_OPENMP)
#pragma omp parallel for schedule(dynamic)
#endif
    for (int i = 0; i < replicates; ++i) report.results[i] = run_replicate(topology, scenario, replicate_seed(base_seed, i), i);

    std::vector<double> er, fe, me, pa;
    for (const auto& r : report.results) {
        if (!r.ok) {
            ++report.failures;
            continue;
        }
        er.push_back(r.edges.error_rate);
        fe.push_back(r.edges.false_edges);
        me.push_back(r.edges.missing_edges);
        if (!std::isnan(r.phase_accuracy)) pa.push_back(r.phase_accuracy);
    }
    report.error_rate = summarize(er);
    report.false_edges = summarize(fe);
    report.missing_edges = summarize(me);
    report.phase_accuracy = summarize(pa);
    return report;
}

EvalReport monte_carlo(const Scenario& scenario, int replicates, std::uint64_t base_seed) {
    return monte_carlo(preset_feeder(scenario.feeder), scenario, replicates, base_seed);
}

std::string to_string(SweepAxis axis) {
    switch (axis) {
    case SweepAxis::DataLength: return "data_length";
    case SweepAxis::Noise: return "noise";
    case SweepAxis::LabelFraction: return "label_fraction";
    case SweepAxis::DerScale: return "der_scale";
    case SweepAxis::Resolution: return "resolution";
    }
    return "unknown";
}

SweepAxis sweep_axis_from_string(std::string_view s) {
    for (SweepAxis a : {SweepAxis::DataLength, SweepAxis::Noise, SweepAxis::LabelFraction, SweepAxis::DerScale, SweepAxis::Resolution})
        if (to_string(a) == s) return a;
    throw InputError("unknown sweep axis '" + std::string(s) + "'");
}

Scenario with_axis_value(Scenario scenario, SweepAxis axis, double value) {
    switch (axis) {
    case SweepAxis::DataLength: scenario.samples = static_cast<int>(std::lround(value)); break;
    case SweepAxis::Noise: scenario.noise.bound = value; break;
    case SweepAxis::LabelFraction: scenario.label_fraction = value; break;
    case SweepAxis::DerScale: scenario.der_scale = value; break;
    case SweepAxis::Resolution: scenario.resolution = static_cast<int>(std::lround(value)); break;
    }
    return scenario;
}

SweepReport sweep(const GridTopology& topology, SweepAxis axis, const std::vector<double>& values, const Scenario& scenario,
                  int replicates, std::uint64_t base_seed) {
    if (values.empty()) throw InputError("sweep needs at least one value");
    SweepReport out;
    out.axis = axis;
    out.values = values;
    for (double v : values) out.points.push_back(monte_carlo(topology, with_axis_value(scenario, axis, v), replicates, base_seed));
    return out;
}

nlohmann::ordered_json to_json(const Scenario& s) {
    return {
        {"feeder", s.feeder},
        {"samples", s.samples},
        {"frame", to_string(s.frame)},
        {"source", to_string(s.source)},
        {"noise_bound", s.noise.bound},
        {"noise_distribution", s.noise.distribution == NoiseDistribution::Uniform ? "uniform" : "truncated_gaussian"},
        {"label_fraction", s.label_fraction},
        {"der_scale", s.der_scale},
        {"der_fraction", s.der_fraction},
        {"resolution", s.resolution},
        {"injection_scale", s.injection_scale},
        {"increment_scale", s.increment_scale},
        {"substation_scale", s.substation_scale},
        {"mesh", s.mesh},
        {"identify_phases", s.identify_phases},
    };
}

nlohmann::ordered_json to_json(const EvalReport& report) {
    nlohmann::ordered_json j;
    j["scenario"] = to_json(report.scenario);
    j["replicates"] = report.replicates;
    j["base_seed"] = report.base_seed;
    j["error_rate_percent"] = summary_json(report.error_rate);
    j["false_edges"] = summary_json(report.false_edges);
    j["missing_edges"] = summary_json(report.missing_edges);
    j["phase_accuracy"] = summary_json(report.phase_accuracy);
    j["exact_fraction"] = report.exact_fraction();
    j["failures"] = report.failures;
    if (report.wall_seconds) j["wall_seconds"] = *report.wall_seconds;
    auto& reps = j["results"] = nlohmann::ordered_json::array();
    for (const auto& r : report.results) {
        nlohmann::ordered_json x;
        x["index"] = r.index;
        x["seed"] = r.seed;
        x["ok"] = r.ok;
        if (!r.ok) x["error"] = r.error;
        x["error_rate_percent"] = r.edges.error_rate;
        x["false_edges"] = r.edges.false_edges;
        x["missing_edges"] = r.edges.missing_edges;
        x["rooted"] = r.rooted;
        if (report.scenario.mesh) x["chord_found"] = r.chord_found;
        if (report.scenario.identify_phases) {
            x["phase_accuracy"] = r.phase_accuracy;
            x["min_margin"] = r.min_margin;
            x["corrupted_buses"] = r.corrupted_buses;
            x["diagnosed_buses"] = r.diagnosed_buses;
        }
        reps.push_back(std::move(x));
    }
    return j;
}

nlohmann::ordered_json to_json(const SweepReport& report) {
    nlohmann::ordered_json j;
    j["axis"] = to_string(report.axis);
    j["values"] = report.values;
    auto& pts = j["points"] = nlohmann::ordered_json::array();
    for (const auto& p : report.points) pts.push_back(to_json(p));
    return j;
}

std::string sweep_csv(const SweepReport& report) {
    std::string out = "axis,value,replicates,mean_error_rate,std_error_rate,mean_false_edges,mean_missing_edges,"
                      "exact_fraction,mean_phase_accuracy,std_phase_accuracy,failures\n";
    for (std::size_t i = 0; i < report.points.size(); ++i) {
        const auto& p = report.points[i];
        out += to_string(report.axis) + "," + fmt(report.values[i]) + "," + std::to_string(p.replicates) + "," +
               fmt(p.error_rate.mean) + "," + fmt(p.error_rate.stddev) + "," + fmt(p.false_edges.mean) + "," +
               fmt(p.missing_edges.mean) + "," + fmt(p.exact_fraction()) + "," + fmt(p.phase_accuracy.mean) + "," +
               fmt(p.phase_accuracy.stddev) + "," + std::to_string(p.failures) + "\n";
    }
    return out;
}

}  // namespace gridtopo
