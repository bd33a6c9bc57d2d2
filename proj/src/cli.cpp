#include "gridtopo/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#if defined(_OPENMP)
#include <omp.h>
#endif

#include "gridtopo/error.hpp"
#include "gridtopo/eval_harness.hpp"
#include "gridtopo/feeders.hpp"
#include "gridtopo/io.hpp"
#include "gridtopo/phase_id.hpp"
#include "gridtopo/synth_lab.hpp"
#include "gridtopo/topo_est.hpp"

namespace gridtopo {

namespace {

namespace fs = std::filesystem;

struct Config {
    std::string preset = "fig4";
    std::string topology_path;
    std::string measurements_path;
    std::string labels_path;
    std::string tree_path;
    std::string out_dir = ".";
    std::string frame = "sequence";
    std::string source;  // empty: complex when angles are present
    std::uint64_t seed = 1;
    int samples = 8760;
    double noise = 0.0;
    std::string noise_distribution = "uniform";
    double label_corruption = 0.0;
    double injection_scale = kDefaultInjectionScale;
    double increment_scale = kDefaultIncrementScale;
    double substation_scale = 0.0;
    double sample_period = kDefaultSamplePeriod;
    bool mesh = false;
    std::optional<int> root_bus;
    int threads = 0;
    int replicates = 100;
    bool identify_phases = false;
    bool record_timing = false;
    std::string axis = "noise";
    std::vector<double> values;
};

std::ifstream open_in(const std::string& path, const char* what) {
    if (path.empty()) throw InputError(std::string("missing ") + what + " path");
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + std::string(what) + " '" + path + "'");
    return in;
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write '" + path.string() + "'");
    return out;
}

fs::path out_path(const Config& c, const char* name) {
    std::error_code ec;
    fs::create_directories(c.out_dir, ec);
    if (ec) throw InputError("cannot create output directory '" + c.out_dir + "': " + ec.message());
    return fs::path(c.out_dir) / name;
}

GridTopology load_topology(const Config& c) {
    if (!c.topology_path.empty()) {
        auto in = open_in(c.topology_path, "topology");
        return read_topology(in);
    }
    return preset_feeder(c.preset);
}

NoiseSpec noise_spec(const Config& c) {
    NoiseSpec n;
    n.bound = c.noise;
    if (c.noise_distribution == "uniform") n.distribution = NoiseDistribution::Uniform;
    else if (c.noise_distribution == "gaussian") n.distribution = NoiseDistribution::TruncatedGaussian;
    else throw InputError("unknown noise distribution '" + c.noise_distribution + "'");
    return n;
}

Source resolve_source(const Config& c, bool magnitude_only) {
    if (c.source.empty()) return magnitude_only ? Source::Magnitude : Source::Complex;
    const Source s = source_from_string(c.source);
    if (s == Source::Complex && magnitude_only) throw InputError("measurements carry no angles; use --source magnitude");
    return s;
}

Scenario scenario_from(const Config& c) {
    Scenario s;
    s.feeder = c.topology_path.empty() ? c.preset : c.topology_path;
    s.samples = c.samples;
    s.frame = frame_from_string(c.frame);
    s.source = c.source.empty() ? Source::Complex : source_from_string(c.source);
    s.noise = noise_spec(c);
    s.label_fraction = c.label_corruption;
    s.injection_scale = c.injection_scale;
    s.increment_scale = c.increment_scale;
    s.substation_scale = c.substation_scale;
    s.mesh = c.mesh;
    s.identify_phases = c.identify_phases;
    return s;
}

void write_json(const fs::path& path, const nlohmann::ordered_json& j) {
    auto out = open_out(path);
    out << j.dump(2) << '\n';
}

int cmd_simulate(const Config& c) {
    const GridTopology topo = load_topology(c);
    Scenario s = scenario_from(c);
    const VoltagePanel v = simulate_panel(topo, s, c.seed);
    {
        auto out = open_out(out_path(c, "measurements.csv"));
        write_measurements(out, v);
    }
    {
        auto out = open_out(out_path(c, "topology.csv"));
        write_topology(out, topo);
    }
    {
        auto out = open_out(out_path(c, "labels.csv"));
        write_labels(out, v);
    }
    int corrupted = 0;
    for (const auto& l : v.labels) corrupted += l.is_identity() ? 0 : 1;
    std::printf("seed %llu\n", static_cast<unsigned long long>(c.seed));
    std::printf("buses %d (%d non-slack), branches %zu, chords %zu\n", topo.num_buses(), topo.num_non_slack(),
                topo.branches().size(), topo.chords().size());
    std::printf("samples %d, %s, noise %g, corrupted labels %d\n", v.num_samples(),
                v.magnitude_only ? "magnitude only" : "magnitude and angle", c.noise, corrupted);
    std::printf("wrote %s\n", c.out_dir.c_str());
    return kExitOk;
}

int cmd_estimate(const Config& c) {
    auto min = open_in(c.measurements_path, "measurements");
    const VoltagePanel v = read_measurements(min, c.sample_period);
    const IncrementPanel inc = difference(v);
    const Frame frame = frame_from_string(c.frame);
    const Source source = resolve_source(c, v.magnitude_only);
    EstimateOptions opts;
    opts.mesh = c.mesh;
    opts.declared_root = c.root_bus;
    if (c.root_bus && (*c.root_bus < 1 || *c.root_bus >= v.num_buses()))
        throw InputError("--root-bus " + std::to_string(*c.root_bus) + " is not a non-slack bus");
    const EstimateResult r = estimate_topology(inc, frame, source, opts);
    {
        auto out = open_out(out_path(c, "estimate.csv"));
        write_estimate(out, r.estimate, v.masks);
    }
    {
        auto out = open_out(out_path(c, "mi.csv"));
        write_mi(out, r.mi);
    }
    std::printf("frame %s, source %s, %d samples, %d buses\n", to_string(frame).c_str(), to_string(source).c_str(),
                inc.num_samples(), v.num_buses());
    std::printf("tree edges %zu, chords %zu\n", r.estimate.edges.size(), r.estimate.chords.size());
    for (const auto& e : r.estimate.chords) std::printf("chord %d-%d\n", e.u, e.v);
    if (!c.topology_path.empty()) {
        const GridTopology truth = load_topology(c);
        std::vector<std::pair<int, int>> t;
        for (auto [a, b] : truth.all_edges())
            if (a != 0) t.emplace_back(a, b);
        const EdgeComparison cmp = compare_edges(t, r.estimate.pairs(false));
        std::printf("error rate %.4f%% (false %d, missing %d)\n", cmp.error_rate, cmp.false_edges, cmp.missing_edges);
    }
    if (!r.estimate.rooted()) {
        std::fprintf(stderr, "warning: tree is unrooted; the substation was not measured, pass --root-bus\n");
        return kExitWarning;
    }
    std::printf("root %d (%s)\n", r.estimate.root, r.estimate.root_from_substation ? "from substation" : "declared");
    return kExitOk;
}

int cmd_identify_phases(const Config& c) {
    auto tin = open_in(c.tree_path, "tree");
    auto min = open_in(c.measurements_path, "measurements");
    EdgeSetEstimate tree = read_estimate(tin);
    const VoltagePanel v = read_measurements(min, c.sample_period);
    if (!tree.rooted()) throw InputError("tree has no slack edge; estimate with a root first");
    for (const auto& e : tree.edges)
        if (e.v >= v.num_buses()) throw InputError("tree references bus " + std::to_string(e.v) + " absent from measurements");
    const PhaseAssignment a = assign_phases(tree, v);
    {
        auto out = open_out(out_path(c, "phases.csv"));
        write_assignment(out, a);
    }
    for (const auto& w : a.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
    const std::vector<int> wrong = diagnose_labels(a, v.labels);
    std::printf("mislabeled buses %zu:", wrong.size());
    for (int b : wrong) std::printf(" %d", b);
    std::printf("\n");
    if (!c.labels_path.empty()) {
        auto lin = open_in(c.labels_path, "labels");
        const auto truth = read_labels(lin, v.masks);
        std::printf("phase accuracy %.4f\n", phase_accuracy(a, truth));
    }
    if (!a.all_resolved()) {
        std::fprintf(stderr, "warning: some buses could not be resolved\n");
        return kExitWarning;
    }
    return kExitOk;
}

int cmd_evaluate(const Config& c) {
    const GridTopology topo = load_topology(c);
    const Scenario s = scenario_from(c);
    const auto t0 = std::chrono::steady_clock::now();
    EvalReport report = monte_carlo(topo, s, c.replicates, c.seed);
    if (c.record_timing) report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_json(out_path(c, "report.json"), to_json(report));
    std::printf("replicates %d, mean ER %.4f%% (sd %.4f), exact %.2f, failures %d\n", report.replicates, report.error_rate.mean,
                report.error_rate.stddev, report.exact_fraction(), report.failures);
    if (s.identify_phases) std::printf("mean phase accuracy %.4f\n", report.phase_accuracy.mean);
    return report.failures > 0 ? kExitWarning : kExitOk;
}

int cmd_sweep(const Config& c) {
    const GridTopology topo = load_topology(c);
    const Scenario s = scenario_from(c);
    const SweepAxis axis = sweep_axis_from_string(c.axis);
    if (c.values.empty()) throw InputError("--values is required for sweep");
    const SweepReport report = sweep(topo, axis, c.values, s, c.replicates, c.seed);
    write_json(out_path(c, "sweep.json"), to_json(report));
    {
        auto out = open_out(out_path(c, "sweep.csv"));
        out << sweep_csv(report);
    }
    int failures = 0;
    for (std::size_t i = 0; i < report.points.size(); ++i) {
        std::printf("%s %g: mean ER %.4f%%\n", c.axis.c_str(), report.values[i], report.points[i].error_rate.mean);
        failures += report.points[i].failures;
    }
    return failures > 0 ? kExitWarning : kExitOk;
}

void add_scenario_options(CLI::App* app, Config& c) {
    app->add_option("--preset", c.preset, "Built-in feeder (" + [] {
        std::string s;
        for (const auto& n : preset_names()) s += (s.empty() ? "" : ", ") + n;
        return s;
    }() + ")");
    app->add_option("--topology", c.topology_path, "Feeder CSV (overrides --preset)");
    app->add_option("--samples", c.samples, "Voltage samples per bus")->check(CLI::PositiveNumber);
    app->add_option("--seed", c.seed, "Random seed");
    app->add_option("--noise", c.noise, "Relative magnitude noise bound")->check(CLI::NonNegativeNumber);
    app->add_option("--noise-distribution", c.noise_distribution, "uniform or gaussian");
    app->add_option("--label-corruption", c.label_corruption, "Fraction of buses with permuted labels")->check(CLI::Range(0.0, 1.0));
    app->add_option("--injection-scale", c.injection_scale, "Current-injection increment scale, pu")->check(CLI::PositiveNumber);
    app->add_option("--increment-scale", c.increment_scale,
                    "Largest voltage-increment std, pu; injections are normalized to it (0: use --injection-scale)")
        ->check(CLI::NonNegativeNumber);
    app->add_option("--substation-scale", c.substation_scale, "Substation voltage increment scale, pu (0: stiff)")
        ->check(CLI::NonNegativeNumber);
}

void add_estimation_options(CLI::App* app, Config& c) {
    app->add_option("--frame", c.frame, "phase or sequence")->check(CLI::IsMember({"phase", "sequence"}));
    app->add_option("--source", c.source, "complex or magnitude")->check(CLI::IsMember({"complex", "magnitude"}));
    app->add_flag("--mesh", c.mesh, "Search for one loop-closing chord");
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
    Config c;
    CLI::App app{"Topology and phase recovery for multi-phase distribution feeders"};
    app.require_subcommand(1);
    app.add_option("--threads", c.threads, "Worker threads (0: runtime default)")->check(CLI::NonNegativeNumber);

    auto* sim = app.add_subcommand("simulate", "Generate synthetic measurements with ground truth");
    add_scenario_options(sim, c);
    sim->add_option("--source", c.source, "complex or magnitude (magnitude drops angles)")
        ->check(CLI::IsMember({"complex", "magnitude"}));
    sim->add_option("--out", c.out_dir, "Output directory");

    auto* est = app.add_subcommand("estimate", "Estimate the feeder topology from measurements");
    est->add_option("--measurements", c.measurements_path, "Measurement CSV")->required();
    add_estimation_options(est, c);
    est->add_option("--root-bus", c.root_bus, "Bus attached to the slack when the substation was not measured");
    est->add_option("--topology", c.topology_path, "Ground-truth feeder CSV to score against");
    est->add_option("--sample-period", c.sample_period, "Seconds between samples")->check(CLI::PositiveNumber);
    est->add_option("--out", c.out_dir, "Output directory");

    auto* ph = app.add_subcommand("identify-phases", "Recover per-bus phase labels along an estimated tree");
    ph->add_option("--measurements", c.measurements_path, "Measurement CSV")->required();
    ph->add_option("--tree", c.tree_path, "Rooted estimate CSV")->required();
    ph->add_option("--labels", c.labels_path, "Ground-truth labels to score against");
    ph->add_option("--sample-period", c.sample_period, "Seconds between samples")->check(CLI::PositiveNumber);
    ph->add_option("--out", c.out_dir, "Output directory");

    auto* ev = app.add_subcommand("evaluate", "Monte Carlo error rate for one scenario");
    add_scenario_options(ev, c);
    add_estimation_options(ev, c);
    ev->add_option("--replicates", c.replicates, "Number of replicates")->check(CLI::PositiveNumber);
    ev->add_flag("--identify-phases", c.identify_phases, "Also run phase identification");
    ev->add_flag("--record-timing", c.record_timing, "Store wall time in the report (breaks byte reproducibility)");
    ev->add_option("--out", c.out_dir, "Output directory");

    auto* sw = app.add_subcommand("sweep", "Monte Carlo error rate along one axis");
    add_scenario_options(sw, c);
    add_estimation_options(sw, c);
    sw->add_option("--replicates", c.replicates, "Replicates per value")->check(CLI::PositiveNumber);
    sw->add_option("--axis", c.axis, "data_length, noise, label_fraction, der_scale or resolution");
    sw->add_option("--values", c.values, "Axis values")->delimiter(',')->required();
    sw->add_flag("--identify-phases", c.identify_phases, "Also run phase identification");
    sw->add_option("--out", c.out_dir, "Output directory");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(std::move(reversed));
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitInputError;
    }

#if defined(_OPENMP)
    if (c.threads > 0) omp_set_num_threads(c.threads);
#endif

    try {
        if (sim->parsed()) return cmd_simulate(c);
        if (est->parsed()) return cmd_estimate(c);
        if (ph->parsed()) return cmd_identify_phases(c);
        if (ev->parsed()) return cmd_evaluate(c);
        if (sw->parsed()) return cmd_sweep(c);
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitInputError;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitInputError;
    }
    return kExitInputError;
}

}  // namespace gridtopo
