#include "gridtopo/feeders.hpp"

#include <random>

#include "gridtopo/error.hpp"

namespace gridtopo {

namespace {

constexpr double kFeetPerMile = 5280.0;

LineModel line(double length_miles, double r_per_mile) {
    LineModel l;
    l.length_miles = length_miles;
    l.r_per_mile = r_per_mile;
    return l;
}

struct Spec {
    int parent;
    int child;
    const char* phases;
};

// Fixed-seed line parameters for presets that do not list them explicitly.
GridTopology from_specs(const std::vector<Spec>& specs, std::uint64_t seed, std::vector<Spec> chord_specs = {}) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> r(1.2, 2.0);
    std::uniform_real_distribution<double> len(0.1, 0.4);
    std::vector<Branch> branches;
    for (const auto& s : specs) branches.push_back(make_branch(s.parent, s.child, PhaseMask::parse(s.phases), line(len(rng), r(rng))));
    std::vector<Branch> chords;
    for (const auto& s : chord_specs) chords.push_back(make_branch(s.parent, s.child, PhaseMask::parse(s.phases), line(len(rng), r(rng))));
    return GridTopology(std::move(branches), std::move(chords));
}

}  // namespace

GridTopology random_feeder(int num_buses, std::uint64_t seed, const RandomFeederOptions& options) {
    if (num_buses < 2) throw TopologyError("a feeder needs at least two buses");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_real_distribution<double> r(options.r_min, options.r_max);
    std::uniform_real_distribution<double> len(options.length_min, options.length_max);
    std::uniform_real_distribution<double> jitter(-options.h_jitter, options.h_jitter);

    auto make_line = [&] {
        LineModel l = line(len(rng), r(rng));
        for (auto& h : l.h_self) h = kDefaultHSelf + jitter(rng);
        for (auto& h : l.h_mut) h = kDefaultHMutual + jitter(rng);
        return l;
    };

    std::vector<PhaseMask> masks(num_buses, PhaseMask::abc());
    std::vector<Branch> branches;
    branches.push_back(make_branch(0, 1, PhaseMask::abc(), make_line()));
    for (int bus = 2; bus < num_buses; ++bus) {
        int parent;
        if (unit(rng) < options.chain_probability) {
            int lo = std::max(1, bus - 3);
            parent = std::uniform_int_distribution<int>(lo, bus - 1)(rng);
        } else {
            parent = std::uniform_int_distribution<int>(1, bus - 1)(rng);
        }
        PhaseMask pm = masks[parent];
        PhaseMask mask = pm;
        if (unit(rng) < options.lateral_probability && pm.count() > 1) {
            auto phases = pm.phases();
            if (pm.count() == 3 && unit(rng) < 0.5) {
                // two-phase lateral: drop one phase
                Phase drop = phases[std::uniform_int_distribution<int>(0, 2)(rng)];
                mask = PhaseMask{static_cast<std::uint8_t>(pm.bits() & ~PhaseMask::of(drop).bits())};
            } else {
                Phase keep = phases[std::uniform_int_distribution<int>(0, static_cast<int>(phases.size()) - 1)(rng)];
                mask = PhaseMask::of(keep);
            }
        }
        masks[bus] = mask;
        branches.push_back(make_branch(parent, bus, mask, make_line()));
    }
    return GridTopology(std::move(branches));
}

GridTopology fig4_feeder() {
    std::vector<Branch> b;
    b.push_back(make_branch(0, 1, PhaseMask::abc(), line(0.30, 1.3)));
    b.push_back(make_branch(1, 2, PhaseMask::abc(), line(0.25, 1.4)));
    b.push_back(make_branch(1, 3, PhaseMask::abc(), line(0.20, 1.5)));
    b.push_back(make_branch(2, 4, PhaseMask::parse("ab"), line(0.15, 1.8)));
    b.push_back(make_branch(2, 5, PhaseMask::parse("c"), line(0.12, 1.9)));
    b.push_back(make_branch(3, 6, PhaseMask::abc(), line(0.18, 1.6)));
    b.push_back(make_branch(3, 7, PhaseMask::parse("bc"), line(0.10, 1.7)));
    return GridTopology(std::move(b));
}

GridTopology feeder13() {
    // 0=650 1=632 2=633 3=634 4=645 5=646 6=671 7=680 8=684 9=611 10=652 11=692 12=675
    // The 633-634 transformer and the 671-692 switch are modeled as short lines.
    struct Row { int p, c; const char* ph; double feet; double r; };
    const Row rows[] = {
        {0, 1, "abc", 2000, 1.2}, {1, 2, "abc", 500, 1.4},  {2, 3, "abc", 500, 1.4},
        {1, 4, "bc", 500, 1.9},   {4, 5, "bc", 300, 1.9},   {1, 6, "abc", 2000, 1.2},
        {6, 7, "abc", 1000, 1.2}, {6, 8, "ac", 300, 1.9},   {8, 9, "c", 300, 1.9},
        {8, 10, "a", 800, 1.9},   {6, 11, "abc", 100, 1.2}, {11, 12, "abc", 500, 1.4},
    };
    std::vector<Branch> b;
    for (const auto& r : rows) b.push_back(make_branch(r.p, r.c, PhaseMask::parse(r.ph), line(r.feet / kFeetPerMile, r.r)));
    return GridTopology(std::move(b));
}

GridTopology feeder33() {
    std::vector<Spec> s;
    const char* main_phases = "abc";
    for (int i = 0; i < 17; ++i) s.push_back({i, i + 1, main_phases});
    s.push_back({1, 18, "abc"});
    s.push_back({18, 19, "abc"});
    s.push_back({19, 20, "bc"});
    s.push_back({20, 21, "c"});
    s.push_back({2, 22, "abc"});
    s.push_back({22, 23, "abc"});
    s.push_back({23, 24, "a"});
    s.push_back({5, 25, "abc"});
    for (int i = 25; i < 32; ++i) {
        const char* ph = i < 29 ? "abc" : (i < 31 ? "ab" : "b");
        s.push_back({i, i + 1, ph});
    }
    return from_specs(s, 33);
}

GridTopology feeder123() { return random_feeder(123, 123); }

GridTopology mesh15_feeder() {
    std::vector<Spec> s = {
        {0, 1, "abc"},  {1, 2, "abc"},  {2, 3, "abc"},  {3, 4, "abc"},  {4, 5, "abc"},
        {2, 6, "abc"},  {6, 7, "abc"},  {7, 8, "ab"},   {3, 9, "abc"},  {9, 10, "abc"},
        {1, 11, "abc"}, {11, 12, "abc"}, {12, 13, "bc"}, {13, 14, "c"},
    };
    return from_specs(s, 15, {{5, 10, "abc"}});
}

GridTopology preset_feeder(std::string_view name) {
    if (name == "fig4" || name == "8") return fig4_feeder();
    if (name == "feeder13" || name == "13") return feeder13();
    if (name == "feeder33" || name == "33") return feeder33();
    if (name == "feeder123" || name == "123") return feeder123();
    if (name == "mesh15" || name == "15") return mesh15_feeder();
    throw InputError("unknown feeder preset '" + std::string(name) + "'");
}

std::vector<std::string> preset_names() { return {"fig4", "feeder13", "feeder33", "feeder123", "mesh15"}; }

}  // namespace gridtopo
