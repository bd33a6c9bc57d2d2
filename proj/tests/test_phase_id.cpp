#include <doctest.h>

#include <cmath>
#include <random>

#include "gridtopo/error.hpp"
#include "gridtopo/feeders.hpp"
#include "gridtopo/phase_id.hpp"

using namespace gridtopo;

namespace {

VoltagePanel voltages(const GridTopology& t, std::uint64_t seed, int samples, double substation = 0.0) {
    InjectionSpec spec = default_injection(t, seed, kDefaultInjectionScale, substation);
    normalize_injection(spec, t, kDefaultIncrementScale);
    return integrate_voltages(generate_increments(t, spec, samples), flat_start(t));
}

// The true tree with the slack edge, as the estimator would return it.
EdgeSetEstimate true_tree(const GridTopology& t) {
    EdgeSetEstimate e;
    for (auto [p, c] : t.tree_edges()) e.edges.push_back({std::min(p, c), std::max(p, c), 0.0});
    for (auto [p, c] : t.tree_edges())
        if (p == 0) e.root = c;
    return e;
}

std::vector<ChannelMap> identity_labels(int n) { return std::vector<ChannelMap>(n, ChannelMap::identity()); }

double pearson(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
    const double mx = x.mean(), my = y.mean();
    double sxy = 0, sxx = 0, syy = 0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        sxy += (x(i) - mx) * (y(i) - my);
        sxx += (x(i) - mx) * (x(i) - mx);
        syy += (y(i) - my) * (y(i) - my);
    }
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace

TEST_CASE("channel correlation matches a direct Pearson computation") {
    std::mt19937 rng(3);
    std::normal_distribution<double> g;
    Eigen::MatrixXd p(200, 3), c(200, 2);
    for (int i = 0; i < 200; ++i) {
        for (int k = 0; k < 3; ++k) p(i, k) = g(rng);
        c(i, 0) = p(i, 2) + 0.3 * g(rng);
        c(i, 1) = -p(i, 0) + g(rng);
    }
    const Eigen::MatrixXd r = channel_correlation(p, c);
    REQUIRE(r.rows() == 3);
    REQUIRE(r.cols() == 2);
    for (int i = 0; i < 3; ++i)
        for (int k = 0; k < 2; ++k) CHECK(r(i, k) == doctest::Approx(pearson(p.col(i), c.col(k))).epsilon(1e-12));
    CHECK(r(2, 0) > 0.9);
    CHECK(r(0, 1) < -0.5);
}

TEST_CASE("channel correlation flags constant columns and rejects bad input") {
    Eigen::MatrixXd p = Eigen::MatrixXd::Random(50, 2);
    p.col(1).setConstant(1.0);
    const Eigen::MatrixXd r = channel_correlation(p, Eigen::MatrixXd::Random(50, 1));
    CHECK(std::isfinite(r(0, 0)));
    CHECK(std::isnan(r(1, 0)));
    CHECK_THROWS_AS(channel_correlation(Eigen::MatrixXd::Random(29, 1), Eigen::MatrixXd::Random(29, 1)), InputError);
    CHECK_THROWS_AS(channel_correlation(Eigen::MatrixXd::Random(40, 1), Eigen::MatrixXd::Random(41, 1)), InputError);
}

TEST_CASE("correct labels are confirmed with positive margins") {
    const GridTopology t = fig4_feeder();
    const VoltagePanel v = voltages(t, 1, 2000);
    const PhaseAssignment a = assign_phases(true_tree(t), v);
    CHECK(a.all_resolved());
    CHECK(diagnose_labels(a, identity_labels(t.num_buses())).empty());
    CHECK(phase_accuracy(a, v.labels) == 1.0);
    for (int b = 2; b < t.num_buses(); ++b) CHECK(a.margin[b] > 0.0);
}

TEST_CASE("corrupted labels on the 123-bus feeder are recovered and diagnosed") {
    // The measured substation varies, so even a corrupted feeder head has a
    // trusted reference to match against.
    const GridTopology t = feeder123();
    for (std::uint64_t seed : {11u, 12u, 13u}) {
        CAPTURE(seed);
        const VoltagePanel v = corrupt_labels(voltages(t, seed, 8760, 0.001), 0.1, seed);
        std::vector<int> corrupted;
        for (int b = 1; b < t.num_buses(); ++b)
            if (!v.labels[b].is_identity()) corrupted.push_back(b);
        CHECK(corrupted.size() == 13);
        const PhaseAssignment a = assign_phases(true_tree(t), v);
        CHECK(a.all_resolved());
        CHECK(phase_accuracy(a, v.labels) == 1.0);
        CHECK(diagnose_labels(a, identity_labels(t.num_buses())) == corrupted);
    }
}

TEST_CASE("corrupted 33-bus labels match the ground-truth permutation") {
    const GridTopology t = feeder33();
    const VoltagePanel v = corrupt_labels(voltages(t, 21, 8760, 0.001), 0.1, 21);
    const PhaseAssignment a = assign_phases(true_tree(t), v);
    for (int b = 1; b < t.num_buses(); ++b) CHECK(a.map[b] == v.labels[b]);
}

TEST_CASE("a channel permutation at one bus permutes its recovered map") {
    const GridTopology t = fig4_feeder();
    const VoltagePanel clean = voltages(t, 8, 2000, 0.001);
    VoltagePanel swapped = clean;
    // Swap channels a and c of three-phase bus 6 by hand.
    swapped.values.col(VoltagePanel::column(6, Phase::A)).swap(swapped.values.col(VoltagePanel::column(6, Phase::C)));
    const PhaseAssignment a = assign_phases(true_tree(t), clean);
    const PhaseAssignment b = assign_phases(true_tree(t), swapped);
    CHECK(b.map[6][Phase::A] == a.map[6][Phase::C]);
    CHECK(b.map[6][Phase::C] == a.map[6][Phase::A]);
    CHECK(b.map[6][Phase::B] == a.map[6][Phase::B]);
    for (int bus : {1, 2, 3, 4, 5, 7}) CHECK(b.map[bus] == a.map[bus]);
}

TEST_CASE("global magnitude scaling leaves the assignment unchanged") {
    const GridTopology t = feeder13();
    const VoltagePanel v = corrupt_labels(voltages(t, 9, 3000, 0.001), 0.3, 9);
    VoltagePanel scaled = v;
    scaled.values *= 3.7;
    const PhaseAssignment a = assign_phases(true_tree(t), v);
    const PhaseAssignment b = assign_phases(true_tree(t), scaled);
    for (int bus = 0; bus < t.num_buses(); ++bus) CHECK(a.map[bus] == b.map[bus]);
    CHECK(phase_accuracy(b, v.labels) == 1.0);
}

TEST_CASE("a stiff substation trusts the feeder head and says so") {
    const GridTopology t = fig4_feeder();
    const PhaseAssignment stiff = assign_phases(true_tree(t), voltages(t, 2, 500));
    REQUIRE(!stiff.warnings.empty());
    CHECK(stiff.warnings.front().find("feeder-head bus 1") != std::string::npos);
    CHECK(std::isnan(stiff.margin[1]));

    const VoltagePanel moving = corrupt_labels(voltages(t, 2, 2000, 0.002), 1.0, 5);
    const PhaseAssignment a = assign_phases(true_tree(t), moving);
    for (const auto& w : a.warnings) CHECK(w.find("feeder-head") == std::string::npos);
    CHECK(phase_accuracy(a, moving.labels) == 1.0);
    CHECK(a.margin[1] > 0.0);
}

TEST_CASE("single candidate buses have no margin") {
    // Bus 2 is single-phase under single-phase bus 1's lateral.
    std::vector<Branch> b{
        make_branch(0, 1, PhaseMask::parse("abc"), {0.2, 1.5}),
        make_branch(1, 2, PhaseMask::parse("b"), {0.2, 1.5}),
        make_branch(2, 3, PhaseMask::parse("b"), {0.2, 1.5}),
    };
    const GridTopology t(b);
    const PhaseAssignment a = assign_phases(true_tree(t), voltages(t, 4, 500));
    CHECK(a.all_resolved());
    CHECK(a.margin[2] > 0.0);
    CHECK(std::isnan(a.margin[3]));
}

TEST_CASE("raw magnitudes also resolve clean labels") {
    const GridTopology t = feeder13();
    const VoltagePanel v = corrupt_labels(voltages(t, 6, 4000), 0.2, 6);
    PhaseIdOptions o;
    o.raw_magnitude = true;
    const PhaseAssignment a = assign_phases(true_tree(t), v, o);
    CHECK(a.all_resolved());
}

TEST_CASE("unrooted trees and foreign buses are rejected") {
    const GridTopology t = fig4_feeder();
    const VoltagePanel v = voltages(t, 1, 100);
    EdgeSetEstimate e = true_tree(t);
    EdgeSetEstimate unrooted = e;
    unrooted.root = -1;
    CHECK_THROWS_AS(assign_phases(unrooted, v), InputError);
    e.edges.push_back({3, 12, 0.0});
    CHECK_THROWS_AS(assign_phases(e, v), InputError);
}

TEST_CASE("x over r warning") {
    CHECK_FALSE(x_over_r_warning(feeder123()).has_value());
    LineModel reactive{1.0, 0.1};
    const GridTopology t({make_branch(0, 1, PhaseMask::parse("abc"), reactive)});
    const auto w = x_over_r_warning(t);
    REQUIRE(w.has_value());
    CHECK(w->find("x/r") != std::string::npos);
}
