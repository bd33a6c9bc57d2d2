#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#if defined(_OPENMP)
#include <omp.h>
#endif

#include "gridtopo/error.hpp"
#include "gridtopo/feeders.hpp"
#include "gridtopo/info_core.hpp"
#include "gridtopo/synth_lab.hpp"
#include "oracles.hpp"

using namespace gridtopo;

namespace {

LineModel line(double length, double r) {
    LineModel l;
    l.length_miles = length;
    l.r_per_mile = r;
    return l;
}

GridTopology single_phase_chain(int buses) {
    std::vector<Branch> b;
    for (int i = 1; i < buses; ++i) b.push_back(make_branch(i - 1, i, PhaseMask::parse("a"), line(0.1 * i, 1.3)));
    return GridTopology(b);
}

// E[v v^H] estimate over the reduced present-phase columns (row 0 excluded).
Eigen::MatrixXcd sample_cov(const VoltagePanel& p, const GridTopology& t) {
    const PhaseIndex idx(t);
    Eigen::MatrixXcd x(p.num_samples() - 1, idx.size());
    for (int s = 0; s < idx.size(); ++s) {
        auto [bus, ph] = idx.slots()[s];
        x.col(s) = p.values.col(VoltagePanel::column(bus, ph)).tail(p.num_samples() - 1);
    }
    return (x.transpose() * x.conjugate()) / static_cast<double>(x.rows());
}

}  // namespace

TEST_CASE("zero injection gives zero increments") {
    const GridTopology t = fig4_feeder();
    InjectionSpec spec = default_injection(t, 1, 0.0);
    const VoltagePanel p = generate_increments(t, spec, 300);
    CHECK(p.values.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("two-bus scalar variance is Var(dI)/|Y11|^2") {
    const GridTopology t = single_phase_chain(2);
    InjectionSpec spec = default_injection(t, 3, 0.01);
    const double var_i = spec.covariance[1](0, 0).real();
    const cplx y11 = t.branches()[0].y_block(0, 0) * PerUnitBase{}.z_base_ohm();
    const AnalyticCovariance c = analytic_cov(t, spec);
    REQUIRE(c.sigma.rows() == 1);
    CHECK(c.sigma(0, 0).real() == doctest::Approx(var_i / std::norm(y11)).epsilon(1e-12));
    const VoltagePanel p = generate_increments(t, spec, 40000);
    CHECK(sample_cov(p, t)(0, 0).real() == doctest::Approx(var_i / std::norm(y11)).epsilon(0.03));
}

TEST_CASE("scalar chain covariance matches the hand-inverted 2x2") {
    const GridTopology t = single_phase_chain(3);
    InjectionSpec spec = default_injection(t, 5, 0.02);
    const double zb = PerUnitBase{}.z_base_ohm();
    const cplx z1 = 1.0 / (t.branches()[0].y_block(0, 0) * zb);
    const cplx z2 = 1.0 / (t.branches()[1].y_block(0, 0) * zb);
    Eigen::Matrix2cd z;
    z << z1, z1, z1, z1 + z2;
    Eigen::Matrix2cd si = Eigen::Matrix2cd::Zero();
    si(0, 0) = spec.covariance[1](0, 0);
    si(1, 1) = spec.covariance[2](0, 0);
    const Eigen::Matrix2cd expect = z * si * z.adjoint();
    const AnalyticCovariance c = analytic_cov(t, spec);
    CHECK((c.sigma - expect).cwiseAbs().maxCoeff() < 1e-12 * expect.cwiseAbs().maxCoeff());
}

TEST_CASE("sample covariance converges to the analytic one on the eight-bus feeder") {
    const GridTopology t = fig4_feeder();
    InjectionSpec spec = default_injection(t, 11);
    const VoltagePanel p = generate_increments(t, spec, 20001);
    const AnalyticCovariance c = analytic_cov(t, spec);
    const double rel = (sample_cov(p, t) - c.sigma).norm() / c.sigma.norm();
    CHECK(rel < 0.05);
}

TEST_CASE("generation is deterministic, chunk-stable and matches the serial reference") {
    const GridTopology t = feeder13();
    const InjectionSpec spec = default_injection(t, 21);
    const VoltagePanel a = generate_increments(t, spec, 1000);
    const VoltagePanel b = generate_increments(t, spec, 1000);
    CHECK((a.values - b.values).cwiseAbs().maxCoeff() == 0.0);
    CHECK(a.values.row(0).cwiseAbs().maxCoeff() == 0.0);
    const VoltagePanel s = generate_increments_serial(t, spec, 1000);
    CHECK((a.values - s.values).cwiseAbs().maxCoeff() < 1e-12);
#if defined(_OPENMP)
    const int before = omp_get_max_threads();
    omp_set_num_threads(3);
    const VoltagePanel c = generate_increments(t, spec, 1000);
    omp_set_num_threads(before);
    CHECK((a.values - c.values).cwiseAbs().maxCoeff() == 0.0);
#endif
    InjectionSpec other = spec;
    other.seed = 22;
    CHECK((generate_increments(t, other, 1000).values - a.values).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("recovered current increments are pairwise independent") {
    const GridTopology t = feeder13();
    const InjectionSpec spec = default_injection(t, 4);
    const VoltagePanel p = generate_increments(t, spec, 10001);
    const AdmittanceMatrix y = assemble_admittance(t);
    const PhaseIndex& idx = y.index;
    Eigen::MatrixXcd dv(idx.size(), p.num_samples() - 1);
    for (int s = 0; s < idx.size(); ++s) {
        auto [bus, ph] = idx.slots()[s];
        dv.row(s) = p.values.col(VoltagePanel::column(bus, ph)).tail(p.num_samples() - 1).transpose();
    }
    const Eigen::MatrixXcd di = y.reduced() * dv;
    // Per-bus real features (Re, Im of present phases).
    std::vector<std::vector<int>> groups(t.num_buses());
    std::vector<int> rows_of;
    Eigen::MatrixXd x(di.cols(), 2 * idx.size());
    for (int s = 0; s < idx.size(); ++s) {
        x.col(2 * s) = di.row(s).real().transpose();
        x.col(2 * s + 1) = di.row(s).imag().transpose();
        groups[idx.slots()[s].first].push_back(2 * s);
        groups[idx.slots()[s].first].push_back(2 * s + 1);
    }
    const Eigen::MatrixXd xc = x.rowwise() - x.colwise().mean();
    const Eigen::MatrixXd cov = xc.transpose() * xc / static_cast<double>(x.rows() - 1);
    double worst = 0.0;
    for (int i = 1; i < t.num_buses(); ++i)
        for (int k = i + 1; k < t.num_buses(); ++k) worst = std::max(worst, oracle::mi(cov, groups, {i}, {k}));
    CHECK(worst < 0.02);
}

TEST_CASE("increment normalization hits the target") {
    const GridTopology t = feeder33();
    InjectionSpec spec = default_injection(t, 2);
    normalize_injection(spec, t, 0.003);
    CHECK(max_increment_std(t, spec) == doctest::Approx(0.003).epsilon(1e-9));
    InjectionSpec zero = default_injection(t, 2, 0.0);
    CHECK_THROWS_AS(normalize_injection(zero, t, 0.003), GenerationError);
}

TEST_CASE("injection validation") {
    const GridTopology t = fig4_feeder();
    InjectionSpec spec = default_injection(t, 1);
    CHECK_NOTHROW(validate_injection(t, spec));
    InjectionSpec absent = spec;
    absent.covariance[5](0, 0) = 1e-4;  // bus 5 is phase c only
    CHECK_THROWS_AS(validate_injection(t, absent), GenerationError);
    CHECK_THROWS_AS(generate_increments(t, absent, 10), GenerationError);
    InjectionSpec nonherm = spec;
    nonherm.covariance[1](0, 1) = cplx(1e-4, 0.0);
    CHECK_THROWS_AS(validate_injection(t, nonherm), GenerationError);
    InjectionSpec negative = spec;
    negative.covariance[1](0, 0) = -1e-4;
    CHECK_THROWS_AS(validate_injection(t, negative), GenerationError);
}

TEST_CASE("integration round-trips through differencing") {
    const GridTopology t = fig4_feeder();
    const VoltagePanel dv = generate_increments(t, default_injection(t, 8, 0.01), 500);
    const Eigen::VectorXcd v0 = flat_start(t);
    const VoltagePanel v = integrate_voltages(dv, v0);
    for (int c = 0; c < v.values.cols(); ++c) CHECK(std::abs(v.values(0, c) - v0(c)) == 0.0);
    CHECK(std::abs(v0(VoltagePanel::column(1, Phase::B)) - std::polar(1.0, -2.0 * std::numbers::pi / 3.0)) < 1e-15);
    const IncrementPanel inc = difference(v);
    REQUIRE(inc.delta.rows() == 499);
    CHECK((inc.delta - dv.values.bottomRows(499)).cwiseAbs().maxCoeff() < 1e-12);

    VoltagePanel zero = dv;
    zero.values.setZero();
    const VoltagePanel flat = integrate_voltages(zero, v0);
    for (int s = 0; s < flat.num_samples(); ++s) CHECK((flat.values.row(s).transpose() - v0).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("meter noise respects the bound and leaves angles alone") {
    const GridTopology t = fig4_feeder();
    const VoltagePanel v = integrate_voltages(generate_increments(t, default_injection(t, 8, 0.01), 2000), flat_start(t));
    NoiseSpec none;
    CHECK((apply_noise(v, none, 1).values - v.values).cwiseAbs().maxCoeff() == 0.0);
    NoiseSpec n{0.005, NoiseDistribution::Uniform};
    const VoltagePanel noisy = apply_noise(v, n, 1);
    double worst = 0.0, angle = 0.0;
    for (int s = 0; s < v.num_samples(); ++s)
        for (int b = 0; b < v.num_buses(); ++b)
            for (Phase p : v.masks[b].phases()) {
                worst = std::max(worst, std::abs(noisy.magnitude(s, b, p) / v.magnitude(s, b, p) - 1.0));
                angle = std::max(angle, std::abs(std::remainder(noisy.angle(s, b, p) - v.angle(s, b, p), 2 * std::numbers::pi)));
            }
    CHECK(worst <= 0.005 + 1e-15);
    CHECK(worst > 0.004);
    CHECK(angle < 1e-12);
    CHECK((apply_noise(v, n, 1).values - noisy.values).cwiseAbs().maxCoeff() == 0.0);
    CHECK_THROWS_AS(apply_noise(v, NoiseSpec{-0.1, NoiseDistribution::Uniform}, 1), InputError);
}

namespace {

// Kolmogorov-Smirnov statistic of samples against a CDF.
template <class Cdf>
double ks(std::vector<double> x, Cdf cdf) {
    std::sort(x.begin(), x.end());
    double d = 0.0;
    const double n = static_cast<double>(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double f = cdf(x[i]);
        d = std::max({d, f - i / n, (i + 1) / n - f});
    }
    return d;
}

std::vector<double> noise_draws(NoiseDistribution dist, double bound) {
    // Single-phase two-bus panel with unit magnitudes: the relative error is the draw.
    GridTopology t = single_phase_chain(2);
    VoltagePanel p = make_panel(t, 50000);
    for (int s = 0; s < p.num_samples(); ++s) {
        p.values(s, VoltagePanel::column(0, Phase::A)) = 1.0;
        p.values(s, VoltagePanel::column(1, Phase::A)) = 1.0;
    }
    const VoltagePanel n = apply_noise(p, NoiseSpec{bound, dist}, 77);
    std::vector<double> out;
    for (int s = 0; s < p.num_samples(); ++s)
        for (int b = 0; b < 2; ++b) out.push_back(n.magnitude(s, b, Phase::A) - 1.0);
    return out;
}

}  // namespace

TEST_CASE("noise distributions pass a KS test at alpha 0.01") {
    const double bound = 0.005;
    const double crit = 1.628 / std::sqrt(100000.0);
    const auto u = noise_draws(NoiseDistribution::Uniform, bound);
    CHECK(ks(u, [&](double x) { return std::clamp((x + bound) / (2 * bound), 0.0, 1.0); }) < crit);
    const auto g = noise_draws(NoiseDistribution::TruncatedGaussian, bound);
    const double sigma = bound / 2.0;
    auto phi = [&](double x) { return 0.5 * std::erfc(-x / (sigma * std::sqrt(2.0))); };
    const double lo = phi(-bound), hi = phi(bound);
    CHECK(ks(g, [&](double x) { return std::clamp((phi(x) - lo) / (hi - lo), 0.0, 1.0); }) < crit);
    CHECK(*std::max_element(g.begin(), g.end()) <= bound);
}

TEST_CASE("magnitude-only panels keep |v| and lose angles") {
    const GridTopology t = fig4_feeder();
    const VoltagePanel v = integrate_voltages(generate_increments(t, default_injection(t, 8, 0.01), 50), flat_start(t));
    const VoltagePanel m = to_magnitude_only(v);
    CHECK(m.magnitude_only);
    CHECK(m.magnitude(7, 3, Phase::B) == doctest::Approx(v.magnitude(7, 3, Phase::B)).epsilon(1e-15));
    CHECK(std::isnan(m.angle(7, 3, Phase::B)));
}

TEST_CASE("subsampling keeps every k-th sample") {
    const GridTopology t = fig4_feeder();
    const VoltagePanel v = generate_increments(t, default_injection(t, 8), 100);
    const VoltagePanel s = subsample(v, 4);
    CHECK(s.num_samples() == 25);
    CHECK((s.values.row(3) - v.values.row(12)).cwiseAbs().maxCoeff() == 0.0);
    CHECK_THROWS_AS(subsample(v, 0), InputError);
}

TEST_CASE("label corruption counts and bookkeeping") {
    const GridTopology t = feeder123();
    const VoltagePanel v = integrate_voltages(generate_increments(t, default_injection(t, 8, 0.01), 40), flat_start(t));
    int multi = 0;
    for (int b = 1; b < t.num_buses(); ++b) multi += t.mask(b).count() > 1 ? 1 : 0;

    const VoltagePanel none = corrupt_labels(v, 0.0, 3);
    for (const auto& l : none.labels) CHECK(l.is_identity());
    CHECK((none.values - v.values).cwiseAbs().maxCoeff() == 0.0);

    const VoltagePanel ten = corrupt_labels(v, 0.10, 3);
    int permuted = 0;
    for (int b = 0; b < t.num_buses(); ++b) {
        if (ten.labels[b].is_identity()) continue;
        ++permuted;
        CHECK(b != 0);
        CHECK(ten.labels[b].is_permutation_within(t.mask(b)));
        // Channel ch of the corrupted panel carries physical phase labels[ch].
        for (Phase ch : t.mask(b).phases())
            CHECK(ten.values(5, VoltagePanel::column(b, ch)) == v.values(5, VoltagePanel::column(b, ten.labels[b][ch])));
    }
    CHECK(permuted == 13);
    CHECK(corruption_count(v, 0.10) == 13);

    const VoltagePanel all = corrupt_labels(v, 1.0, 3);
    int all_permuted = 0;
    for (int b = 1; b < t.num_buses(); ++b) all_permuted += all.labels[b].is_identity() ? 0 : 1;
    CHECK(all_permuted == multi);
    CHECK_THROWS_AS(corrupt_labels(v, 1.5, 3), InputError);
    CHECK_THROWS_AS(corrupt_labels(v, -0.1, 3), InputError);
}
