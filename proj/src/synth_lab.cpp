#include "gridtopo/synth_lab.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/SparseLU>

#include "gridtopo/error.hpp"

namespace gridtopo {

namespace {

constexpr int kChunkRows = 256;

std::uint64_t chunk_seed(std::uint64_t seed, int chunk) {
    return splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(chunk) + 1));
}

// Square-root factor of the present-phase block: cov = L L^H.
Eigen::MatrixXcd sqrt_factor(const Matrix3c& cov, const std::vector<Phase>& phases) {
    const auto k = static_cast<Eigen::Index>(phases.size());
    Eigen::MatrixXcd sub(k, k);
    for (Eigen::Index i = 0; i < k; ++i)
        for (Eigen::Index j = 0; j < k; ++j) sub(i, j) = cov(index_of(phases[i]), index_of(phases[j]));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(sub);
    Eigen::VectorXd root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * root.asDiagonal();
}

// Everything the generator needs besides the linear solver.
struct Draws {
    std::vector<Eigen::MatrixXcd> factors;  // per bus (empty for slack)
    std::vector<std::vector<Phase>> phases;
    Eigen::MatrixXcd substation_factor;     // 3x3, or empty when stiff
    int reduced = 0;
};

Draws prepare_draws(const GridTopology& topology, const InjectionSpec& spec) {
    validate_injection(topology, spec);
    Draws d;
    const int n = topology.num_buses();
    d.factors.resize(n);
    d.phases.resize(n);
    for (int b = 1; b < n; ++b) {
        d.phases[b] = topology.mask(b).phases();
        d.factors[b] = sqrt_factor(spec.covariance[b], d.phases[b]);
        d.reduced += static_cast<int>(d.phases[b].size());
    }
    if (!spec.substation.isZero(0.0)) d.substation_factor = sqrt_factor(spec.substation, {Phase::A, Phase::B, Phase::C});
    return d;
}

// Fills dI (reduced x rows) and dV0 (3 x rows) for one chunk.
void draw_chunk(const Draws& d, std::uint64_t seed, int rows, Eigen::MatrixXcd& di, Eigen::MatrixXcd& dv0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, std::numbers::sqrt2 / 2.0);
    auto circular = [&] {
        double re = normal(rng);
        double im = normal(rng);
        return cplx(re, im);
    };
    di.setZero(d.reduced, rows);
    dv0.setZero(3, rows);
    cplx w[3];
    for (int r = 0; r < rows; ++r) {
        if (d.substation_factor.size() > 0) {
            for (int i = 0; i < 3; ++i) w[i] = circular();
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j) dv0(i, r) += d.substation_factor(i, j) * w[j];
        }
        int row = 0;
        for (std::size_t b = 1; b < d.factors.size(); ++b) {
            const auto k = static_cast<Eigen::Index>(d.phases[b].size());
            for (Eigen::Index i = 0; i < k; ++i) w[i] = circular();
            const Eigen::MatrixXcd& f = d.factors[b];
            for (Eigen::Index i = 0; i < k; ++i) {
                cplx acc = 0.0;
                for (Eigen::Index j = 0; j < k; ++j) acc += f(i, j) * w[j];
                di(row + i, r) = acc;
            }
            row += static_cast<int>(k);
        }
    }
}

// Exact solve of Y dV = rhs on a radial feeder by branch sweeps: each
// branch carries the summed right-hand side of its subtree, and
// dV_child = dV_parent + z_branch * subtree sum. The parent term is zero
// at the slack, whose coupling is already folded into rhs.
class RadialSweep {
  public:
    RadialSweep(const GridTopology& topology, const AdmittanceMatrix& y) {
        const Eigen::MatrixXcd yr = y.reduced();
        const Eigen::MatrixXcd ys = y.reduced_slack_coupling();
        std::vector<int> queue{0};
        for (std::size_t i = 0; i < queue.size(); ++i)
            for (int c : topology.children_of(queue[i])) queue.push_back(c);
        for (std::size_t i = 1; i < queue.size(); ++i) {
            const int c = queue[i];
            const int p = topology.parent_of(c);
            Step st;
            for (Phase ph : topology.mask(c).phases()) {
                st.rows.push_back(y.index(c, ph));
                st.parent_rows.push_back(p == 0 ? -1 : y.index(p, ph));
            }
            const auto k = static_cast<Eigen::Index>(st.rows.size());
            Eigen::MatrixXcd branch(k, k);
            for (Eigen::Index a = 0; a < k; ++a)
                for (Eigen::Index b = 0; b < k; ++b)
                    branch(a, b) = p == 0 ? -ys(st.rows[a], index_of(topology.mask(c).phases()[b]))
                                          : -yr(st.rows[a], st.parent_rows[b]);
            st.z = branch.inverse();
            steps_.push_back(std::move(st));
        }
    }

    Eigen::MatrixXcd operator()(const Eigen::MatrixXcd& rhs) const {
        Eigen::MatrixXcd sum = rhs;
        for (auto it = steps_.rbegin(); it != steps_.rend(); ++it)
            for (std::size_t a = 0; a < it->rows.size(); ++a)
                if (it->parent_rows[a] >= 0) sum.row(it->parent_rows[a]) += sum.row(it->rows[a]);
        Eigen::MatrixXcd dv(rhs.rows(), rhs.cols());
        Eigen::MatrixXcd block;
        for (const Step& st : steps_) {
            block = st.z * sum(st.rows, Eigen::all);
            for (std::size_t a = 0; a < st.rows.size(); ++a) {
                if (st.parent_rows[a] >= 0)
                    dv.row(st.rows[a]) = dv.row(st.parent_rows[a]) + block.row(static_cast<Eigen::Index>(a));
                else
                    dv.row(st.rows[a]) = block.row(static_cast<Eigen::Index>(a));
            }
        }
        return dv;
    }

  private:
    struct Step {
        std::vector<int> rows;         // reduced rows of the child's phases
        std::vector<int> parent_rows;  // same phases at the parent; -1 at the slack
        Eigen::MatrixXcd z;
    };
    std::vector<Step> steps_;  // breadth-first, parents before children
};

template <class Solver>
void generate_into(VoltagePanel& panel, const AdmittanceMatrix& y, const Draws& d, std::uint64_t seed, int samples,
                   const Solver& solve, bool parallel) {
    const Eigen::MatrixXcd ys = y.reduced_slack_coupling();
    const auto& slots = y.index.slots();
    const int chunks = samples > 1 ? (samples - 2) / kChunkRows + 1 : 0;
    bool failed = false;
#if defined(_OPENMP)
#pragma omp parallel for schedule(dynamic) if (parallel)
#endif
    for (int c = 0; c < chunks; ++c) {
        const int first = 1 + c * kChunkRows;
        const int rows = std::min(kChunkRows, samples - first);
        Eigen::MatrixXcd di, dv0;
        draw_chunk(d, chunk_seed(seed, c), rows, di, dv0);
        Eigen::MatrixXcd rhs = di;
        if (d.substation_factor.size() > 0) rhs.noalias() -= ys * dv0;
        Eigen::MatrixXcd dv = solve(rhs);
        if (!dv.allFinite()) {
#if defined(_OPENMP)
#pragma omp atomic write
#endif
            failed = true;
        }
        for (int r = 0; r < rows; ++r) {
            for (int p = 0; p < 3; ++p) panel.values(first + r, p) = dv0(p, r);
            for (std::size_t s = 0; s < slots.size(); ++s)
                panel.values(first + r, VoltagePanel::column(slots[s].first, slots[s].second)) = dv(static_cast<Eigen::Index>(s), r);
        }
    }
    (void)parallel;
    if (failed) throw GenerationError("linear solve produced non-finite voltage increments");
}

}  // namespace

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

InjectionSpec default_injection(const GridTopology& topology, std::uint64_t seed, double scale, double substation_scale) {
    InjectionSpec spec;
    spec.seed = seed;
    spec.covariance.assign(topology.num_buses(), Matrix3c::Zero());
    std::mt19937_64 rng(splitmix64(seed ^ 0x5eedc0facULL));
    std::uniform_real_distribution<double> u(0.5, 1.5);
    for (int b = 1; b < topology.num_buses(); ++b)
        for (Phase p : topology.mask(b).phases()) spec.covariance[b](index_of(p), index_of(p)) = scale * scale * u(rng);
    spec.substation = Matrix3c::Identity() * (substation_scale * substation_scale);
    return spec;
}

void scale_injection(InjectionSpec& spec, const std::vector<int>& buses, double factor) {
    for (int b : buses) spec.covariance.at(b) *= factor;
}

double max_increment_std(const GridTopology& topology, const InjectionSpec& spec, const PerUnitBase& base) {
    InjectionSpec buses_only = spec;
    buses_only.substation = Matrix3c::Zero();
    const AnalyticCovariance cov = analytic_cov(topology, buses_only, false, base);
    return std::sqrt(std::max(0.0, cov.sigma.diagonal().real().maxCoeff()));
}

void normalize_injection(InjectionSpec& spec, const GridTopology& topology, double target, const PerUnitBase& base) {
    if (!(target > 0.0)) throw GenerationError("increment scale must be positive");
    const double current = max_increment_std(topology, spec, base);
    if (!(current > 0.0)) throw GenerationError("cannot normalize all-zero injections");
    const double factor = (target / current) * (target / current);
    for (std::size_t b = 1; b < spec.covariance.size(); ++b) spec.covariance[b] *= factor;
}

void validate_injection(const GridTopology& topology, const InjectionSpec& spec) {
    if (static_cast<int>(spec.covariance.size()) != topology.num_buses())
        throw GenerationError("injection spec has " + std::to_string(spec.covariance.size()) + " buses, topology has " +
                              std::to_string(topology.num_buses()));
    auto check = [](const Matrix3c& c, PhaseMask mask, const std::string& who) {
        for (Phase p : kAllPhases) {
            if (mask.has(p)) continue;
            if (!c.row(index_of(p)).isZero(0.0) || !c.col(index_of(p)).isZero(0.0))
                throw GenerationError(who + ": covariance nonzero on absent phase " + std::string(1, to_char(p)));
        }
        double scale = std::max(c.cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
        if ((c - c.adjoint()).cwiseAbs().maxCoeff() > 1e-12 * scale) throw GenerationError(who + ": covariance not Hermitian");
        Eigen::SelfAdjointEigenSolver<Matrix3c> es(c, Eigen::EigenvaluesOnly);
        if (es.eigenvalues().minCoeff() < -1e-12 * scale) throw GenerationError(who + ": covariance not positive semidefinite");
    };
    for (int b = 1; b < topology.num_buses(); ++b) check(spec.covariance[b], topology.mask(b), "bus " + std::to_string(b));
    check(spec.substation, PhaseMask::abc(), "substation");
}

double VoltagePanel::magnitude(int t, int bus, Phase channel) const {
    const cplx v = values(t, column(bus, channel));
    return magnitude_only ? v.real() : std::abs(v);
}

double VoltagePanel::angle(int t, int bus, Phase channel) const {
    if (magnitude_only) return std::numeric_limits<double>::quiet_NaN();
    return std::arg(values(t, column(bus, channel)));
}

VoltagePanel make_panel(const GridTopology& topology, int samples) {
    VoltagePanel panel;
    panel.values = Eigen::MatrixXcd::Zero(samples, 3 * topology.num_buses());
    for (const auto& bus : topology.buses()) panel.masks.push_back(bus.mask);
    panel.labels.assign(topology.num_buses(), ChannelMap::identity());
    return panel;
}

VoltagePanel generate_increments(const GridTopology& topology, const InjectionSpec& spec, int samples,
                                 const PerUnitBase& base) {
    if (samples < 1) throw GenerationError("need at least one sample");
    AdmittanceMatrix y = assemble_admittance(topology, base);
    Draws d = prepare_draws(topology, spec);
    VoltagePanel panel = make_panel(topology, samples);
    if (topology.chords().empty()) {
        const RadialSweep sweep(topology, y);
        generate_into(panel, y, d, spec.seed, samples, sweep, true);
        return panel;
    }
    Eigen::SparseLU<Eigen::SparseMatrix<cplx>> lu;
    Eigen::SparseMatrix<cplx> ys = y.reduced_sparse();
    lu.compute(ys);
    if (lu.info() != Eigen::Success) throw GenerationError("sparse factorization of the admittance matrix failed");
    generate_into(panel, y, d, spec.seed, samples, [&](const Eigen::MatrixXcd& rhs) -> Eigen::MatrixXcd { return lu.solve(rhs); },
                  true);
    return panel;
}

VoltagePanel generate_increments_serial(const GridTopology& topology, const InjectionSpec& spec, int samples,
                                        const PerUnitBase& base) {
    if (samples < 1) throw GenerationError("need at least one sample");
    AdmittanceMatrix y = assemble_admittance(topology, base);
    Draws d = prepare_draws(topology, spec);
    Eigen::PartialPivLU<Eigen::MatrixXcd> lu(y.reduced());
    VoltagePanel panel = make_panel(topology, samples);
    generate_into(panel, y, d, spec.seed, samples, [&](const Eigen::MatrixXcd& rhs) -> Eigen::MatrixXcd { return lu.solve(rhs); },
                  false);
    return panel;
}

AnalyticCovariance analytic_cov(const GridTopology& topology, const InjectionSpec& spec, bool include_slack,
                                const PerUnitBase& base) {
    validate_injection(topology, spec);
    AdmittanceMatrix y = assemble_admittance(topology, base);
    const auto& slots = y.index.slots();
    const int n = y.index.size();
    Eigen::PartialPivLU<Eigen::MatrixXcd> lu(y.reduced());
    Eigen::MatrixXcd z = lu.inverse();

    Eigen::MatrixXcd sigma_i = Eigen::MatrixXcd::Zero(n, n);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c)
            if (slots[r].first == slots[c].first)
                sigma_i(r, c) = spec.covariance[slots[r].first](index_of(slots[r].second), index_of(slots[c].second));

    Eigen::MatrixXcd g = -z * y.reduced_slack_coupling();  // dV response to dV_0
    Eigen::MatrixXcd sv = z * sigma_i * z.adjoint() + g * spec.substation * g.adjoint();

    AnalyticCovariance out;
    if (include_slack) {
        out.sigma.resize(n + 3, n + 3);
        out.sigma.topLeftCorner(3, 3) = spec.substation;
        out.sigma.bottomLeftCorner(n, 3) = g * spec.substation;
        out.sigma.topRightCorner(3, n) = out.sigma.bottomLeftCorner(n, 3).adjoint();
        out.sigma.bottomRightCorner(n, n) = sv;
        for (Phase p : kAllPhases) out.slots.emplace_back(0, p);
    } else {
        out.sigma = sv;
    }
    out.sigma = (0.5 * (out.sigma + out.sigma.adjoint())).eval();
    out.slots.insert(out.slots.end(), slots.begin(), slots.end());
    return out;
}

Eigen::VectorXcd flat_start(const GridTopology& topology) {
    Eigen::VectorXcd v = Eigen::VectorXcd::Zero(3 * topology.num_buses());
    const double shift = 2.0 * std::numbers::pi / 3.0;
    const double angles[3] = {0.0, -shift, shift};
    for (const auto& bus : topology.buses())
        for (Phase p : bus.mask.phases()) v(3 * bus.id + index_of(p)) = std::polar(1.0, angles[index_of(p)]);
    return v;
}

VoltagePanel integrate_voltages(const VoltagePanel& increments, const Eigen::VectorXcd& v0) {
    if (v0.size() != increments.values.cols()) throw InputError("flat-start profile does not match the panel width");
    VoltagePanel out = increments;
    const int t = increments.num_samples();
    if (t == 0) return out;
    // Column-wise running sums; the storage is column-major.
    for (Eigen::Index c = 0; c < out.values.cols(); ++c) {
        cplx acc = v0(c);
        for (int n = 0; n < t; ++n) out.values(n, c) = acc += increments.values(n, c);
    }
    return out;
}

VoltagePanel apply_noise(const VoltagePanel& panel, const NoiseSpec& spec, std::uint64_t seed) {
    if (!(spec.bound >= 0.0)) throw InputError("noise bound must be non-negative");
    VoltagePanel out = panel;
    if (spec.bound == 0.0) return out;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uniform(-spec.bound, spec.bound);
    std::normal_distribution<double> normal(0.0, spec.bound / 2.0);
    auto draw = [&] {
        if (spec.distribution == NoiseDistribution::Uniform) return uniform(rng);
        for (;;) {
            double e = normal(rng);
            if (std::abs(e) <= spec.bound) return e;
        }
    };
    std::vector<int> columns;
    for (int b = 0; b < panel.num_buses(); ++b)
        for (Phase p : panel.masks[b].phases()) columns.push_back(VoltagePanel::column(b, p));
    for (int t = 0; t < out.num_samples(); ++t)
        for (int c : columns) out.values(t, c) *= 1.0 + draw();
    return out;
}

VoltagePanel to_magnitude_only(const VoltagePanel& panel) {
    VoltagePanel out = panel;
    if (panel.magnitude_only) return out;
    out.values = panel.values.cwiseAbs().cast<cplx>();
    out.magnitude_only = true;
    return out;
}

VoltagePanel subsample(const VoltagePanel& panel, int step) {
    if (step < 1) throw InputError("subsampling step must be at least 1");
    VoltagePanel out = panel;
    const int rows = (panel.num_samples() + step - 1) / step;
    out.values.resize(rows, panel.values.cols());
    for (int r = 0; r < rows; ++r) out.values.row(r) = panel.values.row(r * step);
    out.sample_period = panel.sample_period * step;
    return out;
}

int corruption_count(const VoltagePanel& panel, double fraction) {
    if (!(fraction >= 0.0 && fraction <= 1.0)) throw InputError("label corruption fraction must lie in [0, 1]");
    int multi = 0;
    for (int b = 1; b < panel.num_buses(); ++b)
        if (panel.masks[b].count() > 1) ++multi;
    const int m = panel.num_buses() - 1;
    const int wanted = static_cast<int>(std::ceil(fraction * m - 1e-9));
    return std::min(wanted, multi);
}

VoltagePanel corrupt_labels(const VoltagePanel& panel, double fraction, std::uint64_t seed) {
    const int count = corruption_count(panel, fraction);
    VoltagePanel out = panel;
    if (count == 0) return out;
    std::vector<int> candidates;
    for (int b = 1; b < panel.num_buses(); ++b)
        if (panel.masks[b].count() > 1) candidates.push_back(b);
    std::mt19937_64 rng(seed);
    std::shuffle(candidates.begin(), candidates.end(), rng);
    candidates.resize(count);
    std::sort(candidates.begin(), candidates.end());

    for (int b : candidates) {
        const auto channels = panel.masks[b].phases();
        std::vector<std::vector<Phase>> perms;
        std::vector<Phase> perm = channels;
        while (std::next_permutation(perm.begin(), perm.end())) perms.push_back(perm);
        // next_permutation starts from the sorted (identity) order, so every
        // collected permutation is non-identity.
        const auto& pick = perms[std::uniform_int_distribution<std::size_t>(0, perms.size() - 1)(rng)];
        for (std::size_t i = 0; i < channels.size(); ++i) {
            const Phase ch = channels[i];
            const Phase from = pick[i];
            out.values.col(VoltagePanel::column(b, ch)) = panel.values.col(VoltagePanel::column(b, from));
            out.labels[b][ch] = panel.labels[b][from];
        }
    }
    return out;
}

}  // namespace gridtopo
