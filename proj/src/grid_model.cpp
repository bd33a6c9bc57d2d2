#include "gridtopo/grid_model.hpp"

#include <algorithm>
#include <limits>
#include <queue>
#include <set>
#include <string>

#include <Eigen/SVD>

#include "gridtopo/error.hpp"

namespace gridtopo {

namespace {

// Indices into LineModel::h_mut for each phase pair.
int mutual_slot(Phase p, Phase q) {
    int a = std::min(index_of(p), index_of(q));
    int b = std::max(index_of(p), index_of(q));
    if (a == 0 && b == 1) return 0;
    if (a == 1 && b == 2) return 1;
    return 2;  // a-c
}

Eigen::MatrixXcd restrict(const Matrix3c& m, const std::vector<Phase>& phases) {
    const auto n = static_cast<Eigen::Index>(phases.size());
    Eigen::MatrixXcd out(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) out(i, j) = m(index_of(phases[i]), index_of(phases[j]));
    return out;
}

}  // namespace

double LineModel::h_mutual(Phase p, Phase q) const { return h_mut[mutual_slot(p, q)]; }

double LineModel::x_over_r() const {
    double h = *std::max_element(h_self.begin(), h_self.end());
    return kCarsonReactanceFactor * h / (r_per_mile + kCarsonEarthResistance);
}

Matrix3c carson_impedance(const LineModel& line, PhaseMask mask) {
    if (!(line.length_miles > 0.0)) throw InvalidLineError("line length must be positive");
    if (!(line.r_per_mile > 0.0)) throw InvalidLineError("line resistance must be positive");
    Matrix3c z = Matrix3c::Zero();
    for (Phase p : mask.phases()) {
        for (Phase q : mask.phases()) {
            cplx per_mile = p == q
                ? cplx(line.r_per_mile + kCarsonEarthResistance, kCarsonReactanceFactor * line.h_self[index_of(p)])
                : cplx(kCarsonEarthResistance, kCarsonReactanceFactor * line.h_mutual(p, q));
            z(index_of(p), index_of(q)) = per_mile * line.length_miles;
        }
    }
    return z;
}

Matrix3c branch_admittance(const Matrix3c& z, PhaseMask mask) {
    const auto phases = mask.phases();
    if (phases.empty()) throw SingularLineError("branch has no phases", 0.0);
    Eigen::MatrixXcd sub = restrict(z, phases);
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(sub);
    const auto& sv = svd.singularValues();
    double smax = sv(0);
    double smin = sv(sv.size() - 1);
    double cond = smin > 0.0 ? smax / smin : std::numeric_limits<double>::infinity();
    if (!(smin > 0.0) || cond > 1e13) throw SingularLineError("singular line impedance", cond);
    Eigen::MatrixXcd inv = sub.inverse();
    Matrix3c y = Matrix3c::Zero();
    for (std::size_t i = 0; i < phases.size(); ++i)
        for (std::size_t j = 0; j < phases.size(); ++j)
            y(index_of(phases[i]), index_of(phases[j])) = inv(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    // Exact symmetry: average out rounding from the inverse.
    Matrix3c sym = 0.5 * (y + y.transpose());
    return sym;
}

Branch make_branch(int parent, int child, PhaseMask mask, const LineModel& line) {
    Branch b;
    b.parent = parent;
    b.child = child;
    b.mask = mask;
    b.line = line;
    b.y_block = branch_admittance(carson_impedance(line, mask), mask);
    return b;
}

GridTopology::GridTopology(std::vector<Branch> branches, std::vector<Branch> chords)
    : branches_(std::move(branches)), chords_(std::move(chords)) {
    const int n = static_cast<int>(branches_.size()) + 1;
    parent_.assign(n, -1);
    children_.assign(n, {});
    std::vector<const Branch*> incoming(n, nullptr);
    for (const auto& b : branches_) {
        if (b.child <= 0 || b.child >= n)
            throw TopologyError("bus ids must be contiguous 0.." + std::to_string(n - 1) + "; got child " + std::to_string(b.child));
        if (b.parent < 0 || b.parent >= n)
            throw TopologyError("branch parent " + std::to_string(b.parent) + " out of range");
        if (incoming[b.child])
            throw TopologyError("bus " + std::to_string(b.child) + " has more than one parent branch");
        if (b.mask.empty()) throw TopologyError("branch to bus " + std::to_string(b.child) + " has no phases");
        incoming[b.child] = &b;
        parent_[b.child] = b.parent;
        children_[b.parent].push_back(b.child);
    }
    for (auto& c : children_) std::sort(c.begin(), c.end());

    // Reachability from the slack also rules out cycles among parent links.
    std::vector<bool> seen(n, false);
    std::queue<int> q;
    q.push(0);
    seen[0] = true;
    int reached = 1;
    while (!q.empty()) {
        int u = q.front();
        q.pop();
        for (int c : children_[u]) {
            if (!seen[c]) {
                seen[c] = true;
                ++reached;
                q.push(c);
            }
        }
    }
    if (reached != n) throw TopologyError("branches do not form a tree connected to bus 0");

    buses_.resize(n);
    for (int i = 0; i < n; ++i) {
        buses_[i].id = i;
        buses_[i].is_slack = i == 0;
        buses_[i].mask = i == 0 ? PhaseMask::abc() : incoming[i]->mask;
    }
    for (const auto& b : branches_) {
        if (!b.mask.subset_of(buses_[b.parent].mask))
            throw TopologyError("branch " + std::to_string(b.parent) + "-" + std::to_string(b.child) + " phases '" +
                                b.mask.to_string() + "' not present at parent");
    }

    std::set<std::pair<int, int>> existing;
    for (const auto& b : branches_) existing.insert({std::min(b.parent, b.child), std::max(b.parent, b.child)});
    for (const auto& c : chords_) {
        if (c.parent < 0 || c.parent >= n || c.child < 0 || c.child >= n || c.parent == c.child)
            throw TopologyError("chord endpoints invalid");
        auto key = std::make_pair(std::min(c.parent, c.child), std::max(c.parent, c.child));
        if (!existing.insert(key).second)
            throw TopologyError("chord " + std::to_string(c.parent) + "-" + std::to_string(c.child) + " duplicates a branch");
        if (c.mask.empty() || !c.mask.subset_of(buses_[c.parent].mask) || !c.mask.subset_of(buses_[c.child].mask))
            throw TopologyError("chord phases must be present at both ends");
    }
}

std::vector<int> GridTopology::siblings_of(int bus) const {
    std::vector<int> out;
    int p = parent_of(bus);
    if (p < 0) return out;
    for (int c : children_of(p))
        if (c != bus) out.push_back(c);
    return out;
}

std::vector<int> GridTopology::descendants_of(int bus) const {
    std::vector<int> out;
    std::vector<int> stack(children_of(bus).begin(), children_of(bus).end());
    while (!stack.empty()) {
        int u = stack.back();
        stack.pop_back();
        out.push_back(u);
        for (int c : children_of(u)) stack.push_back(c);
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<std::pair<int, int>> GridTopology::tree_edges() const {
    std::vector<std::pair<int, int>> out;
    for (const auto& b : branches_) out.emplace_back(b.parent, b.child);
    return out;
}

std::vector<std::pair<int, int>> GridTopology::all_edges() const {
    std::vector<std::pair<int, int>> out;
    for (const auto& b : branches_) out.emplace_back(std::min(b.parent, b.child), std::max(b.parent, b.child));
    for (const auto& c : chords_) out.emplace_back(std::min(c.parent, c.child), std::max(c.parent, c.child));
    std::sort(out.begin(), out.end());
    return out;
}

double GridTopology::max_x_over_r() const {
    double worst = 0.0;
    for (const auto& b : branches_) worst = std::max(worst, b.line.x_over_r());
    for (const auto& c : chords_) worst = std::max(worst, c.line.x_over_r());
    return worst;
}

PhaseIndex::PhaseIndex(const GridTopology& topology) {
    index_.assign(3 * topology.num_buses(), -1);
    for (const auto& bus : topology.buses()) {
        if (bus.is_slack) continue;
        for (Phase p : bus.mask.phases()) {
            index_[3 * bus.id + index_of(p)] = static_cast<int>(slots_.size());
            slots_.emplace_back(bus.id, p);
        }
    }
}

Eigen::MatrixXcd AdmittanceMatrix::reduced() const {
    const int n = index.size();
    Eigen::MatrixXcd out(n, n);
    const auto& slots = index.slots();
    for (int r = 0; r < n; ++r) {
        int rr = 3 * (slots[r].first - 1) + index_of(slots[r].second);
        for (int c = 0; c < n; ++c) {
            int cc = 3 * (slots[c].first - 1) + index_of(slots[c].second);
            out(r, c) = blocks(rr, cc);
        }
    }
    return out;
}

Eigen::MatrixXcd AdmittanceMatrix::reduced_slack_coupling() const {
    const int n = index.size();
    Eigen::MatrixXcd out(n, 3);
    const auto& slots = index.slots();
    for (int r = 0; r < n; ++r) out.row(r) = slack_coupling.row(3 * (slots[r].first - 1) + index_of(slots[r].second));
    return out;
}

Eigen::SparseMatrix<cplx> AdmittanceMatrix::reduced_sparse() const {
    const int n = index.size();
    const auto& slots = index.slots();
    std::vector<Eigen::Triplet<cplx>> triplets;
    for (int r = 0; r < n; ++r) {
        int rr = 3 * (slots[r].first - 1) + index_of(slots[r].second);
        for (int c = 0; c < n; ++c) {
            int cc = 3 * (slots[c].first - 1) + index_of(slots[c].second);
            if (blocks(rr, cc) != cplx(0.0, 0.0)) triplets.emplace_back(r, c, blocks(rr, cc));
        }
    }
    Eigen::SparseMatrix<cplx> out(n, n);
    out.setFromTriplets(triplets.begin(), triplets.end());
    return out;
}

AdmittanceMatrix assemble_admittance(const GridTopology& topology, const PerUnitBase& base) {
    const int m = topology.num_non_slack();
    if (m <= 0) throw AssemblyError("topology has no non-slack buses");
    const double zb = base.z_base_ohm();
    AdmittanceMatrix y;
    y.blocks = Eigen::MatrixXcd::Zero(3 * m, 3 * m);
    y.slack_coupling = Eigen::MatrixXcd::Zero(3 * m, 3);
    y.index = PhaseIndex(topology);

    auto stamp = [&](const Branch& b) {
        Matrix3c ypu = b.y_block * zb;
        int i = b.parent;
        int k = b.child;
        if (i > 0) y.blocks.block<3, 3>(3 * (i - 1), 3 * (i - 1)) += ypu;
        if (k > 0) y.blocks.block<3, 3>(3 * (k - 1), 3 * (k - 1)) += ypu;
        if (i > 0 && k > 0) {
            y.blocks.block<3, 3>(3 * (i - 1), 3 * (k - 1)) -= ypu;
            y.blocks.block<3, 3>(3 * (k - 1), 3 * (i - 1)) -= ypu;
        } else {
            int other = i > 0 ? i : k;
            y.slack_coupling.block<3, 3>(3 * (other - 1), 0) -= ypu;
        }
    };
    for (const auto& b : topology.branches()) stamp(b);
    for (const auto& c : topology.chords()) stamp(c);

    Eigen::PartialPivLU<Eigen::MatrixXcd> lu(y.reduced());
    double rc = lu.rcond();
    if (!(rc > 1e-14)) throw AssemblyError("present-phase admittance matrix is singular (rcond " + std::to_string(rc) + ")");
    return y;
}

}  // namespace gridtopo
