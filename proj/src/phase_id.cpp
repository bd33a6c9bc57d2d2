#include "gridtopo/phase_id.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <set>
#include <sstream>

#include "gridtopo/error.hpp"

namespace gridtopo {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Series per panel column: |v| or its increments.
Eigen::MatrixXd magnitude_series(const VoltagePanel& panel, bool raw) {
    Eigen::MatrixXd mag = panel.magnitude_only ? Eigen::MatrixXd(panel.values.real()) : Eigen::MatrixXd(panel.values.cwiseAbs());
    if (raw) return mag;
    const Eigen::Index t = std::max<Eigen::Index>(mag.rows() - 1, 0);
    return mag.bottomRows(t) - mag.topRows(t);
}

struct Candidate {
    double score;
    std::vector<int> parent_index;  // per child channel
};

// All injective maps from k child channels into kp parent channels.
void enumerate(int k, int kp, std::vector<int>& current, std::vector<bool>& used, std::vector<std::vector<int>>& out) {
    if (static_cast<int>(current.size()) == k) {
        out.push_back(current);
        return;
    }
    for (int j = 0; j < kp; ++j) {
        if (used[j]) continue;
        used[j] = true;
        current.push_back(j);
        enumerate(k, kp, current, used, out);
        current.pop_back();
        used[j] = false;
    }
}

}  // namespace

Eigen::MatrixXd channel_correlation(const Eigen::MatrixXd& parent, const Eigen::MatrixXd& child) {
    if (parent.rows() != child.rows()) throw InputError("channel series are not aligned");
    if (parent.rows() < kMinCorrelationSamples)
        throw InputError("need at least " + std::to_string(kMinCorrelationSamples) + " samples for channel correlation");
    auto standardize = [](const Eigen::MatrixXd& x, std::vector<bool>& flat) {
        Eigen::MatrixXd z = x.rowwise() - x.colwise().mean();
        flat.assign(z.cols(), false);
        for (Eigen::Index c = 0; c < z.cols(); ++c) {
            const double norm = z.col(c).norm();
            if (!(norm > 0.0)) {
                flat[c] = true;
            } else {
                z.col(c) /= norm;
            }
        }
        return z;
    };
    std::vector<bool> flat_p, flat_c;
    const Eigen::MatrixXd zp = standardize(parent, flat_p);
    const Eigen::MatrixXd zc = standardize(child, flat_c);
    Eigen::MatrixXd corr = zp.transpose() * zc;
    for (Eigen::Index i = 0; i < corr.rows(); ++i)
        for (Eigen::Index j = 0; j < corr.cols(); ++j)
            if (flat_p[i] || flat_c[j]) corr(i, j) = kNaN;
    return corr;
}

bool PhaseAssignment::all_resolved() const {
    for (std::size_t b = 1; b < resolved.size(); ++b)
        if (!resolved[b]) return false;
    return true;
}

PhaseAssignment assign_phases(const EdgeSetEstimate& tree, const VoltagePanel& panel, const PhaseIdOptions& options) {
    if (!tree.rooted()) throw InputError("phase identification needs a rooted tree");
    const int n = panel.num_buses();
    PhaseAssignment out;
    out.map.assign(n, ChannelMap::identity());
    out.margin.assign(n, kNaN);
    out.resolved.assign(n, false);
    out.masks = panel.masks;
    out.resolved[0] = true;

    std::vector<std::vector<int>> adj(n);
    for (const auto& e : tree.edges) {
        if (e.u < 0 || e.v >= n) throw InputError("estimated edge outside the panel's buses");
        adj[e.u].push_back(e.v);
        adj[e.v].push_back(e.u);
    }
    for (auto& a : adj) std::sort(a.begin(), a.end());

    const Eigen::MatrixXd series = magnitude_series(panel, options.raw_magnitude);
    auto columns = [&](int bus) {
        const auto channels = panel.masks[bus].phases();
        Eigen::MatrixXd m(series.rows(), static_cast<Eigen::Index>(channels.size()));
        for (std::size_t j = 0; j < channels.size(); ++j) m.col(static_cast<Eigen::Index>(j)) = series.col(VoltagePanel::column(bus, channels[j]));
        return m;
    };

    std::vector<int> parent(n, -1);
    std::vector<bool> seen(n, false);
    std::queue<int> q;
    q.push(0);
    seen[0] = true;
    while (!q.empty()) {
        const int p = q.front();
        q.pop();
        for (int c : adj[p]) {
            if (seen[c]) continue;
            seen[c] = true;
            parent[c] = p;
            q.push(c);

            const auto pch = panel.masks[p].phases();
            const auto cch = panel.masks[c].phases();
            const Eigen::MatrixXd corr = channel_correlation(columns(p), columns(c));
            if (corr.array().isNaN().all()) {
                if (p == 0) {
                    out.resolved[c] = true;
                    out.warnings.push_back("substation has no voltage variation; labels of feeder-head bus " + std::to_string(c) +
                                           " are trusted as recorded");
                } else {
                    out.warnings.push_back("bus " + std::to_string(c) + ": every channel correlation is undefined; labels kept as recorded");
                }
                continue;
            }
            if (cch.size() > pch.size()) {
                out.warnings.push_back("bus " + std::to_string(c) + " has more phases than its estimated parent " + std::to_string(p) +
                                       "; labels kept as recorded");
                continue;
            }
            if (!out.resolved[p] && p != 0)
                out.warnings.push_back("bus " + std::to_string(c) + " matched against unresolved parent " + std::to_string(p));

            std::vector<std::vector<int>> maps;
            std::vector<int> current;
            std::vector<bool> used(pch.size(), false);
            enumerate(static_cast<int>(cch.size()), static_cast<int>(pch.size()), current, used, maps);
            std::vector<Candidate> cands;
            for (auto& m : maps) {
                double s = 0.0;
                for (std::size_t j = 0; j < m.size(); ++j) {
                    const double r = corr(m[j], static_cast<Eigen::Index>(j));
                    if (!std::isnan(r)) s += r;
                }
                cands.push_back({s, std::move(m)});
            }
            // Stable: equal scores keep enumeration order (identity first).
            std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) { return a.score > b.score; });
            const Candidate& best = cands.front();
            for (std::size_t j = 0; j < cch.size(); ++j) out.map[c][cch[j]] = out.map[p][pch[best.parent_index[j]]];
            out.margin[c] = cands.size() > 1 ? best.score - cands[1].score : kNaN;
            out.resolved[c] = true;
        }
    }
    for (int b = 1; b < n; ++b)
        if (!seen[b]) out.warnings.push_back("bus " + std::to_string(b) + " is not reachable from the slack in the estimate");
    return out;
}

std::vector<int> diagnose_labels(const PhaseAssignment& assignment, const std::vector<ChannelMap>& claimed) {
    std::vector<int> out;
    for (std::size_t b = 1; b < assignment.map.size(); ++b) {
        if (!assignment.resolved[b]) continue;
        for (Phase ch : assignment.masks[b].phases()) {
            if (assignment.map[b][ch] != claimed.at(b)[ch]) {
                out.push_back(static_cast<int>(b));
                break;
            }
        }
    }
    return out;
}

double phase_accuracy(const PhaseAssignment& assignment, const std::vector<ChannelMap>& truth) {
    const int n = static_cast<int>(assignment.map.size());
    if (n <= 1) return 1.0;
    int good = 0;
    for (int b = 1; b < n; ++b) {
        bool ok = true;
        for (Phase ch : assignment.masks[b].phases()) ok = ok && assignment.map[b][ch] == truth.at(b)[ch];
        if (ok) ++good;
    }
    return static_cast<double>(good) / (n - 1);
}

std::optional<std::string> x_over_r_warning(const GridTopology& topology, double limit) {
    const double worst = topology.max_x_over_r();
    if (worst <= limit) return std::nullopt;
    std::ostringstream os;
    os << "largest line x/r is " << worst << " (> " << limit
       << "); voltage-magnitude correlation may not single out the same phase on reactive lines";
    return os.str();
}

}  // namespace gridtopo
