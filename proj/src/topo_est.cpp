#include "gridtopo/topo_est.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "gridtopo/error.hpp"

namespace gridtopo {

namespace {

class DisjointSets {
  public:
    explicit DisjointSets(int n) : parent_(n), rank_(n, 0) { std::iota(parent_.begin(), parent_.end(), 0); }

    int find(int x) {
        while (parent_[x] != x) {
            parent_[x] = parent_[parent_[x]];
            x = parent_[x];
        }
        return x;
    }

    bool unite(int a, int b) {
        a = find(a);
        b = find(b);
        if (a == b) return false;
        if (rank_[a] < rank_[b]) std::swap(a, b);
        parent_[b] = a;
        if (rank_[a] == rank_[b]) ++rank_[a];
        return true;
    }

  private:
    std::vector<int> parent_;
    std::vector<int> rank_;
};

bool edge_less(const WeightedEdge& a, const WeightedEdge& b) { return a.u != b.u ? a.u < b.u : a.v < b.v; }

}  // namespace

std::vector<std::pair<int, int>> EdgeSetEstimate::pairs(bool include_slack) const {
    std::vector<std::pair<int, int>> out;
    for (const auto& e : edges)
        if (include_slack || e.u != 0) out.emplace_back(e.u, e.v);
    for (const auto& e : chords)
        if (include_slack || e.u != 0) out.emplace_back(e.u, e.v);
    return out;
}

double total_weight(const std::vector<WeightedEdge>& edges) {
    double s = 0.0;
    for (const auto& e : edges) s += e.weight;
    return s;
}

EdgeSetEstimate max_weight_spanning_tree(const Eigen::MatrixXd& weights, int first) {
    const int n = static_cast<int>(weights.rows());
    if (weights.cols() != n) throw InputError("weight matrix must be square");
    if (first < 0 || first > n) throw InputError("first node out of range");
    std::vector<WeightedEdge> pairs;
    pairs.reserve(static_cast<std::size_t>(n - first) * (n - first) / 2);
    for (int i = first; i < n; ++i)
        for (int k = i + 1; k < n; ++k)
            if (std::isfinite(weights(i, k))) pairs.push_back({i, k, weights(i, k)});
    std::sort(pairs.begin(), pairs.end(), [](const WeightedEdge& a, const WeightedEdge& b) {
        if (a.weight != b.weight) return a.weight > b.weight;
        return edge_less(a, b);
    });
    const int needed = std::max(0, n - first - 1);
    EdgeSetEstimate est;
    DisjointSets sets(n);
    for (const auto& p : pairs) {
        if (static_cast<int>(est.edges.size()) == needed) break;
        if (sets.unite(p.u, p.v)) est.edges.push_back(p);
    }
    if (static_cast<int>(est.edges.size()) != needed)
        throw IncompleteTreeError("only " + std::to_string(est.edges.size()) + " of " + std::to_string(needed) +
                                  " tree edges could be formed from finite weights");
    std::sort(est.edges.begin(), est.edges.end(), edge_less);
    return est;
}

EdgeSetEstimate max_weight_spanning_tree(const MIMatrix& mi) {
    EdgeSetEstimate est = max_weight_spanning_tree(mi.values, 1);
    est.frame = mi.frame;
    est.source = mi.source;
    return est;
}

bool attach_root(EdgeSetEstimate& estimate, const MIMatrix& mi, std::optional<int> declared_root) {
    const int n = mi.num_buses();
    if (estimate.rooted()) return true;
    if (mi.has_substation) {
        // First maximum over finite entries of row 0, buses 1..n-1.
        const Eigen::RowVectorXd row = mi.values.row(0).tail(n - 1).unaryExpr(
            [](double w) { return std::isfinite(w) ? w : -std::numeric_limits<double>::infinity(); });
        Eigen::Index arg = 0;
        const double top = n > 1 ? row.maxCoeff(&arg) : -std::numeric_limits<double>::infinity();
        const int best = std::isfinite(top) ? static_cast<int>(arg) + 1 : -1;
        if (best > 0) {
            estimate.root = best;
            estimate.root_from_substation = true;
            estimate.edges.insert(estimate.edges.begin(), WeightedEdge{0, best, mi.values(0, best)});
        }
    }
    if (!estimate.rooted() && declared_root) {
        if (*declared_root < 1 || *declared_root >= n) throw InputError("declared root bus " + std::to_string(*declared_root) + " out of range");
        estimate.root = *declared_root;
        estimate.edges.insert(estimate.edges.begin(), WeightedEdge{0, *declared_root, std::numeric_limits<double>::quiet_NaN()});
    }
    // The slack edge sorts first: every other edge has u >= 1.
    return estimate.rooted();
}

EdgeSetEstimate weak_mesh_search(const MIMatrix& mi, const Eigen::MatrixXd& partial, const WeakMeshOptions& options) {
    if (options.max_chords != 1) throw InputError("weak mesh search supports exactly one chord");
    const int n = mi.num_buses();
    if (partial.rows() != n || partial.cols() != n) throw InputError("partial MI matrix does not match the MI matrix");
    EdgeSetEstimate out = max_weight_spanning_tree(partial, 1);
    out.frame = mi.frame;
    out.source = mi.source;
    for (auto& e : out.edges) e.weight = mi.values(e.u, e.v);
    if (n < 4) return out;  // fewer than three non-slack buses cannot hold a loop

    std::vector<std::vector<int>> adj(n);
    for (const auto& e : out.edges) {
        adj[e.u].push_back(e.v);
        adj[e.v].push_back(e.u);
    }
    // near(a, b): distance at most two in the tree.
    std::vector<char> near(static_cast<std::size_t>(n) * n, 0);
    auto mark = [&](int a, int b) { near[static_cast<std::size_t>(a) * n + b] = near[static_cast<std::size_t>(b) * n + a] = 1; };
    for (int w = 1; w < n; ++w) {
        mark(w, w);
        for (std::size_t i = 0; i < adj[w].size(); ++i) {
            mark(w, adj[w][i]);
            for (std::size_t j = i + 1; j < adj[w].size(); ++j) mark(adj[w][i], adj[w][j]);
        }
    }
    auto is_near = [&](int a, int b) { return near[static_cast<std::size_t>(a) * n + b] != 0; };
    auto price = [&](int a, int b) { return options.pair_penalty ? options.pair_penalty(a, b) : 0.0; };

    int best_u = -1, best_v = -1;
    double best = -std::numeric_limits<double>::infinity();
    std::vector<std::pair<int, int>> fresh;
    for (int u = 1; u < n; ++u) {
        for (int v = u + 1; v < n; ++v) {
            if (!std::isfinite(partial(u, v))) continue;
            bool adjacent = false;
            for (int w : adj[u]) adjacent = adjacent || w == v;
            if (adjacent) continue;
            fresh.clear();
            auto add = [&](int a, int b) {
                if (a == b || is_near(a, b)) return;
                fresh.emplace_back(std::min(a, b), std::max(a, b));
            };
            add(u, v);
            for (int w : adj[v]) add(u, w);
            for (int w : adj[u]) add(v, w);
            std::sort(fresh.begin(), fresh.end());
            fresh.erase(std::unique(fresh.begin(), fresh.end()), fresh.end());
            double gain = 0.0;
            for (const auto& [a, b] : fresh) gain += partial(a, b) - price(a, b);
            if (!(gain > 0.0)) continue;
            if (partial(u, v) > best) {
                best = partial(u, v);
                best_u = u;
                best_v = v;
            }
        }
    }
    if (best_u > 0) out.chords.push_back({best_u, best_v, mi.values(best_u, best_v)});
    return out;
}

std::function<double(int, int)> bic_pair_penalty(const GaussianModel& model, int samples) {
    const double per_param = std::log(static_cast<double>(samples)) / (2.0 * samples);
    return [&model, per_param](int a, int b) { return per_param * model.dimension(a) * model.dimension(b); };
}

EstimateResult estimate_topology(const IncrementPanel& panel, Frame frame, Source source, const EstimateOptions& options) {
    const FeatureSet fs = features(panel, frame, source, slack_has_variance(panel));
    int widest = 0, total = 0;
    for (const auto& c : fs.columns) {
        widest = std::max(widest, static_cast<int>(c.size()));
        total += static_cast<int>(c.size());
    }
    // The mesh search inverts the full covariance; the tree needs pairs only.
    const int needed = (options.mesh ? total : 2 * widest) + 1;
    if (panel.num_samples() < needed)
        throw InputError("need at least " + std::to_string(needed) + " increments, got " + std::to_string(panel.num_samples()));
    const GaussianModel model = sample_model(fs);
    EstimateResult out{mi_matrix(model, frame, source), {}};
    if (options.mesh) {
        WeakMeshOptions mo = options.mesh_options;
        if (!mo.pair_penalty) mo.pair_penalty = bic_pair_penalty(model, panel.num_samples());
        out.estimate = weak_mesh_search(out.mi, partial_mi_matrix(model), mo);
    } else {
        out.estimate = max_weight_spanning_tree(out.mi);
    }
    attach_root(out.estimate, out.mi, options.declared_root);
    return out;
}

}  // namespace gridtopo
