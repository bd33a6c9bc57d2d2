#include "gridtopo/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <map>
#include <numbers>
#include <ostream>
#include <queue>

#include "gridtopo/error.hpp"

namespace gridtopo {

namespace {

const std::vector<std::string> kTopologyHeader = {"parent_id", "child_id", "phases", "length_miles", "r_per_mile",
                                                  "h_self_a", "h_self_b", "h_self_c", "h_mut_ab", "h_mut_bc", "h_mut_ac"};

std::string trim(std::string s) {
    auto ws = [](unsigned char c) { return std::isspace(c) != 0; };
    while (!s.empty() && ws(static_cast<unsigned char>(s.back()))) s.pop_back();
    std::size_t i = 0;
    while (i < s.size() && ws(static_cast<unsigned char>(s[i]))) ++i;
    return s.substr(i);
}

// Line reader that tracks 1-based line numbers and skips blank lines.
class CsvReader {
  public:
    explicit CsvReader(std::istream& in) : in_(in) {}

    bool next(std::vector<std::string>& fields) {
        std::string line;
        while (std::getline(in_, line)) {
            ++line_;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (trim(line).empty()) continue;
            fields = split_csv_line(line);
            return true;
        }
        return false;
    }
    long line() const { return line_; }

  private:
    std::istream& in_;
    long line_ = 0;
};

double parse_double(const std::string& s, const char* what, long line) {
    const std::string t = trim(s);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || ec != std::errc() || ptr != t.data() + t.size())
        throw InputError(std::string("bad ") + what + " '" + s + "'", line);
    return v;
}

long parse_int(const std::string& s, const char* what, long line) {
    const std::string t = trim(s);
    long v = 0;
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || ec != std::errc() || ptr != t.data() + t.size())
        throw InputError(std::string("bad ") + what + " '" + s + "'", line);
    return v;
}

void expect_header(const std::vector<std::string>& got, const std::vector<std::string>& want, long line) {
    if (got.size() < want.size()) throw InputError("header has " + std::to_string(got.size()) + " columns, expected " + std::to_string(want.size()), line);
    for (std::size_t i = 0; i < want.size(); ++i)
        if (trim(got[i]) != want[i]) throw InputError("header column " + std::to_string(i + 1) + " is '" + got[i] + "', expected '" + want[i] + "'", line);
}

bool parse_chord(const std::string& s, long line) {
    const std::string t = trim(s);
    if (t.empty() || t == "0" || t == "chord=0") return false;
    if (t == "1" || t == "chord=1") return true;
    throw InputError("bad chord flag '" + s + "'", line);
}

std::string num(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

}  // namespace

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

GridTopology read_topology(std::istream& in) {
    CsvReader reader(in);
    std::vector<std::string> f;
    if (!reader.next(f)) throw InputError("topology file is empty");
    expect_header(f, kTopologyHeader, reader.line());
    const bool has_chord_col = f.size() > kTopologyHeader.size() && trim(f[kTopologyHeader.size()]) == "chord";
    std::vector<Branch> branches, chords;
    while (reader.next(f)) {
        const long ln = reader.line();
        if (f.size() < kTopologyHeader.size()) throw InputError("expected at least 11 fields, got " + std::to_string(f.size()), ln);
        LineModel line;
        const int parent = static_cast<int>(parse_int(f[0], "parent_id", ln));
        const int child = static_cast<int>(parse_int(f[1], "child_id", ln));
        PhaseMask mask;
        try {
            mask = PhaseMask::parse(trim(f[2]));
        } catch (const InputError& e) {
            throw InputError(e.what(), ln);
        }
        line.length_miles = parse_double(f[3], "length_miles", ln);
        line.r_per_mile = parse_double(f[4], "r_per_mile", ln);
        for (int i = 0; i < 3; ++i) line.h_self[i] = parse_double(f[5 + i], "h_self", ln);
        for (int i = 0; i < 3; ++i) line.h_mut[i] = parse_double(f[8 + i], "h_mut", ln);
        bool chord = false;
        if (f.size() > kTopologyHeader.size()) {
            const std::string& flag = f[kTopologyHeader.size()];
            if (!has_chord_col && trim(flag).rfind("chord=", 0) != 0 && !trim(flag).empty())
                throw InputError("unexpected trailing field '" + flag + "'", ln);
            chord = parse_chord(flag, ln);
        }
        try {
            (chord ? chords : branches).push_back(make_branch(parent, child, mask, line));
        } catch (const Error& e) {
            throw InputError(e.what(), ln);
        }
    }
    try {
        return GridTopology(std::move(branches), std::move(chords));
    } catch (const TopologyError& e) {
        throw InputError(std::string("invalid topology: ") + e.what());
    }
}

void write_topology(std::ostream& out, const GridTopology& topology) {
    for (const auto& h : kTopologyHeader) out << h << ',';
    out << "chord\n";
    auto row = [&](const Branch& b, bool chord) {
        out << b.parent << ',' << b.child << ',' << b.mask.to_string() << ',' << num(b.line.length_miles) << ','
            << num(b.line.r_per_mile);
        for (double h : b.line.h_self) out << ',' << num(h);
        for (double h : b.line.h_mut) out << ',' << num(h);
        out << ',' << (chord ? 1 : 0) << '\n';
    };
    for (const auto& b : topology.branches()) row(b, false);
    for (const auto& c : topology.chords()) row(c, true);
}

void write_measurements(std::ostream& out, const VoltagePanel& panel) {
    out << "t,bus_id,phase,magnitude_pu,angle_deg\n";
    std::string buf;
    char tmp[96];
    for (int t = 0; t < panel.num_samples(); ++t) {
        buf.clear();
        for (int b = 0; b < panel.num_buses(); ++b) {
            for (Phase ch : panel.masks[b].phases()) {
                const double mag = panel.magnitude(t, b, ch);
                if (panel.magnitude_only) {
                    std::snprintf(tmp, sizeof tmp, "%d,%d,%c,%.17g,\n", t, b, to_char(ch), mag);
                } else {
                    const double deg = panel.angle(t, b, ch) * 180.0 / std::numbers::pi;
                    std::snprintf(tmp, sizeof tmp, "%d,%d,%c,%.17g,%.17g\n", t, b, to_char(ch), mag, deg);
                }
                buf += tmp;
            }
        }
        out << buf;
    }
}

VoltagePanel read_measurements(std::istream& in, double sample_period) {
    CsvReader reader(in);
    std::vector<std::string> f;
    if (!reader.next(f)) throw InputError("measurement file is empty");
    expect_header(f, {"t", "bus_id", "phase", "magnitude_pu", "angle_deg"}, reader.line());

    struct Row {
        long t;
        int bus;
        Phase ch;
        double mag;
        double ang;
        long line;
    };
    std::vector<Row> rows;
    int magnitude_rows = 0;
    long max_t = -1;
    int max_bus = -1;
    while (reader.next(f)) {
        const long ln = reader.line();
        if (f.size() != 5) throw InputError("expected 5 fields, got " + std::to_string(f.size()), ln);
        Row r;
        r.line = ln;
        r.t = parse_int(f[0], "t", ln);
        r.bus = static_cast<int>(parse_int(f[1], "bus_id", ln));
        if (r.t < 0 || r.bus < 0) throw InputError("negative index", ln);
        const std::string ph = trim(f[2]);
        if (ph.size() != 1) throw InputError("bad phase '" + f[2] + "'", ln);
        try {
            r.ch = phase_from_char(ph[0]);
        } catch (const InputError& e) {
            throw InputError(e.what(), ln);
        }
        r.mag = parse_double(f[3], "magnitude_pu", ln);
        if (trim(f[4]).empty()) {
            r.ang = std::numeric_limits<double>::quiet_NaN();
            ++magnitude_rows;
        } else {
            r.ang = parse_double(f[4], "angle_deg", ln) * std::numbers::pi / 180.0;
        }
        max_t = std::max(max_t, r.t);
        max_bus = std::max(max_bus, r.bus);
        rows.push_back(r);
    }
    if (rows.empty()) throw InputError("measurement file has no data rows");
    if (magnitude_rows != 0 && magnitude_rows != static_cast<int>(rows.size()))
        throw InputError("angle_deg must be present on every row or on none");

    VoltagePanel panel;
    panel.sample_period = sample_period;
    panel.magnitude_only = magnitude_rows != 0;
    panel.masks.assign(max_bus + 1, PhaseMask{});
    for (const auto& r : rows) panel.masks[r.bus] = panel.masks[r.bus] | PhaseMask::of(r.ch);
    for (int b = 0; b <= max_bus; ++b)
        if (panel.masks[b].empty()) throw InputError("bus " + std::to_string(b) + " has no measurements (ids must be contiguous)");
    panel.labels.assign(max_bus + 1, ChannelMap::identity());
    panel.values = Eigen::MatrixXcd::Zero(max_t + 1, 3 * (max_bus + 1));
    std::vector<std::uint8_t> seen(static_cast<std::size_t>(max_t + 1) * 3 * (max_bus + 1), 0);
    for (const auto& r : rows) {
        const int col = VoltagePanel::column(r.bus, r.ch);
        auto& s = seen[static_cast<std::size_t>(r.t) * 3 * (max_bus + 1) + col];
        if (s) throw InputError("duplicate measurement for t=" + std::to_string(r.t) + " bus " + std::to_string(r.bus), r.line);
        s = 1;
        panel.values(r.t, col) = panel.magnitude_only ? cplx(r.mag, 0.0) : std::polar(r.mag, r.ang);
    }
    for (long t = 0; t <= max_t; ++t)
        for (int b = 0; b <= max_bus; ++b)
            for (Phase ch : panel.masks[b].phases())
                if (!seen[static_cast<std::size_t>(t) * 3 * (max_bus + 1) + VoltagePanel::column(b, ch)])
                    throw InputError("missing measurement for t=" + std::to_string(t) + " bus " + std::to_string(b) + " phase " + to_char(ch));
    return panel;
}

void write_labels(std::ostream& out, const VoltagePanel& panel) {
    out << "bus_id,true_phase_order\n";
    for (int b = 0; b < panel.num_buses(); ++b) out << b << ',' << panel.labels[b].order_string(panel.masks[b]) << '\n';
}

std::vector<ChannelMap> read_labels(std::istream& in, const std::vector<PhaseMask>& masks) {
    CsvReader reader(in);
    std::vector<std::string> f;
    if (!reader.next(f)) throw InputError("label file is empty");
    expect_header(f, {"bus_id", "true_phase_order"}, reader.line());
    std::vector<ChannelMap> out(masks.size(), ChannelMap::identity());
    while (reader.next(f)) {
        const long ln = reader.line();
        if (f.size() != 2) throw InputError("expected 2 fields", ln);
        const long b = parse_int(f[0], "bus_id", ln);
        if (b < 0 || b >= static_cast<long>(masks.size())) throw InputError("bus id out of range", ln);
        try {
            out[b] = ChannelMap::from_order_string(masks[b], trim(f[1]));
        } catch (const InputError& e) {
            throw InputError(e.what(), ln);
        }
    }
    return out;
}

void write_mi(std::ostream& out, const MIMatrix& mi) {
    out << "bus_i,bus_j,mi_nats\n";
    for (int i = 0; i < mi.num_buses(); ++i)
        for (int j = i + 1; j < mi.num_buses(); ++j)
            if (!std::isnan(mi.values(i, j))) out << i << ',' << j << ',' << num(mi.values(i, j)) << '\n';
}

void write_estimate(std::ostream& out, const EdgeSetEstimate& estimate, const std::vector<PhaseMask>& masks) {
    for (const auto& h : kTopologyHeader) out << h << ',';
    out << "chord,mi_nats\n";
    int n = static_cast<int>(masks.size());
    for (const auto& e : estimate.edges) n = std::max(n, e.v + 1);
    std::vector<std::vector<std::pair<int, double>>> adj(n);
    for (const auto& e : estimate.edges) {
        adj[e.u].emplace_back(e.v, e.weight);
        adj[e.v].emplace_back(e.u, e.weight);
    }
    auto row = [&](int p, int c, double w, bool chord) {
        const std::string ph = c < static_cast<int>(masks.size()) ? masks[c].to_string() : "";
        out << p << ',' << c << ',' << ph << ",,,,,,,," << ',' << (chord ? 1 : 0) << ',' << (std::isnan(w) ? "" : num(w)) << '\n';
    };
    std::vector<std::tuple<int, int, double>> oriented;
    if (estimate.rooted()) {
        std::vector<bool> seen(n, false);
        std::queue<int> q;
        q.push(0);
        seen[0] = true;
        while (!q.empty()) {
            int u = q.front();
            q.pop();
            auto nb = adj[u];
            std::sort(nb.begin(), nb.end());
            for (auto [v, w] : nb) {
                if (seen[v]) continue;
                seen[v] = true;
                oriented.emplace_back(u, v, w);
                q.push(v);
            }
        }
    } else {
        for (const auto& e : estimate.edges) oriented.emplace_back(e.u, e.v, e.weight);
    }
    std::sort(oriented.begin(), oriented.end(), [](const auto& a, const auto& b) {
        return std::get<1>(a) != std::get<1>(b) ? std::get<1>(a) < std::get<1>(b) : std::get<0>(a) < std::get<0>(b);
    });
    for (auto [p, c, w] : oriented) row(p, c, w, false);
    for (const auto& e : estimate.chords) row(e.u, e.v, e.weight, true);
}

EdgeSetEstimate read_estimate(std::istream& in) {
    CsvReader reader(in);
    std::vector<std::string> f;
    if (!reader.next(f)) throw InputError("estimate file is empty");
    expect_header(f, {"parent_id", "child_id"}, reader.line());
    int chord_col = -1;
    int mi_col = -1;
    for (std::size_t i = 0; i < f.size(); ++i) {
        if (trim(f[i]) == "chord") chord_col = static_cast<int>(i);
        if (trim(f[i]) == "mi_nats") mi_col = static_cast<int>(i);
    }
    EdgeSetEstimate est;
    while (reader.next(f)) {
        const long ln = reader.line();
        if (f.size() < 2) throw InputError("expected parent_id,child_id", ln);
        const int p = static_cast<int>(parse_int(f[0], "parent_id", ln));
        const int c = static_cast<int>(parse_int(f[1], "child_id", ln));
        if (p < 0 || c < 0 || p == c) throw InputError("bad edge", ln);
        const bool chord = chord_col >= 0 && chord_col < static_cast<int>(f.size()) && parse_chord(f[chord_col], ln);
        double w = std::numeric_limits<double>::quiet_NaN();
        if (mi_col >= 0 && mi_col < static_cast<int>(f.size()) && !trim(f[mi_col]).empty()) w = parse_double(f[mi_col], "mi_nats", ln);
        WeightedEdge e{std::min(p, c), std::max(p, c), w};
        (chord ? est.chords : est.edges).push_back(e);
        if (!chord && e.u == 0) {
            if (est.root >= 0) throw InputError("more than one edge touches the slack", ln);
            est.root = e.v;
        }
    }
    if (est.edges.empty()) throw InputError("estimate has no edges");
    std::sort(est.edges.begin(), est.edges.end(), [](const auto& a, const auto& b) { return a.u != b.u ? a.u < b.u : a.v < b.v; });
    return est;
}

void write_assignment(std::ostream& out, const PhaseAssignment& a) {
    out << "bus_id,channel,assigned_phase,margin\n";
    for (std::size_t b = 1; b < a.map.size(); ++b) {
        for (Phase ch : a.masks[b].phases()) {
            out << b << ',' << to_char(ch) << ',';
            if (a.resolved[b]) out << to_char(a.map[b][ch]);
            else out << '?';
            out << ',' << (std::isnan(a.margin[b]) ? "" : num(a.margin[b])) << '\n';
        }
    }
}

}  // namespace gridtopo
