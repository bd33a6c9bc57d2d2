#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "gridtopo/grid_model.hpp"
#include "gridtopo/info_core.hpp"
#include "gridtopo/phase_id.hpp"
#include "gridtopo/synth_lab.hpp"
#include "gridtopo/topo_est.hpp"

namespace gridtopo {

// All readers throw InputError with the offending line number.

/// parent_id,child_id,phases,length_miles,r_per_mile,h_self_a,h_self_b,h_self_c,
/// h_mut_ab,h_mut_bc,h_mut_ac[,chord]. The chord column takes 1, 0, chord=1,
/// chord=0 or empty.
GridTopology read_topology(std::istream& in);
void write_topology(std::ostream& out, const GridTopology& topology);

/// t,bus_id,phase,magnitude_pu,angle_deg with one row per (t, bus, present
/// channel); angle empty for magnitude-only panels. `phase` is the channel
/// label as recorded.
void write_measurements(std::ostream& out, const VoltagePanel& panel);
/// Masks come from the channels present in the file. Labels are identity
/// (the file carries claimed labels only).
VoltagePanel read_measurements(std::istream& in, double sample_period = kDefaultSamplePeriod);

/// bus_id,true_phase_order, e.g. "3,bca": channels a, b, c of bus 3 carry
/// physical phases b, c, a.
void write_labels(std::ostream& out, const VoltagePanel& panel);
std::vector<ChannelMap> read_labels(std::istream& in, const std::vector<PhaseMask>& masks);

/// bus_i,bus_j,mi_nats for i < j, sorted; NaN entries skipped.
void write_mi(std::ostream& out, const MIMatrix& mi);

/// Topology schema with blank line fields, plus chord and mi_nats columns.
/// Edges are oriented away from the slack when the estimate is rooted.
void write_estimate(std::ostream& out, const EdgeSetEstimate& estimate, const std::vector<PhaseMask>& masks);
EdgeSetEstimate read_estimate(std::istream& in);

/// bus_id,channel,assigned_phase,margin.
void write_assignment(std::ostream& out, const PhaseAssignment& assignment);

/// Splits one CSV line on commas (no quoting; the formats never need it).
std::vector<std::string> split_csv_line(const std::string& line);

}  // namespace gridtopo
