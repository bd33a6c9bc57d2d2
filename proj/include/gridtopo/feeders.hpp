#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "gridtopo/grid_model.hpp"

namespace gridtopo {

struct RandomFeederOptions {
    /// Probability that a child of a three-phase bus is a one- or two-phase lateral.
    double lateral_probability = 0.25;
    /// Probability that the next bus hangs off one of the three most recent buses
    /// (long chains) rather than a uniformly chosen one.
    double chain_probability = 0.7;
    double r_min = 1.2;
    double r_max = 2.0;
    double length_min = 0.05;
    double length_max = 0.3;
    double h_jitter = 0.3;
};

/// Radial feeder with `num_buses` buses (slack included), bus 1 at the head.
GridTopology random_feeder(int num_buses, std::uint64_t seed, const RandomFeederOptions& options = {});

/// The eight-bus example: 0-1, 1-2, 1-3, 2-4, 2-5, 3-6, 3-7.
GridTopology fig4_feeder();
/// Thirteen buses laid out like the IEEE 13-node feeder.
GridTopology feeder13();
/// Thirty-three buses laid out like the Baran-Wu feeder, with multi-phase laterals.
GridTopology feeder33();
/// Deterministic 123-bus synthetic feeder.
GridTopology feeder123();
/// Fifteen-bus tree plus one chord (5-10).
GridTopology mesh15_feeder();

/// Looks up one of preset_names(). Throws InputError for unknown names.
GridTopology preset_feeder(std::string_view name);
std::vector<std::string> preset_names();

}  // namespace gridtopo
