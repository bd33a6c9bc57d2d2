#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace gridtopo {

enum class Phase : std::uint8_t { A = 0, B = 1, C = 2 };

inline constexpr std::array<Phase, 3> kAllPhases{Phase::A, Phase::B, Phase::C};

constexpr int index_of(Phase p) { return static_cast<int>(p); }
char to_char(Phase p);
Phase phase_from_char(char c);

/// Set of phases present at a bus or on a branch.
class PhaseMask {
  public:
    constexpr PhaseMask() = default;
    constexpr explicit PhaseMask(std::uint8_t bits) : bits_(bits & 0x7u) {}

    static constexpr PhaseMask abc() { return PhaseMask{0x7u}; }
    static constexpr PhaseMask of(Phase p) { return PhaseMask{static_cast<std::uint8_t>(1u << index_of(p))}; }
    /// Parses "a", "bc", "abc", ... (any order, no repeats). Throws InputError otherwise.
    static PhaseMask parse(std::string_view text);

    constexpr bool has(Phase p) const { return (bits_ >> index_of(p)) & 1u; }
    constexpr bool empty() const { return bits_ == 0; }
    constexpr int count() const { return ((bits_ >> 0) & 1) + ((bits_ >> 1) & 1) + ((bits_ >> 2) & 1); }
    constexpr bool subset_of(PhaseMask other) const { return (bits_ & ~other.bits_) == 0; }
    constexpr std::uint8_t bits() const { return bits_; }
    constexpr PhaseMask operator&(PhaseMask o) const { return PhaseMask{static_cast<std::uint8_t>(bits_ & o.bits_)}; }
    constexpr PhaseMask operator|(PhaseMask o) const { return PhaseMask{static_cast<std::uint8_t>(bits_ | o.bits_)}; }
    constexpr bool operator==(const PhaseMask&) const = default;

    /// Present phases in a-b-c order.
    std::vector<Phase> phases() const;
    /// Canonical lower-case spelling, e.g. "ac".
    std::string to_string() const;

  private:
    std::uint8_t bits_ = 0;
};

/// Maps each measurement channel (the label a meter claims) to the physical
/// phase whose voltage it actually carries. Identity when labels are right.
class ChannelMap {
  public:
    constexpr ChannelMap() = default;
    constexpr explicit ChannelMap(std::array<Phase, 3> to_phase) : to_phase_(to_phase) {}

    static constexpr ChannelMap identity() { return ChannelMap{}; }

    constexpr Phase operator[](Phase channel) const { return to_phase_[index_of(channel)]; }
    constexpr Phase& operator[](Phase channel) { return to_phase_[index_of(channel)]; }
    constexpr bool is_identity() const { return *this == ChannelMap{}; }
    constexpr bool operator==(const ChannelMap&) const = default;

    /// True when the map permutes only phases inside `mask` and fixes the rest.
    bool is_permutation_within(PhaseMask mask) const;
    /// Physical phases of the present channels, in channel order ("ca" for
    /// a bus with mask "ac" whose two channels are swapped).
    std::string order_string(PhaseMask mask) const;
    static ChannelMap from_order_string(PhaseMask mask, std::string_view order);

  private:
    std::array<Phase, 3> to_phase_{Phase::A, Phase::B, Phase::C};
};

}  // namespace gridtopo
