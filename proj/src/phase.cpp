#include "gridtopo/phase.hpp"

#include "gridtopo/error.hpp"

namespace gridtopo {

char to_char(Phase p) { return "abc"[index_of(p)]; }

Phase phase_from_char(char c) {
    switch (c) {
    case 'a': case 'A': return Phase::A;
    case 'b': case 'B': return Phase::B;
    case 'c': case 'C': return Phase::C;
    default: throw InputError(std::string("unknown phase '") + c + "'");
    }
}

PhaseMask PhaseMask::parse(std::string_view text) {
    if (text.empty() || text.size() > 3) throw InputError("bad phase set '" + std::string(text) + "'");
    std::uint8_t bits = 0;
    for (char c : text) {
        auto bit = static_cast<std::uint8_t>(1u << index_of(phase_from_char(c)));
        if (bits & bit) throw InputError("repeated phase in '" + std::string(text) + "'");
        bits |= bit;
    }
    return PhaseMask{bits};
}

std::vector<Phase> PhaseMask::phases() const {
    std::vector<Phase> out;
    for (Phase p : kAllPhases)
        if (has(p)) out.push_back(p);
    return out;
}

std::string PhaseMask::to_string() const {
    std::string s;
    for (Phase p : phases()) s.push_back(to_char(p));
    return s;
}

bool ChannelMap::is_permutation_within(PhaseMask mask) const {
    std::uint8_t seen = 0;
    for (Phase ch : kAllPhases) {
        Phase target = (*this)[ch];
        if (!mask.has(ch)) {
            if (target != ch) return false;
            continue;
        }
        if (!mask.has(target)) return false;
        seen |= static_cast<std::uint8_t>(1u << index_of(target));
    }
    return seen == mask.bits();
}

std::string ChannelMap::order_string(PhaseMask mask) const {
    std::string s;
    for (Phase ch : mask.phases()) s.push_back(to_char((*this)[ch]));
    return s;
}

ChannelMap ChannelMap::from_order_string(PhaseMask mask, std::string_view order) {
    auto channels = mask.phases();
    if (order.size() != channels.size())
        throw InputError("phase order '" + std::string(order) + "' does not match phases '" + mask.to_string() + "'");
    ChannelMap map;
    for (std::size_t i = 0; i < channels.size(); ++i) map[channels[i]] = phase_from_char(order[i]);
    if (!map.is_permutation_within(mask))
        throw InputError("phase order '" + std::string(order) + "' is not a permutation of '" + mask.to_string() + "'");
    return map;
}

}  // namespace gridtopo
