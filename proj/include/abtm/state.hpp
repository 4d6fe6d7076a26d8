#pragma once

#include <cstdint>
#include <string_view>

namespace abtm {

enum class NodeState : std::uint8_t { Running, Success, Failure };

/// Tick types in merge-dominance order: a larger value wins when two ticks
/// for the same node meet in the queue.
enum class TickType : std::uint8_t {
  None,
  CheckingRise,
  CheckingFall,
  ActivatingRise,
  ActivatingFall,
};

/// Node states are stored in memory as 0.0 / 1.0 / 2.0.
constexpr double encode(NodeState s) noexcept { return static_cast<double>(static_cast<int>(s)); }
NodeState decode_state(double v);

std::string_view to_string(NodeState s) noexcept;
std::string_view to_string(TickType t) noexcept;
char state_letter(NodeState s) noexcept;

}  // namespace abtm
