#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "cotdr/errors.hpp"

namespace cotdr {

// Fibonacci LFSR description. feedback_taps lists polynomial exponents and
// must contain register_length (e.g. x^7 + x^6 + 1 -> taps {7, 6}).
// seed holds the initial register contents: bit i-1 of seed is stage b_i.
struct PrbsSpec {
  int register_length = 7;
  std::vector<int> feedback_taps = {7, 6};
  std::uint64_t seed = 0x7f;
};

inline PrbsSpec prbs7_spec() { return PrbsSpec{}; }

// One full period (2^n - 1 bits) of the maximal-length sequence.
// Shift direction: b_1 <- feedback, b_{i+1} <- b_i; output is b_n.
// Throws invalid_input if the taps do not yield a maximal-length sequence.
inline std::vector<std::uint8_t> generate_prbs(const PrbsSpec& spec) {
  const int n = spec.register_length;
  if (n < 2 || n > 24)
    throw invalid_input("generate_prbs: register_length must be in [2, 24]");
  if (spec.feedback_taps.empty())
    throw invalid_input("generate_prbs: no feedback taps");
  std::vector<int> taps = spec.feedback_taps;
  std::sort(taps.begin(), taps.end());
  if (std::adjacent_find(taps.begin(), taps.end()) != taps.end())
    throw invalid_input("generate_prbs: duplicate feedback tap");
  for (int t : taps) {
    if (t < 1 || t > n)
      throw invalid_input("generate_prbs: tap " + std::to_string(t) +
                          " outside [1, register_length]");
  }
  if (taps.back() != n)
    throw invalid_input("generate_prbs: taps must include register_length");

  const std::uint64_t mask = (std::uint64_t{1} << n) - 1;
  if (spec.seed == 0) throw invalid_input("generate_prbs: seed must be nonzero");
  if (spec.seed > mask)
    throw invalid_input("generate_prbs: seed wider than the register");

  const std::size_t period = (std::size_t{1} << n) - 1;
  std::vector<std::uint8_t> out(period);
  std::uint64_t state = spec.seed;
  for (std::size_t i = 0; i < period; ++i) {
    out[i] = static_cast<std::uint8_t>((state >> (n - 1)) & 1);
    std::uint64_t feedback = 0;
    for (int t : taps) feedback ^= (state >> (t - 1)) & 1;
    state = ((state << 1) & mask) | feedback;
    if (state == spec.seed && i + 1 != period)
      throw invalid_input("generate_prbs: taps are not maximal length (period " +
                          std::to_string(i + 1) + ")");
  }
  return out;
}

}  // namespace cotdr
