#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "emos/tensor.hpp"

namespace emos {

struct GradCheckCase {
  std::string name;
  double max_error = 0.0;  // worst over all points
  Index points = 0;
};

/// Finite-difference checks of every differentiable op (each input in turn)
/// and of the full composite training loss, each at `points` seeded inputs.
std::vector<GradCheckCase> run_gradcheck_suite(std::uint64_t seed, Index points = 10);

}  // namespace emos
