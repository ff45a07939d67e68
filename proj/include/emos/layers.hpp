#pragma once

#include "emos/ops.hpp"
#include "emos/random.hpp"
#include "emos/tensor.hpp"

#include <string>
#include <vector>

namespace emos {

/// Glorot-uniform matrix [fan_in x fan_out].
Tensor glorot(Index fan_in, Index fan_out, Rng& rng);

/// Affine layer y = x W + b.
struct Linear {
  Parameter weight;
  Parameter bias;

  Linear() = default;
  Linear(const std::string& name, Index in, Index out, Rng& rng);

  Var operator()(Var x);
  Index in() const { return weight.value.dim(0); }
  Index out() const { return weight.value.dim(1); }
  void collect(std::vector<Parameter*>& out);
};

struct GruLayer {
  Parameter input;
  Parameter gates;
  Parameter candidate;
  Parameter bias;

  GruLayer() = default;
  GruLayer(const std::string& name, Index in, Index hidden, Rng& rng);

  Index hidden() const { return candidate.value.dim(0); }
  GruWeights bind(Tape& tape);
  void collect(std::vector<Parameter*>& out);
};

struct Conv2dLayer {
  Parameter kernel;
  Parameter bias;
  Index stride = 1;
  Index pad = 0;

  Conv2dLayer() = default;
  Conv2dLayer(const std::string& name, Index in_channels, Index out_channels, Index size,
              Index stride, Index pad, Rng& rng);

  Var operator()(Var x);
  void collect(std::vector<Parameter*>& out);
};

}  // namespace emos
