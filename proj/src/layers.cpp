#include "emos/layers.hpp"

#include <cmath>

namespace emos {

Tensor glorot(Index fan_in, Index fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t(Shape{fan_in, fan_out});
  for (Index i = 0; i < t.size(); ++i) t[i] = rng.uniform(-limit, limit);
  return t;
}

Linear::Linear(const std::string& name, Index in, Index out, Rng& rng)
    : weight(name + ".weight", glorot(in, out, rng)), bias(name + ".bias", Tensor(Shape{out})) {}

Var Linear::operator()(Var x) {
  Tape& tape = x.tape();
  return fully_connected(x, tape.parameter(weight), tape.parameter(bias));
}

void Linear::collect(std::vector<Parameter*>& out) {
  out.push_back(&weight);
  out.push_back(&bias);
}

GruLayer::GruLayer(const std::string& name, Index in, Index hidden, Rng& rng)
    : input(name + ".input", glorot(in, 3 * hidden, rng)),
      gates(name + ".gates", glorot(hidden, 2 * hidden, rng)),
      candidate(name + ".candidate", glorot(hidden, hidden, rng)),
      bias(name + ".bias", Tensor(Shape{3 * hidden})) {}

GruWeights GruLayer::bind(Tape& tape) {
  return {tape.parameter(input), tape.parameter(gates), tape.parameter(candidate), tape.parameter(bias)};
}

void GruLayer::collect(std::vector<Parameter*>& out) {
  out.push_back(&input);
  out.push_back(&gates);
  out.push_back(&candidate);
  out.push_back(&bias);
}

Conv2dLayer::Conv2dLayer(const std::string& name, Index in_channels, Index out_channels, Index size,
                         Index stride_, Index pad_, Rng& rng)
    : kernel(name + ".kernel", Tensor(Shape{out_channels, in_channels, size, size})),
      bias(name + ".bias", Tensor(Shape{out_channels})),
      stride(stride_),
      pad(pad_) {
  const double limit = std::sqrt(6.0 / static_cast<double>((in_channels + out_channels) * size * size));
  for (Index i = 0; i < kernel.value.size(); ++i) kernel.value[i] = rng.uniform(-limit, limit);
}

Var Conv2dLayer::operator()(Var x) {
  Tape& tape = x.tape();
  return conv2d(x, tape.parameter(kernel), tape.parameter(bias), stride, pad);
}

void Conv2dLayer::collect(std::vector<Parameter*>& out) {
  out.push_back(&kernel);
  out.push_back(&bias);
}

}  // namespace emos
