#pragma once

#include "emos/random.hpp"
#include "emos/tensor.hpp"

#include <functional>
#include <span>

namespace emos {

/// Builds a scalar from a leaf on the leaf's tape.
using ScalarFunction = std::function<Var(Var)>;

/// Central-difference check of the tape gradient of `f` at `x`.
///
/// Returns max_i |g_fd - g_ad| / max(1, |g_fd|, |g_ad|). Throws
/// ArgumentError when `f` is not scalar-valued.
double grad_check(const ScalarFunction& f, const Tensor& x, double eps = 1e-5);

/// Same measure over `samples` randomly chosen coordinates of `params`,
/// perturbing parameter values in place (restored afterwards). `loss`
/// registers the parameters on the tape it is given.
double grad_check_parameters(const std::function<Var(Tape&)>& loss, std::span<Parameter* const> params,
                             Index samples, Rng& rng, double eps = 1e-5);

}  // namespace emos
