#include "emos/grad_check.hpp"

#include "emos/errors.hpp"

#include <algorithm>
#include <cmath>

namespace emos {

namespace {

double evaluate(const ScalarFunction& f, const Tensor& x) {
  Tape tape;
  tape.set_grad_enabled(false);
  return f(tape.constant(x)).value().item();
}

double relative_error(double fd, double ad) {
  return std::abs(fd - ad) / std::max({1.0, std::abs(fd), std::abs(ad)});
}

}  // namespace

double grad_check(const ScalarFunction& f, const Tensor& x, double eps) {
  Tape tape;
  const Var leaf = tape.variable(x);
  const Var out = f(leaf);
  if (out.value().size() != 1) {
    throw ArgumentError("grad_check: function must be scalar-valued, got " + shape_string(out.shape()));
  }
  tape.backward(out);
  const Tensor analytic = tape.grad(leaf);

  double worst = 0.0;
  Tensor probe = x;
  for (Index i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + eps;
    const double up = evaluate(f, probe);
    probe[i] = x[i] - eps;
    const double down = evaluate(f, probe);
    probe[i] = x[i];
    worst = std::max(worst, relative_error((up - down) / (2.0 * eps), analytic[i]));
  }
  return worst;
}

double grad_check_parameters(const std::function<Var(Tape&)>& loss, std::span<Parameter* const> params,
                             Index samples, Rng& rng, double eps) {
  for (Parameter* p : params) p->zero_grad();
  {
    Tape tape;
    const Var out = loss(tape);
    if (out.value().size() != 1) {
      throw ArgumentError("grad_check_parameters: loss must be scalar, got " + shape_string(out.shape()));
    }
    tape.backward(out);
  }
  const auto evaluate_loss = [&loss] {
    Tape tape;
    tape.set_grad_enabled(false);
    return loss(tape).value().item();
  };

  Index total = 0;
  for (Parameter* p : params) total += p->value.size();
  if (total == 0) return 0.0;

  double worst = 0.0;
  for (Index s = 0; s < samples; ++s) {
    auto flat = static_cast<Index>(rng.below(static_cast<std::uint64_t>(total)));
    Parameter* p = nullptr;
    for (Parameter* candidate : params) {
      if (flat < candidate->value.size()) {
        p = candidate;
        break;
      }
      flat -= candidate->value.size();
    }
    const double original = p->value[flat];
    p->value[flat] = original + eps;
    const double up = evaluate_loss();
    p->value[flat] = original - eps;
    const double down = evaluate_loss();
    p->value[flat] = original;
    worst = std::max(worst, relative_error((up - down) / (2.0 * eps), p->grad[flat]));
  }
  return worst;
}

}  // namespace emos
