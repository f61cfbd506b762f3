#pragma once

#include <cmath>
#include <functional>

#include "autodiff.hpp"

namespace circuitgcl {

/// Scalar function of one tensor input, expressed on a tape.
using TapeFunction = std::function<Var(Tape&, Var)>;

struct GradCheckResult {
    Real max_relative_error = 0.0;
    std::size_t worst_index = 0;
    Real analytic = 0.0;
    Real numeric = 0.0;
};

/// Compares reverse-mode gradients of `f` at `x` against central differences.
/// The error per coordinate is |analytic - numeric| / max(|analytic|, 1e-8).
inline GradCheckResult finite_diff_check(const TapeFunction& f, const Tensor& x, Real step = 1e-5) {
    if (!(step > 0.0)) throw ArgumentError("finite_diff_check: step must be positive");

    Tape tape;
    Var in = tape.leaf(x, true);
    Var out = f(tape, in);
    if (!std::isfinite(tape.scalar(out))) throw NumericError("finite_diff_check: f(x) is not finite");
    tape.backward(out);
    const Tensor analytic = tape.gradient(in);

    auto eval = [&f](const Tensor& at) {
        Tape t;
        Var v = t.leaf(at, false);
        const Real y = t.scalar(f(t, v));
        if (!std::isfinite(y)) throw NumericError("finite_diff_check: f is not finite at a perturbed point");
        return y;
    };

    GradCheckResult result;
    Tensor probe = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const Real orig = probe[i];
        probe[i] = orig + step;
        const Real up = eval(probe);
        probe[i] = orig - step;
        const Real down = eval(probe);
        probe[i] = orig;
        const Real numeric = (up - down) / (2.0 * step);
        const Real err = std::abs(analytic[i] - numeric) / std::max(std::abs(analytic[i]), 1e-8);
        if (err > result.max_relative_error || i == 0) {
            result = {err, i, analytic[i], numeric};
        }
    }
    return result;
}

}  // namespace circuitgcl
