#pragma once

#include <functional>
#include <string>
#include <vector>

#include "dferclip/tensor.hpp"

namespace dfer {

struct GradCheckEntry {
    std::string name;
    double max_rel_err = 0.0;
    Index worst_index = -1;
    double analytic_at_worst = 0.0;
    double numeric_at_worst = 0.0;
    Index checked = 0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double max_rel_err = 0.0;
    double tol = 0.0;
    bool ok() const { return max_rel_err < tol; }
};

/// Central-difference gradient oracle. `f` rebuilds the scalar loss from the
/// current parameter values; it must be deterministic (verified by double
/// evaluation; a mismatch raises OracleError). Analytic gradients come from
/// one taped backward pass, numeric ones from (f(p+h) - f(p-h)) / 2h per
/// element. Parameters with requires_grad == false are excluded from the
/// report. The relative-error denominator is floored at
/// max(1e-6, 1e-3 * max |analytic| of the parameter) so round-off noise on
/// near-zero elements does not dominate the worst case.
GradCheckReport finite_difference_check(const std::function<Tensor()>& f,
                                        const std::vector<std::pair<std::string, Tensor>>& params,
                                        double h, double tol);

}  // namespace dfer
