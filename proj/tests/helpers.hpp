#pragma once

#include "livegraph/common.hpp"

#include <functional>

namespace livegraph::testutil {

// Central finite difference of a scalar functional at *param.
inline double fd(double* param, const std::function<double()>& loss, double h = 1e-5) {
    const double saved = *param;
    *param = saved + h;
    const double up = loss();
    *param = saved - h;
    const double down = loss();
    *param = saved;
    return (up - down) / (2.0 * h);
}

// Relative-or-absolute agreement between analytic and finite-difference
// gradients (absolute below `floor` where relative error is meaningless).
inline bool grad_close(double analytic, double numeric, double rel_tol, double floor = 1e-6) {
    const double diff = std::abs(analytic - numeric);
    if (diff <= floor) return true;
    return diff <= rel_tol * std::max(std::abs(analytic), std::abs(numeric));
}

}  // namespace livegraph::testutil
