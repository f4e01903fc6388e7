#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "rdstn/autograd.hpp"

namespace rdstn::testing {

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::string worst;
    std::size_t checked = 0;
};

// Relative error with a floor on the denominator so gradients that are
// zero up to round-off do not dominate.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

// Central differences of `loss` with respect to every entry of every
// parameter. `loss` must rebuild the graph from the current parameter
// values on each call.
inline GradCheckResult check_gradients(const std::vector<std::pair<std::string, ag::Var>>& params,
                                       const std::function<ag::Var()>& loss, double step = 1e-5) {
    for (auto [_, p] : params) p.zero_grad();
    ag::backward(loss());
    std::vector<Matrix> analytic;
    for (const auto& [_, p] : params) analytic.push_back(p.has_grad() ? p.grad() : Matrix(p.rows(), p.cols()));

    GradCheckResult result;
    ag::NoGradGuard no_grad;
    for (std::size_t k = 0; k < params.size(); ++k) {
        ag::Var p = params[k].second;
        auto& values = p.mutable_value().values();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double saved = values[i];
            values[i] = saved + step;
            const double up = loss().value()(0, 0);
            values[i] = saved - step;
            const double down = loss().value()(0, 0);
            values[i] = saved;
            const double numeric = (up - down) / (2.0 * step);
            const double err = relative_error(analytic[k].values()[i], numeric);
            ++result.checked;
            if (err > result.max_rel_error) {
                result.max_rel_error = err;
                result.worst = params[k].first + "[" + std::to_string(i) + "] analytic=" +
                               std::to_string(analytic[k].values()[i]) + " numeric=" + std::to_string(numeric);
            }
        }
    }
    return result;
}

}  // namespace rdstn::testing
