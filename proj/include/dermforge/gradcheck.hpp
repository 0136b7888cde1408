#pragma once

#include <string>
#include <vector>

namespace dermforge {

struct GradCheckCase {
    std::string name;
    double max_rel_err = 0.0;
    int checked_values = 0;
    bool pass = false;
};

// Central finite-difference verification of every analytic backward path, in
// double precision. The reference value for each coordinate comes from two
// forward evaluations only. `filter` is "all" or a layer family name
// (conv2d, maxpool, batchnorm, dropout, dense, softmax, loss, model).
std::vector<GradCheckCase> run_gradient_checks(const std::string& filter, double tolerance = 1e-4,
                                               double step = 1e-5);

}  // namespace dermforge
