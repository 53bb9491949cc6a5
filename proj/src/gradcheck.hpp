#pragma once

#include <functional>
#include <string>
#include <vector>

#include "graph.hpp"

namespace arcvq {

struct GradCheckReport {
    double max_rel_err = 0.0;
    bool pass = false;
    std::size_t checked = 0;  // number of coordinates compared
};

// Builds a fresh scalar graph from leaf parameters.
using GraphBuilder = std::function<Var(const std::vector<Var>&)>;

// Compares analytic gradients against central finite differences
// (f(x+eps) - f(x-eps)) / (2 eps) per coordinate. Relative error uses the
// denominator max(|analytic|, |numeric|, 1e-8).
GradCheckReport grad_check(const GraphBuilder& f, const std::vector<Tensor>& inputs,
                           double eps, double tol);

// Named result of one check in a CLI suite.
struct SuiteCheck {
    std::string name;
    double max_rel_err = 0.0;
    double tol = 0.0;
    bool pass = false;
};

// Finite-difference suites behind `gradcheck`. "ops" covers every graph op,
// "arcloss" sweeps the fused loss over the s/m/k grid, "pipeline" checks
// end-to-end parameter gradients of the patch autoencoder.
std::vector<SuiteCheck> gradcheck_ops_suite();
std::vector<SuiteCheck> gradcheck_arcloss_suite();
std::vector<SuiteCheck> gradcheck_pipeline_suite();

}  // namespace arcvq
