#include "gradcheck.hpp"

#include <cmath>

namespace arcvq {

GradCheckReport grad_check(const GraphBuilder& f, const std::vector<Tensor>& inputs,
                           double eps, double tol) {
    if (eps <= 0.0) throw ContractError("grad_check: eps must be > 0");

    auto build = [&](const std::vector<Tensor>& xs) {
        std::vector<Var> leaves;
        leaves.reserve(xs.size());
        for (const auto& x : xs) leaves.push_back(parameter(x));
        Var out = f(leaves);
        if (out.value().size() != 1)
            throw ContractError("grad_check: builder must produce a scalar, got (" +
                                out.value().dims_string() + ")");
        return std::pair<Var, std::vector<Var>>(out, std::move(leaves));
    };

    auto [root, leaves] = build(inputs);
    backward(root);

    auto eval = [&](const std::vector<Tensor>& xs) {
        std::vector<Var> ls;
        ls.reserve(xs.size());
        for (const auto& x : xs) ls.push_back(constant(x));
        return f(ls).value()[0];
    };

    GradCheckReport report;
    std::vector<Tensor> work = inputs;
    for (std::size_t t = 0; t < inputs.size(); ++t) {
        for (std::size_t i = 0; i < inputs[t].size(); ++i) {
            const double orig = work[t][i];
            work[t][i] = orig + eps;
            const double fp = eval(work);
            work[t][i] = orig - eps;
            const double fm = eval(work);
            work[t][i] = orig;

            const double numeric = (fp - fm) / (2.0 * eps);
            const double analytic = leaves[t].has_grad() ? leaves[t].grad()[i] : 0.0;
            const double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-8});
            const double rel = std::fabs(analytic - numeric) / denom;
            report.max_rel_err = std::max(report.max_rel_err, rel);
            ++report.checked;
        }
    }
    report.pass = report.max_rel_err < tol;
    return report;
}

}  // namespace arcvq
