#pragma once
#include "intrin/graph.hpp"
#include <functional>
#include <vector>

namespace intrin {

// Central-difference gradient verification.
//
// `f` builds a scalar loss on the given tape from leaves created for `xs`
// (requires_grad=true). Analytic gradients come from the eager backward pass;
// numeric ones from (f(x+eps e_i) - f(x-eps e_i)) / (2 eps), each evaluation
// on a fresh tape. Per coordinate the relative error is
//     |analytic - numeric| / max(|analytic|, |numeric|, 1e-8)
// and the maximum over all coordinates of all inputs is returned. This
// reports — asserting is the caller's job.
struct GradCheck {
    double max_rel_err = 0.0;
    double max_abs_err = 0.0;
    int worst_input = -1;
    int64_t worst_coord = -1;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
};

using LossFn = std::function<Var(Tape&, const std::vector<Var>&)>;

inline double eval_loss(const LossFn& f, const std::vector<Tensor>& xs) {
    Tape tape;
    std::vector<Var> vars;
    vars.reserve(xs.size());
    for (const Tensor& x : xs) vars.push_back(tape.input(x, true));
    return f(tape, vars).item();
}

inline GradCheck gradient_check_full(const LossFn& f, std::vector<Tensor> xs, double eps = 1e-5) {
    std::vector<Tensor> analytic;
    {
        Tape tape;
        std::vector<Var> vars;
        vars.reserve(xs.size());
        for (const Tensor& x : xs) vars.push_back(tape.input(x, true));
        Var loss = f(tape, vars);
        analytic = tape.backward_scalar(loss, vars);
    }

    GradCheck r;
    for (size_t i = 0; i < xs.size(); i++) {
        for (int64_t j = 0; j < xs[i].numel(); j++) {
            double keep = xs[i].data[j];
            xs[i].data[j] = keep + eps;
            double hi = eval_loss(f, xs);
            xs[i].data[j] = keep - eps;
            double lo = eval_loss(f, xs);
            xs[i].data[j] = keep;

            double num = (hi - lo) / (2.0 * eps);
            double ana = analytic[i].data[j];
            double abs_err = std::abs(ana - num);
            double rel = abs_err / std::max({std::abs(ana), std::abs(num), 1e-8});
            if (rel > r.max_rel_err) {
                r.max_rel_err = rel;
                r.worst_input = (int)i;
                r.worst_coord = j;
                r.worst_analytic = ana;
                r.worst_numeric = num;
            }
            r.max_abs_err = std::max(r.max_abs_err, abs_err);
        }
    }
    return r;
}

inline double gradient_check(const LossFn& f, const std::vector<Tensor>& xs, double eps = 1e-5) {
    return gradient_check_full(f, xs, eps).max_rel_err;
}

} // namespace intrin
