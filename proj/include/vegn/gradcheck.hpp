#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "vegn/tape.hpp"

namespace vegn {

struct GradCheckEntry {
    std::string name;
    double max_rel_err = 0.0;
    bool pass = true;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double tolerance = 0.0;

    double max_rel_err() const {
        double m = 0.0;
        for (const auto& e : entries) m = std::max(m, e.max_rel_err);
        return m;
    }

    bool pass() const {
        return std::all_of(entries.begin(), entries.end(),
                           [](const GradCheckEntry& e) { return e.pass; });
    }
};

namespace detail {

// The floor keeps finite-difference noise on near-zero gradients from being
// read as a relative error of order 1.
inline double relative_error(double a, double b) {
    const double denom = std::max({std::fabs(a), std::fabs(b), 1e-4});
    return std::fabs(a - b) / denom;
}

}  // namespace detail

// Compares reverse-mode gradients against central finite differences for every
// element of every parameter. The closure must rebuild the forward pass from
// scratch (deterministically: dropout off, RNG fixed) and return the scalar loss.
inline GradCheckReport grad_check(const std::function<Var(Tape&)>& make_loss,
                                  const std::vector<Parameter*>& params, double step,
                                  double tolerance) {
    GradCheckReport report;
    report.tolerance = tolerance;
    if (params.empty()) return report;

    for (Parameter* p : params) p->zero_grad();
    std::vector<Tensor> analytic;
    {
        Tape tape;
        Var loss = make_loss(tape);
        tape.backward(loss);
    }
    analytic.reserve(params.size());
    for (Parameter* p : params) analytic.push_back(p->grad);

    auto eval_loss = [&]() {
        Tape tape;
        return make_loss(tape).val().item();
    };

    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Parameter& p = *params[pi];
        GradCheckEntry entry;
        entry.name = p.name;
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double saved = p.value.values()[i];
            p.value.values()[i] = saved + step;
            const double up = eval_loss();
            p.value.values()[i] = saved - step;
            const double down = eval_loss();
            p.value.values()[i] = saved;
            const double fd = (up - down) / (2.0 * step);
            entry.max_rel_err =
                std::max(entry.max_rel_err, detail::relative_error(analytic[pi].values()[i], fd));
        }
        entry.pass = entry.max_rel_err < tolerance;
        report.entries.push_back(std::move(entry));
    }
    return report;
}

}  // namespace vegn
