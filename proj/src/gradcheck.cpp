#include "dferclip/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace dfer {

namespace {

double eval_value(const std::function<Tensor()>& f) {
    NoGradGuard ng;
    Tensor out = f();
    if (!out.defined() || out.size() != 1) {
        throw UsageError("finite_difference_check: f must return a scalar");
    }
    return out.at(0);
}

}  // namespace

GradCheckReport finite_difference_check(const std::function<Tensor()>& f,
                                        const std::vector<std::pair<std::string, Tensor>>& params,
                                        double h, double tol) {
    if (!(h > 0)) throw ConfigError("finite_difference_check: step h must be positive");

    const double v1 = eval_value(f);
    const double v2 = eval_value(f);
    if (v1 != v2) {
        throw OracleError("finite_difference_check: f is not deterministic (" +
                          std::to_string(v1) + " vs " + std::to_string(v2) + ")");
    }

    Tape::active().reset();
    Tensor loss = f();
    Tape::active().backward(loss);

    std::vector<std::vector<double>> analytic;
    for (const auto& [name, p] : params) {
        if (!p.requires_grad()) {
            analytic.emplace_back();
            continue;
        }
        if (!p.has_grad()) {
            throw OracleError("finite_difference_check: parameter '" + name +
                              "' received no gradient from backward()");
        }
        analytic.push_back(p.grad());
    }
    Tape::active().reset();

    GradCheckReport report;
    report.tol = tol;
    for (size_t pi = 0; pi < params.size(); ++pi) {
        const auto& name = params[pi].first;
        Tensor p = params[pi].second;
        if (!p.requires_grad()) continue;  // frozen: excluded

        const auto& g = analytic[pi];
        double gmax = 0.0;
        for (double x : g) gmax = std::max(gmax, std::abs(x));
        const double floor = std::max(1e-6, 1e-3 * gmax);

        GradCheckEntry entry;
        entry.name = name;
        entry.checked = p.size();
        for (Index i = 0; i < p.size(); ++i) {
            const double saved = p.at(i);
            p.at(i) = saved + h;
            const double fp = eval_value(f);
            p.at(i) = saved - h;
            const double fm = eval_value(f);
            p.at(i) = saved;
            const double fd = (fp - fm) / (2.0 * h);
            const double an = g[static_cast<size_t>(i)];
            const double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), floor});
            if (rel > entry.max_rel_err) {
                entry.max_rel_err = rel;
                entry.worst_index = i;
                entry.analytic_at_worst = an;
                entry.numeric_at_worst = fd;
            }
        }
        report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
        report.entries.push_back(std::move(entry));
    }
    return report;
}

}  // namespace dfer
