#include "prunelab/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace prunelab {

std::string GradCheckReport::summary() const {
    std::ostringstream ss;
    ss << (passed ? "PASS" : "FAIL") << " max_rel_err=" << max_rel_err << " tol=" << tolerance;
    for (const auto& e : per_type)
        ss << "\n  " << e.layer_type << ": max_rel_err=" << e.max_rel_err << " (" << e.checked
           << " params, worst " << e.worst_param << ")";
    return ss.str();
}

namespace {

std::string type_label(const Network<double>& net, const ParamView<double>& p) {
    const auto& l = net.layers[p.layer];
    if (l.kind == LayerKind::Conv && l.groups > 1) return "depthwise_conv";
    return layer_kind_name(l.kind);
}

}  // namespace

GradCheckReport gradient_check(Network<double>& net, const Tensor<double>& batch,
                               const Tensor<double>& labels, double lambda, double tolerance,
                               double fd_step) {
    ForwardCache<double> cache;
    forward(net, batch, Mode::Train, &cache, /*update_running=*/false);
    Gradients<double> grads = backward(net, cache, labels, lambda);

    auto eval_loss = [&]() {
        Tensor<double> logits =
            forward(net, batch, Mode::Train, static_cast<ForwardCache<double>*>(nullptr), false);
        return loss_with_penalty(logits, labels, net, lambda);
    };

    GradCheckReport report;
    report.tolerance = tolerance;
    std::map<std::string, GradCheckEntry> by_type;

    for (auto& p : trainable_params(net)) {
        double* g = grad_data(grads, p);
        GradCheckEntry& entry = by_type[type_label(net, p)];
        entry.layer_type = type_label(net, p);
        for (size_t i = 0; i < p.size; ++i) {
            const double saved = p.data[i];
            p.data[i] = saved + fd_step;
            const double lp = eval_loss();
            p.data[i] = saved - fd_step;
            const double lm = eval_loss();
            p.data[i] = saved;
            const double g_fd = (lp - lm) / (2.0 * fd_step);
            const double g_ad = g[i];
            const double rel =
                std::abs(g_ad - g_fd) / std::max({std::abs(g_ad), std::abs(g_fd), 1e-8});
            entry.checked += 1;
            if (rel > entry.max_rel_err) {
                entry.max_rel_err = rel;
                entry.worst_param = p.name + "[" + std::to_string(i) + "]";
            }
            if (rel > report.max_rel_err) {
                report.max_rel_err = rel;
                report.worst_param = p.name + "[" + std::to_string(i) + "]";
            }
        }
    }

    for (auto& [k, v] : by_type) report.per_type.push_back(v);
    report.passed = report.max_rel_err <= tolerance;
    return report;
}

}  // namespace prunelab
