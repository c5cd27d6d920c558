#pragma once

#include <string>
#include <vector>

#include "prunelab/net.hpp"

namespace prunelab {

struct GradCheckEntry {
    std::string layer_type;
    double max_rel_err = 0.0;
    std::string worst_param;
    size_t checked = 0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> per_type;
    double max_rel_err = 0.0;
    std::string worst_param;
    double tolerance = 0.0;
    bool passed = false;

    std::string summary() const;
};

// Central finite differences against the analytic gradients of the penalized
// loss, parameter by parameter, in 64-bit mode. Relative error per parameter:
// |g_ad - g_fd| / max(|g_ad|, |g_fd|, 1e-8). Running stats are frozen so the
// probe evaluations do not drift the network.
GradCheckReport gradient_check(Network<double>& net, const Tensor<double>& batch,
                               const Tensor<double>& labels, double lambda, double tolerance,
                               double fd_step = 1e-5);

}  // namespace prunelab
