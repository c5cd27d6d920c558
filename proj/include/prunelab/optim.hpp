#pragma once

#include <cstdint>
#include <vector>

#include "prunelab/net.hpp"

namespace prunelab {

struct TrainingConfig {
    double lambda = 0.0;          // sparsity penalty weight on BN scales
    double learning_rate = 1e-3;
    int epochs = 20;
    int batch_size = 32;
    uint64_t seed = 1;
    double beta1 = 0.9;           // the paper's "momentum" knob
    double beta2 = 0.999;
    double weight_decay = 1e-4;   // decoupled; conv/dense weights only
    double adam_eps = 1e-8;

    void validate() const;
};

// First/second-moment accumulators, aligned with trainable_params() order.
template <typename T>
struct OptimizerState {
    int64_t step = 0;
    std::vector<std::vector<T>> m, v;

    void init(Network<T>& net);
    bool matches(Network<T>& net) const;
};

// Bias-corrected adaptive-moment update with decoupled weight decay. Weight
// decay is not applied to gamma/beta (the L1 term is the only pressure on
// gamma) nor to dense biases. Deterministic given identical inputs.
template <typename T>
void optimizer_step(Network<T>& net, Gradients<T>& grads, OptimizerState<T>& state,
                    const TrainingConfig& cfg);

}  // namespace prunelab
