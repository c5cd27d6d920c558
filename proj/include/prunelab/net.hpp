#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "prunelab/tensor.hpp"

namespace prunelab {

enum class LayerKind { Input, Conv, BatchNorm, ReLU, MaxPool, GlobalAvgPool, Dense, Add };

enum class Mode { Train, Eval };

const char* layer_kind_name(LayerKind k);

// One node of the layer graph. input0/input1 are indices of producer layers;
// only Add uses input1. channel_group identifies the set of channels flowing
// out of the layer; layers that must shrink together during pruning share a
// group id.
template <typename T>
struct Layer {
    LayerKind kind = LayerKind::Input;
    std::string name;
    int input0 = -1;
    int input1 = -1;

    // conv
    int in_ch = 0, out_ch = 0;
    int kh = 0, kw = 0;
    int stride = 1, pad = 0, groups = 1;
    Tensor<T> w;         // conv: (out, in/groups, kh, kw); dense: (out, in)
    std::vector<T> bias; // dense only

    // batch norm
    std::vector<T> gamma, beta, running_mean, running_var;
    T eps = T(1e-5);
    T momentum = T(0.1);

    // pooling
    int pool_k = 2, pool_stride = 2;

    int channel_group = -1;
    bool prunable = false;

    bool is_depthwise() const {
        return kind == LayerKind::Conv && groups > 1 && groups == in_ch && groups == out_ch;
    }
};

template <typename T>
struct Network {
    std::vector<Layer<T>> layers;  // layers[0] is the Input node
    int in_ch = 0, in_h = 0, in_w = 0;
    int num_classes = 0;

    int num_layers() const { return static_cast<int>(layers.size()); }
};

using NetworkF = Network<float>;
using NetworkD = Network<double>;

// Activations and auxiliary values captured during a train-mode forward pass,
// consumed by backward().
template <typename T>
struct ForwardCache {
    bool valid = false;
    Mode mode = Mode::Eval;
    std::vector<Tensor<T>> act;              // act[i] = output of layer i
    std::vector<std::vector<T>> bn_xhat;     // normalized input, BN layers only
    std::vector<std::vector<T>> bn_invstd;   // per-channel 1/sqrt(var+eps)
    std::vector<std::vector<int>> pool_src;  // winning input plane index per output
};

// Runs the graph. Train mode uses mini-batch BN statistics and (by default)
// updates the running stats; eval mode uses running stats and touches nothing.
// Train mode requires batch size >= 2.
template <typename T>
Tensor<T> forward(Network<T>& net, const Tensor<T>& batch, Mode mode,
                  ForwardCache<T>* cache = nullptr, bool update_running = true);

// Pure eval-mode forward; repeated calls are bitwise identical.
template <typename T>
Tensor<T> forward_eval(const Network<T>& net, const Tensor<T>& batch);

// Parameter gradients, aligned with the layer vector.
template <typename T>
struct Gradients {
    std::vector<Tensor<T>> w;
    std::vector<std::vector<T>> bias;
    std::vector<std::vector<T>> gamma;
    std::vector<std::vector<T>> beta;

    void resize(size_t n) {
        w.resize(n);
        bias.resize(n);
        gamma.resize(n);
        beta.resize(n);
    }
};

// Softmax cross-entropy against (possibly soft) labels plus the gradient of
// lambda * sum|gamma| on every BN scale; sign(0) contributes 0.
template <typename T>
Gradients<T> backward(const Network<T>& net, const ForwardCache<T>& cache,
                      const Tensor<T>& labels, T lambda);

// ---- losses ----

// mean softmax cross-entropy; labels rows must sum to 1 within 1e-6
template <typename T>
double softmax_cross_entropy(const Tensor<T>& logits, const Tensor<T>& labels);

template <typename T>
double l1_gamma_penalty(const Network<T>& net);

// Eq-style training objective: CE + lambda * sum|gamma|
template <typename T>
double loss_with_penalty(const Tensor<T>& logits, const Tensor<T>& labels,
                         const Network<T>& net, double lambda);

// ---- parameter traversal (order is the checkpoint/optimizer contract) ----

enum class ParamClass { ConvWeight, DenseWeight, DenseBias, Gamma, Beta, RunningMean, RunningVar };

template <typename T>
struct ParamView {
    std::string name;
    ParamClass cls;
    int layer;
    T* data;
    size_t size;
};

// trainable parameters in deterministic layer order
template <typename T>
std::vector<ParamView<T>> trainable_params(Network<T>& net);

// trainable parameters plus BN running stats (checkpoint payload)
template <typename T>
std::vector<ParamView<T>> state_tensors(Network<T>& net);

// gradient slot matching a trainable ParamView
template <typename T>
T* grad_data(Gradients<T>& g, const ParamView<T>& p);

// shape validation independent of any batch; throws with the offending layer
template <typename T>
void validate_graph(const Network<T>& net);

// channels flowing out of every layer (Dense reports its output features)
template <typename T>
std::vector<int> layer_output_channels(const Network<T>& net);

}  // namespace prunelab
