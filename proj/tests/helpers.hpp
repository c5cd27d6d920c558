#pragma once

// shared scaffolding for the test binaries

#include <vector>

#include "prunelab/net.hpp"
#include "prunelab/rng.hpp"
#include "prunelab/tensor.hpp"

namespace testutil {

using namespace prunelab;

template <typename T>
Tensor<T> random_tensor(std::vector<int> shape, Rng& rng, double scale = 1.0) {
    Tensor<T> t(std::move(shape));
    for (auto& v : t.data) v = static_cast<T>(rng.normal(0.0, scale));
    return t;
}

template <typename T>
Tensor<T> one_hot(const std::vector<int>& labels, int classes) {
    Tensor<T> t({static_cast<int>(labels.size()), classes});
    for (size_t i = 0; i < labels.size(); ++i) t.at2(static_cast<int>(i), labels[i]) = T(1);
    return t;
}

// minimal graph assembly for hand-built nets
template <typename T>
struct NetBuilder {
    Network<T> net;

    explicit NetBuilder(int in_ch, int h, int w) {
        net.in_ch = in_ch;
        net.in_h = h;
        net.in_w = w;
        Layer<T> input;
        input.kind = LayerKind::Input;
        input.name = "input";
        input.channel_group = 0;
        net.layers.push_back(input);
    }

    int last() const { return static_cast<int>(net.layers.size()) - 1; }

    int conv(int in_ch, int out_ch, int k, int stride, int pad, int groups, Rng& rng,
             bool prunable = true) {
        Layer<T> l;
        l.kind = LayerKind::Conv;
        l.name = "conv" + std::to_string(net.layers.size());
        l.input0 = last();
        l.in_ch = in_ch;
        l.out_ch = out_ch;
        l.kh = l.kw = k;
        l.stride = stride;
        l.pad = pad;
        l.groups = groups;
        l.w = Tensor<T>({out_ch, in_ch / groups, k, k});
        for (auto& v : l.w.data) v = static_cast<T>(rng.normal(0.0, 0.3));
        l.prunable = prunable;
        l.channel_group = (groups > 1 && groups == in_ch && groups == out_ch)
                              ? net.layers[l.input0].channel_group
                              : static_cast<int>(net.layers.size()) + 1000;
        net.layers.push_back(std::move(l));
        return last();
    }

    int bn(int channels, Rng& rng, bool random_params = true) {
        Layer<T> l;
        l.kind = LayerKind::BatchNorm;
        l.name = "bn" + std::to_string(net.layers.size());
        l.input0 = last();
        l.gamma.resize(channels);
        l.beta.resize(channels);
        l.running_mean.assign(channels, T(0));
        l.running_var.assign(channels, T(1));
        for (int c = 0; c < channels; ++c) {
            l.gamma[c] = random_params ? static_cast<T>(0.5 + 0.4 * rng.uniform()) : T(1);
            l.beta[c] = random_params ? static_cast<T>(0.2 * rng.normal()) : T(0);
        }
        l.channel_group = net.layers[l.input0].channel_group;
        net.layers.push_back(std::move(l));
        return last();
    }

    int relu() {
        Layer<T> l;
        l.kind = LayerKind::ReLU;
        l.name = "relu" + std::to_string(net.layers.size());
        l.input0 = last();
        l.channel_group = net.layers[l.input0].channel_group;
        net.layers.push_back(std::move(l));
        return last();
    }

    int maxpool() {
        Layer<T> l;
        l.kind = LayerKind::MaxPool;
        l.name = "pool" + std::to_string(net.layers.size());
        l.input0 = last();
        l.channel_group = net.layers[l.input0].channel_group;
        net.layers.push_back(std::move(l));
        return last();
    }

    int gap() {
        Layer<T> l;
        l.kind = LayerKind::GlobalAvgPool;
        l.name = "gap";
        l.input0 = last();
        l.channel_group = net.layers[l.input0].channel_group;
        net.layers.push_back(std::move(l));
        return last();
    }

    int dense(int in_features, int out_features, Rng& rng) {
        Layer<T> l;
        l.kind = LayerKind::Dense;
        l.name = "fc" + std::to_string(net.layers.size());
        l.input0 = last();
        l.in_ch = in_features;
        l.out_ch = out_features;
        l.w = Tensor<T>({out_features, in_features});
        for (auto& v : l.w.data) v = static_cast<T>(rng.normal(0.0, 0.3));
        l.bias.assign(out_features, T(0));
        l.channel_group = -1;
        net.layers.push_back(std::move(l));
        net.num_classes = out_features;
        return last();
    }

    Network<T> take() {
        validate_graph(net);
        return std::move(net);
    }
};

// conv -> bn -> relu -> pool -> gap -> dense classifier on a small grid
template <typename T>
Network<T> tiny_classifier(uint64_t seed, int in_ch = 1, int hw = 8, int mid = 4,
                           int classes = 3) {
    Rng rng(seed);
    NetBuilder<T> b(in_ch, hw, hw);
    b.conv(in_ch, mid, 3, 1, 1, 1, rng);
    b.bn(mid, rng);
    b.relu();
    b.maxpool();
    b.gap();
    b.dense(mid, classes, rng);
    return b.take();
}

}  // namespace testutil
