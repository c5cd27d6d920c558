#include "prunelab/archzoo.hpp"

#include <cmath>
#include <map>
#include <stdexcept>
#include <vector>

#include "prunelab/rng.hpp"

namespace prunelab {

const char* family_name(Family f) {
    switch (f) {
        case Family::Vgg: return "vgg";
        case Family::Resnet: return "resnet";
        case Family::Mobilenet: return "mobilenet";
    }
    return "?";
}

Family family_from_name(const std::string& s) {
    if (s == "vgg") return Family::Vgg;
    if (s == "resnet") return Family::Resnet;
    if (s == "mobilenet") return Family::Mobilenet;
    throw std::invalid_argument("unknown architecture family: " + s);
}

std::string ArchSpec::variant() const {
    if (family == Family::Mobilenet) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "mobilenet-%.2f", width_multiplier);
        return buf;
    }
    return std::string(family_name(family)) + std::to_string(depth);
}

bool is_paper_variant(const ArchSpec& spec) {
    switch (spec.family) {
        case Family::Vgg:
            return spec.depth == 11 || spec.depth == 13 || spec.depth == 16 || spec.depth == 19;
        case Family::Resnet:
            return spec.depth == 11 || spec.depth == 20 || spec.depth == 29 || spec.depth == 38;
        case Family::Mobilenet:
            return spec.width_multiplier == 0.25 || spec.width_multiplier == 0.5 ||
                   spec.width_multiplier == 0.75 || spec.width_multiplier == 1.0;
    }
    return false;
}

namespace {

void check_spec(const ArchSpec& s) {
    if (s.num_classes < 2) throw std::invalid_argument("archspec: num_classes must be >= 2");
    if (s.in_ch < 1 || s.mel_bands < 1 || s.frames < 1)
        throw std::invalid_argument("archspec: input shape extents must be positive");
    if (s.base_channels < 1) throw std::invalid_argument("archspec: base_channels must be >= 1");
    if (s.family == Family::Mobilenet) {
        if (!(s.width_multiplier > 0.0 && s.width_multiplier <= 1.0))
            throw std::invalid_argument("archspec: mobilenet width_multiplier must be in (0,1]");
    } else {
        if (s.width_multiplier != 1.0)
            throw std::invalid_argument(
                "archspec: width_multiplier is a mobilenet knob; set it to 1 for " +
                std::string(family_name(s.family)));
    }
}

// conv counts per stage, stage widths are base * {1,2,4,4,4}
const std::map<int, std::vector<int>> kVggPlans = {
    {11, {1, 1, 2, 2, 2}},
    {13, {2, 2, 2, 2, 2}},
    {16, {2, 2, 3, 3, 3}},
    {19, {2, 2, 4, 4, 4}},
};

// basic blocks per stage, stage widths are base * {1,2,4}
const std::map<int, std::vector<int>> kResnetPlans = {
    {11, {1, 1, 1}},
    {20, {3, 3, 3}},
    {29, {4, 4, 4}},
    {38, {6, 6, 6}},
};

// width-1.0 mobilenet template: (out_channels_in_base_units, stride)
const std::vector<std::pair<int, int>> kMobilenetBlocks = {
    {1, 1}, {2, 2}, {2, 1}, {4, 2}, {4, 1},
};

int scaled_width(int base_units, int base_channels, double mult) {
    const int full = base_units * base_channels;
    return std::max(1, static_cast<int>(std::ceil(mult * full)));
}

template <typename T>
struct Builder {
    Network<T> net;
    Rng rng;
    int next_group = 0;

    Builder(const ArchSpec& s, uint64_t seed) : rng(seed) {
        net.in_ch = s.in_ch;
        net.in_h = s.mel_bands;
        net.in_w = s.frames;
        net.num_classes = s.num_classes;
        Layer<T> input;
        input.kind = LayerKind::Input;
        input.name = "input";
        input.channel_group = new_group();
        net.layers.push_back(input);
    }

    int new_group() { return next_group++; }
    int last() const { return static_cast<int>(net.layers.size()) - 1; }
    int group_of(int li) const { return net.layers[li].channel_group; }

    int conv(const std::string& name, int from, int in_ch, int out_ch, int k, int stride,
             int pad, int groups, bool prunable) {
        Layer<T> l;
        l.kind = LayerKind::Conv;
        l.name = name;
        l.input0 = from;
        l.in_ch = in_ch;
        l.out_ch = out_ch;
        l.kh = k;
        l.kw = k;
        l.stride = stride;
        l.pad = pad;
        l.groups = groups;
        l.w = Tensor<T>({out_ch, in_ch / groups, k, k});
        const double fan_in = static_cast<double>(in_ch / groups) * k * k;
        const double sigma = std::sqrt(2.0 / fan_in);
        for (auto& v : l.w.data) v = static_cast<T>(rng.normal(0.0, sigma));
        l.prunable = prunable;
        l.channel_group = l.is_depthwise() ? group_of(from) : new_group();
        net.layers.push_back(std::move(l));
        return last();
    }

    int bn(const std::string& name, int from, int channels) {
        Layer<T> l;
        l.kind = LayerKind::BatchNorm;
        l.name = name;
        l.input0 = from;
        l.gamma.assign(channels, T(0.5));  // 0.5 init for better sparse training
        l.beta.assign(channels, T(0));
        l.running_mean.assign(channels, T(0));
        l.running_var.assign(channels, T(1));
        l.channel_group = group_of(from);
        net.layers.push_back(std::move(l));
        return last();
    }

    int relu(const std::string& name, int from) {
        Layer<T> l;
        l.kind = LayerKind::ReLU;
        l.name = name;
        l.input0 = from;
        l.channel_group = group_of(from);
        net.layers.push_back(std::move(l));
        return last();
    }

    int maxpool(const std::string& name, int from) {
        Layer<T> l;
        l.kind = LayerKind::MaxPool;
        l.name = name;
        l.input0 = from;
        l.pool_k = 2;
        l.pool_stride = 2;
        l.channel_group = group_of(from);
        net.layers.push_back(std::move(l));
        return last();
    }

    int gap(int from) {
        Layer<T> l;
        l.kind = LayerKind::GlobalAvgPool;
        l.name = "gap";
        l.input0 = from;
        l.channel_group = group_of(from);
        net.layers.push_back(std::move(l));
        return last();
    }

    int add(const std::string& name, int a, int b) {
        Layer<T> l;
        l.kind = LayerKind::Add;
        l.name = name;
        l.input0 = a;
        l.input1 = b;
        l.channel_group = group_of(a);
        net.layers.push_back(std::move(l));
        return last();
    }

    int dense(const std::string& name, int from, int in_features, int out_features) {
        Layer<T> l;
        l.kind = LayerKind::Dense;
        l.name = name;
        l.input0 = from;
        l.in_ch = in_features;
        l.out_ch = out_features;
        l.w = Tensor<T>({out_features, in_features});
        const double sigma = std::sqrt(2.0 / static_cast<double>(in_features));
        for (auto& v : l.w.data) v = static_cast<T>(rng.normal(0.0, sigma));
        l.bias.assign(out_features, T(0));
        l.channel_group = -1;
        net.layers.push_back(std::move(l));
        return last();
    }

    // conv + bn + relu
    int cbr(const std::string& stem, int from, int in_ch, int out_ch, int k, int stride, int pad,
            int groups, bool prunable) {
        int c = conv(stem, from, in_ch, out_ch, k, stride, pad, groups, prunable);
        int b = bn(stem + ".bn", c, out_ch);
        return relu(stem + ".relu", b);
    }
};

template <typename T>
Network<T> build_vgg(const ArchSpec& s, uint64_t seed) {
    auto it = kVggPlans.find(s.depth);
    if (it == kVggPlans.end())
        throw std::invalid_argument("archspec: no vgg template for depth " +
                                    std::to_string(s.depth));
    const std::vector<int>& convs_per_stage = it->second;
    const int widths_units[5] = {1, 2, 4, 4, 4};

    Builder<T> b(s, seed);
    int cur = 0;
    int ch = s.in_ch;
    for (int st = 0; st < 5; ++st) {
        const int w = widths_units[st] * s.base_channels;
        for (int ci = 0; ci < convs_per_stage[st]; ++ci) {
            const std::string name =
                "stage" + std::to_string(st + 1) + ".conv" + std::to_string(ci);
            cur = b.cbr(name, cur, ch, w, 3, 1, 1, 1, /*prunable=*/true);
            ch = w;
        }
        cur = b.maxpool("stage" + std::to_string(st + 1) + ".pool", cur);
    }
    cur = b.gap(cur);
    b.dense("fc", cur, ch, s.num_classes);
    validate_graph(b.net);
    return std::move(b.net);
}

// Basic residual block, conv->BN->ReLU->conv->BN, projection shortcut when the
// shape changes, ReLU after the add. Only the first conv's channels are
// prunable; block outputs and the identity path stay intact so the add is
// always dimension-consistent.
template <typename T>
Network<T> build_resnet(const ArchSpec& s, uint64_t seed) {
    auto it = kResnetPlans.find(s.depth);
    if (it == kResnetPlans.end())
        throw std::invalid_argument("archspec: no resnet template for depth " +
                                    std::to_string(s.depth));
    const std::vector<int>& blocks_per_stage = it->second;
    const int widths_units[3] = {1, 2, 4};

    Builder<T> b(s, seed);
    int cur = b.cbr("stem", 0, s.in_ch, s.base_channels, 3, 1, 1, 1, /*prunable=*/false);
    int ch = s.base_channels;
    for (int st = 0; st < 3; ++st) {
        const int w = widths_units[st] * s.base_channels;
        for (int bi = 0; bi < blocks_per_stage[st]; ++bi) {
            const int stride = (st > 0 && bi == 0) ? 2 : 1;
            const std::string stem =
                "stage" + std::to_string(st + 1) + ".block" + std::to_string(bi);
            const int block_in = cur;
            int c1 = b.conv(stem + ".conv1", block_in, ch, w, 3, stride, 1, 1,
                            /*prunable=*/true);
            int b1 = b.bn(stem + ".bn1", c1, w);
            int r1 = b.relu(stem + ".relu1", b1);
            int c2 = b.conv(stem + ".conv2", r1, w, w, 3, 1, 1, 1, /*prunable=*/false);
            int b2 = b.bn(stem + ".bn2", c2, w);
            int skip = block_in;
            if (stride != 1 || ch != w) {
                int pc = b.conv(stem + ".skip.conv", block_in, ch, w, 1, stride, 0, 1,
                                /*prunable=*/false);
                skip = b.bn(stem + ".skip.bn", pc, w);
            }
            // the add ties both channel sets together; neither side is prunable
            b.net.layers[b2].channel_group = b.group_of(skip);
            int a = b.add(stem + ".add", b2, skip);
            b.net.layers[c2].channel_group = b.group_of(skip);
            cur = b.relu(stem + ".relu2", a);
            ch = w;
        }
    }
    cur = b.gap(cur);
    b.dense("fc", cur, ch, s.num_classes);
    validate_graph(b.net);
    return std::move(b.net);
}

// v1-style depthwise-separable blocks; pruning a pointwise output channel also
// removes the coupled depthwise channel of the next block, so depthwise convs
// share the channel group of their input and are never ranked independently.
template <typename T>
Network<T> build_mobilenet(const ArchSpec& s, uint64_t seed) {
    Builder<T> b(s, seed);
    int ch = scaled_width(1, s.base_channels, s.width_multiplier);
    int cur = b.cbr("stem", 0, s.in_ch, ch, 3, 2, 1, 1, /*prunable=*/true);
    for (size_t bi = 0; bi < kMobilenetBlocks.size(); ++bi) {
        const auto [units, stride] = kMobilenetBlocks[bi];
        const int out = scaled_width(units, s.base_channels, s.width_multiplier);
        const std::string stem = "block" + std::to_string(bi);
        cur = b.cbr(stem + ".dw", cur, ch, ch, 3, stride, 1, /*groups=*/ch,
                    /*prunable=*/false);
        cur = b.cbr(stem + ".pw", cur, ch, out, 1, 1, 0, 1, /*prunable=*/true);
        ch = out;
    }
    cur = b.gap(cur);
    b.dense("fc", cur, ch, s.num_classes);
    validate_graph(b.net);
    return std::move(b.net);
}

}  // namespace

template <typename T>
Network<T> build_network(const ArchSpec& spec, uint64_t seed) {
    check_spec(spec);
    switch (spec.family) {
        case Family::Vgg: return build_vgg<T>(spec, seed);
        case Family::Resnet: return build_resnet<T>(spec, seed);
        case Family::Mobilenet: return build_mobilenet<T>(spec, seed);
    }
    throw std::invalid_argument("archspec: unknown family");
}

template <typename T>
ParamCount count_parameters(const Network<T>& net) {
    ParamCount pc;
    for (const auto& l : net.layers) {
        switch (l.kind) {
            case LayerKind::Conv:
                pc.trainable += static_cast<long long>(l.w.numel());
                break;
            case LayerKind::Dense:
                pc.trainable += static_cast<long long>(l.w.numel() + l.bias.size());
                break;
            case LayerKind::BatchNorm:
                pc.trainable += static_cast<long long>(l.gamma.size() + l.beta.size());
                pc.total += static_cast<long long>(l.running_mean.size() + l.running_var.size());
                break;
            default:
                break;
        }
    }
    pc.total += pc.trainable;
    return pc;
}

template <typename T>
long long total_channels(const Network<T>& net) {
    long long n = 0;
    for (const auto& l : net.layers)
        if (l.kind == LayerKind::Conv) n += l.out_ch;
    return n;
}

template <typename T>
long long prunable_channels(const Network<T>& net) {
    long long n = 0;
    for (const auto& l : net.layers)
        if (l.kind == LayerKind::Conv && l.prunable) n += l.out_ch;
    return n;
}

#define PRUNELAB_ZOO_INSTANTIATE(T)                                  \
    template Network<T> build_network<T>(const ArchSpec&, uint64_t); \
    template ParamCount count_parameters<T>(const Network<T>&);      \
    template long long total_channels<T>(const Network<T>&);         \
    template long long prunable_channels<T>(const Network<T>&);

PRUNELAB_ZOO_INSTANTIATE(float)
PRUNELAB_ZOO_INSTANTIATE(double)

#undef PRUNELAB_ZOO_INSTANTIATE

}  // namespace prunelab
