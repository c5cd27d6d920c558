#pragma once

#include <cstdint>
#include <string>

#include "prunelab/net.hpp"

namespace prunelab {

enum class Family { Vgg, Resnet, Mobilenet };

const char* family_name(Family f);
Family family_from_name(const std::string& s);

// Architecture request. depth selects vgg/resnet variants, width_multiplier
// selects mobilenet variants; base_channels scales every stage width
// (default 16 gives desk-scale stages 16/32/64). Templates are tabulated in
// docs/architectures.md.
struct ArchSpec {
    Family family = Family::Vgg;
    int depth = 11;                 // vgg: 11/13/16/19, resnet: 11/20/29/38
    double width_multiplier = 1.0;  // mobilenet: (0,1]
    int num_classes = 10;
    int in_ch = 1;
    int mel_bands = 40;
    int frames = 128;
    int base_channels = 16;

    std::string variant() const;  // e.g. "vgg16", "mobilenet-0.50"
};

// true when the spec matches one of the paper's twelve variants
bool is_paper_variant(const ArchSpec& spec);

// Builds the network: every conv followed by a BN layer, gamma initialized to
// 0.5, beta 0, conv weights He fan-in Gaussians, no dropout anywhere.
// Deterministic under the seed.
template <typename T>
Network<T> build_network(const ArchSpec& spec, uint64_t seed);

struct ParamCount {
    long long trainable = 0;  // conv/dense weights, dense bias, gamma, beta
    long long total = 0;      // + BN running stats
};

template <typename T>
ParamCount count_parameters(const Network<T>& net);

// total conv output channels, and those belonging to prunable groups
template <typename T>
long long total_channels(const Network<T>& net);
template <typename T>
long long prunable_channels(const Network<T>& net);

}  // namespace prunelab
