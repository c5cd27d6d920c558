#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstring>
#include <vector>

#include "helpers.hpp"
#include "prunelab/archzoo.hpp"

using namespace prunelab;

namespace {

std::vector<const Layer<float>*> convs_of(const Network<float>& net) {
    std::vector<const Layer<float>*> out;
    for (const auto& l : net.layers)
        if (l.kind == LayerKind::Conv) out.push_back(&l);
    return out;
}

ArchSpec small_spec(Family f) {
    ArchSpec s;
    s.family = f;
    s.depth = f == Family::Resnet ? 11 : 11;
    s.num_classes = 4;
    s.mel_bands = 16;
    s.frames = 16;
    s.base_channels = 4;
    return s;
}

}  // namespace

TEST_CASE("vgg11 follows the documented template plan") {
    ArchSpec s;
    s.family = Family::Vgg;
    s.depth = 11;
    s.base_channels = 16;
    Network<float> net = build_network<float>(s, 1);

    // docs/architectures.md: conv widths per stage for depth 11, base 16
    const std::vector<int> want = {16, 32, 64, 64, 64, 64, 64, 64};
    auto convs = convs_of(net);
    REQUIRE(convs.size() == want.size());
    for (size_t i = 0; i < want.size(); ++i) {
        CHECK(convs[i]->out_ch == want[i]);
        CHECK(convs[i]->kh == 3);
        CHECK(convs[i]->stride == 1);
        CHECK(convs[i]->pad == 1);
        CHECK(convs[i]->prunable);
    }
    CHECK(net.layers.back().kind == LayerKind::Dense);
    CHECK(net.layers.back().out_ch == s.num_classes);

    int pools = 0, denses = 0;
    for (const auto& l : net.layers) {
        pools += l.kind == LayerKind::MaxPool;
        denses += l.kind == LayerKind::Dense;
    }
    CHECK(pools == 5);
    CHECK(denses == 1);
}

TEST_CASE("vgg depths map to the documented conv counts") {
    for (auto [depth, conv_count] : std::vector<std::pair<int, int>>{
             {11, 8}, {13, 10}, {16, 13}, {19, 16}}) {
        ArchSpec s;
        s.family = Family::Vgg;
        s.depth = depth;
        s.base_channels = 8;
        Network<float> net = build_network<float>(s, 1);
        CHECK(static_cast<int>(convs_of(net).size()) == conv_count);
    }
}

TEST_CASE("every conv is followed by a BN with matching channel count") {
    // random valid specs across the three families
    Rng rng(11);
    for (int trial = 0; trial < 30; ++trial) {
        ArchSpec s;
        const int fam = static_cast<int>(rng.uniform_int(3));
        s.family = fam == 0 ? Family::Vgg : (fam == 1 ? Family::Resnet : Family::Mobilenet);
        if (s.family == Family::Vgg) {
            const int depths[4] = {11, 13, 16, 19};
            s.depth = depths[rng.uniform_int(4)];
        } else if (s.family == Family::Resnet) {
            const int depths[4] = {11, 20, 29, 38};
            s.depth = depths[rng.uniform_int(4)];
        } else {
            const double widths[4] = {0.25, 0.5, 0.75, 1.0};
            s.depth = 0;
            s.width_multiplier = widths[rng.uniform_int(4)];
        }
        s.base_channels = 2 + static_cast<int>(rng.uniform_int(6));
        s.num_classes = 2 + static_cast<int>(rng.uniform_int(8));
        s.mel_bands = 16;
        s.frames = 16;
        if (s.family != Family::Mobilenet) s.depth = s.depth == 0 ? 11 : s.depth;

        Network<float> net = build_network<float>(s, 3 + trial);
        for (int li = 0; li < net.num_layers(); ++li) {
            const auto& l = net.layers[li];
            if (l.kind != LayerKind::Conv) continue;
            bool paired = false;
            for (int lj = li + 1; lj < net.num_layers(); ++lj) {
                if (net.layers[lj].kind == LayerKind::BatchNorm && net.layers[lj].input0 == li) {
                    paired = true;
                    CHECK(net.layers[lj].gamma.size() == static_cast<size_t>(l.out_ch));
                    break;
                }
            }
            CHECK(paired);
        }
    }
}

TEST_CASE("gamma starts at 0.5 and beta at 0 everywhere") {
    Network<float> net = build_network<float>(small_spec(Family::Resnet), 5);
    for (const auto& l : net.layers) {
        if (l.kind != LayerKind::BatchNorm) continue;
        for (float g : l.gamma) CHECK(g == 0.5f);
        for (float b : l.beta) CHECK(b == 0.f);
        for (float m : l.running_mean) CHECK(m == 0.f);
        for (float v : l.running_var) CHECK(v == 1.f);
    }
}

TEST_CASE("mobilenet width 0.5 exactly halves every stage of width 1.0") {
    ArchSpec a = small_spec(Family::Mobilenet);
    a.depth = 0;
    a.base_channels = 16;
    a.width_multiplier = 1.0;
    ArchSpec b = a;
    b.width_multiplier = 0.5;
    auto ca = convs_of(build_network<float>(a, 1));
    auto cb = convs_of(build_network<float>(b, 1));
    REQUIRE(ca.size() == cb.size());
    for (size_t i = 0; i < ca.size(); ++i)
        CHECK(cb[i]->out_ch == std::max(1, (ca[i]->out_ch + 1) / 2));
}

TEST_CASE("mobilenet parameter count is strictly monotone in width") {
    long long prev = -1;
    for (double w : {0.25, 0.5, 0.75, 1.0}) {
        ArchSpec s = small_spec(Family::Mobilenet);
        s.depth = 0;
        s.base_channels = 16;
        s.width_multiplier = w;
        const long long n = count_parameters(build_network<float>(s, 1)).trainable;
        CHECK(n > prev);
        prev = n;
    }
}

TEST_CASE("identical seeds build bitwise-identical networks") {
    for (Family f : {Family::Vgg, Family::Resnet, Family::Mobilenet}) {
        ArchSpec s = small_spec(f);
        if (f == Family::Mobilenet) s.depth = 0;
        Network<float> a = build_network<float>(s, 42);
        Network<float> b = build_network<float>(s, 42);
        auto pa = trainable_params(a);
        auto pb = trainable_params(b);
        REQUIRE(pa.size() == pb.size());
        for (size_t i = 0; i < pa.size(); ++i)
            CHECK(std::memcmp(pa[i].data, pb[i].data, pa[i].size * sizeof(float)) == 0);
    }
}

TEST_CASE("count_parameters closed forms") {
    Rng rng(1);
    SUBCASE("3x3 conv 2->4 plus BN") {
        testutil::NetBuilder<float> b(2, 8, 8);
        b.conv(2, 4, 3, 1, 1, 1, rng);
        b.bn(4, rng);
        ParamCount pc = count_parameters(b.net);
        CHECK(pc.trainable == 72 + 8);   // 3*3*2*4 conv weights, gamma+beta
        CHECK(pc.total == 72 + 8 + 8);   // + running stats
    }
    SUBCASE("depthwise 3x3 over 8 channels") {
        testutil::NetBuilder<float> b(8, 8, 8);
        b.conv(8, 8, 3, 1, 1, 8, rng);
        CHECK(count_parameters(b.net).trainable == 72);  // 3*3*8
    }
}

TEST_CASE("mini-vgg parameter count matches layer-by-layer arithmetic") {
    ArchSpec s;
    s.family = Family::Vgg;
    s.depth = 11;
    s.base_channels = 16;
    s.num_classes = 10;
    Network<float> net = build_network<float>(s, 1);

    // independent spreadsheet: conv kh*kw*cin*cout, BN 2c, head in*out+out
    long long want = 0;
    const int plan[8][2] = {{1, 16},  {16, 32}, {32, 64}, {64, 64},
                            {64, 64}, {64, 64}, {64, 64}, {64, 64}};
    for (const auto& p : plan) want += 9LL * p[0] * p[1] + 2LL * p[1];
    want += 64LL * 10 + 10;
    CHECK(count_parameters(net).trainable == want);
}

TEST_CASE("resnet depth labels map to the documented block plans") {
    for (auto [depth, blocks] : std::vector<std::pair<int, int>>{
             {11, 3}, {20, 9}, {29, 12}, {38, 18}}) {
        ArchSpec s = small_spec(Family::Resnet);
        s.depth = depth;
        Network<float> net = build_network<float>(s, 2);
        int adds = 0;
        for (const auto& l : net.layers) adds += l.kind == LayerKind::Add;
        CHECK(adds == blocks);
        // only the first conv of each block is prunable
        int prunable = 0;
        for (const auto* c : convs_of(net)) prunable += c->prunable;
        CHECK(prunable == blocks);
    }
}

TEST_CASE("mobilenet depthwise convs are coupled, pointwise prunable") {
    ArchSpec s = small_spec(Family::Mobilenet);
    s.depth = 0;
    Network<float> net = build_network<float>(s, 3);
    for (const auto* c : convs_of(net)) {
        if (c->is_depthwise()) {
            CHECK_FALSE(c->prunable);
        } else {
            CHECK(c->prunable);
        }
    }
}

TEST_CASE("inconsistent specs are rejected") {
    ArchSpec s;
    s.family = Family::Vgg;
    s.depth = 11;
    s.width_multiplier = 0.5;  // mobilenet knob on a vgg
    CHECK_THROWS_AS(build_network<float>(s, 1), std::invalid_argument);

    ArchSpec t;
    t.family = Family::Vgg;
    t.depth = 12;  // no template
    CHECK_THROWS_AS(build_network<float>(t, 1), std::invalid_argument);

    ArchSpec m;
    m.family = Family::Mobilenet;
    m.depth = 0;
    m.width_multiplier = 1.5;  // out of range
    CHECK_THROWS_AS(build_network<float>(m, 1), std::invalid_argument);
}

TEST_CASE("paper variants are recognized") {
    ArchSpec s;
    s.family = Family::Mobilenet;
    s.width_multiplier = 0.75;
    CHECK(is_paper_variant(s));
    s.width_multiplier = 0.6;
    CHECK_FALSE(is_paper_variant(s));
}

TEST_CASE("built networks run forward in both modes") {
    for (Family f : {Family::Vgg, Family::Resnet, Family::Mobilenet}) {
        ArchSpec s = small_spec(f);
        if (f == Family::Mobilenet) s.depth = 0;
        Network<float> net = build_network<float>(s, 9);
        Rng rng(9);
        TensorF x = testutil::random_tensor<float>({2, 1, 16, 16}, rng);
        TensorF eval_logits = forward_eval(net, x);
        CHECK(eval_logits.dim(1) == s.num_classes);
        CHECK(eval_logits.all_finite());
        TensorF train_logits = forward(net, x, Mode::Train);
        CHECK(train_logits.all_finite());
    }
}
