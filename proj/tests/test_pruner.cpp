#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>

#include "helpers.hpp"
#include "prunelab/archzoo.hpp"
#include "prunelab/pruner.hpp"
#include "prunelab/sparsity.hpp"

using namespace prunelab;
using testutil::random_tensor;

namespace {

ArchSpec tiny_spec(Family f, int base = 4) {
    ArchSpec s;
    s.family = f;
    s.depth = f == Family::Mobilenet ? 0 : 11;
    s.num_classes = 4;
    s.mel_bands = 16;
    s.frames = 16;
    s.base_channels = base;
    return s;
}

int first_bn(const Network<float>& net) {
    for (int li = 0; li < net.num_layers(); ++li)
        if (net.layers[li].kind == LayerKind::BatchNorm) return li;
    return -1;
}

// zero the scale and shift of a channel across every BN sharing its group
void kill_channel(Network<float>& net, int bn_layer, int channel) {
    const int group = net.layers[bn_layer].channel_group;
    for (auto& l : net.layers)
        if (l.kind == LayerKind::BatchNorm && l.channel_group == group) {
            l.gamma[static_cast<size_t>(channel)] = 0.f;
            l.beta[static_cast<size_t>(channel)] = 0.f;
        }
}

void randomize_running_stats(Network<float>& net, Rng& rng) {
    for (auto& l : net.layers)
        if (l.kind == LayerKind::BatchNorm)
            for (size_t c = 0; c < l.running_mean.size(); ++c) {
                l.running_mean[c] = static_cast<float>(rng.normal(0.0, 0.1));
                l.running_var[c] = static_cast<float>(rng.uniform(0.5, 1.5));
            }
}

double max_abs_diff(const TensorF& a, const TensorF& b) {
    REQUIRE(a.numel() == b.numel());
    double m = 0.0;
    for (size_t i = 0; i < a.numel(); ++i)
        m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
    return m;
}

}  // namespace

TEST_CASE("ranking sorts ascending by scale magnitude with floors applied") {
    Rng rng(31);
    testutil::NetBuilder<float> b(1, 8, 8);
    b.conv(1, 3, 3, 1, 1, 1, rng);
    b.bn(3, rng);
    b.relu();
    b.gap();
    b.dense(3, 2, rng);
    Network<float> net = b.take();
    net.layers[2].gamma = {0.9f, 0.0f, 0.5f};

    auto ranking = rank_channels(net, PruneStrategy{});
    // ascending magnitude puts (ch1, ch2, ch0); the floor of one channel per
    // layer trims the tail, leaving (ch1, ch2)
    REQUIRE(ranking.size() == 2);
    CHECK(ranking[0].channel_index == 1);
    CHECK(ranking[1].channel_index == 2);
    for (size_t i = 1; i < ranking.size(); ++i)
        CHECK(std::abs(ranking[i].gamma_value) >= std::abs(ranking[i - 1].gamma_value));
}

TEST_CASE("equal scales break ties toward the lower layer index") {
    Rng rng(32);
    testutil::NetBuilder<float> b(1, 8, 8);
    b.conv(1, 2, 3, 1, 1, 1, rng);
    b.bn(2, rng);
    b.relu();
    b.conv(2, 2, 3, 1, 1, 1, rng);
    b.bn(2, rng);
    b.relu();
    b.gap();
    b.dense(2, 2, rng);
    Network<float> net = b.take();
    net.layers[2].gamma = {0.3f, 0.8f};
    net.layers[5].gamma = {0.3f, 0.9f};

    auto ranking = rank_channels(net, PruneStrategy{});
    REQUIRE(ranking.size() == 2);
    CHECK(ranking[0].layer_index == 2);
    CHECK(ranking[1].layer_index == 5);
    CHECK(ranking[0].gamma_value == doctest::Approx(0.3));
    CHECK(ranking[1].gamma_value == doctest::Approx(0.3));
}

TEST_CASE("a two-channel layer contributes at most one candidate") {
    Rng rng(33);
    testutil::NetBuilder<float> b(1, 8, 8);
    b.conv(1, 2, 3, 1, 1, 1, rng);
    b.bn(2, rng);
    b.relu();
    b.gap();
    b.dense(2, 2, rng);
    Network<float> net = b.take();
    auto ranking = rank_channels(net, PruneStrategy{});
    CHECK(ranking.size() == 1);
}

TEST_CASE("layer_quota interleaves layers proportionally") {
    Rng rng(34);
    testutil::NetBuilder<float> b(1, 8, 8);
    b.conv(1, 8, 3, 1, 1, 1, rng);
    b.bn(8, rng);
    b.relu();
    b.conv(8, 4, 3, 1, 1, 1, rng);
    b.bn(4, rng);
    b.relu();
    b.gap();
    b.dense(4, 2, rng);
    Network<float> net = b.take();

    PruneStrategy strategy;
    strategy.kind = StrategyKind::LayerQuota;
    auto ranking = rank_channels(net, strategy);

    // consuming half the candidates takes half of each layer
    int from_wide = 0, from_narrow = 0;
    for (size_t i = 0; i < 6; ++i)
        (ranking[i].layer_index == 2 ? from_wide : from_narrow) += 1;
    CHECK(from_wide == 4);
    CHECK(from_narrow == 2);
}

TEST_CASE("protected layers are excluded from the ranking") {
    Network<float> net = build_network<float>(tiny_spec(Family::Vgg), 1);
    PruneStrategy strategy;
    int first_conv = -1;
    for (int li = 0; li < net.num_layers(); ++li)
        if (net.layers[li].kind == LayerKind::Conv) {
            first_conv = li;
            break;
        }
    strategy.protected_layers.insert(first_conv);
    auto ranking = rank_channels(net, strategy);
    const int bn = first_bn(net);
    for (const auto& r : ranking) CHECK(r.layer_index != bn);
}

TEST_CASE("empty victim set is a bitwise no-op") {
    Rng rng(35);
    for (Family f : {Family::Vgg, Family::Resnet, Family::Mobilenet}) {
        Network<float> net = build_network<float>(tiny_spec(f), 11);
        randomize_running_stats(net, rng);
        Network<float> copy = prune_channels(net, {});
        TensorF x = random_tensor<float>({2, 1, 16, 16}, rng);
        TensorF a = forward_eval(net, x);
        TensorF b = forward_eval(copy, x);
        CHECK(std::memcmp(a.data.data(), b.data.data(), a.numel() * sizeof(float)) == 0);
    }
}

TEST_CASE("dead channels prune away without moving the logits") {
    Rng rng(36);
    for (Family f : {Family::Vgg, Family::Resnet, Family::Mobilenet}) {
        CAPTURE(family_name(f));
        Network<float> net = build_network<float>(tiny_spec(f, 6), 12);
        randomize_running_stats(net, rng);
        auto ranking = rank_channels(net, PruneStrategy{});
        REQUIRE(!ranking.empty());
        ChannelRef victim = ranking[ranking.size() / 2];
        kill_channel(net, victim.layer_index, victim.channel_index);
        victim.gamma_value = 0.0;

        TensorF x = random_tensor<float>({3, 1, 16, 16}, rng);
        TensorF before = forward_eval(net, x);
        Network<float> pruned = prune_channels(net, {victim});
        TensorF after = forward_eval(pruned, x);
        CHECK(max_abs_diff(before, after) < 1e-5);
    }
}

TEST_CASE("pruning 2 of 4 channels drops the closed-form parameter count") {
    Rng rng(37);
    testutil::NetBuilder<float> b(2, 8, 8);
    b.conv(2, 4, 3, 1, 1, 1, rng);
    b.bn(4, rng);
    b.relu();
    b.conv(4, 3, 3, 1, 1, 1, rng);
    b.bn(3, rng);
    b.relu();
    b.gap();
    b.dense(3, 2, rng);
    Network<float> net = b.take();

    const long long before = count_parameters(net).total;
    Network<float> pruned = prune_channels(net, {{2, 1, 0.1}, {2, 3, 0.2}});
    const long long after = count_parameters(pruned).total;
    // producer rows 3*3*2*2, BN entries incl. buffers 4*2, consumer slices 3*3*2*3
    CHECK(before - after == 9 * 2 * 2 + 8 + 9 * 2 * 3);
}

TEST_CASE("structural violations are rejected with the offending channel") {
    Network<float> vgg = build_network<float>(tiny_spec(Family::Vgg), 13);
    const int bn = first_bn(vgg);
    CHECK_THROWS_WITH_AS(prune_channels(vgg, {{bn, 99, 0.0}}), doctest::Contains("out of range"),
                         std::invalid_argument);
    CHECK_THROWS_AS(prune_channels(vgg, {{0, 0, 0.0}}), std::invalid_argument);

    // resnet block outputs are protected
    Network<float> res = build_network<float>(tiny_spec(Family::Resnet), 13);
    int bn2 = -1;
    for (int li = 0; li < res.num_layers(); ++li)
        if (res.layers[li].kind == LayerKind::BatchNorm &&
            res.layers[li].name.find("bn2") != std::string::npos) {
            bn2 = li;
            break;
        }
    REQUIRE(bn2 >= 0);
    CHECK_THROWS_WITH_AS(prune_channels(res, {{bn2, 0, 0.0}}),
                         doctest::Contains("non-prunable"), std::invalid_argument);

    // emptying a whole layer violates the floor
    testutil::NetBuilder<float> nb(1, 8, 8);
    Rng rng(38);
    nb.conv(1, 2, 3, 1, 1, 1, rng);
    nb.bn(2, rng);
    nb.relu();
    nb.gap();
    nb.dense(2, 2, rng);
    Network<float> two = nb.take();
    CHECK_THROWS_AS(prune_channels(two, {{2, 0, 0.0}, {2, 1, 0.0}}), std::invalid_argument);
}

TEST_CASE("random victim prefixes never break the forward pass") {
    Rng rng(39);
    for (int trial = 0; trial < 12; ++trial) {
        const Family fam = trial % 3 == 0   ? Family::Vgg
                           : trial % 3 == 1 ? Family::Resnet
                                            : Family::Mobilenet;
        Network<float> net = build_network<float>(tiny_spec(fam, 4 + trial % 3), 100 + trial);
        // randomize scales so rankings differ per trial
        for (auto& l : net.layers)
            if (l.kind == LayerKind::BatchNorm)
                for (auto& g : l.gamma) g = static_cast<float>(rng.normal(0.3, 0.3));
        auto ranking = rank_channels(net, PruneStrategy{});
        REQUIRE(!ranking.empty());
        // any subset of the ranking respects the floors
        std::vector<ChannelRef> victims;
        for (const auto& r : ranking)
            if (rng.uniform() < 0.4) victims.push_back(r);
        Network<float> pruned = prune_channels(net, victims);
        TensorF x = random_tensor<float>({2, 1, 16, 16}, rng);
        TensorF y = forward_eval(pruned, x);
        CHECK(y.all_finite());
        CHECK(y.dim(1) == net.num_classes);
    }
}

TEST_CASE("non-victim weights survive bit-exactly") {
    Rng rng(40);
    Network<float> net = build_network<float>(tiny_spec(Family::Vgg), 14);
    const int bn = first_bn(net);
    Network<float> pruned = prune_channels(net, {{bn, 0, 0.5}});
    // the second conv of stage2 onward is untouched except its input slice;
    // compare the final dense bias and last BN wholesale
    const auto& fc_a = net.layers.back();
    const auto& fc_b = pruned.layers.back();
    CHECK(fc_a.bias == fc_b.bias);
    CHECK(std::memcmp(fc_a.w.data.data(), fc_b.w.data.data(),
                      fc_a.w.numel() * sizeof(float)) == 0);
}

TEST_CASE("param_prune_fraction endpoints") {
    Network<float> net = build_network<float>(tiny_spec(Family::Vgg), 15);
    CHECK(param_prune_fraction(net, net) == 0.0);
    auto ranking = rank_channels(net, PruneStrategy{});
    ranking.resize(ranking.size() / 2);
    Network<float> pruned = prune_channels(net, ranking);
    const double frac = param_prune_fraction(net, pruned);
    const long long po = count_parameters(net).trainable;
    const long long pp = count_parameters(pruned).trainable;
    CHECK(frac == doctest::Approx(1.0 - static_cast<double>(pp) / po).epsilon(1e-12));
    CHECK_THROWS_AS(param_prune_fraction(pruned, net), std::invalid_argument);
}

TEST_CASE("one sweeping step yields a two-point curve") {
    Network<float> net = build_network<float>(tiny_spec(Family::Vgg), 16);
    PruneLoopConfig cfg;
    cfg.step_fraction = 0.99;
    cfg.finetune_epochs = 0;
    PruningCurve curve = iterative_prune(net, cfg, [](const Network<float>&) { return 0.5; });
    CHECK(curve.points.size() == 2);
    CHECK(curve.complete);
    CHECK(curve.points[0].channel_prune_fraction == 0.0);
    CHECK(curve.points[0].accuracy_loss == 0.0);
}

TEST_CASE("a 5% step removes about a twentieth of the channels each round") {
    ArchSpec s = tiny_spec(Family::Vgg, 8);  // 216 prunable channels
    Network<float> net = build_network<float>(s, 17);
    REQUIRE(prunable_channels(net) == 216);

    Rng rng(41);
    for (auto& l : net.layers)
        if (l.kind == LayerKind::BatchNorm)
            for (auto& g : l.gamma) g = static_cast<float>(rng.uniform(0.01, 1.0));

    PruneLoopConfig cfg;
    cfg.step_fraction = 0.05;
    cfg.finetune_epochs = 0;
    int evals = 0;
    PruningCurve curve =
        iterative_prune(net, cfg, [&](const Network<float>&) { return 0.9 - 0.01 * evals++; });
    // 216 * 0.05 ~= 11 victims per step, 208 removable -> 19 prune points + baseline
    CHECK(curve.points.size() >= 18);
    CHECK(curve.points.size() <= 22);
    for (size_t i = 1; i < curve.points.size(); ++i) {
        CHECK(curve.points[i].channel_prune_fraction >
              curve.points[i - 1].channel_prune_fraction);
        CHECK(curve.points[i].param_prune_fraction >= curve.points[i - 1].param_prune_fraction);
        CHECK(curve.points[i].step_index == static_cast<int>(i));
    }
    CHECK(curve.points.back().channel_prune_fraction == doctest::Approx(208.0 / 216.0));
}

TEST_CASE("iterative pruning is deterministic") {
    auto run = [] {
        Network<float> net = build_network<float>(tiny_spec(Family::Mobilenet, 8), 18);
        Rng rng(55);
        for (auto& l : net.layers)
            if (l.kind == LayerKind::BatchNorm)
                for (auto& g : l.gamma) g = static_cast<float>(rng.uniform(0.01, 1.0));
        PruneLoopConfig cfg;
        cfg.step_fraction = 0.2;
        cfg.finetune_epochs = 0;
        Rng eval_rng(66);
        TensorF x = random_tensor<float>({2, 1, 16, 16}, eval_rng);
        return iterative_prune(net, cfg, [&](const Network<float>& n) {
            TensorF y = forward_eval(n, x);
            return static_cast<double>(y.data[0]);
        });
    };
    PruningCurve a = run();
    PruningCurve b = run();
    REQUIRE(a.points.size() == b.points.size());
    for (size_t i = 0; i < a.points.size(); ++i) {
        CHECK(a.points[i].accuracy == b.points[i].accuracy);
        CHECK(a.points[i].param_prune_fraction == b.points[i].param_prune_fraction);
    }
}

TEST_CASE("a failing eval aborts with a partial incomplete curve") {
    Network<float> net = build_network<float>(tiny_spec(Family::Vgg), 19);
    PruneLoopConfig cfg;
    cfg.step_fraction = 0.3;
    cfg.finetune_epochs = 0;
    int calls = 0;
    PruningCurve curve = iterative_prune(net, cfg, [&](const Network<float>&) {
        if (++calls > 2) throw std::runtime_error("flaky eval");
        return 0.8;
    });
    CHECK_FALSE(curve.complete);
    CHECK(curve.points.size() == 2);  // baseline + one successful step
}

TEST_CASE("curve csv round-trips") {
    PruningCurve curve;
    curve.points = {{0, 0.0, 0.0, 0.91, 0.0}, {1, 0.05, 0.0625, 0.90, 0.01}};
    const std::string path = "curve_test.csv";
    write_curve_csv(curve, path);
    PruningCurve back = read_curve_csv(path);
    REQUIRE(back.points.size() == 2);
    CHECK(back.points[1].param_prune_fraction == doctest::Approx(0.0625));
    CHECK(back.points[1].accuracy_loss == doctest::Approx(0.01));
    std::filesystem::remove(path);
}
