#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "helpers.hpp"
#include "prunelab/archzoo.hpp"
#include "prunelab/pruner.hpp"
#include "prunelab/sparsity.hpp"
#include "prunelab/util.hpp"

using namespace prunelab;

namespace {

// independent direct evaluation of the metric, kept deliberately separate
// from the implementation under test
double ws_oracle(const std::vector<double>& g) {
    const double n = static_cast<double>(g.size());
    double mean = 0.0;
    for (double v : g) mean += v;
    mean /= n;
    double num = 0.0, s2 = 0.0;
    for (double v : g) {
        num += std::pow(v - mean, 3.0);
        s2 += (v - mean) * (v - mean);
    }
    const double sigma = std::sqrt(s2 / n);
    return num / ((n - 1.0) * std::pow(sigma, 3.0));
}

}  // namespace

TEST_CASE("symmetric values have zero skew") {
    CHECK(std::abs(weight_skewness(snapshot_from_values({0.2, 0.4, 0.6}))) < 1e-12);
}

TEST_CASE("{0,0,0,1} evaluates to the hand-derived 1.5396...") {
    // mean 0.25, population sigma 0.433013, numerator 0.375, denominator 3*sigma^3
    const double ws = weight_skewness(snapshot_from_values({0.0, 0.0, 0.0, 1.0}));
    CHECK(ws == doctest::Approx(1.539600717839).epsilon(1e-10));
    CHECK(ws == doctest::Approx(ws_oracle({0.0, 0.0, 0.0, 1.0})).epsilon(1e-14));
}

TEST_CASE("degenerate snapshots are rejected") {
    CHECK_THROWS_AS(weight_skewness(snapshot_from_values({0.5, 0.5, 0.5})),
                    std::invalid_argument);
    CHECK_THROWS_AS(weight_skewness(snapshot_from_values({0.5})), std::invalid_argument);
}

TEST_CASE("weight skewness is permutation invariant") {
    Rng rng(21);
    std::vector<double> g(200);
    for (auto& v : g) v = rng.uniform();
    const double base = weight_skewness(snapshot_from_values(g));
    for (int t = 0; t < 10; ++t) {
        rng.shuffle(g);
        CHECK(weight_skewness(snapshot_from_values(g)) == doctest::Approx(base).epsilon(1e-12));
    }
}

TEST_CASE("weight skewness is invariant under positive affine maps and flips sign under negation") {
    Rng rng(22);
    std::vector<double> g(300);
    for (auto& v : g) v = rng.normal(0.4, 0.2);
    const double base = weight_skewness(snapshot_from_values(g));
    for (int t = 0; t < 100; ++t) {
        const double a = 0.05 + 3.0 * rng.uniform();
        const double c = rng.normal(0.0, 2.0);
        std::vector<double> h(g.size());
        for (size_t i = 0; i < g.size(); ++i) h[i] = a * g[i] + c;
        CHECK(std::abs(weight_skewness(snapshot_from_values(h)) - base) < 1e-9);
    }
    std::vector<double> neg(g.size());
    for (size_t i = 0; i < g.size(); ++i) neg[i] = -g[i];
    CHECK(std::abs(weight_skewness(snapshot_from_values(neg)) + base) < 1e-9);
}

TEST_CASE("zeroing the lowest quartile rarely decreases skewness") {
    // mass piles up near zero while the right tail survives
    Rng rng(23);
    int non_decreasing = 0;
    const int trials = 100;
    for (int t = 0; t < trials; ++t) {
        std::vector<double> g(200);
        for (auto& v : g) v = std::abs(rng.normal(0.5, 0.25));
        const double before = weight_skewness(snapshot_from_values(g));
        std::vector<double> sorted = g;
        std::sort(sorted.begin(), sorted.end());
        const double cutoff = sorted[sorted.size() / 4];
        std::vector<double> after = g;
        for (auto& v : after)
            if (v <= cutoff) v = 0.0;
        if (weight_skewness(snapshot_from_values(after)) >= before) non_decreasing += 1;
    }
    CHECK(non_decreasing >= 95);
}

TEST_CASE("histogram point mass lands in one bin") {
    Histogram h = gamma_histogram(snapshot_from_values({0.5, 0.5, 0.5, 0.5}), 4);
    size_t nonzero = 0, total = 0;
    for (size_t c : h.counts) {
        nonzero += c > 0;
        total += c;
    }
    CHECK(nonzero == 1);
    CHECK(total == 4);
}

TEST_CASE("histogram splits {0,1} into both bins") {
    Histogram h = gamma_histogram(snapshot_from_values({0.0, 1.0}), 2);
    REQUIRE(h.counts.size() == 2);
    CHECK(h.counts[0] == 1);
    CHECK(h.counts[1] == 1);
}

TEST_CASE("uniform samples spread within the binomial bound") {
    Rng rng(24);
    std::vector<double> g(1000);
    for (auto& v : g) v = rng.uniform();
    Histogram h = gamma_histogram(snapshot_from_values(g), 10);
    // binomial: mean 100, sigma = sqrt(1000 * 0.1 * 0.9) ~= 9.487, 4 sigma ~= 38
    size_t total = 0;
    for (size_t c : h.counts) {
        CHECK(c >= 100 - 38);
        CHECK(c <= 100 + 38);
        total += c;
    }
    CHECK(total == g.size());
}

TEST_CASE("collect_gammas walks BN layers in deterministic order") {
    Rng rng(25);
    testutil::NetBuilder<float> b(1, 8, 8);
    b.conv(1, 4, 3, 1, 1, 1, rng);
    b.bn(4, rng);
    b.relu();
    b.conv(4, 4, 3, 1, 1, 1, rng);
    b.bn(4, rng);
    b.relu();
    b.gap();
    b.dense(4, 2, rng);
    Network<float> net = b.take();

    GammaSnapshot snap = collect_gammas(net);
    CHECK(snap.values.size() == 8);
    CHECK(snap.total_count == 8);
    for (size_t i = 1; i < snap.provenance.size(); ++i)
        CHECK(snap.provenance[i - 1] < snap.provenance[i]);
}

TEST_CASE("a freshly built network reports all gammas at 0.5") {
    ArchSpec s;
    s.family = Family::Vgg;
    s.depth = 11;
    s.base_channels = 4;
    s.mel_bands = 16;
    s.frames = 16;
    GammaSnapshot snap = collect_gammas(build_network<float>(s, 7));
    for (double v : snap.values) CHECK(v == 0.5);
}

TEST_CASE("pruned channels disappear from the snapshot") {
    ArchSpec s;
    s.family = Family::Vgg;
    s.depth = 11;
    s.base_channels = 4;
    s.mel_bands = 16;
    s.frames = 16;
    Network<float> net = build_network<float>(s, 8);
    GammaSnapshot before = collect_gammas(net);

    // victim: last channel of the first BN layer
    int bn_layer = -1;
    for (int li = 0; li < net.num_layers(); ++li)
        if (net.layers[li].kind == LayerKind::BatchNorm) {
            bn_layer = li;
            break;
        }
    const int last_ch = static_cast<int>(net.layers[bn_layer].gamma.size()) - 1;
    Network<float> pruned = prune_channels(net, {{bn_layer, last_ch, 0.5}});
    GammaSnapshot after = collect_gammas(pruned);
    CHECK(after.values.size() == before.values.size() - 1);
    const std::pair<int, int> gone{bn_layer, last_ch};
    CHECK(std::find(after.provenance.begin(), after.provenance.end(), gone) ==
          after.provenance.end());
}

TEST_CASE("BN-free networks are rejected") {
    Rng rng(26);
    testutil::NetBuilder<float> b(1, 4, 4);
    b.conv(1, 2, 3, 1, 1, 1, rng);
    b.gap();
    b.dense(2, 2, rng);
    Network<float> net = b.take();
    CHECK_THROWS_AS(collect_gammas(net), std::invalid_argument);
}

TEST_CASE("sparsity report fields are consistent") {
    Rng rng(27);
    std::vector<double> g(500);
    for (auto& v : g) v = std::abs(rng.normal(0.2, 0.3));
    for (int i = 0; i < 50; ++i) g[static_cast<size_t>(i)] = 1e-5;  // near-zero cluster
    GammaSnapshot snap = snapshot_from_values(g);
    SparsityReport r = sparsity_report(snap, 1e-3, 20);
    CHECK(r.ws == doctest::Approx(ws_oracle(g)).epsilon(1e-12));
    CHECK(r.gamma_std >= 0.0);
    CHECK(r.near_zero_fraction >= 0.1);
    CHECK(r.near_zero_fraction <= 1.0);
    size_t total = 0;
    for (size_t c : r.histogram.counts) total += c;
    CHECK(total == snap.total_count);
}

TEST_CASE("gamma csv export round-trips through the schema") {
    GammaSnapshot snap = snapshot_from_values({0.25, 0.75});
    const std::string path = "gamma_test.csv";
    write_gamma_csv(snap, path);
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    CHECK(header == "layer_index,channel_index,gamma");
    std::string row;
    std::getline(in, row);
    CHECK(row == "0,0,0.250000");
    std::filesystem::remove(path);
}
