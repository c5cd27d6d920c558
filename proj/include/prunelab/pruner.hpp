#pragma once

#include <functional>
#include <set>
#include <string>
#include <vector>

#include "prunelab/net.hpp"

namespace prunelab {

// One candidate channel: the BN layer holding its scale, the channel index
// within that layer, and the scale value itself.
struct ChannelRef {
    int layer_index = -1;
    int channel_index = -1;
    double gamma_value = 0.0;

    std::string str() const;
};

enum class StrategyKind { GlobalGamma, LayerQuota };

StrategyKind strategy_from_name(const std::string& s);
const char* strategy_name(StrategyKind k);

struct PruneStrategy {
    StrategyKind kind = StrategyKind::GlobalGamma;
    std::set<int> protected_layers;     // conv layer indices excluded from ranking
    int min_channels_per_layer = 1;     // floor below which a layer cannot shrink
};

// Prune-order candidates. global_gamma ranks ascending |gamma| across the
// whole network; layer_quota ranks ascending |gamma| within each layer and
// interleaves layers proportionally. Ties break on (layer, channel). Channels
// whose removal would push a layer below the floor are excluded, so consuming
// any prefix of the result is structurally safe.
std::vector<ChannelRef> rank_channels(const Network<float>& net, const PruneStrategy& strategy);

// Rebuilds a smaller network with the victim channels removed: producer conv
// rows, BN entries, consumer input slices, and coupled depthwise channels all
// go together; every surviving weight is copied bit-exactly.
Network<float> prune_channels(const Network<float>& net, const std::vector<ChannelRef>& victims);

// removed fraction of trainable parameters, 1 - pruned/original
double param_prune_fraction(const Network<float>& original, const Network<float>& pruned);

struct PrunePoint {
    int step_index = 0;
    double channel_prune_fraction = 0.0;
    double param_prune_fraction = 0.0;
    double accuracy = 0.0;
    double accuracy_loss = 0.0;  // baseline accuracy - accuracy
};

struct PruningCurve {
    std::vector<PrunePoint> points;
    bool complete = true;  // false when eval_fn failed and the sweep aborted
};

using EvalFn = std::function<double(const Network<float>&)>;
using FinetuneFn = std::function<void(Network<float>&, int epochs)>;

struct PruneLoopConfig {
    double step_fraction = 0.05;  // of the original prunable channel count, per step
    int finetune_epochs = 5;
    PruneStrategy strategy;
};

// rank -> remove one step of channels -> optional fine-tune -> evaluate,
// until the floors stop progress. Point 0 is the unpruned baseline.
PruningCurve iterative_prune(const Network<float>& net, const PruneLoopConfig& cfg,
                             const EvalFn& eval_fn, const FinetuneFn& finetune_fn = nullptr);

// CSV schema: step_index,channels_pruned_frac,params_pruned_frac,accuracy,accuracy_loss
void write_curve_csv(const PruningCurve& curve, const std::string& path);
PruningCurve read_curve_csv(const std::string& path);

}  // namespace prunelab
