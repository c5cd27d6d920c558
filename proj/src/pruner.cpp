#include "prunelab/pruner.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>

#include "prunelab/archzoo.hpp"
#include "prunelab/util.hpp"

namespace prunelab {

std::string ChannelRef::str() const {
    return "channel(layer=" + std::to_string(layer_index) +
           ", channel=" + std::to_string(channel_index) + ")";
}

StrategyKind strategy_from_name(const std::string& s) {
    if (s == "global_gamma") return StrategyKind::GlobalGamma;
    if (s == "layer_quota") return StrategyKind::LayerQuota;
    throw std::invalid_argument("unknown prune strategy: " + s);
}

const char* strategy_name(StrategyKind k) {
    return k == StrategyKind::GlobalGamma ? "global_gamma" : "layer_quota";
}

namespace {

struct GroupInfo {
    int size = 0;
    int producer_conv = -1;  // layer creating the group, -1 for the input group
    int bn_layer = -1;       // BN attached to the producer conv
    bool prunable = false;
};

// one entry per channel group; groups created by depthwise convs alias their
// input group by construction
std::map<int, GroupInfo> group_table(const Network<float>& net) {
    std::map<int, GroupInfo> table;
    auto ch = layer_output_channels(net);
    for (int li = 0; li < net.num_layers(); ++li) {
        const auto& l = net.layers[li];
        if (l.channel_group < 0) continue;
        GroupInfo& g = table[l.channel_group];
        if (l.kind == LayerKind::Input) {
            g.size = net.in_ch;
        } else if (l.kind == LayerKind::Conv && !l.is_depthwise() &&
                   l.channel_group != net.layers[l.input0].channel_group) {
            g.size = l.out_ch;
            g.producer_conv = li;
            g.prunable = l.prunable;
        } else if (l.kind == LayerKind::BatchNorm && g.bn_layer < 0 &&
                   g.producer_conv == l.input0) {
            g.bn_layer = li;
        }
        if (g.size == 0) g.size = ch[li];
    }
    return table;
}

std::vector<int> identity_keep(int n) {
    std::vector<int> v(n);
    for (int i = 0; i < n; ++i) v[i] = i;
    return v;
}

struct RankEntry {
    double key = 0.0;  // |gamma| or quota position
    int layer = 0;
    int channel = 0;
    double gamma = 0.0;
    int group = 0;
};

}  // namespace

std::vector<ChannelRef> rank_channels(const Network<float>& net, const PruneStrategy& strategy) {
    if (strategy.min_channels_per_layer < 1)
        throw std::invalid_argument("rank_channels: min_channels_per_layer must be >= 1");
    auto table = group_table(net);

    std::vector<RankEntry> entries;
    std::map<int, int> group_sizes;
    for (const auto& [gid, info] : table) {
        if (!info.prunable || info.producer_conv < 0) continue;
        if (strategy.protected_layers.count(info.producer_conv)) continue;
        if (info.bn_layer < 0) continue;  // conv without BN cannot be gamma-ranked
        const auto& bn = net.layers[info.bn_layer];
        group_sizes[gid] = static_cast<int>(bn.gamma.size());
        for (size_t c = 0; c < bn.gamma.size(); ++c) {
            RankEntry e;
            e.layer = info.bn_layer;
            e.channel = static_cast<int>(c);
            e.gamma = static_cast<double>(bn.gamma[c]);
            e.group = gid;
            e.key = std::abs(e.gamma);
            entries.push_back(e);
        }
    }

    if (strategy.kind == StrategyKind::LayerQuota) {
        // per-layer ascending |gamma|, then a fractional position so layers
        // interleave proportionally to their width
        std::map<int, std::vector<RankEntry*>> per_group;
        for (auto& e : entries) per_group[e.group].push_back(&e);
        for (auto& [gid, list] : per_group) {
            std::sort(list.begin(), list.end(), [](const RankEntry* a, const RankEntry* b) {
                if (a->key != b->key) return a->key < b->key;
                return a->channel < b->channel;
            });
            const double n = static_cast<double>(list.size());
            for (size_t k = 0; k < list.size(); ++k)
                list[k]->key = static_cast<double>(k + 1) / n;
        }
    }

    std::sort(entries.begin(), entries.end(), [](const RankEntry& a, const RankEntry& b) {
        if (a.key != b.key) return a.key < b.key;
        if (a.layer != b.layer) return a.layer < b.layer;
        return a.channel < b.channel;
    });

    // consume in order, dropping entries once a layer reaches its floor
    std::map<int, int> taken;
    std::vector<ChannelRef> out;
    for (const auto& e : entries) {
        const int cap = group_sizes[e.group] - strategy.min_channels_per_layer;
        if (taken[e.group] >= cap) continue;
        taken[e.group] += 1;
        out.push_back({e.layer, e.channel, e.gamma});
    }
    return out;
}

Network<float> prune_channels(const Network<float>& net, const std::vector<ChannelRef>& victims) {
    auto table = group_table(net);

    // victim masks per group
    std::map<int, std::vector<char>> removed;
    for (const auto& v : victims) {
        if (v.layer_index < 0 || v.layer_index >= net.num_layers() ||
            net.layers[v.layer_index].kind != LayerKind::BatchNorm)
            throw std::invalid_argument("prune_channels: " + v.str() +
                                        " does not name a BN layer");
        const auto& bn = net.layers[v.layer_index];
        const int gid = bn.channel_group;
        const GroupInfo& info = table.at(gid);
        if (!info.prunable || info.producer_conv < 0)
            throw std::invalid_argument("prune_channels: " + v.str() +
                                        " belongs to a non-prunable channel group");
        if (v.channel_index < 0 || v.channel_index >= info.size)
            throw std::invalid_argument("prune_channels: " + v.str() + " out of range");
        auto& mask = removed[gid];
        if (mask.empty()) mask.assign(info.size, 0);
        mask[v.channel_index] = 1;  // duplicates collapse, victims are a set
    }

    // keep lists per group; untouched groups keep everything
    std::map<int, std::vector<int>> keep;
    for (const auto& [gid, info] : table) keep[gid] = identity_keep(info.size);
    for (const auto& [gid, mask] : removed) {
        std::vector<int> k;
        for (int i = 0; i < static_cast<int>(mask.size()); ++i)
            if (!mask[i]) k.push_back(i);
        if (k.empty()) {
            ChannelRef offender{table.at(gid).bn_layer, 0, 0.0};
            throw std::invalid_argument("prune_channels: " + offender.str() +
                                        " group would be emptied (min 1 channel per layer)");
        }
        keep[gid] = std::move(k);
    }

    Network<float> out;
    out.in_ch = net.in_ch;
    out.in_h = net.in_h;
    out.in_w = net.in_w;
    out.num_classes = net.num_classes;
    out.layers.reserve(net.layers.size());

    for (int li = 0; li < net.num_layers(); ++li) {
        const auto& l = net.layers[li];
        Layer<float> nl = l;
        const std::vector<int>* keep_in =
            l.input0 >= 0 ? &keep.at(net.layers[l.input0].channel_group) : nullptr;
        switch (l.kind) {
            case LayerKind::Conv: {
                const auto& keep_out = keep.at(l.channel_group);
                if (l.is_depthwise()) {
                    // coupled: channels follow the input group
                    const int c = static_cast<int>(keep_out.size());
                    nl.in_ch = nl.out_ch = nl.groups = c;
                    nl.w = Tensor<float>({c, 1, l.kh, l.kw});
                    for (int o = 0; o < c; ++o)
                        for (int t = 0; t < l.kh * l.kw; ++t)
                            nl.w.data[static_cast<size_t>(o) * l.kh * l.kw + t] =
                                l.w.data[static_cast<size_t>(keep_out[o]) * l.kh * l.kw + t];
                } else {
                    if (l.groups != 1)
                        throw std::invalid_argument("prune_channels: grouped non-depthwise conv " +
                                                    l.name + " is not supported");
                    const int co = static_cast<int>(keep_out.size());
                    const int ci = static_cast<int>(keep_in->size());
                    nl.in_ch = ci;
                    nl.out_ch = co;
                    nl.w = Tensor<float>({co, ci, l.kh, l.kw});
                    const int taps = l.kh * l.kw;
                    for (int o = 0; o < co; ++o)
                        for (int i = 0; i < ci; ++i)
                            for (int t = 0; t < taps; ++t)
                                nl.w.data[(static_cast<size_t>(o) * ci + i) * taps + t] =
                                    l.w.data[(static_cast<size_t>(keep_out[o]) * l.in_ch +
                                              (*keep_in)[i]) * taps + t];
                }
                break;
            }
            case LayerKind::BatchNorm: {
                const auto& k = keep.at(l.channel_group);
                const size_t c = k.size();
                nl.gamma.resize(c);
                nl.beta.resize(c);
                nl.running_mean.resize(c);
                nl.running_var.resize(c);
                for (size_t i = 0; i < c; ++i) {
                    nl.gamma[i] = l.gamma[k[i]];
                    nl.beta[i] = l.beta[k[i]];
                    nl.running_mean[i] = l.running_mean[k[i]];
                    nl.running_var[i] = l.running_var[k[i]];
                }
                break;
            }
            case LayerKind::Dense: {
                const int ci = static_cast<int>(keep_in->size());
                nl.in_ch = ci;
                nl.w = Tensor<float>({l.out_ch, ci});
                for (int o = 0; o < l.out_ch; ++o)
                    for (int i = 0; i < ci; ++i)
                        nl.w.data[static_cast<size_t>(o) * ci + i] =
                            l.w.data[static_cast<size_t>(o) * l.in_ch + (*keep_in)[i]];
                break;
            }
            default:
                break;
        }
        out.layers.push_back(std::move(nl));
    }

    validate_graph(out);
    return out;
}

double param_prune_fraction(const Network<float>& original, const Network<float>& pruned) {
    const long long po = count_parameters(original).trainable;
    const long long pp = count_parameters(pruned).trainable;
    if (pp > po)
        throw std::invalid_argument("param_prune_fraction: pruned network is larger than original");
    return 1.0 - static_cast<double>(pp) / static_cast<double>(po);
}

PruningCurve iterative_prune(const Network<float>& net, const PruneLoopConfig& cfg,
                             const EvalFn& eval_fn, const FinetuneFn& finetune_fn) {
    if (!(cfg.step_fraction > 0.0 && cfg.step_fraction < 1.0))
        throw std::invalid_argument("iterative_prune: step_fraction must lie in (0,1)");
    if (!eval_fn) throw std::invalid_argument("iterative_prune: eval_fn required");

    const long long n0 = prunable_channels(net);
    if (n0 <= 0) throw std::invalid_argument("iterative_prune: network has no prunable channels");
    const long long per_step =
        std::max<long long>(1, std::llround(cfg.step_fraction * static_cast<double>(n0)));
    const long long orig_params = count_parameters(net).trainable;

    PruningCurve curve;
    Network<float> cur = net;

    double acc0 = 0.0;
    try {
        acc0 = eval_fn(cur);
    } catch (const std::exception&) {
        curve.complete = false;
        return curve;
    }
    curve.points.push_back({0, 0.0, 0.0, acc0, 0.0});

    long long removed = 0;
    int step_index = 1;
    for (;;) {
        auto ranking = rank_channels(cur, cfg.strategy);
        if (ranking.empty()) break;  // floors stop progress
        const size_t take = static_cast<size_t>(
            std::min<long long>(per_step, static_cast<long long>(ranking.size())));
        ranking.resize(take);
        cur = prune_channels(cur, ranking);
        removed += static_cast<long long>(take);
        if (finetune_fn && cfg.finetune_epochs > 0) finetune_fn(cur, cfg.finetune_epochs);
        double acc = 0.0;
        try {
            acc = eval_fn(cur);
        } catch (const std::exception&) {
            curve.complete = false;
            return curve;
        }
        const long long cur_params = count_parameters(cur).trainable;
        curve.points.push_back({step_index,
                                static_cast<double>(removed) / static_cast<double>(n0),
                                1.0 - static_cast<double>(cur_params) /
                                          static_cast<double>(orig_params),
                                acc, acc0 - acc});
        step_index += 1;
    }
    return curve;
}

void write_curve_csv(const PruningCurve& curve, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "step_index,channels_pruned_frac,params_pruned_frac,accuracy,accuracy_loss\n";
    for (const auto& p : curve.points)
        out << p.step_index << "," << fixed6(p.channel_prune_fraction) << ","
            << fixed6(p.param_prune_fraction) << "," << fixed6(p.accuracy) << ","
            << fixed6(p.accuracy_loss) << "\n";
}

PruningCurve read_curve_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::string line;
    if (!std::getline(in, line) ||
        line.rfind("step_index,channels_pruned_frac", 0) != 0)
        throw std::runtime_error("curve csv: bad header in " + path);
    PruningCurve curve;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto f = split_csv_line(line);
        if (f.size() != 5) throw std::runtime_error("curve csv: bad row in " + path);
        PrunePoint p;
        p.step_index = std::stoi(f[0]);
        p.channel_prune_fraction = std::stod(f[1]);
        p.param_prune_fraction = std::stod(f[2]);
        p.accuracy = std::stod(f[3]);
        p.accuracy_loss = std::stod(f[4]);
        curve.points.push_back(p);
    }
    return curve;
}

}  // namespace prunelab
