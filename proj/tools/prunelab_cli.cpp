// prunelab command line: train / ws / prune / knee / sweep / analyze

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "prunelab/analysis.hpp"
#include "prunelab/archzoo.hpp"
#include "prunelab/checkpoint.hpp"
#include "prunelab/experiment.hpp"
#include "prunelab/pruner.hpp"
#include "prunelab/sparsity.hpp"
#include "prunelab/util.hpp"

namespace fs = std::filesystem;
using namespace prunelab;
using nlohmann::json;

namespace {

struct TrainArgs {
    std::string arch = "vgg";
    int depth = 11;
    double width = 1.0;
    double lambda = 0.0;
    int epochs = 20;
    uint64_t seed = 1;
    std::string out = "ckpt";
    int base_channels = 16;
    int num_classes = 10;
    int frames = 128;
    int samples_per_class = 200;
    double noise = 0.1;
    uint64_t data_seed = 7;
    double lr = 1e-3;
    int batch_size = 32;
    bool no_augment = false;
};

ArchSpec arch_from(const TrainArgs& a) {
    ArchSpec s;
    s.family = family_from_name(a.arch);
    s.depth = s.family == Family::Mobilenet ? 0 : a.depth;
    s.width_multiplier = s.family == Family::Mobilenet ? a.width : 1.0;
    s.num_classes = a.num_classes;
    s.frames = a.frames;
    s.base_channels = a.base_channels;
    return s;
}

DatasetConfig dataset_from(const TrainArgs& a) {
    DatasetConfig d;
    d.synth.num_classes = a.num_classes;
    d.synth.samples_per_class = a.samples_per_class;
    d.synth.frames = a.frames;
    d.synth.noise_level = a.noise;
    return d;
}

json dataset_json(const DatasetConfig& d, uint64_t data_seed) {
    return {{"kind", "synthetic"},
            {"num_classes", d.synth.num_classes},
            {"samples_per_class", d.synth.samples_per_class},
            {"mel_bands", d.synth.mel_bands},
            {"frames", d.synth.frames},
            {"noise_level", d.synth.noise_level},
            {"data_seed", data_seed}};
}

DatasetConfig dataset_from_json(const json& j, uint64_t* data_seed) {
    DatasetConfig d;
    d.synth.num_classes = j.at("num_classes").get<int>();
    d.synth.samples_per_class = j.at("samples_per_class").get<int>();
    d.synth.mel_bands = j.at("mel_bands").get<int>();
    d.synth.frames = j.at("frames").get<int>();
    d.synth.noise_level = j.at("noise_level").get<double>();
    if (data_seed) *data_seed = j.at("data_seed").get<uint64_t>();
    return d;
}

int cmd_train(const TrainArgs& a) {
    ArchSpec arch = arch_from(a);
    DatasetConfig dc = dataset_from(a);
    SplitDataset data = build_dataset(dc, 0.7, a.data_seed);

    TrainingConfig tc;
    tc.lambda = a.lambda;
    tc.learning_rate = a.lr;
    tc.epochs = a.epochs;
    tc.batch_size = a.batch_size;
    tc.seed = a.seed;

    AugmentConfig aug;
    aug.enabled = !a.no_augment;

    TrainResult r = train_sparse(arch, tc, data, aug);

    CheckpointMeta meta;
    meta.arch = arch;
    meta.lambda = a.lambda;
    meta.epochs = a.epochs;
    meta.final_accuracy = r.best_val_accuracy;
    meta.seed = a.seed;
    meta.extra = {{"dataset", dataset_json(dc, a.data_seed)},
                  {"best_epoch", r.best_epoch},
                  {"ws", r.sparsity.ws}};
    save_checkpoint(r.best_net, meta, a.out);

    json out = {{"checkpoint", a.out},
                {"best_val_accuracy", r.best_val_accuracy},
                {"best_epoch", r.best_epoch},
                {"ws", r.sparsity.ws},
                {"near_zero_fraction", r.sparsity.near_zero_fraction}};
    std::cout << out.dump(2) << "\n";
    return 0;
}

int cmd_ws(const std::string& ckpt) {
    auto [net, meta] = load_checkpoint(ckpt);
    GammaSnapshot snap = collect_gammas(net);
    SparsityReport rep = sparsity_report(snap);
    json out = {{"checkpoint", ckpt},
                {"ws", rep.ws},
                {"gamma_mean", rep.gamma_mean},
                {"gamma_std", rep.gamma_std},
                {"near_zero_fraction", rep.near_zero_fraction},
                {"gamma_count", snap.total_count},
                {"lambda", meta.lambda}};
    std::cout << out.dump(2) << "\n";
    return 0;
}

int cmd_prune(const std::string& ckpt, double step, int finetune_epochs,
              const std::string& strategy, const std::string& out) {
    auto [net, meta] = load_checkpoint(ckpt);
    if (!meta.extra.contains("dataset"))
        throw std::runtime_error("checkpoint carries no dataset spec; cannot evaluate");
    uint64_t data_seed = 0;
    DatasetConfig dc = dataset_from_json(meta.extra.at("dataset"), &data_seed);
    SplitDataset data = build_dataset(dc, 0.7, data_seed);

    PruneLoopConfig cfg;
    cfg.step_fraction = step;
    cfg.finetune_epochs = finetune_epochs;
    cfg.strategy.kind = strategy_from_name(strategy);

    EvalFn eval_fn = [&](const Network<float>& n) { return evaluate_accuracy(n, data.val); };
    int round = 0;
    FinetuneFn ft = [&](Network<float>& n, int epochs) {
        TrainingConfig tc;
        tc.lambda = 0.0;
        tc.learning_rate = 1e-4;  // training default x0.1
        tc.seed = derive_seed(meta.seed, 1000 + static_cast<uint64_t>(round++));
        AugmentConfig aug;
        train_epochs(n, tc, data.train, aug, epochs);
    };

    PruningCurve curve = iterative_prune(net, cfg, eval_fn, finetune_epochs > 0 ? ft : FinetuneFn{});
    write_curve_csv(curve, out);
    json j = {{"curve", out},
              {"points", curve.points.size()},
              {"complete", curve.complete},
              {"baseline_accuracy", curve.points.empty() ? 0.0 : curve.points[0].accuracy}};
    std::cout << j.dump(2) << "\n";
    return 0;
}

int cmd_knee(const std::string& curve_path, double psi) {
    PruningCurve curve = read_curve_csv(curve_path);
    PruneKneeResult r = prune_knee(curve, psi);
    json j = json::parse(knee_result_json(r.detail));
    j["pk"] = r.pk;
    j["knee_found"] = r.knee_found;
    j["curve"] = curve_path;
    std::cout << j.dump(2) << "\n";
    return 0;
}

int cmd_sweep(const std::string& config_path, const std::string& out_dir) {
    ExperimentConfig cfg = experiment_config_from_json(json::parse(read_file(config_path)));
    ExperimentResult r = run_experiment(cfg, out_dir);
    json rows = json::array();
    for (const auto& row : r.rows)
        rows.push_back({{"lambda", row.lambda},
                        {"ws", row.ws},
                        {"pk", row.pk},
                        {"unpruned_accuracy", row.unpruned_accuracy},
                        {"analyzed", row.analyzed}});
    json j = {{"out_dir", r.out_dir}, {"rows", rows}};
    if (r.correlation) {
        j["pearson_r"] = r.correlation->pearson_r;
        j["slope_m"] = r.correlation->slope_m;
        j["intercept_b"] = r.correlation->intercept_b;
    } else {
        j["correlation_skipped"] = r.correlation_skip_reason;
    }
    std::cout << j.dump(2) << "\n";
    return 0;
}

int cmd_analyze(const std::string& results_dir) {
    const std::string scatter = (fs::path(results_dir) / "ws_pk.csv").string();
    std::ifstream in(scatter);
    if (!in) throw std::runtime_error("missing scatter table: " + scatter);
    std::string line;
    std::getline(in, line);
    if (line.rfind("network,variant,method,lambda,ws,pk", 0) != 0)
        throw std::runtime_error("bad scatter header in " + scatter);
    std::vector<double> ws, pk;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto f = split_csv_line(line);
        if (f.size() != 6) throw std::runtime_error("bad scatter row in " + scatter);
        ws.push_back(std::stod(f[4]));
        pk.push_back(std::stod(f[5]));
    }
    if (ws.size() < 2)
        throw std::runtime_error("need >= 2 (WS, PK) pairs, found " + std::to_string(ws.size()));
    CorrelationReport rep = correlate(ws, pk);
    const std::string out = (fs::path(results_dir) / "correlation.json").string();
    write_file(out, correlation_report_json(rep) + "\n");
    std::cout << correlation_report_json(rep) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"sparsity-aware channel pruning laboratory"};
    app.require_subcommand(1);

    TrainArgs ta;
    auto* train = app.add_subcommand("train", "train one sparse network on synthetic data");
    train->add_option("--arch", ta.arch, "vgg|resnet|mobilenet");
    train->add_option("--depth", ta.depth, "vgg/resnet depth variant");
    train->add_option("--width", ta.width, "mobilenet width multiplier");
    train->add_option("--lambda", ta.lambda, "L1 penalty weight on BN scales");
    train->add_option("--epochs", ta.epochs);
    train->add_option("--seed", ta.seed);
    train->add_option("--out", ta.out, "checkpoint base path");
    train->add_option("--base-channels", ta.base_channels);
    train->add_option("--classes", ta.num_classes);
    train->add_option("--frames", ta.frames);
    train->add_option("--samples-per-class", ta.samples_per_class);
    train->add_option("--noise", ta.noise);
    train->add_option("--data-seed", ta.data_seed);
    train->add_option("--lr", ta.lr);
    train->add_option("--batch-size", ta.batch_size);
    train->add_flag("--no-augment", ta.no_augment);

    std::string ws_ckpt;
    auto* ws = app.add_subcommand("ws", "weight skewness of a checkpoint");
    ws->add_option("--ckpt", ws_ckpt)->required();

    std::string pr_ckpt, pr_strategy = "global_gamma", pr_out = "curve.csv";
    double pr_step = 0.05;
    int pr_ft = 5;
    auto* prune = app.add_subcommand("prune", "iterative channel pruning of a checkpoint");
    prune->add_option("--ckpt", pr_ckpt)->required();
    prune->add_option("--step", pr_step, "channel fraction removed per step");
    prune->add_option("--finetune-epochs", pr_ft);
    prune->add_option("--strategy", pr_strategy, "global_gamma|layer_quota");
    prune->add_option("--out", pr_out, "curve csv path");

    std::string kn_curve;
    double kn_psi = 1.0;
    auto* knee = app.add_subcommand("knee", "prune-knee of a pruning curve");
    knee->add_option("--curve", kn_curve)->required();
    knee->add_option("--psi", kn_psi, "kneedle sensitivity");

    std::string sw_config, sw_out = "results";
    auto* sweep = app.add_subcommand("sweep", "full lambda sweep from a config file");
    sweep->add_option("--config", sw_config)->required();
    sweep->add_option("--out", sw_out, "results directory");

    std::string an_dir;
    auto* analyze = app.add_subcommand("analyze", "recompute correlation over a results dir");
    analyze->add_option("--results-dir", an_dir)->required();

    try {
        app.parse(argc, argv);
        if (train->parsed()) return cmd_train(ta);
        if (ws->parsed()) return cmd_ws(ws_ckpt);
        if (prune->parsed()) return cmd_prune(pr_ckpt, pr_step, pr_ft, pr_strategy, pr_out);
        if (knee->parsed()) return cmd_knee(kn_curve, kn_psi);
        if (sweep->parsed()) return cmd_sweep(sw_config, sw_out);
        if (analyze->parsed()) return cmd_analyze(an_dir);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        std::cerr << json({{"error", e.what()}}).dump() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << json({{"error", e.what()}}).dump() << "\n";
        return 1;
    }
    return 0;
}
