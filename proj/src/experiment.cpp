#include "prunelab/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "prunelab/audio.hpp"
#include "prunelab/checkpoint.hpp"
#include "prunelab/rng.hpp"
#include "prunelab/util.hpp"

namespace fs = std::filesystem;

namespace prunelab {

using nlohmann::json;

void ExperimentConfig::validate() const {
    if (lambda_grid.empty()) throw std::invalid_argument("config: lambda_grid must be nonempty");
    for (size_t i = 0; i < lambda_grid.size(); ++i) {
        if (lambda_grid[i] < 0.0)
            throw std::invalid_argument("config: lambda values must be nonnegative");
        if (i > 0 && lambda_grid[i] <= lambda_grid[i - 1])
            throw std::invalid_argument("config: lambda_grid must be sorted ascending");
    }
    if (std::abs(train_fraction + val_fraction - 1.0) > 1e-9)
        throw std::invalid_argument("config: split fractions must sum to 1");
    if (!(prune_step_fraction > 0.0 && prune_step_fraction < 1.0))
        throw std::invalid_argument("config: prune_step_fraction must lie in (0,1)");
    if (finetune_epochs < 0) throw std::invalid_argument("config: finetune_epochs must be >= 0");
    if (max_sparsity_accuracy_drop < 0.0)
        throw std::invalid_argument("config: max_sparsity_accuracy_drop must be >= 0");
    strategy_from_name(strategy);
    TrainingConfig probe = training;
    probe.lambda = 0.0;
    probe.validate();
}

json experiment_config_to_json(const ExperimentConfig& cfg) {
    json j;
    j["arch"] = archspec_to_json(cfg.arch);
    j["lambda_grid"] = cfg.lambda_grid;
    j["training"] = {{"learning_rate", cfg.training.learning_rate},
                     {"epochs", cfg.training.epochs},
                     {"batch_size", cfg.training.batch_size},
                     {"beta1", cfg.training.beta1},
                     {"beta2", cfg.training.beta2},
                     {"weight_decay", cfg.training.weight_decay},
                     {"adam_eps", cfg.training.adam_eps}};
    j["prune_step_fraction"] = cfg.prune_step_fraction;
    j["finetune_epochs"] = cfg.finetune_epochs;
    j["psi"] = cfg.psi;
    j["strategy"] = cfg.strategy;
    if (cfg.dataset.kind == "synthetic") {
        j["dataset"] = {{"kind", "synthetic"},
                        {"num_classes", cfg.dataset.synth.num_classes},
                        {"samples_per_class", cfg.dataset.synth.samples_per_class},
                        {"mel_bands", cfg.dataset.synth.mel_bands},
                        {"frames", cfg.dataset.synth.frames},
                        {"noise_level", cfg.dataset.synth.noise_level}};
    } else {
        j["dataset"] = {{"kind", cfg.dataset.kind},
                        {"path", cfg.dataset.audio_dir},
                        {"target_sample_rate", cfg.dataset.target_sample_rate}};
    }
    j["split"] = {cfg.train_fraction, cfg.val_fraction};
    j["seeds"] = {{"data", cfg.data_seed}, {"train", cfg.train_seed}};
    j["max_sparsity_accuracy_drop"] = cfg.max_sparsity_accuracy_drop;
    j["augment"] = {{"enabled", cfg.augment.enabled},
                    {"mixup_alpha", cfg.augment.mixup_alpha},
                    {"specaugment_freq", cfg.augment.specaugment_freq},
                    {"specaugment_time", cfg.augment.specaugment_time}};
    return j;
}

ExperimentConfig experiment_config_from_json(const json& j) {
    ExperimentConfig cfg;
    cfg.arch = archspec_from_json(j.at("arch"));
    cfg.lambda_grid = j.at("lambda_grid").get<std::vector<double>>();
    if (j.contains("training")) {
        const auto& t = j.at("training");
        cfg.training.learning_rate = t.value("learning_rate", cfg.training.learning_rate);
        cfg.training.epochs = t.value("epochs", cfg.training.epochs);
        cfg.training.batch_size = t.value("batch_size", cfg.training.batch_size);
        cfg.training.beta1 = t.value("beta1", cfg.training.beta1);
        cfg.training.beta2 = t.value("beta2", cfg.training.beta2);
        cfg.training.weight_decay = t.value("weight_decay", cfg.training.weight_decay);
        cfg.training.adam_eps = t.value("adam_eps", cfg.training.adam_eps);
    }
    cfg.prune_step_fraction = j.value("prune_step_fraction", cfg.prune_step_fraction);
    cfg.finetune_epochs = j.value("finetune_epochs", cfg.finetune_epochs);
    cfg.psi = j.value("psi", cfg.psi);
    cfg.strategy = j.value("strategy", cfg.strategy);
    if (j.contains("dataset")) {
        const auto& d = j.at("dataset");
        cfg.dataset.kind = d.value("kind", "synthetic");
        if (cfg.dataset.kind == "synthetic") {
            cfg.dataset.synth.num_classes = d.value("num_classes", cfg.dataset.synth.num_classes);
            cfg.dataset.synth.samples_per_class =
                d.value("samples_per_class", cfg.dataset.synth.samples_per_class);
            cfg.dataset.synth.mel_bands = d.value("mel_bands", cfg.dataset.synth.mel_bands);
            cfg.dataset.synth.frames = d.value("frames", cfg.dataset.synth.frames);
            cfg.dataset.synth.noise_level = d.value("noise_level", cfg.dataset.synth.noise_level);
        } else {
            cfg.dataset.audio_dir = d.value("path", "");
            cfg.dataset.target_sample_rate =
                d.value("target_sample_rate", cfg.dataset.target_sample_rate);
        }
    }
    if (j.contains("split")) {
        cfg.train_fraction = j.at("split").at(0).get<double>();
        cfg.val_fraction = j.at("split").at(1).get<double>();
    }
    if (j.contains("seeds")) {
        cfg.data_seed = j.at("seeds").value("data", cfg.data_seed);
        cfg.train_seed = j.at("seeds").value("train", cfg.train_seed);
    }
    cfg.max_sparsity_accuracy_drop =
        j.value("max_sparsity_accuracy_drop", cfg.max_sparsity_accuracy_drop);
    if (j.contains("augment")) {
        const auto& a = j.at("augment");
        cfg.augment.enabled = a.value("enabled", cfg.augment.enabled);
        cfg.augment.mixup_alpha = a.value("mixup_alpha", cfg.augment.mixup_alpha);
        cfg.augment.specaugment_freq = a.value("specaugment_freq", cfg.augment.specaugment_freq);
        cfg.augment.specaugment_time = a.value("specaugment_time", cfg.augment.specaugment_time);
    }
    cfg.validate();
    return cfg;
}

double evaluate_accuracy(const Network<float>& net, const Dataset& data, int batch_size) {
    if (data.size() == 0) throw std::invalid_argument("evaluate: empty split");
    size_t correct = 0;
    for (size_t start = 0; start < data.size(); start += static_cast<size_t>(batch_size)) {
        const size_t stop = std::min(data.size(), start + static_cast<size_t>(batch_size));
        std::vector<size_t> idx(stop - start);
        std::iota(idx.begin(), idx.end(), start);
        auto [x, y] = make_batch(data, idx);
        TensorF logits = forward_eval(net, x);
        for (int n = 0; n < logits.dim(0); ++n) {
            int best = 0;
            for (int c = 1; c < logits.dim(1); ++c)
                if (logits.at2(n, c) > logits.at2(n, best)) best = c;
            if (best == data.labels[idx[static_cast<size_t>(n)]]) correct += 1;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

namespace {

// one pass over the train split; returns mean batch loss
double train_one_epoch(Network<float>& net, OptimizerState<float>& state,
                       const TrainingConfig& cfg, const Dataset& train, const AugmentConfig& aug,
                       Rng& shuffle_rng, Rng& aug_rng, int epoch_index) {
    std::vector<size_t> order(train.size());
    std::iota(order.begin(), order.end(), size_t{0});
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    int batches = 0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
        const size_t stop = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
        if (stop - start < 2) break;  // BN needs batch statistics
        std::vector<size_t> idx(order.begin() + start, order.begin() + stop);
        auto [x, y] = make_batch(train, idx);

        if (aug.enabled) {
            const int F = x.dim(2), T = x.dim(3);
            const size_t plane = static_cast<size_t>(F) * T;
            TensorF sample({1, F, T});
            for (int n = 0; n < x.dim(0); ++n) {
                std::copy_n(x.data.begin() + n * plane, plane, sample.data.begin());
                specaugment(sample, std::min(aug.specaugment_freq, F),
                            std::min(aug.specaugment_time, T), aug_rng);
                std::copy_n(sample.data.begin(), plane, x.data.begin() + n * plane);
            }
            if (aug.mixup_alpha > 0.0) {
                MixupResult mixed = mixup(x, y, aug.mixup_alpha, aug_rng);
                x = std::move(mixed.features);
                y = std::move(mixed.labels);
            }
        }

        ForwardCache<float> cache;
        TensorF logits = forward(net, x, Mode::Train, &cache);
        const double loss = loss_with_penalty(logits, y, net, cfg.lambda);
        if (!std::isfinite(loss))
            throw std::runtime_error("training diverged: non-finite loss at epoch " +
                                     std::to_string(epoch_index) + ", batch " +
                                     std::to_string(batches) + " (lambda=" +
                                     std::to_string(cfg.lambda) + ")");
        Gradients<float> grads = backward(net, cache, y, static_cast<float>(cfg.lambda));
        optimizer_step(net, grads, state, cfg);
        loss_sum += loss;
        batches += 1;
    }
    return batches > 0 ? loss_sum / batches : 0.0;
}

}  // namespace

TrainResult train_sparse(const ArchSpec& arch, const TrainingConfig& cfg,
                         const SplitDataset& data, const AugmentConfig& aug) {
    cfg.validate();
    Network<float> net = build_network<float>(arch, derive_seed(cfg.seed, 0));
    OptimizerState<float> state;
    state.init(net);
    Rng shuffle_rng(derive_seed(cfg.seed, 1));
    Rng aug_rng(derive_seed(cfg.seed, 2));

    TrainResult result;
    result.best_net = net;
    result.best_val_accuracy = -1.0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double loss =
            train_one_epoch(net, state, cfg, data.train, aug, shuffle_rng, aug_rng, epoch);
        const double val_acc = evaluate_accuracy(net, data.val);
        result.history.push_back({epoch, loss, val_acc});
        if (val_acc > result.best_val_accuracy) {
            result.best_val_accuracy = val_acc;
            result.best_epoch = epoch;
            result.best_net = net;
        }
    }
    result.sparsity = sparsity_report(collect_gammas(result.best_net));
    return result;
}

void train_epochs(Network<float>& net, const TrainingConfig& cfg, const Dataset& train,
                  const AugmentConfig& aug, int epochs) {
    cfg.validate();
    OptimizerState<float> state;
    state.init(net);
    Rng shuffle_rng(derive_seed(cfg.seed, 1));
    Rng aug_rng(derive_seed(cfg.seed, 2));
    for (int e = 0; e < epochs; ++e)
        train_one_epoch(net, state, cfg, train, aug, shuffle_rng, aug_rng, e);
}

SplitDataset build_dataset(const DatasetConfig& cfg, double train_fraction, uint64_t data_seed) {
    if (cfg.kind == "synthetic") {
        SyntheticSpec spec = cfg.synth;
        spec.seed = data_seed;
        return synth_dataset(spec, train_fraction);
    }
    if (cfg.kind != "audio_dir")
        throw std::invalid_argument("dataset: unknown kind " + cfg.kind);

    // one subdirectory per class, wav files inside
    std::vector<fs::path> class_dirs;
    for (const auto& e : fs::directory_iterator(cfg.audio_dir))
        if (e.is_directory()) class_dirs.push_back(e.path());
    std::sort(class_dirs.begin(), class_dirs.end());
    if (class_dirs.size() < 2)
        throw std::invalid_argument("dataset: audio_dir needs >= 2 class subdirectories");

    SplitDataset out;
    out.train.num_classes = out.val.num_classes = static_cast<int>(class_dirs.size());
    Rng rng(data_seed);
    for (size_t c = 0; c < class_dirs.size(); ++c) {
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(class_dirs[c]))
            if (e.path().extension() == ".wav") files.push_back(e.path());
        std::sort(files.begin(), files.end());
        if (files.size() < 4)
            throw std::invalid_argument("dataset: class " + class_dirs[c].filename().string() +
                                        " needs >= 4 wav files");
        std::vector<size_t> order(files.size());
        std::iota(order.begin(), order.end(), size_t{0});
        rng.shuffle(order);
        const size_t n_train =
            static_cast<size_t>(std::lround(train_fraction * static_cast<double>(files.size())));
        for (size_t i = 0; i < order.size(); ++i) {
            int sr = 0;
            auto wav = load_wav_mono(files[order[i]].string(), &sr);
            wav = resample_linear(wav, sr, cfg.target_sample_rate);
            TensorF feat = logmel_extract(wav, cfg.target_sample_rate);
            Dataset& dst = i < n_train ? out.train : out.val;
            dst.features.push_back(std::move(feat));
            dst.labels.push_back(static_cast<int>(c));
        }
    }
    return out;
}

namespace {

std::string lambda_dir_name(size_t index, double lambda) {
    std::ostringstream ss;
    ss << "run_" << index << "_lambda_" << lambda;
    std::string s = ss.str();
    for (char& c : s)
        if (c == '.') c = 'p';
    return s;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::string& out_dir) {
    cfg.validate();
    fs::create_directories(out_dir);

    ExperimentResult result;
    result.out_dir = out_dir;
    std::vector<std::string> artifacts;

    auto emit = [&](const std::string& rel, const std::string& content) {
        const std::string full = (fs::path(out_dir) / rel).string();
        fs::create_directories(fs::path(full).parent_path());
        write_file(full, content);
        artifacts.push_back(rel);
    };

    emit("config.json", experiment_config_to_json(cfg).dump(2) + "\n");

    SplitDataset data = build_dataset(cfg.dataset, cfg.train_fraction, cfg.data_seed);

    std::optional<double> baseline_accuracy;
    bool truncated = false;
    std::string truncate_reason;

    for (size_t ri = 0; ri < cfg.lambda_grid.size(); ++ri) {
        const double lambda = cfg.lambda_grid[ri];
        if (truncated) break;

        TrainingConfig tc = cfg.training;
        tc.lambda = lambda;
        tc.seed = cfg.train_seed ^ static_cast<uint64_t>(ri);  // per-run stream

        TrainResult tr = train_sparse(cfg.arch, tc, data, cfg.augment);

        SweepRow row;
        row.lambda = lambda;
        row.unpruned_accuracy = tr.best_val_accuracy;
        row.ws = tr.sparsity.ws;

        const std::string rdir = lambda_dir_name(ri, lambda);
        fs::create_directories(fs::path(out_dir) / rdir);

        CheckpointMeta meta;
        meta.arch = cfg.arch;
        meta.lambda = lambda;
        meta.epochs = cfg.training.epochs;
        meta.final_accuracy = tr.best_val_accuracy;
        meta.seed = tc.seed;
        meta.extra = {{"dataset", experiment_config_to_json(cfg)["dataset"]},
                      {"split", {cfg.train_fraction, cfg.val_fraction}},
                      {"data_seed", cfg.data_seed},
                      {"best_epoch", tr.best_epoch},
                      {"ws", tr.sparsity.ws}};
        const std::string ckpt_base = (fs::path(out_dir) / rdir / "ckpt").string();
        save_checkpoint(tr.best_net, meta, ckpt_base);
        artifacts.push_back(rdir + "/ckpt.json");
        artifacts.push_back(rdir + "/ckpt.bin");

        write_gamma_csv(collect_gammas(tr.best_net), (fs::path(out_dir) / rdir / "gammas.csv").string());
        artifacts.push_back(rdir + "/gammas.csv");

        if (lambda == 0.0 && !baseline_accuracy) baseline_accuracy = tr.best_val_accuracy;
        const double drop =
            baseline_accuracy ? *baseline_accuracy - tr.best_val_accuracy : 0.0;
        if (baseline_accuracy && drop > cfg.max_sparsity_accuracy_drop) {
            // the paper's upper limit: anything past this lambda is too damaged
            row.flagged_accuracy_drop = true;
            truncated = true;
            truncate_reason = "lambda " + std::to_string(lambda) + " lost " +
                              std::to_string(drop) + " accuracy vs the lambda=0 baseline (bound " +
                              std::to_string(cfg.max_sparsity_accuracy_drop) + ")";
            result.rows.push_back(row);
            continue;
        }

        // stage 2: iterative pruning + knee
        PruneLoopConfig plc;
        plc.step_fraction = cfg.prune_step_fraction;
        plc.finetune_epochs = cfg.finetune_epochs;
        plc.strategy.kind = strategy_from_name(cfg.strategy);

        EvalFn eval_fn = [&](const Network<float>& n) { return evaluate_accuracy(n, data.val); };
        int ft_round = 0;
        FinetuneFn ft_fn = [&](Network<float>& n, int epochs) {
            TrainingConfig ftc = cfg.training;
            ftc.lambda = 0.0;
            ftc.learning_rate = cfg.training.learning_rate * 0.1;
            ftc.seed = derive_seed(tc.seed, 1000 + static_cast<uint64_t>(ft_round++));
            train_epochs(n, ftc, data.train, cfg.augment, epochs);
        };

        PruningCurve curve = iterative_prune(tr.best_net, plc, eval_fn,
                                             cfg.finetune_epochs > 0 ? ft_fn : FinetuneFn{});
        write_curve_csv(curve, (fs::path(out_dir) / rdir / "curve.csv").string());
        artifacts.push_back(rdir + "/curve.csv");

        PruneKneeResult knee = prune_knee(curve, cfg.psi);
        row.pk = knee.pk;
        row.knee_found = knee.knee_found;
        // curve point nearest the knee, for the loss/compression columns
        const PrunePoint* at_pk = &curve.points.front();
        for (const auto& p : curve.points)
            if (std::abs(p.param_prune_fraction - knee.pk) <
                std::abs(at_pk->param_prune_fraction - knee.pk))
                at_pk = &p;
        row.accuracy_loss_at_pk = at_pk->accuracy_loss;
        row.compression_at_pk = at_pk->param_prune_fraction;
        row.analyzed = true;

        json kj = json::parse(knee_result_json(knee.detail));
        kj["pk"] = knee.pk;
        kj["knee_found"] = knee.knee_found;
        kj["accuracy_loss_at_pk"] = row.accuracy_loss_at_pk;
        emit(rdir + "/knee.json", kj.dump(2) + "\n");

        result.rows.push_back(row);
    }

    // stage 3: correlation over the surviving (WS, PK) pairs
    std::vector<double> ws, pk;
    for (const auto& r : result.rows)
        if (r.analyzed) {
            ws.push_back(r.ws);
            pk.push_back(r.pk);
        }

    {
        std::ostringstream scatter;
        scatter << "network,variant,method,lambda,ws,pk\n";
        for (const auto& r : result.rows)
            if (r.analyzed)
                scatter << family_name(cfg.arch.family) << "," << cfg.arch.variant() << ","
                        << cfg.strategy << "," << r.lambda << "," << fixed6(r.ws) << ","
                        << fixed6(r.pk) << "\n";
        emit("ws_pk.csv", scatter.str());
    }

    if (ws.size() < 2) {
        result.correlation_skip_reason =
            "correlation skipped: fewer than 2 (WS, PK) pairs (" + std::to_string(ws.size()) +
            " available)";
    } else {
        try {
            result.correlation = correlate(ws, pk);
            emit("correlation.json", correlation_report_json(*result.correlation) + "\n");
        } catch (const std::exception& e) {
            result.correlation_skip_reason = std::string("correlation skipped: ") + e.what();
        }
    }

    {
        std::ostringstream sum;
        sum << "lambda      unpruned_acc  WS        acc_loss@PK  compr@PK  PK        status\n";
        for (const auto& r : result.rows) {
            char line[256];
            std::snprintf(line, sizeof(line), "%-10g  %-12.4f  %-8.4f  ", r.lambda,
                          r.unpruned_accuracy, r.ws);
            sum << line;
            if (r.analyzed) {
                std::snprintf(line, sizeof(line), "%-11.4f  %-8.4f  %-8.4f  %s\n",
                              r.accuracy_loss_at_pk, r.compression_at_pk, r.pk,
                              r.knee_found ? "knee" : "no-knee-fallback");
                sum << line;
            } else {
                sum << "-            -         -         excluded (accuracy drop)\n";
            }
        }
        if (!truncate_reason.empty()) sum << "note: " << truncate_reason << "\n";
        if (!result.correlation_skip_reason.empty())
            sum << "note: " << result.correlation_skip_reason << "\n";
        if (result.correlation) {
            char line[256];
            std::snprintf(line, sizeof(line), "fit: PK = %.4f * WS + %.4f, pearson r = %.4f\n",
                          result.correlation->slope_m, result.correlation->intercept_b,
                          result.correlation->pearson_r);
            sum << line;
        }
        emit("summary.txt", sum.str());
    }

    {
        json manifest;
        manifest["status"] = truncated ? "truncated" : "complete";
        if (!truncate_reason.empty()) manifest["truncate_reason"] = truncate_reason;
        if (!result.correlation_skip_reason.empty())
            manifest["correlation_skip_reason"] = result.correlation_skip_reason;
        manifest["files"] = json::array();
        std::sort(artifacts.begin(), artifacts.end());
        for (const auto& rel : artifacts) {
            const std::string full = (fs::path(out_dir) / rel).string();
            manifest["files"].push_back(
                {{"path", rel},
                 {"bytes", fs::file_size(full)},
                 {"fnv1a64", hex64(file_hash(full))}});
        }
        emit("manifest.json", manifest.dump(2) + "\n");
    }

    return result;
}

}  // namespace prunelab
