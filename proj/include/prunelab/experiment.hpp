#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "prunelab/analysis.hpp"
#include "prunelab/archzoo.hpp"
#include "prunelab/dataset.hpp"
#include "prunelab/optim.hpp"
#include "prunelab/pruner.hpp"
#include "prunelab/sparsity.hpp"

namespace prunelab {

struct AugmentConfig {
    bool enabled = true;
    double mixup_alpha = 0.4;
    int specaugment_freq = 4;
    int specaugment_time = 40;
};

struct DatasetConfig {
    std::string kind = "synthetic";  // synthetic | audio_dir
    SyntheticSpec synth;
    std::string audio_dir;
    int target_sample_rate = 16000;
};

struct ExperimentConfig {
    ArchSpec arch;
    std::vector<double> lambda_grid{0.0, 1e-4, 3e-4, 1e-3, 3e-3, 1e-2};
    TrainingConfig training;
    double prune_step_fraction = 0.05;
    int finetune_epochs = 5;
    double psi = 1.0;
    std::string strategy = "global_gamma";
    DatasetConfig dataset;
    double train_fraction = 0.7;
    double val_fraction = 0.3;
    uint64_t data_seed = 7;
    uint64_t train_seed = 1;
    double max_sparsity_accuracy_drop = 0.03;
    AugmentConfig augment;

    void validate() const;
};

nlohmann::json experiment_config_to_json(const ExperimentConfig& cfg);
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);

struct EpochStat {
    int epoch = 0;
    double train_loss = 0.0;
    double val_accuracy = 0.0;
};

struct TrainResult {
    Network<float> best_net;
    double best_val_accuracy = 0.0;
    int best_epoch = 0;
    std::vector<EpochStat> history;
    SparsityReport sparsity;  // on the returned checkpoint weights
};

// argmax accuracy over the split; eval mode, deterministic
double evaluate_accuracy(const Network<float>& net, const Dataset& data, int batch_size = 64);

// Sparse training: penalized loss, per-epoch validation, keeps the
// best-validation-accuracy checkpoint. Throws on divergence.
TrainResult train_sparse(const ArchSpec& arch, const TrainingConfig& cfg,
                         const SplitDataset& data, const AugmentConfig& aug);

// One or more epochs over the train split on an existing network; used by
// the sweep's fine-tuning stage.
void train_epochs(Network<float>& net, const TrainingConfig& cfg, const Dataset& train,
                  const AugmentConfig& aug, int epochs);

SplitDataset build_dataset(const DatasetConfig& cfg, double train_fraction, uint64_t data_seed);

struct SweepRow {
    double lambda = 0.0;
    double unpruned_accuracy = 0.0;
    double ws = 0.0;
    double pk = 0.0;
    bool knee_found = false;
    double accuracy_loss_at_pk = 0.0;
    double compression_at_pk = 0.0;
    bool flagged_accuracy_drop = false;
    bool analyzed = false;  // entered the (WS, PK) correlation
};

struct ExperimentResult {
    std::vector<SweepRow> rows;
    std::optional<CorrelationReport> correlation;
    std::string correlation_skip_reason;
    std::string out_dir;
};

// The full three-stage pipeline: train sparse nets over the lambda grid,
// prune each, locate the knee, correlate (WS, PK). All artifacts land under
// out_dir with a hashed manifest. Deterministic under the config seeds.
ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::string& out_dir);

}  // namespace prunelab
