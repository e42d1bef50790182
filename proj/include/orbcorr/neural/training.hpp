#pragma once

#include "orbcorr/neural/network.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace orbcorr::nn {

struct Sequence {
    MatrixXd features;  // T x input
    MatrixXd targets;   // T x output
    int id = 0;
};

/// Labelled sequences plus the generation header (config, seed, hash).
struct SequenceDataset {
    std::vector<Sequence> sequences;
    nlohmann::json header = nlohmann::json::object();

    int input_dim() const;
    int output_dim() const;
    /// Throws ConfigError on empty data, mixed dimensions, T < 2 or non-finite values.
    void validate() const;

    /// "# <header json>" line, CSV header, then one row per step: seq_id,t,f0..,y0..
    void save(const std::string& path) const;
    static SequenceDataset load(const std::string& path);
};

struct TrainingHyper {
    double learning_rate = 1e-3;
    int batch_size = 64;
    double dropout = 0.4;
    double grad_clip = 0.5;
    int epochs = 100;
    int folds = 5;
    std::uint64_t seed = 1;
    VectorXd lambda = (VectorXd(4) << 1.0, 1.0, 1.0, 0.01).finished();
    int layers = 3;
    int hidden = 128;
    CellType cell = CellType::Lstm;
    /// Stop a fit once the epoch training loss falls below this (0 disables).
    double target_loss = 0.0;

    void validate() const;
    nlohmann::json to_json() const;
    static TrainingHyper from_json(const nlohmann::json& j);
};

struct EpochRecord {
    int fold = 0;
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
};

struct CrossValReport {
    std::vector<EpochRecord> rows;
    int best_fold = -1;
    double best_val_loss = 0.0;
    std::string config_hash;
    TrainingHyper hyper;

    std::string to_csv() const;
    void save(const std::string& path) const;
};

/// Z-score statistics over all steps of the selected sequences; constant columns get std 1.
Normalization compute_normalization(const SequenceDataset& data, const std::vector<std::size_t>& idx);

/// Seeded shuffle split into `folds` disjoint validation sets covering every index once.
std::vector<std::vector<std::size_t>> fold_partition(std::size_t n, int folds, std::uint64_t seed);

/// Weighted loss in normalized output space, inference mode.
double evaluate(const Model& model, const SequenceDataset& data, const std::vector<std::size_t>& idx,
                const VectorXd& lambda);

using EpochCallback = std::function<void(int epoch, double train_loss)>;

/// Minibatch Adam over `train_idx` for hyper.epochs epochs (or until target_loss). The model's
/// normalization must already be set. Returns per-epoch mean training loss.
std::vector<double> fit(Model& model, const SequenceDataset& data,
                        const std::vector<std::size_t>& train_idx, const TrainingHyper& hyper,
                        std::uint64_t seed, const EpochCallback& on_epoch = {});

struct TrainResult {
    Model model;
    CrossValReport report;
};

/// k-fold cross-validation; returns the fold model with the lowest validation loss
/// (snapshot at its best epoch) and the per-fold, per-epoch report.
TrainResult train(const SequenceDataset& data, const TrainingHyper& hyper);

}  // namespace orbcorr::nn
