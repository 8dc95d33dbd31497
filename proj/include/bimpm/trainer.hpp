#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bimpm/checkpoint.hpp"
#include "bimpm/data.hpp"
#include "bimpm/metrics.hpp"
#include "bimpm/model.hpp"

namespace bimpm
{

/// -log(max(dist[gold], 1e-12)). Throws DataError for a label outside the distribution.
template <typename Scalar>
Var<Scalar> cross_entropy(Var<Scalar> distribution, int gold);

struct AdamConfig
{
    double learning_rate = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

template <typename Scalar>
struct AdamState
{
    std::vector<Matrix<Scalar>> first_moment;
    std::vector<Matrix<Scalar>> second_moment;
    long long step = 0;
};

/// One bias-corrected ADAM update from the gradients held in `params`. Frozen parameters are
/// skipped. A non-finite gradient aborts the step before anything is modified.
template <typename Scalar>
void adam_step(ParamStore<Scalar>& params, AdamState<Scalar>& state, const AdamConfig& config);

/// Rescales all trainable gradients so their global L2 norm is at most `max_norm`. Returns the norm before clipping.
template <typename Scalar>
double clip_global_norm(ParamStore<Scalar>& params, double max_norm);

struct TrainConfig
{
    double learning_rate = 0.001;
    double dropout = 0.1;
    int epochs = 10;
    std::uint64_t seed = 1;
    /// Examples whose gradients are summed before one optimizer step.
    int batch_size = 1;
    bool clip_gradients = true;
    double clip_norm = 5.0;
    bool shuffle = true;
    Precision precision = Precision::F64;
    /// Stop once eval-mode training accuracy reaches this value (checked after every epoch).
    std::optional<double> stop_at_train_accuracy;

    void validate() const;
};

/// Appends learning rate, dropout, epochs and the other training settings to a checkpoint.
void record_train_settings(Checkpoint& checkpoint, const TrainConfig& config);

struct EvalReport
{
    std::string metric_name; // "accuracy" or "map"
    double metric = 0.0;
    double accuracy = 0.0;
    std::optional<RankingMetrics> ranking;
    std::vector<int> predictions;
    std::vector<std::vector<double>> distributions;
};

/// Scores a set of per-example distributions. Ranking schemas use MAP as the headline metric
/// (groups formed by group_id, score = Pr(y = 1)); the others use accuracy.
EvalReport score_distributions(std::vector<std::vector<double>> distributions, const std::vector<SentencePair>& data,
                               const TaskSchema& schema);

template <typename Scalar>
EvalReport evaluate(const Model<Scalar>& model, const std::vector<SentencePair>& data, const TaskSchema& schema);

struct EpochLog
{
    int epoch = 0;
    double mean_loss = 0.0;
    double dev_metric = 0.0;
    std::optional<double> train_accuracy;
};

struct TrainResult
{
    Checkpoint best;
    int best_epoch = 0;
    double best_metric = 0.0;
    std::vector<EpochLog> epochs;
    std::vector<double> step_losses;
    bool diverged = false;
    std::string divergence_message;
};

/// Per-epoch progress callback (for CLI logging).
using EpochCallback = std::function<void(const EpochLog&)>;

/// Trains `model` in place with ADAM on the cross entropy. After each epoch the parameters are
/// snapshotted at 32-bit precision, the dev metric is measured on that snapshot, and the best
/// snapshot is retained. A non-finite loss stops training and reports divergence with the best
/// snapshot so far.
template <typename Scalar>
TrainResult train(Model<Scalar>& model, const TrainConfig& config, const std::vector<SentencePair>& train_set,
                  const std::vector<SentencePair>& dev_set, const TaskSchema& schema,
                  const EpochCallback& on_epoch = {});

/// Arithmetic mean of the members' distributions. Throws ConfigError if label sets differ.
template <typename Scalar>
Matrix<Scalar> ensemble_predict(std::span<const Model<Scalar>* const> models, const SentencePair& example);

} // namespace bimpm
