#include "bimpm/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

namespace bimpm
{

template <typename Scalar>
Var<Scalar> cross_entropy(Var<Scalar> distribution, int gold)
{
    if (gold < 0 || gold >= distribution.cols())
        throw DataError("cross_entropy: label " + std::to_string(gold) + " outside label set of size " +
                        std::to_string(distribution.cols()));
    return neg_log_pick(distribution, gold);
}

template <typename Scalar>
void adam_step(ParamStore<Scalar>& params, AdamState<Scalar>& state, const AdamConfig& config)
{
    if (state.first_moment.size() != params.size()) {
        state.first_moment.clear();
        state.second_moment.clear();
        for (std::size_t i = 0; i < params.size(); ++i) {
            state.first_moment.push_back(Matrix<Scalar>::Zero(params[i].value.rows(), params[i].value.cols()));
            state.second_moment.push_back(Matrix<Scalar>::Zero(params[i].value.rows(), params[i].value.cols()));
        }
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& p = params[i];
        if (p.trainable && !p.grad.allFinite())
            throw NumericError("non-finite gradient in parameter " + p.name);
    }

    ++state.step;
    const double t = static_cast<double>(state.step);
    const Scalar lr = Scalar(config.learning_rate);
    const Scalar b1 = Scalar(config.beta1);
    const Scalar b2 = Scalar(config.beta2);
    const Scalar c1 = Scalar(1.0 - std::pow(config.beta1, t));
    const Scalar c2 = Scalar(1.0 - std::pow(config.beta2, t));
    const Scalar eps = Scalar(config.epsilon);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i];
        if (!p.trainable)
            continue;
        auto& m = state.first_moment[i];
        auto& v = state.second_moment[i];
        m = b1 * m + (Scalar(1) - b1) * p.grad;
        v = (b2 * v.array() + (Scalar(1) - b2) * p.grad.array().square()).matrix();
        p.value.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
    }
}

template <typename Scalar>
double clip_global_norm(ParamStore<Scalar>& params, double max_norm)
{
    double sq = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i)
        if (params[i].trainable)
            sq += static_cast<double>(params[i].grad.squaredNorm());
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        const Scalar factor = Scalar(max_norm / norm);
        for (std::size_t i = 0; i < params.size(); ++i)
            if (params[i].trainable)
                params[i].grad *= factor;
    }
    return norm;
}

void TrainConfig::validate() const
{
    if (!(learning_rate > 0.0))
        throw ConfigError("learning rate must be > 0");
    if (dropout < 0.0 || dropout >= 1.0)
        throw ConfigError("dropout ratio must be in [0, 1)");
    if (epochs < 1)
        throw ConfigError("epochs must be >= 1");
    if (batch_size < 1)
        throw ConfigError("batch size must be >= 1");
    if (clip_gradients && !(clip_norm > 0.0))
        throw ConfigError("clip norm must be > 0");
}

void record_train_settings(Checkpoint& checkpoint, const TrainConfig& config)
{
    checkpoint.set("learning_rate", format_real(config.learning_rate));
    checkpoint.set("dropout", format_real(config.dropout));
    checkpoint.set("epochs", std::to_string(config.epochs));
    checkpoint.set("batch_size", std::to_string(config.batch_size));
    checkpoint.set("clip_gradients", config.clip_gradients ? "true" : "false");
    checkpoint.set("clip_norm", format_real(config.clip_norm));
    checkpoint.set("train_seed", std::to_string(config.seed));
}

EvalReport score_distributions(std::vector<std::vector<double>> distributions, const std::vector<SentencePair>& data,
                               const TaskSchema& schema)
{
    if (distributions.size() != data.size())
        throw DataError("score_distributions: size mismatch");
    if (data.empty())
        throw DataError("evaluation set is empty");
    EvalReport r;
    std::vector<int> golds;
    golds.reserve(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto& d = distributions[i];
        if (static_cast<int>(d.size()) != schema.num_classes())
            throw ConfigError("model label set size " + std::to_string(d.size()) + " does not match task " +
                              std::string(task_name(schema.kind)));
        r.predictions.push_back(static_cast<int>(std::max_element(d.begin(), d.end()) - d.begin()));
        golds.push_back(data[i].label);
    }
    r.accuracy = accuracy(r.predictions, golds);
    if (schema.is_ranking()) {
        std::vector<std::vector<RankedCandidate>> groups;
        std::map<std::string, std::size_t> index;
        for (std::size_t i = 0; i < data.size(); ++i) {
            auto [it, fresh] = index.emplace(data[i].group_id, groups.size());
            if (fresh)
                groups.emplace_back();
            groups[it->second].push_back({distributions[i][1], data[i].label == 1});
        }
        r.ranking = map_mrr(groups);
        r.metric_name = "map";
        r.metric = r.ranking->map;
    } else {
        r.metric_name = "accuracy";
        r.metric = r.accuracy;
    }
    r.distributions = std::move(distributions);
    return r;
}

namespace
{

template <typename Scalar>
std::vector<double> to_vector(const Matrix<Scalar>& m)
{
    std::vector<double> out(static_cast<std::size_t>(m.size()));
    for (Eigen::Index k = 0; k < m.size(); ++k)
        out[static_cast<std::size_t>(k)] = static_cast<double>(m.data()[k]);
    return out;
}

} // namespace

template <typename Scalar>
EvalReport evaluate(const Model<Scalar>& model, const std::vector<SentencePair>& data, const TaskSchema& schema)
{
    std::vector<std::vector<double>> dists;
    dists.reserve(data.size());
    for (const auto& pair : data)
        dists.push_back(to_vector(model.predict(pair)));
    return score_distributions(std::move(dists), data, schema);
}

template <typename Scalar>
TrainResult train(Model<Scalar>& model, const TrainConfig& config, const std::vector<SentencePair>& train_set,
                  const std::vector<SentencePair>& dev_set, const TaskSchema& schema, const EpochCallback& on_epoch)
{
    config.validate();
    if (train_set.empty())
        throw DataError("training set is empty");
    if (dev_set.empty())
        throw DataError("dev set is empty");
    if (model.config().num_classes != schema.num_classes())
        throw ConfigError("model has " + std::to_string(model.config().num_classes) + " classes, task " +
                          std::string(task_name(schema.kind)) + " has " + std::to_string(schema.num_classes()));

    auto& params = model.params();
    AdamState<Scalar> adam;
    const AdamConfig adam_config{config.learning_rate};
    Rng shuffle_rng = derive_rng(config.seed, "shuffle");
    Rng dropout_rng = derive_rng(config.seed, "dropout");
    const ForwardOptions train_mode{DropoutMode::Train, config.dropout, &dropout_rng};
    Model<Scalar> snapshot_model(model.config(), model.vocab());

    TrainResult result;
    result.best_metric = -std::numeric_limits<double>::infinity();
    bool have_best = false;

    auto snapshot = [&](int epoch) {
        auto ckpt = make_checkpoint(model, config.precision);
        record_train_settings(ckpt, config);
        load_params(snapshot_model, ckpt);
        const auto report = evaluate(snapshot_model, dev_set, schema);
        ckpt.set("epoch", std::to_string(epoch));
        ckpt.set("metric_name", report.metric_name);
        ckpt.set("metric", format_real(report.metric));
        return std::make_pair(std::move(ckpt), report.metric);
    };

    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        if (config.shuffle)
            std::shuffle(order.begin(), order.end(), shuffle_rng);
        params.zero_grad();
        double loss_sum = 0.0;
        int pending = 0;
        try {
            for (std::size_t k = 0; k < order.size(); ++k) {
                const auto& pair = train_set[order[k]];
                Graph<Scalar> g;
                auto loss = cross_entropy(model.forward(g, pair, train_mode), pair.label);
                const double value = static_cast<double>(loss.scalar());
                if (!std::isfinite(value))
                    throw NumericError("loss became non-finite at epoch " + std::to_string(epoch) + ", example " +
                                       pair.id);
                g.backward(loss);
                result.step_losses.push_back(value);
                loss_sum += value;
                if (++pending == config.batch_size || k + 1 == order.size()) {
                    if (config.clip_gradients)
                        clip_global_norm(params, config.clip_norm);
                    adam_step(params, adam, adam_config);
                    params.zero_grad();
                    pending = 0;
                }
            }
        } catch (const NumericError& e) {
            result.diverged = true;
            result.divergence_message = e.what();
            if (!have_best) {
                auto [ckpt, metric] = snapshot(epoch - 1);
                result.best = std::move(ckpt);
                result.best_metric = metric;
                result.best_epoch = epoch - 1;
            }
            return result;
        }

        EpochLog log;
        log.epoch = epoch;
        log.mean_loss = loss_sum / static_cast<double>(train_set.size());
        auto [ckpt, metric] = snapshot(epoch);
        log.dev_metric = metric;
        if (config.stop_at_train_accuracy)
            log.train_accuracy = evaluate(model, train_set, schema).accuracy;
        if (!have_best || metric > result.best_metric) {
            result.best = std::move(ckpt);
            result.best_metric = metric;
            result.best_epoch = epoch;
            have_best = true;
        }
        result.epochs.push_back(log);
        if (on_epoch)
            on_epoch(log);
        if (config.stop_at_train_accuracy && *log.train_accuracy >= *config.stop_at_train_accuracy)
            break;
    }
    return result;
}

template <typename Scalar>
Matrix<Scalar> ensemble_predict(std::span<const Model<Scalar>* const> models, const SentencePair& example)
{
    if (models.empty())
        throw ConfigError("ensemble needs at least one model");
    const int classes = models[0]->config().num_classes;
    const TaskKind task = models[0]->config().task;
    Matrix<Scalar> mean = Matrix<Scalar>::Zero(1, classes);
    for (const auto* m : models) {
        if (m->config().num_classes != classes || m->config().task != task)
            throw ConfigError("ensemble members disagree on the label set");
        mean += m->predict(example);
    }
    return mean / Scalar(models.size());
}

#define BIMPM_INSTANTIATE_TRAINER(S)                                                                                  \
    template Var<S> cross_entropy(Var<S>, int);                                                                        \
    template struct AdamState<S>;                                                                                      \
    template void adam_step(ParamStore<S>&, AdamState<S>&, const AdamConfig&);                                         \
    template double clip_global_norm(ParamStore<S>&, double);                                                          \
    template EvalReport evaluate(const Model<S>&, const std::vector<SentencePair>&, const TaskSchema&);                \
    template TrainResult train(Model<S>&, const TrainConfig&, const std::vector<SentencePair>&,                        \
                               const std::vector<SentencePair>&, const TaskSchema&, const EpochCallback&);             \
    template Matrix<S> ensemble_predict(std::span<const Model<S>* const>, const SentencePair&);

BIMPM_INSTANTIATE_TRAINER(float)
BIMPM_INSTANTIATE_TRAINER(double)

} // namespace bimpm
