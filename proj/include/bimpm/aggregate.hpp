#pragma once

#include <functional>
#include <optional>

#include "bimpm/diff.hpp"
#include "bimpm/encoder.hpp"

namespace bimpm
{

/// One BiLSTM applied separately to each matching sequence. Output concatenates, per present
/// sequence, the forward state after the last step and the backward state after the first step.
/// Width is 2 * hidden per sequence.
template <typename Scalar>
Var<Scalar> aggregate(const std::optional<Var<Scalar>>& match_p, const std::optional<Var<Scalar>>& match_q,
                      const BiLstmParams<Scalar>& params);

/// Two-layer feed-forward classifier: softmax(tanh(x * w1 + b1) * w2 + b2).
template <typename Scalar>
struct PredictionHead
{
    Parameter<Scalar>* w1 = nullptr; // input x ff
    Parameter<Scalar>* b1 = nullptr; // 1 x ff
    Parameter<Scalar>* w2 = nullptr; // ff x classes
    Parameter<Scalar>* b2 = nullptr; // 1 x classes

    static PredictionHead create(ParamStore<Scalar>& store, Eigen::Index input, Eigen::Index ff,
                                 Eigen::Index classes);
    void initialize(Rng& rng);

    Eigen::Index input_dim() const { return w1->value.rows(); }
    Eigen::Index classes() const { return w2->value.cols(); }
};

/// Hook applied to the hidden layer (dropout during training). Identity when empty.
template <typename Scalar>
using LayerHook = std::function<Var<Scalar>(Var<Scalar>)>;

/// Probability distribution (1 x classes) over labels.
template <typename Scalar>
Var<Scalar> predict(Var<Scalar> fixed, const PredictionHead<Scalar>& head, const LayerHook<Scalar>& hidden_hook = {});

/// Pr(y = 1) of a binary distribution. Throws ConfigError for non-binary label sets.
template <typename Scalar>
Scalar rank_score(const Matrix<Scalar>& distribution);

} // namespace bimpm
