#include "bimpm/aggregate.hpp"

namespace bimpm
{

template <typename Scalar>
Var<Scalar> aggregate(const std::optional<Var<Scalar>>& match_p, const std::optional<Var<Scalar>>& match_q,
                      const BiLstmParams<Scalar>& params)
{
    if (!match_p && !match_q)
        throw ShapeError("aggregate: no matching sequence");
    std::vector<Var<Scalar>> parts;
    for (const auto* seq : {&match_p, &match_q}) {
        if (!*seq)
            continue;
        if ((*seq)->rows() < 1)
            throw ShapeError("aggregate: empty matching sequence");
        parts.push_back(run_lstm(**seq, params.fwd, false).back());
        parts.push_back(run_lstm(**seq, params.bwd, true).front());
    }
    return concat_cols(std::span<const Var<Scalar>>(parts));
}

template <typename Scalar>
PredictionHead<Scalar> PredictionHead<Scalar>::create(ParamStore<Scalar>& store, Eigen::Index input, Eigen::Index ff,
                                                      Eigen::Index classes)
{
    PredictionHead h;
    h.w1 = &store.add("predict.w1", input, ff);
    h.b1 = &store.add("predict.b1", 1, ff);
    h.w2 = &store.add("predict.w2", ff, classes);
    h.b2 = &store.add("predict.b2", 1, classes);
    return h;
}

template <typename Scalar>
void PredictionHead<Scalar>::initialize(Rng& rng)
{
    fill_uniform(w1->value, glorot_bound(w1->value.rows(), w1->value.cols()), rng);
    fill_uniform(w2->value, glorot_bound(w2->value.rows(), w2->value.cols()), rng);
    b1->value.setZero();
    b2->value.setZero();
}

template <typename Scalar>
Var<Scalar> predict(Var<Scalar> fixed, const PredictionHead<Scalar>& head, const LayerHook<Scalar>& hidden_hook)
{
    if (fixed.rows() != 1 || fixed.cols() != head.input_dim())
        throw ShapeError("predict: input " + shape_string(fixed.rows(), fixed.cols()) + " vs head input width " +
                         std::to_string(head.input_dim()));
    auto& g = fixed.graph();
    auto hidden = tanh(add(matmul(fixed, g.param(*head.w1)), g.param(*head.b1)));
    if (hidden_hook)
        hidden = hidden_hook(hidden);
    return softmax(add(matmul(hidden, g.param(*head.w2)), g.param(*head.b2)));
}

template <typename Scalar>
Scalar rank_score(const Matrix<Scalar>& distribution)
{
    if (distribution.size() != 2)
        throw ConfigError("rank_score needs a binary label set, got " + std::to_string(distribution.size()) +
                          " classes");
    return distribution.data()[1];
}

#define BIMPM_INSTANTIATE_AGGREGATE(S)                                                                                \
    template Var<S> aggregate(const std::optional<Var<S>>&, const std::optional<Var<S>>&, const BiLstmParams<S>&);      \
    template struct PredictionHead<S>;                                                                                 \
    template Var<S> predict(Var<S>, const PredictionHead<S>&, const LayerHook<S>&);                                    \
    template S rank_score(const Matrix<S>&);

BIMPM_INSTANTIATE_AGGREGATE(float)
BIMPM_INSTANTIATE_AGGREGATE(double)

} // namespace bimpm
