#pragma once

#include <string>
#include <vector>

#include "bimpm/diff.hpp"
#include "bimpm/rng.hpp"

namespace bimpm
{

/// Weights of one unidirectional LSTM, row-vector convention:
///   pre = x * wx + h * wh + b, gate columns laid out as [input | forget | output | candidate].
template <typename Scalar>
struct LstmParams
{
    Parameter<Scalar>* wx = nullptr; // input x 4H
    Parameter<Scalar>* wh = nullptr; // H x 4H
    Parameter<Scalar>* b = nullptr;  // 1 x 4H

    Eigen::Index input_dim() const { return wx->value.rows(); }
    Eigen::Index hidden_dim() const { return wh->value.rows(); }

    /// Registers `<prefix>.wx`, `<prefix>.wh`, `<prefix>.b` in the store.
    static LstmParams create(ParamStore<Scalar>& store, const std::string& prefix, Eigen::Index input,
                             Eigen::Index hidden);

    /// Glorot-uniform weights, zero biases except the forget gate at 1.
    void initialize(Rng& rng);
};

template <typename Scalar>
struct LstmState
{
    Var<Scalar> hidden; // 1 x H
    Var<Scalar> cell;   // 1 x H
};

template <typename Scalar>
LstmState<Scalar> zero_state(Graph<Scalar>& g, Eigen::Index hidden);

/// One standard LSTM update (no peepholes).
template <typename Scalar>
LstmState<Scalar> lstm_step(const LstmState<Scalar>& state, Var<Scalar> input, const LstmParams<Scalar>& params);

/// Runs an LSTM over the rows of `sequence` (T x input). Returns the hidden state emitted at every
/// position, indexed by position. With `reverse` the recurrence starts at the last row.
template <typename Scalar>
std::vector<Var<Scalar>> run_lstm(Var<Scalar> sequence, const LstmParams<Scalar>& params, bool reverse = false);

/// Forward and backward contextual states of a sentence, one row per time step.
template <typename Scalar>
struct ContextualEncoding
{
    Var<Scalar> fwd; // M x H
    Var<Scalar> bwd; // M x H

    Eigen::Index length() const { return fwd.rows(); }
};

template <typename Scalar>
struct BiLstmParams
{
    LstmParams<Scalar> fwd;
    LstmParams<Scalar> bwd;

    static BiLstmParams create(ParamStore<Scalar>& store, const std::string& prefix, Eigen::Index input,
                               Eigen::Index hidden)
    {
        return {LstmParams<Scalar>::create(store, prefix + ".fwd", input, hidden),
                LstmParams<Scalar>::create(store, prefix + ".bwd", input, hidden)};
    }

    void initialize(Rng& rng)
    {
        fwd.initialize(rng);
        bwd.initialize(rng);
    }
};

/// BiLSTM encoding of a sentence given as rows of word vectors. Throws on an empty sequence.
template <typename Scalar>
ContextualEncoding<Scalar> encode(Var<Scalar> sequence, const BiLstmParams<Scalar>& params);

} // namespace bimpm
