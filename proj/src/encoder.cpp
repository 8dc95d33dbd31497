#include "bimpm/encoder.hpp"

namespace bimpm
{

template <typename Scalar>
LstmParams<Scalar> LstmParams<Scalar>::create(ParamStore<Scalar>& store, const std::string& prefix, Eigen::Index input,
                                              Eigen::Index hidden)
{
    LstmParams p;
    p.wx = &store.add(prefix + ".wx", input, 4 * hidden);
    p.wh = &store.add(prefix + ".wh", hidden, 4 * hidden);
    p.b = &store.add(prefix + ".b", 1, 4 * hidden);
    return p;
}

template <typename Scalar>
void LstmParams<Scalar>::initialize(Rng& rng)
{
    const Eigen::Index h = hidden_dim();
    fill_uniform(wx->value, glorot_bound(wx->value.rows(), wx->value.cols()), rng);
    fill_uniform(wh->value, glorot_bound(wh->value.rows(), wh->value.cols()), rng);
    b->value.setZero();
    b->value.middleCols(h, h).setOnes();
}

template <typename Scalar>
LstmState<Scalar> zero_state(Graph<Scalar>& g, Eigen::Index hidden)
{
    auto z = g.constant(Matrix<Scalar>::Zero(1, hidden));
    return {z, z};
}

namespace
{

// pre: 1 x 4H gate pre-activations.
template <typename Scalar>
LstmState<Scalar> lstm_cell(Var<Scalar> pre, Var<Scalar> cell, Eigen::Index h)
{
    auto in_gate = sigmoid(slice_cols(pre, 0, h));
    auto forget_gate = sigmoid(slice_cols(pre, h, h));
    auto out_gate = sigmoid(slice_cols(pre, 2 * h, h));
    auto candidate = tanh(slice_cols(pre, 3 * h, h));
    auto next_cell = add(cmul(forget_gate, cell), cmul(in_gate, candidate));
    auto next_hidden = cmul(out_gate, tanh(next_cell));
    return {next_hidden, next_cell};
}

template <typename Scalar>
void check_input(Var<Scalar> input, const LstmParams<Scalar>& params)
{
    if (input.cols() != params.input_dim())
        throw ShapeError("lstm: input width " + std::to_string(input.cols()) + " does not match parameters " +
                         shape_string(params.wx->value.rows(), params.wx->value.cols()));
}

} // namespace

template <typename Scalar>
LstmState<Scalar> lstm_step(const LstmState<Scalar>& state, Var<Scalar> input, const LstmParams<Scalar>& params)
{
    check_input(input, params);
    auto& g = input.graph();
    auto pre = add(add(matmul(input, g.param(*params.wx)), matmul(state.hidden, g.param(*params.wh))),
                   g.param(*params.b));
    return lstm_cell(pre, state.cell, params.hidden_dim());
}

template <typename Scalar>
std::vector<Var<Scalar>> run_lstm(Var<Scalar> sequence, const LstmParams<Scalar>& params, bool reverse)
{
    check_input(sequence, params);
    auto& g = sequence.graph();
    const Eigen::Index steps = sequence.rows();
    const Eigen::Index h = params.hidden_dim();
    // Input projections for all steps in one product.
    auto projected = add_rowwise(matmul(sequence, g.param(*params.wx)), g.param(*params.b));
    auto wh = g.param(*params.wh);

    std::vector<Var<Scalar>> out(static_cast<std::size_t>(steps));
    auto state = zero_state(g, h);
    for (Eigen::Index k = 0; k < steps; ++k) {
        const Eigen::Index t = reverse ? steps - 1 - k : k;
        auto pre = add(slice_rows(projected, t, 1), matmul(state.hidden, wh));
        state = lstm_cell(pre, state.cell, h);
        out[static_cast<std::size_t>(t)] = state.hidden;
    }
    return out;
}

template <typename Scalar>
ContextualEncoding<Scalar> encode(Var<Scalar> sequence, const BiLstmParams<Scalar>& params)
{
    if (sequence.rows() < 1)
        throw ShapeError("encode: empty sequence");
    auto fwd = run_lstm(sequence, params.fwd, false);
    auto bwd = run_lstm(sequence, params.bwd, true);
    return {concat_rows(std::span<const Var<Scalar>>(fwd)), concat_rows(std::span<const Var<Scalar>>(bwd))};
}

#define BIMPM_INSTANTIATE_ENCODER(S)                                                                                  \
    template struct LstmParams<S>;                                                                                     \
    template LstmState<S> zero_state(Graph<S>&, Eigen::Index);                                                         \
    template LstmState<S> lstm_step(const LstmState<S>&, Var<S>, const LstmParams<S>&);                                \
    template std::vector<Var<S>> run_lstm(Var<S>, const LstmParams<S>&, bool);                                         \
    template ContextualEncoding<S> encode(Var<S>, const BiLstmParams<S>&);

BIMPM_INSTANTIATE_ENCODER(float)
BIMPM_INSTANTIATE_ENCODER(double)

} // namespace bimpm
