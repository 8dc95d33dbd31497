#include <doctest.h>

#include <cmath>

#include "bimpm/encoder.hpp"
#include "oracles.hpp"
#include "synthetic.hpp"

using namespace bimpm;

namespace
{

oracle::Mat to_nested(const Matrix<double>& m)
{
    oracle::Mat out(static_cast<std::size_t>(m.rows()), oracle::Vec(static_cast<std::size_t>(m.cols())));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            out[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] = m(r, c);
    return out;
}

double max_gap(const std::vector<Var<double>>& states, const oracle::Mat& expected)
{
    double gap = 0.0;
    for (std::size_t t = 0; t < states.size(); ++t)
        for (Eigen::Index c = 0; c < states[t].cols(); ++c)
            gap = std::max(gap, std::abs(states[t].value()(0, c) - expected[t][static_cast<std::size_t>(c)]));
    return gap;
}

} // namespace

TEST_CASE("run_lstm matches a straight-loop LSTM in both directions")
{
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        std::mt19937_64 rng(seed);
        const Eigen::Index input = 1 + static_cast<Eigen::Index>(seed % 5);
        const Eigen::Index hidden = 1 + static_cast<Eigen::Index>(seed % 4);
        const Eigen::Index steps = 1 + static_cast<Eigen::Index>(seed % 7);
        ParamStore<double> store;
        auto params = LstmParams<double>::create(store, "lstm", input, hidden);
        params.wx->value = synth::random_matrix<double>(input, 4 * hidden, rng);
        params.wh->value = synth::random_matrix<double>(hidden, 4 * hidden, rng);
        params.b->value = synth::random_matrix<double>(1, 4 * hidden, rng);
        const Matrix<double> seq = synth::random_matrix<double>(steps, input, rng, 2.0);

        oracle::Vec bias(params.b->value.data(), params.b->value.data() + params.b->value.size());
        for (bool reverse : {false, true}) {
            Graph<double> g;
            const auto states = run_lstm(g.constant(seq), params, reverse);
            REQUIRE(states.size() == static_cast<std::size_t>(steps));
            const auto expected = oracle::lstm(to_nested(seq), to_nested(params.wx->value),
                                               to_nested(params.wh->value), bias, reverse);
            CHECK(max_gap(states, expected) < 1e-12);
        }
    }
}

TEST_CASE("lstm_step chained by hand agrees with run_lstm")
{
    std::mt19937_64 rng(9);
    ParamStore<double> store;
    auto params = LstmParams<double>::create(store, "lstm", 3, 2);
    Rng init(9);
    params.initialize(init);
    Graph<double> g;
    auto seq = g.constant(synth::random_matrix<double>(4, 3, rng));
    const auto states = run_lstm(seq, params);
    auto state = zero_state(g, 2);
    for (Eigen::Index t = 0; t < 4; ++t) {
        state = lstm_step(state, slice_rows(seq, t, 1), params);
        CHECK((state.hidden.value() - states[static_cast<std::size_t>(t)].value()).cwiseAbs().maxCoeff() < 1e-14);
    }
}

TEST_CASE("initialisation sets the forget-gate bias to one")
{
    ParamStore<float> store;
    auto params = LstmParams<float>::create(store, "lstm", 5, 3);
    Rng rng(2);
    params.initialize(rng);
    Matrix<float> expected = Matrix<float>::Zero(1, 12);
    expected.middleCols(3, 3).setOnes();
    CHECK(params.b->value == expected);
    const double bound = std::sqrt(6.0 / (5.0 + 12.0));
    CHECK(params.wx->value.cwiseAbs().maxCoeff() <= bound);
}

TEST_CASE("encode returns one row per time step and rejects empty input")
{
    ParamStore<double> store;
    auto params = BiLstmParams<double>::create(store, "ctx", 4, 3);
    Rng rng(1);
    params.initialize(rng);
    std::mt19937_64 mrng(1);
    Graph<double> g;
    const auto enc = encode(g.constant(synth::random_matrix<double>(5, 4, mrng)), params);
    CHECK(enc.length() == 5);
    CHECK(enc.fwd.cols() == 3);
    CHECK(enc.bwd.cols() == 3);
    CHECK_THROWS(encode(g.constant(Matrix<double>(0, 4)), params));
    CHECK_THROWS_AS(encode(g.constant(Matrix<double>::Zero(2, 5)), params), ShapeError);
}

TEST_CASE("the backward pass sees the last word first")
{
    ParamStore<double> store;
    auto params = BiLstmParams<double>::create(store, "ctx", 2, 2);
    Rng rng(4);
    params.initialize(rng);
    Matrix<double> seq(3, 2);
    seq << 1, 0, 0, 1, 1, 1;
    Graph<double> g;
    const auto enc = encode(g.constant(seq), params);
    // Changing only the first word leaves the backward state at the last position unchanged.
    Matrix<double> changed = seq;
    changed.row(0) << -3, 2;
    const auto enc2 = encode(g.constant(changed), params);
    CHECK(enc.bwd.value().row(2) == enc2.bwd.value().row(2));
    CHECK(enc.fwd.value().row(2) != enc2.fwd.value().row(2));
}
