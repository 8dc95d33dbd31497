#include "bimpm/matcher.hpp"

#include <string>

namespace bimpm
{

void MatchConfig::validate() const
{
    if (strategy_count() == 0)
        throw ConfigError("at least one matching strategy must be enabled");
    if (direction_count() == 0)
        throw ConfigError("at least one matching direction must be enabled");
}

template <typename Scalar>
PerspectiveWeights<Scalar> PerspectiveWeights<Scalar>::create(ParamStore<Scalar>& store, Eigen::Index perspectives,
                                                              Eigen::Index hidden, bool vanilla)
{
    PerspectiveWeights p;
    p.vanilla = vanilla;
    if (vanilla)
        return p;
    if (perspectives < 1)
        throw ConfigError("number of perspectives must be >= 1, got " + std::to_string(perspectives));
    for (std::size_t k = 0; k < p.w.size(); ++k)
        p.w[k] = &store.add("match.w" + std::to_string(k + 1), perspectives, hidden);
    return p;
}

template <typename Scalar>
void PerspectiveWeights<Scalar>::initialize(Rng& rng)
{
    for (auto* m : w)
        if (m)
            fill_uniform(m->value, kPerspectiveInitBound, rng);
}

template <typename Scalar>
Var<Scalar> f_m(Var<Scalar> v1, Var<Scalar> v2, Var<Scalar> w)
{
    if (w.rows() < 1)
        throw ShapeError("f_m: perspective count must be >= 1");
    return mp_cosine_rows(v1, v2, w);
}

namespace
{

template <typename Scalar>
Var<Scalar> compare(Var<Scalar> a, Var<Scalar> b, Parameter<Scalar>* w)
{
    if (!w)
        return cosine_rows(a, b);
    return mp_cosine_rows(a, b, a.graph().param(*w));
}

template <typename Scalar>
Var<Scalar> full_one(Var<Scalar> self, Var<Scalar> other, Eigen::Index other_row, Parameter<Scalar>* w)
{
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(self.rows()), other_row);
    return compare(self, gather_rows(other, std::move(idx)), w);
}

template <typename Scalar>
Var<Scalar> maxpool_one(Var<Scalar> self, Var<Scalar> other, Parameter<Scalar>* w)
{
    const Eigen::Index m = self.rows();
    const Eigen::Index n = other.rows();
    std::vector<Eigen::Index> rep, tile;
    rep.reserve(static_cast<std::size_t>(m * n));
    tile.reserve(static_cast<std::size_t>(m * n));
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = 0; j < n; ++j) {
            rep.push_back(i);
            tile.push_back(j);
        }
    // Row i*n + j compares step i with step j; the max runs over each block of n rows.
    auto all_pairs = compare(gather_rows(self, std::move(rep)), gather_rows(other, std::move(tile)), w);
    return segment_max(all_pairs, n);
}

template <typename Scalar>
Var<Scalar> attentive_one(Var<Scalar> self, Var<Scalar> other, Parameter<Scalar>* w, bool clip)
{
    auto alpha = cosine_matrix(self, other);
    if (clip)
        alpha = relu(alpha);
    auto weighted = matmul(alpha, other);
    auto mean = div_rows(weighted, add_scalar(row_sum(alpha), Scalar(kAttentionSumGuard)));
    return compare(self, mean, w);
}

template <typename Scalar>
Var<Scalar> max_attentive_one(Var<Scalar> self, Var<Scalar> other, Parameter<Scalar>* w)
{
    return compare(self, gather_rows(other, attention_argmax(self.value(), other.value())), w);
}

template <typename Scalar>
void check_pair(const ContextualEncoding<Scalar>& self, const ContextualEncoding<Scalar>& other)
{
    if (self.length() < 1 || other.length() < 1)
        throw ShapeError("matching: empty encoding");
}

} // namespace

template <typename Scalar>
std::vector<Eigen::Index> attention_argmax(const Matrix<Scalar>& self, const Matrix<Scalar>& other)
{
    const Matrix<Scalar> num = self * other.transpose();
    const Matrix<Scalar> prod = self.rowwise().squaredNorm() * other.rowwise().squaredNorm().transpose();
    const Matrix<Scalar> alpha = (num.array() / prod.array().sqrt().max(Scalar(kCosineFloor))).matrix();
    std::vector<Eigen::Index> best(static_cast<std::size_t>(self.rows()), 0);
    for (Eigen::Index i = 0; i < alpha.rows(); ++i)
        for (Eigen::Index j = 1; j < alpha.cols(); ++j)
            if (alpha(i, j) > alpha(i, best[static_cast<std::size_t>(i)]))
                best[static_cast<std::size_t>(i)] = j;
    return best;
}

template <typename Scalar>
StrategyOutput<Scalar> full_matching(const ContextualEncoding<Scalar>& self, const ContextualEncoding<Scalar>& other,
                                     Parameter<Scalar>* w_fwd, Parameter<Scalar>* w_bwd)
{
    check_pair(self, other);
    return {full_one(self.fwd, other.fwd, other.length() - 1, w_fwd), full_one(self.bwd, other.bwd, 0, w_bwd)};
}

template <typename Scalar>
StrategyOutput<Scalar> maxpool_matching(const ContextualEncoding<Scalar>& self,
                                        const ContextualEncoding<Scalar>& other, Parameter<Scalar>* w_fwd,
                                        Parameter<Scalar>* w_bwd)
{
    check_pair(self, other);
    return {maxpool_one(self.fwd, other.fwd, w_fwd), maxpool_one(self.bwd, other.bwd, w_bwd)};
}

template <typename Scalar>
StrategyOutput<Scalar> attentive_matching(const ContextualEncoding<Scalar>& self,
                                          const ContextualEncoding<Scalar>& other, Parameter<Scalar>* w_fwd,
                                          Parameter<Scalar>* w_bwd, bool clip_negative_attention)
{
    check_pair(self, other);
    return {attentive_one(self.fwd, other.fwd, w_fwd, clip_negative_attention),
            attentive_one(self.bwd, other.bwd, w_bwd, clip_negative_attention)};
}

template <typename Scalar>
StrategyOutput<Scalar> max_attentive_matching(const ContextualEncoding<Scalar>& self,
                                              const ContextualEncoding<Scalar>& other, Parameter<Scalar>* w_fwd,
                                              Parameter<Scalar>* w_bwd)
{
    check_pair(self, other);
    return {max_attentive_one(self.fwd, other.fwd, w_fwd), max_attentive_one(self.bwd, other.bwd, w_bwd)};
}

template <typename Scalar>
Var<Scalar> match_one_direction(const ContextualEncoding<Scalar>& self, const ContextualEncoding<Scalar>& other,
                                const PerspectiveWeights<Scalar>& weights, const MatchConfig& config)
{
    config.validate();
    const auto& w = weights.w;
    std::vector<Var<Scalar>> parts;
    auto push = [&](const StrategyOutput<Scalar>& s) {
        parts.push_back(s.fwd);
        parts.push_back(s.bwd);
    };
    if (config.full)
        push(full_matching(self, other, w[0], w[1]));
    if (config.maxpool)
        push(maxpool_matching(self, other, w[2], w[3]));
    if (config.attentive)
        push(attentive_matching(self, other, w[4], w[5], config.clip_negative_attention));
    if (config.max_attentive)
        push(max_attentive_matching(self, other, w[6], w[7]));
    return concat_cols(std::span<const Var<Scalar>>(parts));
}

template <typename Scalar>
std::pair<std::optional<Var<Scalar>>, std::optional<Var<Scalar>>>
match_bilateral(const ContextualEncoding<Scalar>& enc_p, const ContextualEncoding<Scalar>& enc_q,
                const PerspectiveWeights<Scalar>& weights, const MatchConfig& config)
{
    config.validate();
    std::pair<std::optional<Var<Scalar>>, std::optional<Var<Scalar>>> out;
    if (config.p_against_q)
        out.first = match_one_direction(enc_p, enc_q, weights, config);
    if (config.q_against_p)
        out.second = match_one_direction(enc_q, enc_p, weights, config);
    return out;
}

#define BIMPM_INSTANTIATE_MATCHER(S)                                                                                  \
    template struct PerspectiveWeights<S>;                                                                             \
    template Var<S> f_m(Var<S>, Var<S>, Var<S>);                                                                       \
    template std::vector<Eigen::Index> attention_argmax(const Matrix<S>&, const Matrix<S>&);                           \
    template StrategyOutput<S> full_matching(const ContextualEncoding<S>&, const ContextualEncoding<S>&, Parameter<S>*, \
                                             Parameter<S>*);                                                           \
    template StrategyOutput<S> maxpool_matching(const ContextualEncoding<S>&, const ContextualEncoding<S>&,            \
                                                Parameter<S>*, Parameter<S>*);                                         \
    template StrategyOutput<S> attentive_matching(const ContextualEncoding<S>&, const ContextualEncoding<S>&,          \
                                                  Parameter<S>*, Parameter<S>*, bool);                                 \
    template StrategyOutput<S> max_attentive_matching(const ContextualEncoding<S>&, const ContextualEncoding<S>&,      \
                                                      Parameter<S>*, Parameter<S>*);                                   \
    template Var<S> match_one_direction(const ContextualEncoding<S>&, const ContextualEncoding<S>&,                    \
                                        const PerspectiveWeights<S>&, const MatchConfig&);                             \
    template std::pair<std::optional<Var<S>>, std::optional<Var<S>>> match_bilateral(                                 \
        const ContextualEncoding<S>&, const ContextualEncoding<S>&, const PerspectiveWeights<S>&, const MatchConfig&);

BIMPM_INSTANTIATE_MATCHER(float)
BIMPM_INSTANTIATE_MATCHER(double)

} // namespace bimpm
