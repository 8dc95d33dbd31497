#pragma once

#include <array>
#include <optional>
#include <utility>

#include "bimpm/diff.hpp"
#include "bimpm/encoder.hpp"
#include "bimpm/rng.hpp"

namespace bimpm
{

/// Half-width of the uniform initialiser for perspective weights.
inline constexpr double kPerspectiveInitBound = 0.1;

/// Added to the attention-weight sum before normalising the attentive vector.
inline constexpr double kAttentionSumGuard = 1e-8;

/// Strategy and direction switches. Disabled strategies shrink the matching vector by 2l each.
struct MatchConfig
{
    bool full = true;
    bool maxpool = true;
    bool attentive = true;
    bool max_attentive = true;
    /// P is the per-time-step side, compared against all of Q.
    bool p_against_q = true;
    /// Q is the per-time-step side, compared against all of P.
    bool q_against_p = true;
    bool clip_negative_attention = false;

    int strategy_count() const { return int(full) + int(maxpool) + int(attentive) + int(max_attentive); }
    int direction_count() const { return int(p_against_q) + int(q_against_p); }
    /// Throws ConfigError when no strategy or no direction is enabled.
    void validate() const;
};

/// The eight perspective matrices, each l x hidden. Index 0..7 holds W1..W8:
/// full (W1/W2), maxpooling (W3/W4), attentive (W5/W6), max-attentive (W7/W8).
/// With `vanilla` set no matrices exist and every comparison is a plain cosine (one value).
template <typename Scalar>
struct PerspectiveWeights
{
    std::array<Parameter<Scalar>*, 8> w{};
    bool vanilla = false;

    static PerspectiveWeights create(ParamStore<Scalar>& store, Eigen::Index perspectives, Eigen::Index hidden,
                                     bool vanilla);
    void initialize(Rng& rng);

    /// Values produced per strategy per direction: l, or 1 for vanilla cosine.
    Eigen::Index width() const { return vanilla ? 1 : w[0]->value.rows(); }
};

/// m_k = cos(W_k o v1, W_k o v2) for two 1 x d rows and W (l x d). Returns 1 x l.
template <typename Scalar>
Var<Scalar> f_m(Var<Scalar> v1, Var<Scalar> v2, Var<Scalar> w);

/// Forward-direction and backward-direction results of one strategy, each M x l.
template <typename Scalar>
struct StrategyOutput
{
    Var<Scalar> fwd;
    Var<Scalar> bwd;
};

// Each strategy treats `self` as the per-time-step side and `other` as the compared sentence.
// A null weight parameter selects the plain cosine.

/// Each step against the other sentence's last forward state / first backward state.
template <typename Scalar>
StrategyOutput<Scalar> full_matching(const ContextualEncoding<Scalar>& self, const ContextualEncoding<Scalar>& other,
                                     Parameter<Scalar>* w_fwd, Parameter<Scalar>* w_bwd);

/// Element-wise maximum over comparisons with every step of the other sentence.
template <typename Scalar>
StrategyOutput<Scalar> maxpool_matching(const ContextualEncoding<Scalar>& self,
                                        const ContextualEncoding<Scalar>& other, Parameter<Scalar>* w_fwd,
                                        Parameter<Scalar>* w_bwd);

/// Comparison with the cosine-weighted mean of the other sentence's states.
template <typename Scalar>
StrategyOutput<Scalar> attentive_matching(const ContextualEncoding<Scalar>& self,
                                          const ContextualEncoding<Scalar>& other, Parameter<Scalar>* w_fwd,
                                          Parameter<Scalar>* w_bwd, bool clip_negative_attention = false);

/// Comparison with the single most cosine-similar state of the other sentence (ties: lowest index).
template <typename Scalar>
StrategyOutput<Scalar> max_attentive_matching(const ContextualEncoding<Scalar>& self,
                                              const ContextualEncoding<Scalar>& other, Parameter<Scalar>* w_fwd,
                                              Parameter<Scalar>* w_bwd);

/// Index of the most similar row of `other` for every row of `self` under plain cosine.
template <typename Scalar>
std::vector<Eigen::Index> attention_argmax(const Matrix<Scalar>& self, const Matrix<Scalar>& other);

/// Matching vectors of every step of `self` against `other`, strategies concatenated in the
/// order full, maxpool, attentive, max-attentive with forward before backward. M x (2 * width * strategies).
template <typename Scalar>
Var<Scalar> match_one_direction(const ContextualEncoding<Scalar>& self, const ContextualEncoding<Scalar>& other,
                                const PerspectiveWeights<Scalar>& weights, const MatchConfig& config);

/// Both matching directions. First: P steps against Q (M rows); second: Q steps against P (N rows).
/// A disabled direction yields nullopt.
template <typename Scalar>
std::pair<std::optional<Var<Scalar>>, std::optional<Var<Scalar>>>
match_bilateral(const ContextualEncoding<Scalar>& enc_p, const ContextualEncoding<Scalar>& enc_q,
                const PerspectiveWeights<Scalar>& weights, const MatchConfig& config);

} // namespace bimpm
