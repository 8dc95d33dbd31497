#pragma once

#include <functional>
#include <string>
#include <vector>

#include "bimpm/diff.hpp"
#include "bimpm/model.hpp"

namespace bimpm
{

struct GradCheckEntry
{
    std::string name;
    double max_relative_error = 0.0;
    /// Flat (row-major) index of the worst entry.
    Eigen::Index worst_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    /// Entries whose +-eps probes changed a discrete choice (a max, an argmax or a relu mask),
    /// so the central difference straddles a kink.
    std::size_t kink_crossings = 0;
    /// Worst error over the entries without a kink crossing.
    double smooth_max_relative_error = 0.0;
};

struct GradCheckReport
{
    std::vector<GradCheckEntry> entries;
    double tolerance = 0.0;
    double worst_error = 0.0;
    std::string worst_name;
    std::size_t kink_crossings = 0;
    double smooth_worst_error = 0.0;
    bool passed = true;
};

template <typename Scalar>
using LossBuilder = std::function<Var<Scalar>(Graph<Scalar>&)>;

/// Compares the tape gradient of every trainable parameter entry with the central difference
/// (f(x + eps) - f(x - eps)) / (2 eps). Relative error is |a - n| / max(|a|, |n|, 1e-8).
/// Every entry counts towards `passed`; kink crossings are reported alongside, not excluded.
/// Throws VerificationError if two forward passes at the same point disagree.
template <typename Scalar>
GradCheckReport grad_check(const LossBuilder<Scalar>& build_loss, ParamStore<Scalar>& params, double eps, double tol);

/// A small end-to-end setup for checking the whole model: hidden 4, 2 perspectives, 5-dim words,
/// 3-dim character embeddings and character LSTM, feed-forward width 4, a 3-token sentence
/// against a 4-token one.
struct ModelCheckInstance
{
    ModelConfig config;
    SentencePair pair;
    EmbeddingTable embeddings;
};

ModelCheckInstance tiny_model_instance(std::uint64_t seed);

/// Trainable word vectors with entries uniform in [-1, 1] for every token of the pair except the
/// last token of Q, which stays out of the table so the OOV path is exercised too.
EmbeddingTable check_embeddings(const SentencePair& pair, Eigen::Index dim, std::uint64_t seed);

/// grad_check of the cross entropy of one pair under a freshly initialised model (eval mode).
template <typename Scalar>
GradCheckReport check_model_gradients(const ModelConfig& config, const SentencePair& pair,
                                      const EmbeddingTable* embeddings, double eps, double tol);

} // namespace bimpm
