#pragma once

#include <memory>
#include <string>
#include <vector>

#include "bimpm/aggregate.hpp"
#include "bimpm/data.hpp"
#include "bimpm/diff.hpp"
#include "bimpm/embed.hpp"
#include "bimpm/encoder.hpp"
#include "bimpm/matcher.hpp"

namespace bimpm
{

enum class Precision
{
    F32 = 32,
    F64 = 64,
};

/// Accepts "32"/"64" (also "f32", "float", "f64", "double").
Precision parse_precision(std::string_view text);

/// Architecture hyperparameters. Defaults are the standard full-size settings.
struct ModelConfig
{
    TaskKind task = TaskKind::Paraphrase;
    int num_classes = 2;
    EmbedDims embed;
    Eigen::Index hidden = 100;
    Eigen::Index perspectives = 20;
    /// Replace every multi-perspective comparison with a plain cosine.
    bool vanilla_cosine = false;
    Eigen::Index ff_hidden = 100;
    MatchConfig match;
    bool freeze_pretrained = true;
    std::uint64_t seed = 1;

    /// Width of one matching vector per time step.
    Eigen::Index match_width() const
    {
        return 2 * (vanilla_cosine ? 1 : perspectives) * match.strategy_count();
    }
    /// Width of the fixed-length vector fed to the prediction head.
    Eigen::Index fixed_width() const { return 2 * hidden * match.direction_count(); }

    /// Throws ConfigError on an inconsistent configuration.
    void validate() const;
};

enum class DropoutMode
{
    Train,
    Eval,
};

/// Inverted dropout: in Train mode each entry is zeroed with probability `ratio` and survivors are
/// scaled by 1 / (1 - ratio). Eval mode and ratio 0 return x unchanged.
template <typename Scalar>
Var<Scalar> apply_dropout(Var<Scalar> x, double ratio, DropoutMode mode, Rng& rng);

struct ForwardOptions
{
    DropoutMode mode = DropoutMode::Eval;
    double dropout = 0.0;
    Rng* rng = nullptr;
};

/// The full sentence-pair matcher: word representation, shared context BiLSTM, bilateral
/// multi-perspective matching, aggregation BiLSTM and the feed-forward softmax head.
template <typename Scalar>
class Model
{
public:
    Model(ModelConfig config, Vocabulary vocab);
    Model(const Model&) = delete;
    Model& operator=(const Model&) = delete;

    /// Seeded initialisation of every parameter. `pretrained` supplies the frozen word rows.
    void initialize(const EmbeddingTable* pretrained);

    /// Builds the graph for one pair and returns the 1 x classes distribution.
    Var<Scalar> forward(Graph<Scalar>& g, const SentencePair& pair, const ForwardOptions& options = {}) const;

    /// Eval-mode distribution for one pair.
    Matrix<Scalar> predict(const SentencePair& pair) const;

    ParamStore<Scalar>& params() { return store_; }
    const ParamStore<Scalar>& params() const { return store_; }
    const ModelConfig& config() const { return config_; }
    const Vocabulary& vocab() const { return vocab_; }
    const WordRepresenter<Scalar>& words() const { return *words_; }

private:
    ModelConfig config_;
    Vocabulary vocab_;
    ParamStore<Scalar> store_;
    std::unique_ptr<WordRepresenter<Scalar>> words_;
    BiLstmParams<Scalar> context_;
    PerspectiveWeights<Scalar> matching_;
    BiLstmParams<Scalar> aggregation_;
    PredictionHead<Scalar> head_;
};

/// Builds a vocabulary from the datasets (characters from `train` only), then a model whose word
/// dimension follows `pretrained` when given, and initialises it.
template <typename Scalar>
std::unique_ptr<Model<Scalar>> build_model(ModelConfig config, const std::vector<SentencePair>& train,
                                           const std::vector<const std::vector<SentencePair>*>& others,
                                           const EmbeddingTable* pretrained);

} // namespace bimpm
