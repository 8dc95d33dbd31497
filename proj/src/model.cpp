#include "bimpm/model.hpp"

namespace bimpm
{

Precision parse_precision(std::string_view text)
{
    if (text == "32" || text == "f32" || text == "float")
        return Precision::F32;
    if (text == "64" || text == "f64" || text == "double")
        return Precision::F64;
    throw ConfigError("unknown precision '" + std::string(text) + "' (expected 32 or 64)");
}

void ModelConfig::validate() const
{
    if (num_classes < 2)
        throw ConfigError("label set needs at least two classes");
    if (!vanilla_cosine && perspectives < 1)
        throw ConfigError("number of perspectives must be >= 1, got " + std::to_string(perspectives));
    if (hidden < 1 || ff_hidden < 1)
        throw ConfigError("hidden sizes must be >= 1");
    if (embed.word < 1 || embed.char_embed < 1 || embed.char_hidden < 1)
        throw ConfigError("embedding dimensions must be >= 1");
    match.validate();
}

template <typename Scalar>
Var<Scalar> apply_dropout(Var<Scalar> x, double ratio, DropoutMode mode, Rng& rng)
{
    if (ratio < 0.0 || ratio >= 1.0)
        throw ConfigError("dropout ratio must be in [0, 1), got " + std::to_string(ratio));
    if (mode == DropoutMode::Eval || ratio == 0.0)
        return x;
    std::bernoulli_distribution drop(ratio);
    const Scalar keep_scale = Scalar(1.0 / (1.0 - ratio));
    Matrix<Scalar> mask(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < mask.size(); ++i)
        mask.data()[i] = drop(rng) ? Scalar(0) : keep_scale;
    return dropout_mask(x, std::move(mask));
}

template <typename Scalar>
Model<Scalar>::Model(ModelConfig config, Vocabulary vocab) : config_(config), vocab_(std::move(vocab))
{
    config_.validate();
    vocab_.rebuild_index();
    words_ = std::make_unique<WordRepresenter<Scalar>>(store_, vocab_, config_.embed, config_.freeze_pretrained,
                                                       config_.seed);
    context_ = BiLstmParams<Scalar>::create(store_, "context", words_->dim(), config_.hidden);
    matching_ = PerspectiveWeights<Scalar>::create(store_, config_.perspectives, config_.hidden,
                                                   config_.vanilla_cosine);
    aggregation_ = BiLstmParams<Scalar>::create(store_, "aggregate", config_.match_width(), config_.hidden);
    head_ = PredictionHead<Scalar>::create(store_, config_.fixed_width(), config_.ff_hidden, config_.num_classes);
}

template <typename Scalar>
void Model<Scalar>::initialize(const EmbeddingTable* pretrained)
{
    // One stream per component, so an ablation that drops a component leaves the others' draws intact.
    Rng words_rng = derive_rng(config_.seed, "words");
    Rng context_rng = derive_rng(config_.seed, "context");
    Rng match_rng = derive_rng(config_.seed, "match");
    Rng aggregate_rng = derive_rng(config_.seed, "aggregate");
    Rng head_rng = derive_rng(config_.seed, "head");
    words_->initialize(pretrained, words_rng);
    context_.initialize(context_rng);
    matching_.initialize(match_rng);
    aggregation_.initialize(aggregate_rng);
    head_.initialize(head_rng);
}

template <typename Scalar>
Var<Scalar> Model<Scalar>::forward(Graph<Scalar>& g, const SentencePair& pair, const ForwardOptions& options) const
{
    const bool train = options.mode == DropoutMode::Train && options.dropout > 0.0;
    if (train && !options.rng)
        throw ConfigError("training-mode forward needs a dropout generator");
    auto drop = [&](Var<Scalar> x) { return train ? apply_dropout(x, options.dropout, options.mode, *options.rng) : x; };

    auto encode_sentence = [&](const std::vector<std::string>& tokens) {
        auto rep = drop(words_->represent_sentence(g, tokens));
        auto enc = encode(rep, context_);
        return ContextualEncoding<Scalar>{drop(enc.fwd), drop(enc.bwd)};
    };
    const auto enc_p = encode_sentence(pair.p);
    const auto enc_q = encode_sentence(pair.q);

    auto [match_p, match_q] = match_bilateral(enc_p, enc_q, matching_, config_.match);
    if (match_p)
        match_p = drop(*match_p);
    if (match_q)
        match_q = drop(*match_q);

    auto fixed = drop(aggregate(match_p, match_q, aggregation_));
    return bimpm::predict(fixed, head_, LayerHook<Scalar>(drop));
}

template <typename Scalar>
Matrix<Scalar> Model<Scalar>::predict(const SentencePair& pair) const
{
    Graph<Scalar> g;
    return forward(g, pair).value();
}

template <typename Scalar>
std::unique_ptr<Model<Scalar>> build_model(ModelConfig config, const std::vector<SentencePair>& train,
                                           const std::vector<const std::vector<SentencePair>*>& others,
                                           const EmbeddingTable* pretrained)
{
    std::vector<std::vector<std::string>> sentences;
    std::vector<std::vector<std::string>> train_sentences;
    for (const auto& p : train) {
        train_sentences.push_back(p.p);
        train_sentences.push_back(p.q);
    }
    sentences = train_sentences;
    for (const auto* set : others)
        if (set)
            for (const auto& p : *set) {
                sentences.push_back(p.p);
                sentences.push_back(p.q);
            }
    if (pretrained)
        config.embed.word = pretrained->dim();
    auto vocab = build_vocabulary(sentences, train_sentences, pretrained);
    auto model = std::make_unique<Model<Scalar>>(config, std::move(vocab));
    model->initialize(pretrained);
    return model;
}

#define BIMPM_INSTANTIATE_MODEL(S)                                                                                    \
    template Var<S> apply_dropout(Var<S>, double, DropoutMode, Rng&);                                                  \
    template class Model<S>;                                                                                           \
    template std::unique_ptr<Model<S>> build_model(ModelConfig, const std::vector<SentencePair>&,                      \
                                                   const std::vector<const std::vector<SentencePair>*>&,               \
                                                   const EmbeddingTable*);

BIMPM_INSTANTIATE_MODEL(float)
BIMPM_INSTANTIATE_MODEL(double)

} // namespace bimpm
