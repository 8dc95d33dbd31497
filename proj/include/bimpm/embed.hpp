#pragma once

#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "bimpm/diff.hpp"
#include "bimpm/encoder.hpp"
#include "bimpm/rng.hpp"

namespace bimpm
{

/// Half-width of the uniform initialiser for OOV word vectors. Character embeddings use the Glorot bound.
inline constexpr double kEmbeddingInitBound = 0.05;

/// Pretrained word vectors as read from a text file, parsed in 32-bit precision.
struct EmbeddingTable
{
    std::unordered_map<std::string, Eigen::Index> vocab;
    std::vector<std::string> tokens;
    Matrix<float> matrix;
    bool trainable = false;
    std::size_t duplicates = 0;

    Eigen::Index dim() const { return matrix.cols(); }
    Eigen::Index size() const { return matrix.rows(); }
    std::optional<Eigen::Index> find(const std::string& token) const;
};

/// Reads `token v1 ... vD` lines (single space or tab separated). The first occurrence of a
/// duplicated token wins. Malformed lines throw DataError naming the line.
EmbeddingTable load_pretrained(const std::filesystem::path& path, Eigen::Index expected_dim);

/// Decodes UTF-8 into unicode scalars. Invalid sequences decode to U+FFFD.
std::vector<char32_t> decode_utf8(std::string_view text);

/// Token and character inventories of a model. Row order here is row order in the parameter tables.
struct Vocabulary
{
    std::vector<std::string> pretrained_words;
    std::vector<std::string> oov_words;
    /// chars[0] is the reserved unknown-character slot.
    std::vector<char32_t> chars{0};

    void rebuild_index();
    std::optional<Eigen::Index> pretrained_index(const std::string& token) const;
    std::optional<Eigen::Index> oov_index(const std::string& token) const;
    Eigen::Index char_index(char32_t c) const;

private:
    std::unordered_map<std::string, Eigen::Index> pretrained_lookup_;
    std::unordered_map<std::string, Eigen::Index> oov_lookup_;
    std::unordered_map<char32_t, Eigen::Index> char_lookup_;
};

/// Builds a vocabulary: data tokens found in `pretrained` keep their pretrained vector, every
/// other token becomes an OOV row. Characters come from `char_source` only.
Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& sentences,
                            const std::vector<std::vector<std::string>>& char_source,
                            const EmbeddingTable* pretrained);

struct EmbedDims
{
    Eigen::Index word = 300;
    Eigen::Index char_embed = 20;
    Eigen::Index char_hidden = 50;
};

/// Word representation: pretrained-or-OOV word vector concatenated with the final state of a
/// unidirectional character LSTM.
template <typename Scalar>
class WordRepresenter
{
public:
    WordRepresenter(ParamStore<Scalar>& store, const Vocabulary& vocab, EmbedDims dims, bool freeze_pretrained,
                    std::uint64_t seed);

    /// Copies pretrained rows (matching vocab.pretrained_words), draws OOV rows, character
    /// embeddings and char-LSTM weights.
    void initialize(const EmbeddingTable* pretrained, Rng& rng);

    Eigen::Index dim() const { return dims_.word + dims_.char_hidden; }
    const EmbedDims& dims() const { return dims_; }

    /// Final hidden state of the char LSTM over the token's characters (1 x char_hidden).
    Var<Scalar> compose_chars(Graph<Scalar>& g, const std::string& token) const;

    /// Word part (1 x word) of a token. Unseen tokens get a token-seeded vector that is computed
    /// once and cached.
    Var<Scalar> word_part(Graph<Scalar>& g, const std::string& token) const;

    /// 1 x dim() representation of a single token.
    Var<Scalar> represent(Graph<Scalar>& g, const std::string& token) const;

    /// T x dim() representation of a sentence.
    Var<Scalar> represent_sentence(Graph<Scalar>& g, const std::vector<std::string>& tokens) const;

    /// Deterministic initial vector for an OOV token under this model's seed.
    Matrix<Scalar> oov_init(const std::string& token) const;

    const LstmParams<Scalar>& char_lstm() const { return char_lstm_; }

private:
    const Vocabulary* vocab_;
    EmbedDims dims_;
    std::uint64_t seed_;
    Parameter<Scalar>* pretrained_;
    Parameter<Scalar>* oov_;
    Parameter<Scalar>* char_embedding_;
    LstmParams<Scalar> char_lstm_;
    mutable std::mutex cache_mutex_;
    mutable std::unordered_map<std::string, Matrix<Scalar>> unseen_cache_;
};

} // namespace bimpm
