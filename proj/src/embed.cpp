#include "bimpm/embed.hpp"

#include <cerrno>
#include <cstdlib>
#include <fstream>

namespace bimpm
{

std::optional<Eigen::Index> EmbeddingTable::find(const std::string& token) const
{
    auto it = vocab.find(token);
    if (it == vocab.end())
        return std::nullopt;
    return it->second;
}

namespace
{

std::vector<std::string_view> split_fields(std::string_view line)
{
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t'))
            ++i;
        std::size_t j = i;
        while (j < line.size() && line[j] != ' ' && line[j] != '\t')
            ++j;
        if (j > i)
            out.push_back(line.substr(i, j - i));
        i = j;
    }
    return out;
}

} // namespace

EmbeddingTable load_pretrained(const std::filesystem::path& path, Eigen::Index expected_dim)
{
    std::ifstream in(path);
    if (!in)
        throw DataError("cannot open embedding file " + path.string());

    EmbeddingTable table;
    std::vector<float> values;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        const auto fields = split_fields(line);
        if (fields.empty())
            continue;
        if (static_cast<Eigen::Index>(fields.size()) != expected_dim + 1)
            throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected token and " +
                            std::to_string(expected_dim) + " values, got " +
                            std::to_string(fields.size() - 1));
        std::string token(fields[0]);
        if (table.vocab.count(token)) {
            ++table.duplicates;
            continue;
        }
        for (std::size_t k = 1; k < fields.size(); ++k) {
            std::string field(fields[k]);
            char* end = nullptr;
            errno = 0;
            const float v = std::strtof(field.c_str(), &end);
            if (end != field.c_str() + field.size() || errno == ERANGE)
                throw DataError(path.string() + ":" + std::to_string(line_no) + ": bad number '" + field + "'");
            values.push_back(v);
        }
        table.vocab.emplace(token, static_cast<Eigen::Index>(table.tokens.size()));
        table.tokens.push_back(std::move(token));
    }
    if (table.tokens.empty())
        throw DataError("embedding file " + path.string() + " is empty");

    table.matrix = Eigen::Map<Matrix<float>>(values.data(), static_cast<Eigen::Index>(table.tokens.size()),
                                             expected_dim);
    return table;
}

std::vector<char32_t> decode_utf8(std::string_view text)
{
    std::vector<char32_t> out;
    out.reserve(text.size());
    std::size_t i = 0;
    while (i < text.size()) {
        const auto c = static_cast<unsigned char>(text[i]);
        int extra = 0;
        char32_t cp = 0;
        if (c < 0x80) {
            cp = c;
        } else if ((c & 0xE0) == 0xC0) {
            extra = 1;
            cp = c & 0x1F;
        } else if ((c & 0xF0) == 0xE0) {
            extra = 2;
            cp = c & 0x0F;
        } else if ((c & 0xF8) == 0xF0) {
            extra = 3;
            cp = c & 0x07;
        } else {
            out.push_back(0xFFFD);
            ++i;
            continue;
        }
        if (i + static_cast<std::size_t>(extra) >= text.size()) {
            out.push_back(0xFFFD);
            ++i;
            continue;
        }
        bool ok = true;
        for (int k = 1; k <= extra; ++k) {
            const auto cc = static_cast<unsigned char>(text[i + static_cast<std::size_t>(k)]);
            if ((cc & 0xC0) != 0x80) {
                ok = false;
                break;
            }
            cp = (cp << 6) | (cc & 0x3F);
        }
        if (!ok) {
            out.push_back(0xFFFD);
            ++i;
            continue;
        }
        out.push_back(cp);
        i += static_cast<std::size_t>(extra) + 1;
    }
    return out;
}

void Vocabulary::rebuild_index()
{
    pretrained_lookup_.clear();
    oov_lookup_.clear();
    char_lookup_.clear();
    for (std::size_t i = 0; i < pretrained_words.size(); ++i)
        pretrained_lookup_.emplace(pretrained_words[i], static_cast<Eigen::Index>(i));
    for (std::size_t i = 0; i < oov_words.size(); ++i)
        oov_lookup_.emplace(oov_words[i], static_cast<Eigen::Index>(i));
    for (std::size_t i = 1; i < chars.size(); ++i)
        char_lookup_.emplace(chars[i], static_cast<Eigen::Index>(i));
}

std::optional<Eigen::Index> Vocabulary::pretrained_index(const std::string& token) const
{
    auto it = pretrained_lookup_.find(token);
    if (it == pretrained_lookup_.end())
        return std::nullopt;
    return it->second;
}

std::optional<Eigen::Index> Vocabulary::oov_index(const std::string& token) const
{
    auto it = oov_lookup_.find(token);
    if (it == oov_lookup_.end())
        return std::nullopt;
    return it->second;
}

Eigen::Index Vocabulary::char_index(char32_t c) const
{
    auto it = char_lookup_.find(c);
    return it == char_lookup_.end() ? 0 : it->second;
}

Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& sentences,
                            const std::vector<std::vector<std::string>>& char_source,
                            const EmbeddingTable* pretrained)
{
    Vocabulary v;
    std::unordered_map<std::string, bool> seen;
    for (const auto& sentence : sentences)
        for (const auto& token : sentence) {
            if (!seen.emplace(token, true).second)
                continue;
            if (pretrained && pretrained->find(token))
                v.pretrained_words.push_back(token);
            else
                v.oov_words.push_back(token);
        }
    std::unordered_map<char32_t, bool> seen_chars;
    for (const auto& sentence : char_source)
        for (const auto& token : sentence)
            for (char32_t c : decode_utf8(token))
                if (seen_chars.emplace(c, true).second)
                    v.chars.push_back(c);
    v.rebuild_index();
    return v;
}

// ---------------------------------------------------------------------------

template <typename Scalar>
WordRepresenter<Scalar>::WordRepresenter(ParamStore<Scalar>& store, const Vocabulary& vocab, EmbedDims dims,
                                         bool freeze_pretrained, std::uint64_t seed)
    : vocab_(&vocab), dims_(dims), seed_(seed)
{
    pretrained_ = &store.add("word.pretrained", static_cast<Eigen::Index>(vocab.pretrained_words.size()), dims.word,
                             !freeze_pretrained);
    oov_ = &store.add("word.oov", static_cast<Eigen::Index>(vocab.oov_words.size()), dims.word);
    char_embedding_ = &store.add("char.embedding", static_cast<Eigen::Index>(vocab.chars.size()), dims.char_embed);
    char_lstm_ = LstmParams<Scalar>::create(store, "char.lstm", dims.char_embed, dims.char_hidden);
}

template <typename Scalar>
void WordRepresenter<Scalar>::initialize(const EmbeddingTable* pretrained, Rng& rng)
{
    for (std::size_t i = 0; i < vocab_->pretrained_words.size(); ++i) {
        const auto row = pretrained ? pretrained->find(vocab_->pretrained_words[i]) : std::nullopt;
        if (!row)
            throw DataError("pretrained table lacks token '" + vocab_->pretrained_words[i] + "'");
        if (pretrained->dim() != dims_.word)
            throw ConfigError("pretrained dimension " + std::to_string(pretrained->dim()) +
                              " does not match word dimension " + std::to_string(dims_.word));
        pretrained_->value.row(static_cast<Eigen::Index>(i)) = pretrained->matrix.row(*row).template cast<Scalar>();
    }
    for (std::size_t i = 0; i < vocab_->oov_words.size(); ++i)
        oov_->value.row(static_cast<Eigen::Index>(i)) = oov_init(vocab_->oov_words[i]);
    auto& chars = char_embedding_->value;
    fill_uniform(chars, glorot_bound(chars.rows(), chars.cols()), rng);
    char_lstm_.initialize(rng);
}

template <typename Scalar>
Matrix<Scalar> WordRepresenter<Scalar>::oov_init(const std::string& token) const
{
    Matrix<Scalar> v(1, dims_.word);
    Rng rng = derive_rng(seed_, "oov:" + token);
    fill_uniform(v, kEmbeddingInitBound, rng);
    return v;
}

template <typename Scalar>
Var<Scalar> WordRepresenter<Scalar>::compose_chars(Graph<Scalar>& g, const std::string& token) const
{
    const auto chars = decode_utf8(token);
    if (chars.empty())
        throw DataError("compose_chars: empty token");
    std::vector<Eigen::Index> ids;
    ids.reserve(chars.size());
    for (char32_t c : chars)
        ids.push_back(vocab_->char_index(c));
    auto seq = gather_rows(g.param(*char_embedding_), std::move(ids));
    return run_lstm(seq, char_lstm_).back();
}

template <typename Scalar>
Var<Scalar> WordRepresenter<Scalar>::word_part(Graph<Scalar>& g, const std::string& token) const
{
    if (auto row = vocab_->pretrained_index(token))
        return gather_rows(g.param(*pretrained_), {*row});
    if (auto row = vocab_->oov_index(token))
        return gather_rows(g.param(*oov_), {*row});
    std::lock_guard lock(cache_mutex_);
    auto it = unseen_cache_.find(token);
    if (it == unseen_cache_.end())
        it = unseen_cache_.emplace(token, oov_init(token)).first;
    return g.constant(it->second);
}

template <typename Scalar>
Var<Scalar> WordRepresenter<Scalar>::represent(Graph<Scalar>& g, const std::string& token) const
{
    if (token.empty())
        throw DataError("represent: empty token");
    return concat_cols({word_part(g, token), compose_chars(g, token)});
}

template <typename Scalar>
Var<Scalar> WordRepresenter<Scalar>::represent_sentence(Graph<Scalar>& g, const std::vector<std::string>& tokens) const
{
    if (tokens.empty())
        throw DataError("represent_sentence: empty sentence");
    std::unordered_map<std::string, Var<Scalar>> seen;
    std::vector<Var<Scalar>> rows;
    rows.reserve(tokens.size());
    for (const auto& token : tokens) {
        auto it = seen.find(token);
        if (it == seen.end())
            it = seen.emplace(token, represent(g, token)).first;
        rows.push_back(it->second);
    }
    return concat_rows(std::span<const Var<Scalar>>(rows));
}

template class WordRepresenter<float>;
template class WordRepresenter<double>;

} // namespace bimpm
