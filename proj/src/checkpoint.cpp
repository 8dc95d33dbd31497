#include "bimpm/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace bimpm
{

namespace
{

std::string bool_text(bool b)
{
    return b ? "true" : "false";
}

bool parse_bool(const std::string& key, const std::string& v)
{
    if (v == "true" || v == "1")
        return true;
    if (v == "false" || v == "0")
        return false;
    throw DataError("checkpoint: bad boolean for " + key + ": " + v);
}

long long parse_int(const std::string& key, const std::string& v)
{
    try {
        std::size_t used = 0;
        const long long out = std::stoll(v, &used);
        if (used != v.size())
            throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw DataError("checkpoint: bad integer for " + key + ": " + v);
    }
}

std::uint32_t to_little_endian(std::uint32_t v)
{
    if constexpr (std::endian::native == std::endian::little)
        return v;
    return ((v & 0xFFu) << 24) | ((v & 0xFF00u) << 8) | ((v >> 8) & 0xFF00u) | (v >> 24);
}

std::string read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw DataError("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw DataError("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out)
        throw DataError("write failed for " + path.string());
}

std::vector<std::string> split_lines(const std::string& text)
{
    std::vector<std::string> lines;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line))
        lines.push_back(line);
    return lines;
}

} // namespace

std::string format_real(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::optional<std::string> Checkpoint::get(const std::string& key) const
{
    for (const auto& [k, v] : settings)
        if (k == key)
            return v;
    return std::nullopt;
}

void Checkpoint::set(const std::string& key, const std::string& value)
{
    if (key.find('=') != std::string::npos || key.find('\n') != std::string::npos ||
        value.find('\n') != std::string::npos)
        throw ConfigError("checkpoint setting '" + key + "' is not representable");
    for (auto& [k, v] : settings)
        if (k == key) {
            v = value;
            return;
        }
    settings.emplace_back(key, value);
}

std::vector<std::pair<std::string, std::string>> model_settings(const ModelConfig& c)
{
    return {
        {"task", std::string(task_name(c.task))},
        {"classes", std::to_string(c.num_classes)},
        {"word_dim", std::to_string(c.embed.word)},
        {"char_embed_dim", std::to_string(c.embed.char_embed)},
        {"char_hidden", std::to_string(c.embed.char_hidden)},
        {"hidden", std::to_string(c.hidden)},
        {"perspectives", std::to_string(c.perspectives)},
        {"vanilla_cosine", bool_text(c.vanilla_cosine)},
        {"ff_hidden", std::to_string(c.ff_hidden)},
        {"match.full", bool_text(c.match.full)},
        {"match.maxpool", bool_text(c.match.maxpool)},
        {"match.attentive", bool_text(c.match.attentive)},
        {"match.max_attentive", bool_text(c.match.max_attentive)},
        {"match.p_against_q", bool_text(c.match.p_against_q)},
        {"match.q_against_p", bool_text(c.match.q_against_p)},
        {"match.clip_negative_attention", bool_text(c.match.clip_negative_attention)},
        {"freeze_pretrained", bool_text(c.freeze_pretrained)},
        {"seed", std::to_string(c.seed)},
    };
}

ModelConfig Checkpoint::model_config() const
{
    auto need = [&](const std::string& key) {
        auto v = get(key);
        if (!v)
            throw DataError("checkpoint manifest lacks '" + key + "'");
        return *v;
    };
    ModelConfig c;
    c.task = parse_task(need("task"));
    c.num_classes = static_cast<int>(parse_int("classes", need("classes")));
    c.embed.word = parse_int("word_dim", need("word_dim"));
    c.embed.char_embed = parse_int("char_embed_dim", need("char_embed_dim"));
    c.embed.char_hidden = parse_int("char_hidden", need("char_hidden"));
    c.hidden = parse_int("hidden", need("hidden"));
    c.perspectives = parse_int("perspectives", need("perspectives"));
    c.vanilla_cosine = parse_bool("vanilla_cosine", need("vanilla_cosine"));
    c.ff_hidden = parse_int("ff_hidden", need("ff_hidden"));
    c.match.full = parse_bool("match.full", need("match.full"));
    c.match.maxpool = parse_bool("match.maxpool", need("match.maxpool"));
    c.match.attentive = parse_bool("match.attentive", need("match.attentive"));
    c.match.max_attentive = parse_bool("match.max_attentive", need("match.max_attentive"));
    c.match.p_against_q = parse_bool("match.p_against_q", need("match.p_against_q"));
    c.match.q_against_p = parse_bool("match.q_against_p", need("match.q_against_p"));
    c.match.clip_negative_attention =
        parse_bool("match.clip_negative_attention", need("match.clip_negative_attention"));
    c.freeze_pretrained = parse_bool("freeze_pretrained", need("freeze_pretrained"));
    c.seed = static_cast<std::uint64_t>(std::stoull(need("seed")));
    return c;
}

Precision Checkpoint::precision() const
{
    auto v = get("precision");
    return v ? parse_precision(*v) : Precision::F32;
}

double Checkpoint::metric() const
{
    auto v = get("metric");
    if (!v)
        throw DataError("checkpoint has no stored metric");
    return std::strtod(v->c_str(), nullptr);
}

std::string Checkpoint::metric_name() const
{
    return get("metric_name").value_or("");
}

template <typename Scalar>
Checkpoint make_checkpoint(const Model<Scalar>& model, Precision precision)
{
    Checkpoint c;
    c.settings.emplace_back("version", std::to_string(kCheckpointVersion));
    c.settings.emplace_back("precision", std::to_string(static_cast<int>(precision)));
    for (auto& kv : model_settings(model.config()))
        c.settings.push_back(std::move(kv));
    c.vocab = model.vocab();
    const auto& store = model.params();
    for (std::size_t i = 0; i < store.size(); ++i) {
        const auto& p = store[i];
        Checkpoint::Blob b;
        b.name = p.name;
        b.rows = p.value.rows();
        b.cols = p.value.cols();
        b.data.resize(static_cast<std::size_t>(p.value.size()));
        for (Eigen::Index k = 0; k < p.value.size(); ++k)
            b.data[static_cast<std::size_t>(k)] = static_cast<float>(p.value.data()[k]);
        c.params.push_back(std::move(b));
    }
    return c;
}

template <typename Scalar>
void load_params(Model<Scalar>& model, const Checkpoint& checkpoint)
{
    auto& store = model.params();
    if (store.size() != checkpoint.params.size())
        throw DataError("checkpoint has " + std::to_string(checkpoint.params.size()) + " parameters, model expects " +
                        std::to_string(store.size()));
    for (std::size_t i = 0; i < store.size(); ++i) {
        auto& p = store[i];
        const auto& b = checkpoint.params[i];
        if (b.name != p.name || b.rows != p.value.rows() || b.cols != p.value.cols())
            throw DataError("checkpoint parameter " + b.name + " " + shape_string(b.rows, b.cols) +
                            " does not match model parameter " + p.name + " " +
                            shape_string(p.value.rows(), p.value.cols()));
        for (Eigen::Index k = 0; k < p.value.size(); ++k)
            p.value.data()[k] = static_cast<Scalar>(b.data[static_cast<std::size_t>(k)]);
    }
}

template <typename Scalar>
std::unique_ptr<Model<Scalar>> model_from_checkpoint(const Checkpoint& checkpoint)
{
    auto model = std::make_unique<Model<Scalar>>(checkpoint.model_config(), checkpoint.vocab);
    load_params(*model, checkpoint);
    return model;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& dir)
{
    std::filesystem::create_directories(dir);

    std::string manifest;
    for (const auto& [k, v] : checkpoint.settings)
        manifest += k + "=" + v + "\n";
    std::string blob;
    std::size_t offset = 0;
    for (const auto& p : checkpoint.params) {
        if (p.data.size() != static_cast<std::size_t>(p.rows * p.cols))
            throw DataError("checkpoint blob " + p.name + " has inconsistent size");
        manifest += p.name + " " + shape_string(p.rows, p.cols) + " f32 " + std::to_string(offset) + "\n";
        for (float f : p.data) {
            const std::uint32_t bits = to_little_endian(std::bit_cast<std::uint32_t>(f));
            char bytes[4];
            std::memcpy(bytes, &bits, 4);
            blob.append(bytes, 4);
        }
        offset += p.data.size() * 4;
    }

    std::string vocab = "pretrained " + std::to_string(checkpoint.vocab.pretrained_words.size()) + "\n";
    for (const auto& w : checkpoint.vocab.pretrained_words)
        vocab += w + "\n";
    vocab += "oov " + std::to_string(checkpoint.vocab.oov_words.size()) + "\n";
    for (const auto& w : checkpoint.vocab.oov_words)
        vocab += w + "\n";
    vocab += "chars " + std::to_string(checkpoint.vocab.chars.size() - 1) + "\n";
    for (std::size_t i = 1; i < checkpoint.vocab.chars.size(); ++i)
        vocab += std::to_string(static_cast<std::uint32_t>(checkpoint.vocab.chars[i])) + "\n";

    write_file(dir / "manifest.txt", manifest);
    write_file(dir / "params.bin", blob);
    write_file(dir / "vocab.txt", vocab);
}

Checkpoint load_checkpoint(const std::filesystem::path& dir)
{
    Checkpoint c;
    const std::string blob = read_file(dir / "params.bin");
    for (const auto& line : split_lines(read_file(dir / "manifest.txt"))) {
        if (line.empty())
            continue;
        const auto eq = line.find('=');
        if (eq != std::string::npos) {
            c.settings.emplace_back(line.substr(0, eq), line.substr(eq + 1));
            continue;
        }
        std::istringstream fields(line);
        std::string name, shape, dtype;
        std::size_t offset = 0;
        if (!(fields >> name >> shape >> dtype >> offset) || dtype != "f32")
            throw DataError("checkpoint manifest: bad parameter line '" + line + "'");
        const auto x = shape.find('x');
        if (x == std::string::npos)
            throw DataError("checkpoint manifest: bad shape '" + shape + "'");
        Checkpoint::Blob b;
        b.name = name;
        b.rows = parse_int(name, shape.substr(0, x));
        b.cols = parse_int(name, shape.substr(x + 1));
        const std::size_t count = static_cast<std::size_t>(b.rows * b.cols);
        if (offset + count * 4 > blob.size())
            throw DataError("checkpoint params.bin too short for " + name);
        b.data.resize(count);
        for (std::size_t k = 0; k < count; ++k) {
            std::uint32_t bits;
            std::memcpy(&bits, blob.data() + offset + 4 * k, 4);
            b.data[k] = std::bit_cast<float>(to_little_endian(bits));
        }
        c.params.push_back(std::move(b));
    }
    if (auto v = c.get("version"); !v || *v != std::to_string(kCheckpointVersion))
        throw DataError("unsupported checkpoint version in " + dir.string());

    const auto vocab_lines = split_lines(read_file(dir / "vocab.txt"));
    std::size_t pos = 0;
    auto section = [&](const std::string& label) {
        if (pos >= vocab_lines.size())
            throw DataError("vocab.txt: missing section " + label);
        std::istringstream head(vocab_lines[pos++]);
        std::string got;
        std::size_t n = 0;
        if (!(head >> got >> n) || got != label || pos + n > vocab_lines.size())
            throw DataError("vocab.txt: bad section header for " + label);
        std::vector<std::string> out(vocab_lines.begin() + static_cast<std::ptrdiff_t>(pos),
                                     vocab_lines.begin() + static_cast<std::ptrdiff_t>(pos + n));
        pos += n;
        return out;
    };
    c.vocab.pretrained_words = section("pretrained");
    c.vocab.oov_words = section("oov");
    c.vocab.chars = {0};
    for (const auto& s : section("chars"))
        c.vocab.chars.push_back(static_cast<char32_t>(parse_int("char", s)));
    c.vocab.rebuild_index();
    return c;
}

#define BIMPM_INSTANTIATE_CHECKPOINT(S)                                                                               \
    template Checkpoint make_checkpoint(const Model<S>&, Precision);                                                   \
    template void load_params(Model<S>&, const Checkpoint&);                                                           \
    template std::unique_ptr<Model<S>> model_from_checkpoint(const Checkpoint&);

BIMPM_INSTANTIATE_CHECKPOINT(float)
BIMPM_INSTANTIATE_CHECKPOINT(double)

} // namespace bimpm
