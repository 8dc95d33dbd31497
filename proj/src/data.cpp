#include "bimpm/data.hpp"

#include <fstream>
#include <sstream>

#include "bimpm/error.hpp"

namespace bimpm
{

std::string_view task_name(TaskKind kind)
{
    switch (kind) {
    case TaskKind::Paraphrase: return "paraphrase";
    case TaskKind::Nli: return "nli";
    case TaskKind::Ranking: return "ranking";
    }
    return "unknown";
}

TaskKind parse_task(std::string_view name)
{
    if (name == "paraphrase")
        return TaskKind::Paraphrase;
    if (name == "nli")
        return TaskKind::Nli;
    if (name == "ranking")
        return TaskKind::Ranking;
    throw ConfigError("unknown task '" + std::string(name) + "' (expected paraphrase, nli or ranking)");
}

TaskSchema TaskSchema::for_task(TaskKind kind)
{
    TaskSchema s;
    s.kind = kind;
    if (kind == TaskKind::Nli)
        s.labels = {"entailment", "contradiction", "neutral"};
    else
        s.labels = {"0", "1"};
    return s;
}

std::optional<int> TaskSchema::label_index(std::string_view text) const
{
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] == text)
            return static_cast<int>(i);
    return std::nullopt;
}

std::vector<std::string> tokenize(std::string_view text, bool lowercase)
{
    std::vector<std::string> out;
    std::size_t i = 0;
    auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f'; };
    while (i < text.size()) {
        while (i < text.size() && is_space(text[i]))
            ++i;
        std::size_t j = i;
        while (j < text.size() && !is_space(text[j]))
            ++j;
        if (j > i) {
            std::string tok(text.substr(i, j - i));
            if (lowercase)
                for (char& c : tok)
                    if (c >= 'A' && c <= 'Z')
                        c = static_cast<char>(c - 'A' + 'a');
            out.push_back(std::move(tok));
        }
        i = j;
    }
    return out;
}

std::vector<SentencePair> parse_dataset_text(std::string_view text, const TaskSchema& schema,
                                             const ParseOptions& options, std::string_view source)
{
    if (options.max_len < 1)
        throw ConfigError("max_len must be >= 1");
    std::vector<SentencePair> out;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string_view::npos)
            end = text.size();
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r')
            line.remove_suffix(1);
        const std::string where = std::string(source) + ":" + std::to_string(line_no) + ": ";
        if (line.empty())
            throw DataError(where + "empty row");

        std::vector<std::string_view> cols;
        std::size_t start = 0;
        while (true) {
            const std::size_t tab = line.find('\t', start);
            cols.push_back(line.substr(start, tab == std::string_view::npos ? std::string_view::npos : tab - start));
            if (tab == std::string_view::npos)
                break;
            start = tab + 1;
        }
        if (cols.size() != 4)
            throw DataError(where + "expected 4 tab-separated columns, got " + std::to_string(cols.size()));

        SentencePair pair;
        if (schema.is_ranking())
            pair.group_id = std::string(cols[0]);
        pair.id = schema.is_ranking() ? pair.group_id + "#" + std::to_string(line_no) : std::string(cols[0]);
        pair.p = tokenize(cols[1], options.lowercase);
        pair.q = tokenize(cols[2], options.lowercase);
        if (pair.p.empty() || pair.q.empty())
            throw DataError(where + "empty sentence");
        if (pair.p.size() > options.max_len)
            pair.p.resize(options.max_len);
        if (pair.q.size() > options.max_len)
            pair.q.resize(options.max_len);
        std::string_view label = cols[3];
        while (!label.empty() && (label.back() == ' '))
            label.remove_suffix(1);
        const auto idx = schema.label_index(label);
        if (!idx)
            throw DataError(where + "unknown label '" + std::string(label) + "' for task " +
                            std::string(task_name(schema.kind)));
        pair.label = *idx;
        out.push_back(std::move(pair));
    }
    return out;
}

std::vector<SentencePair> parse_dataset(const std::filesystem::path& path, const TaskSchema& schema,
                                        const ParseOptions& options)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw DataError("cannot open dataset " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    auto pairs = parse_dataset_text(buf.str(), schema, options, path.string());
    if (pairs.empty())
        throw DataError("dataset " + path.string() + " is empty");
    return pairs;
}

std::string serialize_dataset(const std::vector<SentencePair>& pairs, const TaskSchema& schema)
{
    auto join = [](const std::vector<std::string>& toks) {
        std::string s;
        for (std::size_t i = 0; i < toks.size(); ++i) {
            if (i)
                s += ' ';
            s += toks[i];
        }
        return s;
    };
    std::string out;
    for (const auto& p : pairs) {
        out += schema.is_ranking() ? p.group_id : p.id;
        out += '\t';
        out += join(p.p);
        out += '\t';
        out += join(p.q);
        out += '\t';
        out += schema.labels.at(static_cast<std::size_t>(p.label));
        out += '\n';
    }
    return out;
}

std::vector<std::size_t> label_histogram(const std::vector<SentencePair>& pairs, const TaskSchema& schema)
{
    std::vector<std::size_t> h(schema.labels.size(), 0);
    for (const auto& p : pairs)
        ++h.at(static_cast<std::size_t>(p.label));
    return h;
}

} // namespace bimpm
