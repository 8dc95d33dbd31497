#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace bimpm
{

enum class TaskKind
{
    Paraphrase,
    Nli,
    Ranking,
};

std::string_view task_name(TaskKind kind);
/// Throws ConfigError for an unknown name.
TaskKind parse_task(std::string_view name);

/// Label inventory and column layout of a task. Labels are stored by index into `labels`.
struct TaskSchema
{
    TaskKind kind = TaskKind::Paraphrase;
    std::vector<std::string> labels;

    static TaskSchema for_task(TaskKind kind);

    int num_classes() const { return static_cast<int>(labels.size()); }
    std::optional<int> label_index(std::string_view text) const;
    bool is_ranking() const { return kind == TaskKind::Ranking; }
};

struct SentencePair
{
    std::string id;
    std::vector<std::string> p;
    std::vector<std::string> q;
    int label = 0;
    /// Question id of a ranking candidate; empty otherwise.
    std::string group_id;
};

/// Whitespace tokenisation, optionally lowercasing ASCII letters.
std::vector<std::string> tokenize(std::string_view text, bool lowercase = false);

struct ParseOptions
{
    std::size_t max_len = 100;
    bool lowercase = false;
};

/// Reads a four-column TSV:
///   paraphrase: id, sentence1, sentence2, label {0,1}
///   nli:        id, premise, hypothesis, label {entailment, contradiction, neutral}
///   ranking:    group_id, question, candidate, relevance {0,1}
/// Sentences longer than max_len are truncated. Errors carry the file and line number.
std::vector<SentencePair> parse_dataset(const std::filesystem::path& path, const TaskSchema& schema,
                                        const ParseOptions& options = {});
std::vector<SentencePair> parse_dataset_text(std::string_view text, const TaskSchema& schema,
                                             const ParseOptions& options = {}, std::string_view source = "<text>");

/// Inverse of parse_dataset for well-formed data.
std::string serialize_dataset(const std::vector<SentencePair>& pairs, const TaskSchema& schema);

/// Per-label example counts in label-index order.
std::vector<std::size_t> label_histogram(const std::vector<SentencePair>& pairs, const TaskSchema& schema);

} // namespace bimpm
