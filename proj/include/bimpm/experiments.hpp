#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bimpm/trainer.hpp"

namespace bimpm
{

/// A named model variant of a comparison study.
struct Variant
{
    std::string label;
    ModelConfig config;
};

/// The seven direction / strategy knockouts, in table order, ending with the full model.
std::vector<Variant> ablation_variants(const ModelConfig& base);

/// One variant per perspective count, preceded by a plain-cosine baseline when requested.
std::vector<Variant> perspective_variants(const ModelConfig& base, std::span<const int> perspectives,
                                          bool with_baseline);

struct ExperimentSetup
{
    TaskSchema schema;
    std::vector<SentencePair> train;
    std::vector<SentencePair> dev;
    const EmbeddingTable* pretrained = nullptr;
    TrainConfig training;
    /// Every variant is trained once per seed (model and training seed alike).
    std::vector<std::uint64_t> seeds{1, 2, 3};
};

struct ExperimentRow
{
    std::string label;
    ModelConfig config;
    std::vector<double> metrics; // best dev metric per seed
    double mean = 0.0;
    std::optional<std::string> failure;
};

struct ExperimentTable
{
    std::string metric_name;
    std::vector<ExperimentRow> rows;

    bool complete() const;
    const ExperimentRow* find(const std::string& label) const;
};

using RunCallback = std::function<void(const std::string& label, std::uint64_t seed, double metric)>;

/// Trains every variant for every seed. A failing run marks its row and stops the study,
/// leaving the rows produced so far.
template <typename Scalar>
ExperimentTable run_variants(const std::vector<Variant>& variants, const ExperimentSetup& setup,
                             const RunCallback& on_run = {});

/// Column-aligned text rendering: label, mean, then one column per seed.
std::string format_table(const ExperimentTable& table);

/// Plot-ready series, one JSON object holding one point per row.
std::string series_json(const ExperimentTable& table);

} // namespace bimpm
