#include "bimpm/experiments.hpp"

#include <algorithm>
#include <iomanip>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace bimpm
{

std::vector<Variant> ablation_variants(const ModelConfig& base)
{
    std::vector<Variant> out;
    auto with = [&](std::string label, auto&& edit) {
        ModelConfig c = base;
        c.match = MatchConfig{};
        c.match.clip_negative_attention = base.match.clip_negative_attention;
        edit(c.match);
        out.push_back({std::move(label), c});
    };
    with("Only P→Q", [](MatchConfig& m) { m.q_against_p = false; });
    with("Only P←Q", [](MatchConfig& m) { m.p_against_q = false; });
    with("w/o Full-Matching", [](MatchConfig& m) { m.full = false; });
    with("w/o Maxpooling-Matching", [](MatchConfig& m) { m.maxpool = false; });
    with("w/o Attentive-Matching", [](MatchConfig& m) { m.attentive = false; });
    with("w/o MaxAttentive-Matching", [](MatchConfig& m) { m.max_attentive = false; });
    with("Full Model", [](MatchConfig&) {});
    return out;
}

std::vector<Variant> perspective_variants(const ModelConfig& base, std::span<const int> perspectives,
                                          bool with_baseline)
{
    std::vector<Variant> out;
    if (with_baseline) {
        ModelConfig c = base;
        c.vanilla_cosine = true;
        c.perspectives = 0;
        out.push_back({"cosine", c});
    }
    for (int l : perspectives) {
        if (l < 1)
            throw ConfigError("perspective counts must be >= 1, got " + std::to_string(l));
        ModelConfig c = base;
        c.vanilla_cosine = false;
        c.perspectives = l;
        out.push_back({"l=" + std::to_string(l), c});
    }
    return out;
}

bool ExperimentTable::complete() const
{
    return std::none_of(rows.begin(), rows.end(), [](const ExperimentRow& r) { return r.failure.has_value(); });
}

const ExperimentRow* ExperimentTable::find(const std::string& label) const
{
    for (const auto& r : rows)
        if (r.label == label)
            return &r;
    return nullptr;
}

template <typename Scalar>
ExperimentTable run_variants(const std::vector<Variant>& variants, const ExperimentSetup& setup,
                             const RunCallback& on_run)
{
    if (setup.seeds.empty())
        throw ConfigError("at least one seed is required");
    ExperimentTable table;
    table.metric_name = setup.schema.is_ranking() ? "map" : "accuracy";
    for (const auto& v : variants) {
        ExperimentRow row;
        row.label = v.label;
        row.config = v.config;
        try {
            for (auto seed : setup.seeds) {
                ModelConfig mc = v.config;
                mc.seed = seed;
                mc.task = setup.schema.kind;
                mc.num_classes = setup.schema.num_classes();
                TrainConfig tc = setup.training;
                tc.seed = seed;
                auto model = build_model<Scalar>(mc, setup.train, {&setup.dev}, setup.pretrained);
                const auto result = train(*model, tc, setup.train, setup.dev, setup.schema);
                if (result.diverged)
                    throw NumericError(v.label + ": " + result.divergence_message);
                row.metrics.push_back(result.best_metric);
                if (on_run)
                    on_run(v.label, seed, result.best_metric);
            }
            row.mean = std::accumulate(row.metrics.begin(), row.metrics.end(), 0.0) /
                       static_cast<double>(row.metrics.size());
        } catch (const Error& e) {
            row.failure = e.what();
            table.rows.push_back(std::move(row));
            break;
        }
        table.rows.push_back(std::move(row));
    }
    return table;
}

namespace
{

std::size_t display_width(const std::string& s)
{
    return static_cast<std::size_t>(
        std::count_if(s.begin(), s.end(), [](char c) { return (static_cast<unsigned char>(c) & 0xC0) != 0x80; }));
}

std::string pad(const std::string& s, std::size_t width)
{
    return s + std::string(width > display_width(s) ? width - display_width(s) : 0, ' ');
}

std::string fixed4(double v)
{
    std::ostringstream os;
    os << std::fixed << std::setprecision(4) << v;
    return os.str();
}

} // namespace

std::string format_table(const ExperimentTable& table)
{
    std::size_t label_width = 6;
    std::size_t seeds = 0;
    for (const auto& r : table.rows) {
        label_width = std::max(label_width, display_width(r.label));
        seeds = std::max(seeds, r.metrics.size());
    }
    std::ostringstream os;
    os << pad("model", label_width) << "  " << pad("mean", 8);
    for (std::size_t s = 0; s < seeds; ++s)
        os << "  " << pad("run" + std::to_string(s + 1), 8);
    os << "\n";
    for (const auto& r : table.rows) {
        os << pad(r.label, label_width) << "  ";
        if (r.failure) {
            os << "FAILED: " << *r.failure << "\n";
            continue;
        }
        os << pad(fixed4(r.mean), 8);
        for (double m : r.metrics)
            os << "  " << pad(fixed4(m), 8);
        os << "\n";
    }
    return os.str();
}

std::string series_json(const ExperimentTable& table)
{
    nlohmann::json points = nlohmann::json::array();
    for (const auto& r : table.rows) {
        nlohmann::json p{{"label", r.label},
                         {"perspectives", r.config.vanilla_cosine ? 0 : r.config.perspectives},
                         {"runs", r.metrics}};
        if (r.failure)
            p["failure"] = *r.failure;
        else
            p["mean"] = r.mean;
        points.push_back(std::move(p));
    }
    return nlohmann::json{{"metric", table.metric_name}, {"series", points}}.dump();
}

template ExperimentTable run_variants<float>(const std::vector<Variant>&, const ExperimentSetup&, const RunCallback&);
template ExperimentTable run_variants<double>(const std::vector<Variant>&, const ExperimentSetup&, const RunCallback&);

} // namespace bimpm
