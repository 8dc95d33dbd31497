#include "bimpm/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "bimpm/error.hpp"

namespace bimpm
{

double accuracy(std::span<const int> predictions, std::span<const int> golds)
{
    if (predictions.size() != golds.size())
        throw DataError("accuracy: " + std::to_string(predictions.size()) + " predictions vs " +
                        std::to_string(golds.size()) + " gold labels");
    if (golds.empty())
        throw DataError("accuracy: no examples");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < golds.size(); ++i)
        hits += predictions[i] == golds[i];
    return static_cast<double>(hits) / static_cast<double>(golds.size());
}

RankingMetrics map_mrr(const std::vector<std::vector<RankedCandidate>>& groups)
{
    if (groups.empty())
        throw DataError("map_mrr: no groups");
    RankingMetrics m;
    double ap_sum = 0.0;
    double rr_sum = 0.0;
    for (const auto& group : groups) {
        if (std::none_of(group.begin(), group.end(), [](const auto& c) { return c.relevant; })) {
            ++m.groups_excluded;
            continue;
        }
        std::vector<std::size_t> order(group.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return group[a].score > group[b].score; });
        double hits = 0.0;
        double precision_sum = 0.0;
        double rr = 0.0;
        for (std::size_t rank = 0; rank < order.size(); ++rank) {
            if (!group[order[rank]].relevant)
                continue;
            hits += 1.0;
            precision_sum += hits / static_cast<double>(rank + 1);
            if (rr == 0.0)
                rr = 1.0 / static_cast<double>(rank + 1);
        }
        ap_sum += precision_sum / hits;
        rr_sum += rr;
        ++m.groups_used;
    }
    if (m.groups_used == 0)
        throw DataError("map_mrr: no group has a relevant candidate");
    m.map = ap_sum / static_cast<double>(m.groups_used);
    m.mrr = rr_sum / static_cast<double>(m.groups_used);
    return m;
}

} // namespace bimpm
