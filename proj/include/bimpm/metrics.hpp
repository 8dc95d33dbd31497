#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace bimpm
{

/// Fraction of positions where prediction equals gold. Throws DataError on length mismatch or empty input.
double accuracy(std::span<const int> predictions, std::span<const int> golds);

struct RankedCandidate
{
    double score = 0.0;
    bool relevant = false;
};

struct RankingMetrics
{
    double map = 0.0;
    double mrr = 0.0;
    std::size_t groups_used = 0;
    /// Groups without any relevant candidate; they do not enter the means.
    std::size_t groups_excluded = 0;
};

/// Mean average precision and mean reciprocal rank. Candidates are ranked by descending score,
/// ties keep input order. Throws DataError for an empty group list or when no group has a
/// relevant candidate.
RankingMetrics map_mrr(const std::vector<std::vector<RankedCandidate>>& groups);

} // namespace bimpm
