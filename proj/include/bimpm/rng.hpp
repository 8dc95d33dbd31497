#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

#include "bimpm/diff.hpp"

namespace bimpm
{

using Rng = std::mt19937_64;

/// Fills m with independent draws from U[-bound, bound].
template <typename Scalar>
void fill_uniform(Matrix<Scalar>& m, double bound, Rng& rng)
{
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Eigen::Index i = 0; i < m.size(); ++i)
        m.data()[i] = static_cast<Scalar>(dist(rng));
}

/// Glorot-uniform half-width sqrt(6 / (fan_in + fan_out)).
inline double glorot_bound(Eigen::Index fan_in, Eigen::Index fan_out)
{
    return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

/// 64-bit FNV-1a. Used to derive per-token seeds that do not depend on visit order.
inline std::uint64_t fnv1a(std::string_view text)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Independent stream for a named component, derived from the run seed.
inline Rng derive_rng(std::uint64_t seed, std::string_view stream)
{
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(fnv1a(stream)), static_cast<std::uint32_t>(fnv1a(stream) >> 32)};
    return Rng(seq);
}

} // namespace bimpm
