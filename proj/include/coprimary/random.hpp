#ifndef COPRIMARY_RANDOM_HPP
#define COPRIMARY_RANDOM_HPP

#include <cstdint>
#include <random>

namespace coprimary
{

/// Every stochastic operation takes one of these explicitly; none is global.
using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Seed for task `index` of stream `stream` under `master`. Independent of worker count.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index)
{
    return splitmix64(splitmix64(splitmix64(master) ^ (stream * 0xd1b54a32d192ed03ULL)) + index);
}

inline Rng make_rng(std::uint64_t seed)
{
    return Rng(splitmix64(seed));
}

inline Rng make_rng(std::uint64_t master, std::uint64_t stream, std::uint64_t index)
{
    return Rng(derive_seed(master, stream, index));
}

/// Uniform draw in (0,1), never exactly 0 or 1.
inline double uniform_open(Rng& rng)
{
    // 53 random bits, shifted off zero by half a step
    return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

} // namespace coprimary

#endif // COPRIMARY_RANDOM_HPP
