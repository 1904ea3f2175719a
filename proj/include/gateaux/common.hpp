#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace gateaux {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A parameter (bandwidth, eps, tolerance, ...) is outside its domain.
class InvalidParameter : public Error {
public:
    using Error::Error;
};

/// Input data is empty, malformed or unreadable.
class InvalidInput : public Error {
public:
    using Error::Error;
};

/// Coordinate layouts of two objects do not agree.
class LayoutError : public Error {
public:
    using Error::Error;
};

/// A functional is undefined at the requested distribution (zero-mass arm,
/// zero-probability regime prefix, ...).
class DegenerateError : public Error {
public:
    using Error::Error;
};

/// A perturbation direction lies outside the support of the base distribution.
class SupportError : public Error {
public:
    using Error::Error;
};

/// A linear program has an empty feasible set.
class InfeasibleError : public Error {
public:
    using Error::Error;
};

/// A numerical procedure failed (too many per-observation failures, ...).
class NumericError : public Error {
public:
    using Error::Error;
};

using Rng = std::mt19937_64;

/// splitmix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t mix_seed(std::uint64_t base, std::uint64_t stream) noexcept
{
    std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Runs body(i) for i in [0, count) on up to `threads` workers. Each index is
/// processed exactly once; callers write results into per-index slots so the
/// outcome does not depend on the thread count.
template <class Body>
void parallel_for(std::size_t count, std::size_t threads, Body&& body)
{
    if (threads <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
    threads = std::min(threads, count);
    std::vector<std::thread> workers;
    workers.reserve(threads);
    for (std::size_t w = 0; w < threads; ++w) {
        workers.emplace_back([&, w] {
            for (std::size_t i = w; i < count; i += threads) body(i);
        });
    }
    for (auto& t : workers) t.join();
}

}  // namespace gateaux
