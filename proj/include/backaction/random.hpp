#pragma once

#include <cmath>
#include <complex>
#include <cstdint>

#include <boost/random/mersenne_twister.hpp>
#include <boost/random/normal_distribution.hpp>

namespace backaction {

// splitmix64 finalizer; used to derive independent per-point seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
    return mix_seed(mix_seed(master) ^ mix_seed(index + 0x632be59bd9b4e019ULL));
}

// Circular complex Gaussian with E|z|^2 = 1. Boost's ziggurat sampler gives the
// same stream on every standard library.
class ComplexNormal {
public:
    explicit ComplexNormal(std::uint64_t seed) : engine_(seed) {}

    std::complex<double> operator()() {
        const double re = normal_(engine_);
        const double im = normal_(engine_);
        return {re * kInvSqrt2, im * kInvSqrt2};
    }

private:
    static constexpr double kInvSqrt2 = 0.70710678118654752440;
    boost::random::mt19937_64 engine_;
    boost::random::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace backaction
