#pragma once

#include <cstdint>
#include <random>

namespace rgcop {

// Deterministic random source. All stochastic code in the library draws
// from an Rng seeded either directly or as a numbered substream of a
// master seed, so replicate-level parallelism cannot change results.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(mix(seed)) {}

    // Substream k of a master seed; substreams are statistically
    // independent streams with reproducible identities.
    static Rng substream(std::uint64_t master, std::uint64_t k) {
        return Rng(mix(master + 0x9E3779B97F4A7C15ULL * (k + 1)));
    }

    std::uint64_t next_u64() { return engine_(); }

    // Uniform on the open interval (0,1).
    double uniform() {
        return (static_cast<double>(engine_() >> 12) + 0.5) * 0x1.0p-52;
    }

    double uniform(double a, double b) { return a + (b - a) * uniform(); }

    double normal();
    double exponential() ;
    double gamma(double shape);   // unit scale
    double chisq(double df) { return 2.0 * gamma(0.5 * df); }

  private:
    static std::uint64_t mix(std::uint64_t x) {
        // splitmix64 finalizer
        x += 0x9E3779B97F4A7C15ULL;
        x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
        x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
        return x ^ (x >> 31);
    }

    std::mt19937_64 engine_;
};

}  // namespace rgcop
