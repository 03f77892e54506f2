#pragma once

#include <cmath>
#include <cstdint>

namespace ccast {

/// Counter-based stream derivation: every random stream in the project is
/// keyed by (base seed, purpose, index) so runs are reproducible and any
/// stream can be regenerated in isolation.
namespace seed_purpose {
constexpr std::uint64_t toy_init = 1;        ///< toy truth initial state
constexpr std::uint64_t member_eps = 2;      ///< ensemble member noise
constexpr std::uint64_t param_init = 3;      ///< model parameter initialization
constexpr std::uint64_t train_batch = 4;     ///< batch shuffling / step noise
constexpr std::uint64_t train_dropout = 5;   ///< coupling dropout draws
};  // namespace seed_purpose

inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Mix (base, purpose, index) into one 64-bit stream seed.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t purpose,
                                 std::uint64_t index) {
    std::uint64_t s = base;
    std::uint64_t a = splitmix64(s);
    s ^= purpose * 0xda942042e4dd58b5ULL;
    std::uint64_t b = splitmix64(s);
    s ^= index * 0x2545f4914f6cdd1dULL;
    std::uint64_t c = splitmix64(s);
    return a ^ (b << 1) ^ c;
}

/// Deterministic generator with a platform-independent normal sampler
/// (Box-Muller); std::normal_distribution is implementation-defined and
/// would break byte-reproducibility contracts.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() { return splitmix64(state_); }

    /// Uniform in (0, 1]; never returns 0 so log() below is safe.
    double uniform() {
        return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 2.0 * M_PI * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace ccast
