#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "protobeam/errors.hpp"

namespace protobeam {

// SplitMix64 finalizer. Whitens user seeds and derives independent stream
// seeds; every pseudo-random stream in the library is rooted in this.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    return splitmix64(splitmix64(a) ^ b);
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    return mix_seed(mix_seed(a, b), c);
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c,
                              std::uint64_t d) {
    return mix_seed(mix_seed(a, b, c), d);
}

// Deterministic random stream. Wraps mt19937_64 (whose output sequence the
// standard fully specifies) and implements its own draw routines, so results
// are bit-identical across standard libraries and platforms.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(splitmix64(seed)) {}

    std::uint64_t next_u64() { return eng_(); }

    // Unbiased integer in [0, n) via rejection sampling.
    std::uint64_t below(std::uint64_t n) {
        if (n == 0)
            throw ArgumentError("Rng::below: n must be positive");
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = eng_();
        } while (x >= limit);
        return x % n;
    }

    // Uniform double in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller; caches the second deviate.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0)
            u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * M_PI * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    // Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // k distinct indices drawn uniformly without replacement from [0, n),
    // in draw order (partial Fisher-Yates).
    std::vector<int> sample_without_replacement(int n, int k) {
        if (k < 0 || n < 0 || k > n)
            throw ArgumentError("Rng::sample_without_replacement: need 0 <= k <= n");
        std::vector<int> pool(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i)
            pool[static_cast<std::size_t>(i)] = i;
        std::vector<int> out(static_cast<std::size_t>(k));
        for (int i = 0; i < k; ++i) {
            const std::size_t j =
                static_cast<std::size_t>(i) + static_cast<std::size_t>(below(static_cast<std::uint64_t>(n - i)));
            std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
            out[static_cast<std::size_t>(i)] = pool[static_cast<std::size_t>(i)];
        }
        return out;
    }

    // Engine + Box-Muller cache, serialized as text. Used by checkpoints.
    std::string save_state() const {
        std::ostringstream os;
        os << eng_ << " " << (has_spare_ ? 1 : 0);
        if (has_spare_) {
            os.precision(17);
            os << " " << spare_;
        }
        return os.str();
    }

    void load_state(const std::string& s) {
        std::istringstream is(s);
        int flag = 0;
        is >> eng_ >> flag;
        has_spare_ = (flag != 0);
        spare_ = 0.0;
        if (has_spare_)
            is >> spare_;
        if (!is)
            throw FormatError("Rng::load_state: malformed state string");
    }

private:
    std::mt19937_64 eng_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

} // namespace protobeam
