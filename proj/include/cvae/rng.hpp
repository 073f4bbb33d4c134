#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "cvae/tensor.hpp"

namespace cvae {

/// Deterministic random source used everywhere in the toolkit. Gaussian
/// variates come from an explicit Box-Muller transform (with the spare value
/// kept in the state) so that streams are reproducible and serializable.
class Rng {
public:
    explicit Rng(uint64_t seed = 0) : engine_(seed) {}

    uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1) with 53 bits of mantissa.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double normal();

    /// Uniform integer in [0, n), bias-free by rejection.
    int uniform_int(int n);

    void fill_normal(Tensor& t);
    Tensor normal_tensor(std::vector<int> shape);

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (int i = static_cast<int>(v.size()) - 1; i > 0; --i)
            std::swap(v[static_cast<size_t>(i)],
                      v[static_cast<size_t>(uniform_int(i + 1))]);
    }

    std::string serialize() const;
    static Rng deserialize(const std::string& s);

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace cvae
