#pragma once

#include <cstdint>
#include <initializer_list>
#include <vector>

namespace modlens::gpt {

// Dense row-major tensor. Shapes are small and fixed by ModelConfig, so this
// stays deliberately minimal: storage plus shape, no views or strides.
template <typename F>
struct Tensor {
    std::vector<int64_t> shape;
    std::vector<F> v;

    Tensor() = default;

    static Tensor zeros(std::initializer_list<int64_t> dims) {
        Tensor t;
        t.shape.assign(dims);
        int64_t n = 1;
        for (int64_t d : t.shape) n *= d;
        t.v.assign(static_cast<size_t>(n), F{0});
        return t;
    }

    int64_t size() const { return static_cast<int64_t>(v.size()); }
    F* data() { return v.data(); }
    const F* data() const { return v.data(); }

    void fill(F value) { std::fill(v.begin(), v.end(), value); }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }
};

} // namespace modlens::gpt
