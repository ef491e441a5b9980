#pragma once

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace provpt {

// Dense row-major f64 tensor. Shapes are small (desk-scale models), so we
// keep plain vectors and value semantics throughout.
struct Tensor {
    std::vector<int64_t> shape;
    std::vector<double> values;
    bool requires_grad = false;

    Tensor() = default;
    Tensor(std::vector<int64_t> s, double fill = 0.0, bool rg = false)
        : shape(std::move(s)), values(numel_of(shape), fill), requires_grad(rg) {}
    Tensor(std::vector<int64_t> s, std::vector<double> v, bool rg = false)
        : shape(std::move(s)), values(std::move(v)), requires_grad(rg) {
        if (numel_of(shape) != static_cast<int64_t>(values.size()))
            throw std::invalid_argument("Tensor: shape/value size mismatch");
    }

    static int64_t numel_of(const std::vector<int64_t>& s) {
        int64_t n = 1;
        for (int64_t d : s) {
            if (d < 0) throw std::invalid_argument("Tensor: negative dimension");
            n *= d;
        }
        return n;
    }

    int64_t numel() const { return static_cast<int64_t>(values.size()); }
    int rank() const { return static_cast<int>(shape.size()); }
    int64_t dim(int i) const { return shape.at(static_cast<size_t>(i)); }

    double& at(int64_t i) { return values[static_cast<size_t>(i)]; }
    double at(int64_t i) const { return values[static_cast<size_t>(i)]; }

    // 2-D accessor; row-major.
    double& at(int64_t r, int64_t c) { return values[static_cast<size_t>(r * shape.back() + c)]; }
    double at(int64_t r, int64_t c) const { return values[static_cast<size_t>(r * shape.back() + c)]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    void fill(double v) { std::fill(values.begin(), values.end(), v); }
};

inline std::string shape_str(const std::vector<int64_t>& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        out += std::to_string(s[i]);
        if (i + 1 < s.size()) out += ",";
    }
    return out + "]";
}

}  // namespace provpt
