#pragma once

#include <cstdint>
#include <initializer_list>
#include <sstream>
#include <string>
#include <vector>

#include "cyclet/error.hpp"

namespace cyclet {

inline std::int64_t shape_size(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
}

inline std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

// Dense n-d float array with an optional gradient buffer of the same shape.
struct Tensor {
    std::vector<int> shape;
    std::vector<float> v;
    std::vector<float> g; // empty, or exactly v.size()

    Tensor() = default;

    explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
        for (int d : shape) {
            if (d <= 0) throw ShapeError("tensor extent must be positive, got shape " + shape_str(shape));
        }
        v.assign(static_cast<size_t>(shape_size(shape)), 0.0f);
    }

    Tensor(std::vector<int> s, std::vector<float> data) : shape(std::move(s)), v(std::move(data)) {
        if (static_cast<std::int64_t>(v.size()) != shape_size(shape)) {
            throw ShapeError("tensor data length " + std::to_string(v.size()) +
                             " does not match shape " + shape_str(shape));
        }
        for (int d : shape) {
            if (d <= 0) throw ShapeError("tensor extent must be positive, got shape " + shape_str(shape));
        }
    }

    std::int64_t size() const { return static_cast<std::int64_t>(v.size()); }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }
    int ndim() const { return static_cast<int>(shape.size()); }

    bool has_grad() const { return !g.empty(); }
    void alloc_grad() { g.assign(v.size(), 0.0f); }
    void zero_grad() {
        if (g.empty()) g.assign(v.size(), 0.0f);
        else std::fill(g.begin(), g.end(), 0.0f);
    }
    void drop_grad() { g.clear(); }
};

inline bool same_shape(const Tensor& a, const Tensor& b) { return a.shape == b.shape; }

} // namespace cyclet
