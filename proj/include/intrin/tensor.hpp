#pragma once
#include <vector>
#include <cstdint>
#include <string>
#include <initializer_list>

namespace intrin {

// Dense row-major array of doubles. Plain value type: all autodiff state
// lives in the tape (graph.hpp), not here.
struct Tensor {
    std::vector<int64_t> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<int64_t> s);
    Tensor(std::vector<int64_t> s, std::vector<double> d);
    Tensor(std::vector<int64_t> s, double fill);

    static Tensor scalar(double v) { return Tensor({1}, std::vector<double>{v}); }
    static Tensor zeros(std::vector<int64_t> s) { return Tensor(std::move(s), 0.0); }
    static Tensor full(std::vector<int64_t> s, double v) { return Tensor(std::move(s), v); }

    int64_t numel() const;
    int ndim() const { return (int)shape.size(); }
    int64_t dim(int i) const;          // supports negative indices
    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    double& at(std::initializer_list<int64_t> idx);
    double at(std::initializer_list<int64_t> idx) const;
    double item() const;               // requires numel()==1

    double* ptr() { return data.data(); }
    const double* ptr() const { return data.data(); }

    bool all_finite() const;
    std::string shape_str() const;
};

int64_t shape_numel(const std::vector<int64_t>& s);
std::string shape_to_string(const std::vector<int64_t>& s);

} // namespace intrin
