#include "intrin/tensor.hpp"
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace intrin {

int64_t shape_numel(const std::vector<int64_t>& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

std::string shape_to_string(const std::vector<int64_t>& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); i++) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

Tensor::Tensor(std::vector<int64_t> s) : shape(std::move(s)), data(shape_numel(shape), 0.0) {}

Tensor::Tensor(std::vector<int64_t> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (shape_numel(shape) != (int64_t)data.size())
        throw std::invalid_argument("Tensor: shape " + shape_to_string(shape) + " does not match data length " +
                                    std::to_string(data.size()));
}

Tensor::Tensor(std::vector<int64_t> s, double fill) : shape(std::move(s)), data(shape_numel(shape), fill) {}

int64_t Tensor::numel() const { return shape_numel(shape); }

int64_t Tensor::dim(int i) const {
    int n = ndim();
    if (i < 0) i += n;
    if (i < 0 || i >= n) throw std::out_of_range("Tensor::dim index out of range");
    return shape[i];
}

double& Tensor::at(std::initializer_list<int64_t> idx) {
    if ((int)idx.size() != ndim()) throw std::invalid_argument("Tensor::at rank mismatch");
    int64_t off = 0;
    int k = 0;
    for (int64_t i : idx) off = off * shape[k++] + i;
    return data[off];
}

double Tensor::at(std::initializer_list<int64_t> idx) const {
    return const_cast<Tensor*>(this)->at(idx);
}

double Tensor::item() const {
    if (numel() != 1) throw std::invalid_argument("Tensor::item on non-scalar of shape " + shape_str());
    return data[0];
}

bool Tensor::all_finite() const {
    for (double v : data)
        if (!std::isfinite(v)) return false;
    return true;
}

std::string Tensor::shape_str() const { return shape_to_string(shape); }

} // namespace intrin
