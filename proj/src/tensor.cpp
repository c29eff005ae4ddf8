#include "dastgcn/tensor.hpp"

#include <cmath>
#include <sstream>

namespace dastgcn {

int64_t shape_numel(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t e : shape) {
        if (e < 0) throw ShapeMismatch("negative extent in shape");
        n *= e;
    }
    return n;
}

Tensor::Tensor(std::vector<int64_t> shape)
    : shape_(std::move(shape)), data_(static_cast<size_t>(shape_numel(shape_)), 0.0) {}

Tensor::Tensor(std::vector<int64_t> shape, std::vector<double> values) : shape_(std::move(shape)) {
    if (shape_numel(shape_) != static_cast<int64_t>(values.size()))
        throw ShapeMismatch("value count does not match shape " + Tensor(shape_).shape_str());
    data_ = std::move(values);
}

Tensor Tensor::scalar(double v) { return Tensor({}, {v}); }

Tensor Tensor::zeros(std::vector<int64_t> shape) { return Tensor(std::move(shape)); }

Tensor Tensor::full(std::vector<int64_t> shape, double v) {
    Tensor t(std::move(shape));
    t.fill(v);
    return t;
}

Tensor Tensor::eye(int64_t n) {
    Tensor t({n, n});
    for (int64_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
    return t;
}

int64_t Tensor::dim(int64_t axis) const {
    if (axis < 0 || axis >= rank()) throw ShapeMismatch("axis out of range");
    return shape_[static_cast<size_t>(axis)];
}

double Tensor::at(int64_t i, int64_t j) const {
    return data_[static_cast<size_t>(i * shape_[1] + j)];
}

double& Tensor::at(int64_t i, int64_t j) {
    return data_[static_cast<size_t>(i * shape_[1] + j)];
}

double Tensor::at(int64_t i, int64_t j, int64_t k) const {
    return data_[static_cast<size_t>((i * shape_[1] + j) * shape_[2] + k)];
}

double& Tensor::at(int64_t i, int64_t j, int64_t k) {
    return data_[static_cast<size_t>((i * shape_[1] + j) * shape_[2] + k)];
}

double Tensor::item() const {
    if (numel() != 1) throw ShapeMismatch("item() on tensor with " + std::to_string(numel()) + " elements");
    return data_[0];
}

bool Tensor::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

void Tensor::fill(double v) {
    for (double& x : data_) x = v;
}

void Tensor::add_inplace(const Tensor& other) {
    if (!same_shape(other))
        throw ShapeMismatch("add_inplace shape mismatch: " + shape_str() + " vs " + other.shape_str());
    for (size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
}

void Tensor::scale_inplace(double c) {
    for (double& x : data_) x *= c;
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
    os << "]";
    return os.str();
}

}  // namespace dastgcn
