#pragma once

#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace dastgcn {

class ShapeMismatch : public std::runtime_error {
public:
    explicit ShapeMismatch(const std::string& what) : std::runtime_error(what) {}
};

class NonFiniteError : public std::runtime_error {
public:
    explicit NonFiniteError(const std::string& op)
        : std::runtime_error("non-finite value produced by op '" + op + "'"), op_(op) {}
    const std::string& op() const { return op_; }

private:
    std::string op_;
};

/// Dense row-major tensor of 64-bit floats. Rank 0 tensors hold one scalar.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int64_t> shape);
    Tensor(std::vector<int64_t> shape, std::vector<double> values);

    static Tensor scalar(double v);
    static Tensor zeros(std::vector<int64_t> shape);
    static Tensor full(std::vector<int64_t> shape, double v);
    static Tensor eye(int64_t n);

    const std::vector<int64_t>& shape() const { return shape_; }
    int64_t rank() const { return static_cast<int64_t>(shape_.size()); }
    int64_t dim(int64_t axis) const;
    int64_t numel() const { return static_cast<int64_t>(data_.size()); }
    bool defined() const { return !data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }
    double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }

    // 2-D / 3-D element access, row-major.
    double at(int64_t i, int64_t j) const;
    double& at(int64_t i, int64_t j);
    double at(int64_t i, int64_t j, int64_t k) const;
    double& at(int64_t i, int64_t j, int64_t k);

    /// Value of a single-element tensor.
    double item() const;

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;

    void fill(double v);
    /// this += other, shapes must match.
    void add_inplace(const Tensor& other);
    /// this *= c.
    void scale_inplace(double c);

    std::string shape_str() const;

private:
    std::vector<int64_t> shape_;
    std::vector<double> data_;
};

int64_t shape_numel(const std::vector<int64_t>& shape);

}  // namespace dastgcn
