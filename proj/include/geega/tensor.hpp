#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace geega::diff {

// Dense row-major tensor of doubles. The buffer is shared on copy and
// copied on first mutation, so reshapes and tape bookkeeping stay cheap.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int> shape)
        : shape_(std::move(shape)),
          data_(std::make_shared<std::vector<double>>(count(shape_), 0.0)) {}

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

    static Tensor full(std::vector<int> shape, double v) {
        Tensor t(std::move(shape));
        std::fill(t.data_->begin(), t.data_->end(), v);
        return t;
    }

    static Tensor scalar(double v) { return full({1}, v); }

    static Tensor from(std::vector<int> shape, std::vector<double> values) {
        if (count(shape) != static_cast<int64_t>(values.size()))
            throw std::invalid_argument("Tensor::from: shape/value count mismatch");
        Tensor t;
        t.shape_ = std::move(shape);
        t.data_ = std::make_shared<std::vector<double>>(std::move(values));
        return t;
    }

    const std::vector<int>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_.at(static_cast<size_t>(i)); }

    int64_t size() const { return data_ ? static_cast<int64_t>(data_->size()) : 0; }
    bool empty() const { return size() == 0; }

    const double* data() const { return data_->data(); }
    double* data() {
        ensure_unique();
        return data_->data();
    }

    double operator[](int64_t i) const { return (*data_)[static_cast<size_t>(i)]; }

    double item() const {
        if (size() != 1) throw std::logic_error("Tensor::item: not a scalar");
        return (*data_)[0];
    }

    // Shares the buffer; only the shape changes.
    Tensor reshaped(std::vector<int> new_shape) const {
        if (count(new_shape) != size())
            throw std::invalid_argument("Tensor::reshaped: element count mismatch");
        Tensor t;
        t.shape_ = std::move(new_shape);
        t.data_ = data_;
        return t;
    }

    void fill(double v) {
        ensure_unique();
        std::fill(data_->begin(), data_->end(), v);
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    std::string shape_str() const {
        std::string s = "[";
        for (size_t i = 0; i < shape_.size(); ++i) {
            if (i) s += "x";
            s += std::to_string(shape_[i]);
        }
        return s + "]";
    }

    static int64_t count(const std::vector<int>& shape) {
        int64_t n = 1;
        for (int d : shape) {
            if (d < 0) throw std::invalid_argument("negative dimension");
            n *= d;
        }
        return n;
    }

private:
    void ensure_unique() {
        if (data_ && data_.use_count() > 1)
            data_ = std::make_shared<std::vector<double>>(*data_);
    }

    std::vector<int> shape_;
    std::shared_ptr<std::vector<double>> data_;
};

inline bool all_finite(const Tensor& t) {
    const double* p = t.data();
    for (int64_t i = 0; i < t.size(); ++i)
        if (!std::isfinite(p[i])) return false;
    return true;
}

}  // namespace geega::diff
