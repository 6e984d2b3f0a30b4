#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace mangacolor::nn {

using Shape = std::vector<int>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense float32 array, row-major, with an optional gradient buffer of the
/// same length that is allocated on first use.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, float fill = 0.0f);
    Tensor(Shape shape, std::vector<float> values);

    const Shape& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::span<float> data() { return data_; }
    std::span<const float> data() const { return data_; }
    float* ptr() { return data_.data(); }
    const float* ptr() const { return data_.data(); }
    float& operator[](std::size_t i) { return data_[i]; }
    float operator[](std::size_t i) const { return data_[i]; }

    bool has_grad() const { return !grad_.empty(); }
    /// Allocates a zeroed gradient on first access.
    std::span<float> grad();
    std::span<const float> grad() const { return grad_; }
    void zero_grad();
    void drop_grad() { grad_.clear(); }

    /// Same data viewed with another shape of equal size.
    Tensor reshaped(Shape shape) const;

    /// Bitwise comparison of shape and data; gradients are ignored.
    bool same_as(const Tensor& other) const;

private:
    Shape shape_;
    std::vector<float> data_;
    std::vector<float> grad_;
};

/// Named, checkpointable collection of model tensors. Tensor addresses are
/// stable for the lifetime of the set, so layers may keep pointers into it.
class ParamSet {
public:
    struct Entry {
        Tensor tensor;
        bool trainable = true;
    };

    ParamSet() = default;
    ParamSet(const ParamSet&) = delete;
    ParamSet& operator=(const ParamSet&) = delete;

    Tensor& add(const std::string& name, Shape shape, bool trainable = true, float fill = 0.0f);
    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    bool contains(const std::string& name) const { return entries_.count(name) != 0; }

    std::map<std::string, Entry>& entries() { return entries_; }
    const std::map<std::string, Entry>& entries() const { return entries_; }

    void zero_grad();
    std::size_t scalar_count() const;
    /// FNV-1a over names and raw data; equal checksums mean equal weights.
    std::uint64_t checksum() const;
    /// Copies values from `other`; names and shapes must match.
    void copy_values_from(const ParamSet& other);

private:
    std::map<std::string, Entry> entries_;
};

}  // namespace mangacolor::nn
