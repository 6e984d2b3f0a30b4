#include "mangacolor/nn/tensor.hpp"

#include <algorithm>
#include <cstring>
#include <functional>
#include <numeric>

#include "mangacolor/error.hpp"

namespace mangacolor::nn {

std::size_t shape_size(const Shape& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d < 0) throw ShapeError("negative extent in shape " + shape_string(shape));
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

std::string shape_string(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

Tensor::Tensor(Shape shape, float fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<float> values) : shape_(std::move(shape)), data_(std::move(values)) {
    if (data_.size() != shape_size(shape_)) {
        throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                         shape_string(shape_));
    }
}

std::span<float> Tensor::grad() {
    if (grad_.size() != data_.size()) grad_.assign(data_.size(), 0.0f);
    return grad_;
}

void Tensor::zero_grad() { grad_.assign(data_.size(), 0.0f); }

Tensor Tensor::reshaped(Shape shape) const {
    if (shape_size(shape) != data_.size()) {
        throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    }
    return Tensor(std::move(shape), data_);
}

bool Tensor::same_as(const Tensor& other) const {
    return shape_ == other.shape_ &&
           std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(float)) == 0;
}

Tensor& ParamSet::add(const std::string& name, Shape shape, bool trainable, float fill) {
    auto [it, inserted] = entries_.try_emplace(name, Entry{Tensor(std::move(shape), fill), trainable});
    if (!inserted) throw InvalidArgument("duplicate parameter name '" + name + "'");
    return it->second.tensor;
}

Tensor& ParamSet::at(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw InvalidArgument("unknown parameter '" + name + "'");
    return it->second.tensor;
}

const Tensor& ParamSet::at(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw InvalidArgument("unknown parameter '" + name + "'");
    return it->second.tensor;
}

void ParamSet::zero_grad() {
    for (auto& [name, e] : entries_) {
        if (e.trainable) e.tensor.zero_grad();
    }
}

std::size_t ParamSet::scalar_count() const {
    std::size_t n = 0;
    for (const auto& [name, e] : entries_) n += e.tensor.size();
    return n;
}

std::uint64_t ParamSet::checksum() const {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](const void* p, std::size_t n) {
        const auto* b = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 1099511628211ull;
        }
    };
    for (const auto& [name, e] : entries_) {
        mix(name.data(), name.size());
        mix(e.tensor.ptr(), e.tensor.size() * sizeof(float));
    }
    return h;
}

void ParamSet::copy_values_from(const ParamSet& other) {
    if (other.entries_.size() != entries_.size()) throw ShapeError("parameter sets differ in size");
    for (auto& [name, e] : entries_) {
        const Tensor& src = other.at(name);
        if (src.shape() != e.tensor.shape()) throw ShapeError("shape mismatch for '" + name + "'");
        std::copy(src.data().begin(), src.data().end(), e.tensor.data().begin());
    }
}

}  // namespace mangacolor::nn
