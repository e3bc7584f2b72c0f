#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "freelong/errors.hpp"

namespace freelong {

enum class DType : std::uint8_t {
    Real32 = 0,
    Real64 = 1,
    Complex64 = 2, // interleaved real32 (re, im) pairs on disk
};

std::size_t dtype_byte_size(DType dtype);
const char* dtype_name(DType dtype);

// Dense row-major tensor; the last axis varies fastest. Every tensor has a
// non-empty dims list with all extents >= 1.
class Tensor {
public:
    Tensor() = default;

    static Tensor real32(std::vector<std::size_t> dims);
    static Tensor real64(std::vector<std::size_t> dims);
    static Tensor complex64(std::vector<std::size_t> dims);

    DType dtype() const { return dtype_; }
    const std::vector<std::size_t>& dims() const { return dims_; }
    std::size_t rank() const { return dims_.size(); }
    std::size_t size() const; // element count

    std::span<float> r32();
    std::span<const float> r32() const;
    std::span<double> r64();
    std::span<const double> r64() const;
    std::span<std::complex<float>> c64();
    std::span<const std::complex<float>> c64() const;

    // Bitwise equality: dtype, dims, and payload bit patterns.
    bool operator==(const Tensor& other) const;

    std::string shape_string() const; // "[4,16,8,8]" for error messages

private:
    Tensor(DType dtype, std::vector<std::size_t> dims);
    static std::size_t checked_element_count(const std::vector<std::size_t>& dims);

    DType dtype_ = DType::Real32;
    std::vector<std::size_t> dims_;
    std::variant<std::vector<float>, std::vector<double>, std::vector<std::complex<float>>> data_;
};

// Real32 feature stack [C, N, h, w]: channels, frames, height, width.
// Holds latents and attention outputs; FFTs and attention operate on it.
class VideoFeature {
public:
    VideoFeature() = default;
    VideoFeature(std::size_t channels, std::size_t frames, std::size_t height,
                 std::size_t width); // zero-filled

    // Validates shape (4-D real32) and that every value is finite.
    static VideoFeature from_tensor(Tensor t);

    std::size_t channels() const { return dim(0); }
    std::size_t frames() const { return dim(1); }
    std::size_t height() const { return dim(2); }
    std::size_t width() const { return dim(3); }

    float at(std::size_t c, std::size_t n, std::size_t y, std::size_t x) const {
        return values()[offset(c, n, y, x)];
    }
    float& at(std::size_t c, std::size_t n, std::size_t y, std::size_t x) {
        return values()[offset(c, n, y, x)];
    }
    std::size_t offset(std::size_t c, std::size_t n, std::size_t y, std::size_t x) const {
        return ((c * frames() + n) * height() + y) * width() + x;
    }

    std::span<float> values() { return tensor_.r32(); }
    std::span<const float> values() const { return tensor_.r32(); }

    const Tensor& tensor() const { return tensor_; }
    bool operator==(const VideoFeature& other) const { return tensor_ == other.tensor_; }

private:
    explicit VideoFeature(Tensor t) : tensor_(std::move(t)) {}
    std::size_t dim(std::size_t i) const { return tensor_.rank() == 4 ? tensor_.dims()[i] : 0; }

    Tensor tensor_;
};

} // namespace freelong
