#include "freelong/tensor.hpp"

#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>

namespace freelong {

std::size_t dtype_byte_size(DType dtype) {
    switch (dtype) {
    case DType::Real32: return 4;
    case DType::Real64: return 8;
    case DType::Complex64: return 8;
    }
    throw ValidationError("unknown dtype code " + std::to_string(static_cast<int>(dtype)));
}

const char* dtype_name(DType dtype) {
    switch (dtype) {
    case DType::Real32: return "real32";
    case DType::Real64: return "real64";
    case DType::Complex64: return "complex64";
    }
    return "invalid";
}

std::size_t Tensor::checked_element_count(const std::vector<std::size_t>& dims) {
    if (dims.empty())
        throw ValidationError("tensor dims list must be non-empty");
    std::size_t count = 1;
    for (std::size_t d : dims) {
        if (d == 0)
            throw ValidationError("tensor dims must all be >= 1");
        if (d > std::numeric_limits<std::size_t>::max() / count)
            throw ValidationError("tensor element count overflows");
        count *= d;
    }
    return count;
}

Tensor::Tensor(DType dtype, std::vector<std::size_t> dims) : dtype_(dtype), dims_(std::move(dims)) {
    const std::size_t count = checked_element_count(dims_);
    switch (dtype_) {
    case DType::Real32: data_ = std::vector<float>(count, 0.0f); break;
    case DType::Real64: data_ = std::vector<double>(count, 0.0); break;
    case DType::Complex64: data_ = std::vector<std::complex<float>>(count); break;
    }
}

Tensor Tensor::real32(std::vector<std::size_t> dims) { return Tensor(DType::Real32, std::move(dims)); }
Tensor Tensor::real64(std::vector<std::size_t> dims) { return Tensor(DType::Real64, std::move(dims)); }
Tensor Tensor::complex64(std::vector<std::size_t> dims) { return Tensor(DType::Complex64, std::move(dims)); }

std::size_t Tensor::size() const {
    std::size_t count = 1;
    for (std::size_t d : dims_)
        count *= d;
    return dims_.empty() ? 0 : count;
}

namespace {

template <typename T, typename Variant>
std::span<T> typed_span(Variant& data, DType have, DType want) {
    if (have != want)
        throw ValidationError(std::string("tensor is ") + dtype_name(have) + ", expected " +
                              dtype_name(want));
    auto& vec = std::get<std::vector<std::remove_const_t<T>>>(data);
    return {vec.data(), vec.size()};
}

} // namespace

std::span<float> Tensor::r32() { return typed_span<float>(data_, dtype_, DType::Real32); }
std::span<const float> Tensor::r32() const { return typed_span<const float>(data_, dtype_, DType::Real32); }
std::span<double> Tensor::r64() { return typed_span<double>(data_, dtype_, DType::Real64); }
std::span<const double> Tensor::r64() const { return typed_span<const double>(data_, dtype_, DType::Real64); }
std::span<std::complex<float>> Tensor::c64() {
    return typed_span<std::complex<float>>(data_, dtype_, DType::Complex64);
}
std::span<const std::complex<float>> Tensor::c64() const {
    return typed_span<const std::complex<float>>(data_, dtype_, DType::Complex64);
}

bool Tensor::operator==(const Tensor& other) const {
    if (dtype_ != other.dtype_ || dims_ != other.dims_)
        return false;
    const std::size_t bytes = size() * dtype_byte_size(dtype_);
    const void* a = nullptr;
    const void* b = nullptr;
    switch (dtype_) {
    case DType::Real32:
        a = std::get<std::vector<float>>(data_).data();
        b = std::get<std::vector<float>>(other.data_).data();
        break;
    case DType::Real64:
        a = std::get<std::vector<double>>(data_).data();
        b = std::get<std::vector<double>>(other.data_).data();
        break;
    case DType::Complex64:
        a = std::get<std::vector<std::complex<float>>>(data_).data();
        b = std::get<std::vector<std::complex<float>>>(other.data_).data();
        break;
    }
    return bytes == 0 || std::memcmp(a, b, bytes) == 0;
}

std::string Tensor::shape_string() const {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < dims_.size(); ++i)
        out << (i ? "," : "") << dims_[i];
    out << ']';
    return out.str();
}

VideoFeature::VideoFeature(std::size_t channels, std::size_t frames, std::size_t height,
                           std::size_t width)
    : tensor_(Tensor::real32({channels, frames, height, width})) {}

VideoFeature VideoFeature::from_tensor(Tensor t) {
    if (t.dtype() != DType::Real32)
        throw ValidationError(std::string("video feature must be real32, got ") +
                              dtype_name(t.dtype()));
    if (t.rank() != 4)
        throw ValidationError("video feature must be 4-D [C,N,h,w], got " + t.shape_string());
    for (float v : t.r32())
        if (!std::isfinite(v))
            throw ValidationError("video feature contains non-finite values");
    return VideoFeature(std::move(t));
}

} // namespace freelong
