#include "freelong/io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <random>
#include <string>
#include <vector>

namespace freelong {

namespace {

constexpr char kMagic[4] = {'V', 'L', 'T', '1'};
constexpr std::uint8_t kMaxDtypeCode = 2;

void put_u64le(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i)
        out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u32le(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i)
        out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_u64le(const std::uint8_t* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
        v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}

std::uint32_t get_u32le(const std::uint8_t* p) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
        v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return v;
}

std::vector<std::uint8_t> encode(const Tensor& t) {
    std::vector<std::uint8_t> out;
    out.reserve(6 + 8 * t.rank() + t.size() * dtype_byte_size(t.dtype()));
    out.insert(out.end(), kMagic, kMagic + 4);
    out.push_back(static_cast<std::uint8_t>(t.dtype()));
    if (t.rank() > 255)
        throw ValidationError("tensor rank exceeds format limit of 255");
    out.push_back(static_cast<std::uint8_t>(t.rank()));
    for (std::size_t d : t.dims())
        put_u64le(out, d);
    switch (t.dtype()) {
    case DType::Real32:
        for (float v : t.r32())
            put_u32le(out, std::bit_cast<std::uint32_t>(v));
        break;
    case DType::Real64:
        for (double v : t.r64())
            put_u64le(out, std::bit_cast<std::uint64_t>(v));
        break;
    case DType::Complex64:
        for (std::complex<float> v : t.c64()) {
            put_u32le(out, std::bit_cast<std::uint32_t>(v.real()));
            put_u32le(out, std::bit_cast<std::uint32_t>(v.imag()));
        }
        break;
    }
    return out;
}

Tensor decode(const std::vector<std::uint8_t>& bytes, const std::string& name) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw FormatError(name + ": bad magic, expected \"VLT1\"");
    if (bytes.size() < 6)
        throw FormatError(name + ": truncated header");
    const std::uint8_t code = bytes[4];
    if (code > kMaxDtypeCode)
        throw FormatError(name + ": unsupported dtype code " + std::to_string(code));
    const auto dtype = static_cast<DType>(code);
    const std::size_t ndim = bytes[5];
    if (ndim == 0)
        throw FormatError(name + ": zero-dimensional tensors are not valid");
    std::size_t off = 6;
    if (bytes.size() < off + 8 * ndim)
        throw FormatError(name + ": truncated header");
    std::vector<std::size_t> dims(ndim);
    std::size_t count = 1;
    constexpr std::uint64_t kElementLimit = std::uint64_t{1} << 40;
    for (std::size_t i = 0; i < ndim; ++i, off += 8) {
        const std::uint64_t d = get_u64le(bytes.data() + off);
        if (d == 0)
            throw FormatError(name + ": zero axis length");
        if (d > kElementLimit / count)
            throw FormatError(name + ": element count exceeds limit");
        dims[i] = static_cast<std::size_t>(d);
        count *= dims[i];
    }
    const std::size_t expected = count * dtype_byte_size(dtype);
    const std::size_t got = bytes.size() - off;
    if (got != expected)
        throw FormatError(name + ": payload length mismatch, header implies " +
                          std::to_string(expected) + " bytes, file has " + std::to_string(got));

    Tensor t;
    switch (dtype) {
    case DType::Real32: {
        t = Tensor::real32(dims);
        auto dst = t.r32();
        for (std::size_t i = 0; i < count; ++i)
            dst[i] = std::bit_cast<float>(get_u32le(bytes.data() + off + 4 * i));
        break;
    }
    case DType::Real64: {
        t = Tensor::real64(dims);
        auto dst = t.r64();
        for (std::size_t i = 0; i < count; ++i)
            dst[i] = std::bit_cast<double>(get_u64le(bytes.data() + off + 8 * i));
        break;
    }
    case DType::Complex64: {
        t = Tensor::complex64(dims);
        auto dst = t.c64();
        for (std::size_t i = 0; i < count; ++i) {
            const float re = std::bit_cast<float>(get_u32le(bytes.data() + off + 8 * i));
            const float im = std::bit_cast<float>(get_u32le(bytes.data() + off + 8 * i + 4));
            dst[i] = {re, im};
        }
        break;
    }
    }
    return t;
}

} // namespace

void write_tensor(const Tensor& t, const std::filesystem::path& path) {
    const std::vector<std::uint8_t> bytes = encode(t);

    std::random_device rd;
    const auto tmp = path.parent_path() /
                     (path.filename().string() + ".tmp" + std::to_string(rd() % 1000000));
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw IoError("cannot open " + tmp.string() + " for writing");
        out.write(reinterpret_cast<const char*>(bytes.data()),
                  static_cast<std::streamsize>(bytes.size()));
        if (!out) {
            out.close();
            std::error_code ec;
            std::filesystem::remove(tmp, ec);
            throw IoError("write failed for " + tmp.string());
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw IoError("cannot move temp file onto " + path.string());
    }
}

Tensor read_tensor(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    if (in.bad())
        throw IoError("read failed for " + path.string());
    return decode(bytes, path.string());
}

std::uint64_t tensor_checksum(const Tensor& t) {
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    for (std::uint8_t b : encode(t)) {
        hash ^= b;
        hash *= 0x100000001b3ULL;
    }
    return hash;
}

} // namespace freelong
