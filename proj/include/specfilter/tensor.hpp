#ifndef SPECFILTER_TENSOR_HPP
#define SPECFILTER_TENSOR_HPP

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "specfilter/common.hpp"

namespace specfilter {

static_assert(std::endian::native == std::endian::little,
              "payloads are little-endian; big-endian hosts are not supported");

// Editable floating-point element types. Integer tensors inside a checkpoint
// are carried as opaque bytes and never decoded.
enum class Dtype { f16, bf16, f32, f64 };

inline std::size_t dtype_size(Dtype d) {
    switch (d) {
        case Dtype::f16:
        case Dtype::bf16: return 2;
        case Dtype::f32:  return 4;
        case Dtype::f64:  return 8;
    }
    return 0;
}

inline const char* dtype_name(Dtype d) {
    switch (d) {
        case Dtype::f16:  return "f16";
        case Dtype::bf16: return "bf16";
        case Dtype::f32:  return "f32";
        case Dtype::f64:  return "f64";
    }
    return "?";
}

// --- half-precision codecs ---------------------------------------------------
// Encoding goes f64 -> f32 in hardware, then f32 -> 16 bit with round-to-nearest-
// even in bit arithmetic. The two-step rounding is exact: 24 mantissa bits are
// enough to make double rounding safe for both 11-bit (f16) and 8-bit (bf16)
// significands.

namespace detail {

inline std::uint32_t rne_shift_right(std::uint32_t v, unsigned s) {
    if (s == 0) return v;
    if (s > 31) return 0;
    std::uint32_t shifted = v >> s;
    const std::uint32_t rem = v & ((1u << s) - 1u);
    const std::uint32_t half = 1u << (s - 1);
    if (rem > half || (rem == half && (shifted & 1u))) shifted += 1;
    return shifted;
}

}  // namespace detail

inline float f16_decode(std::uint16_t h) {
    const std::uint32_t sign = (h >> 15) & 1u;
    const std::uint32_t exp = (h >> 10) & 0x1Fu;
    const std::uint32_t mant = h & 0x3FFu;
    float v;
    if (exp == 0) {
        v = std::ldexp(static_cast<float>(mant), -24);
    } else if (exp == 31) {
        v = (mant == 0) ? std::numeric_limits<float>::infinity()
                        : std::numeric_limits<float>::quiet_NaN();
    } else {
        v = std::ldexp(static_cast<float>(mant | 0x400u), static_cast<int>(exp) - 25);
    }
    return sign ? -v : v;
}

inline std::uint16_t f16_encode(float f) {
    std::uint32_t x;
    std::memcpy(&x, &f, 4);
    const std::uint16_t sign = static_cast<std::uint16_t>((x >> 16) & 0x8000u);
    const std::uint32_t abs = x & 0x7FFFFFFFu;
    if (abs > 0x7F800000u) return sign | 0x7E00u;  // NaN
    if (abs >= 0x477FF000u) return sign | 0x7C00u; // >= 65520 rounds to inf
    const int e = static_cast<int>(abs >> 23) - 127;
    if ((abs >> 23) == 0) return sign;             // f32 subnormal is below f16 range
    const std::uint32_t mant24 = (abs & 0x7FFFFFu) | 0x800000u;
    if (e >= -14) {
        const std::uint32_t rounded = detail::rne_shift_right(mant24, 13);
        // rounded is in [0x400, 0x800]; the +(exp<<10) carry handles mantissa overflow
        return static_cast<std::uint16_t>(
            sign + (static_cast<std::uint32_t>(e + 15) << 10) + (rounded - 0x400u));
    }
    // subnormal target: value in units of 2^-24
    const std::uint32_t rounded = detail::rne_shift_right(mant24, static_cast<unsigned>(-e - 1));
    return static_cast<std::uint16_t>(sign + rounded);
}

inline float bf16_decode(std::uint16_t h) {
    const std::uint32_t x = static_cast<std::uint32_t>(h) << 16;
    float f;
    std::memcpy(&f, &x, 4);
    return f;
}

inline std::uint16_t bf16_encode(float f) {
    std::uint32_t x;
    std::memcpy(&x, &f, 4);
    if ((x & 0x7FFFFFFFu) > 0x7F800000u)
        return static_cast<std::uint16_t>(((x >> 16) & 0x8000u) | 0x7FC0u);  // NaN
    const std::uint32_t lsb = (x >> 16) & 1u;
    x += 0x7FFFu + lsb;
    return static_cast<std::uint16_t>(x >> 16);
}

inline std::uint16_t f16_encode(double d) { return f16_encode(static_cast<float>(d)); }
inline std::uint16_t bf16_encode(double d) { return bf16_encode(static_cast<float>(d)); }

// --- Tensor -------------------------------------------------------------------

struct Tensor {
    Dtype dtype = Dtype::f32;
    std::vector<std::size_t> shape;   // empty shape denotes a scalar
    std::vector<std::uint8_t> data;   // row-major little-endian payload

    std::size_t element_count() const {
        std::size_t n = 1;
        for (std::size_t s : shape) n *= s;
        return n;
    }

    std::size_t byte_size() const { return element_count() * dtype_size(dtype); }

    bool consistent() const { return data.size() == byte_size(); }

    double element_as_f64(std::size_t i) const {
        const std::uint8_t* p = data.data() + i * dtype_size(dtype);
        switch (dtype) {
            case Dtype::f16: {
                std::uint16_t h;
                std::memcpy(&h, p, 2);
                return static_cast<double>(f16_decode(h));
            }
            case Dtype::bf16: {
                std::uint16_t h;
                std::memcpy(&h, p, 2);
                return static_cast<double>(bf16_decode(h));
            }
            case Dtype::f32: {
                float f;
                std::memcpy(&f, p, 4);
                return static_cast<double>(f);
            }
            case Dtype::f64: {
                double d;
                std::memcpy(&d, p, 8);
                return d;
            }
        }
        return 0.0;
    }

    void set_element_from_f64(std::size_t i, double v) {
        std::uint8_t* p = data.data() + i * dtype_size(dtype);
        switch (dtype) {
            case Dtype::f16: {
                const std::uint16_t h = f16_encode(v);
                std::memcpy(p, &h, 2);
                break;
            }
            case Dtype::bf16: {
                const std::uint16_t h = bf16_encode(v);
                std::memcpy(p, &h, 2);
                break;
            }
            case Dtype::f32: {
                const float f = static_cast<float>(v);
                std::memcpy(p, &f, 4);
                break;
            }
            case Dtype::f64: {
                std::memcpy(p, &v, 8);
                break;
            }
        }
    }
};

inline Tensor make_tensor(Dtype dtype, std::vector<std::size_t> shape,
                          std::span<const double> values) {
    Tensor t;
    t.dtype = dtype;
    t.shape = std::move(shape);
    if (values.size() != t.element_count())
        raise(errc::shape_mismatch, "value count " + std::to_string(values.size()) +
                                        " does not match shape");
    t.data.resize(t.byte_size());
    for (std::size_t i = 0; i < values.size(); ++i) t.set_element_from_f64(i, values[i]);
    return t;
}

inline std::vector<double> tensor_to_f64(const Tensor& t) {
    if (!t.consistent()) raise(errc::truncated_payload, "tensor payload size mismatch");
    std::vector<double> out(t.element_count());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = t.element_as_f64(i);
    return out;
}

// 2-d tensor -> f64 matrix. Rank-1 tensors are treated as a single row.
inline Eigen::MatrixXd tensor_to_matrix(const Tensor& t) {
    std::size_t rows, cols;
    if (t.shape.size() == 2) {
        rows = t.shape[0];
        cols = t.shape[1];
    } else if (t.shape.size() == 1) {
        rows = 1;
        cols = t.shape[0];
    } else {
        raise(errc::shape_mismatch,
              "expected rank-1 or rank-2 tensor, got rank " + std::to_string(t.shape.size()));
    }
    if (!t.consistent()) raise(errc::truncated_payload, "tensor payload size mismatch");
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c)
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                t.element_as_f64(r * cols + c);
    return m;
}

inline Tensor matrix_to_tensor(Dtype dtype, const Eigen::MatrixXd& m) {
    Tensor t;
    t.dtype = dtype;
    t.shape = {static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())};
    t.data.resize(t.byte_size());
    std::size_t i = 0;
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) t.set_element_from_f64(i++, m(r, c));
    return t;
}

inline Tensor vector_to_tensor(Dtype dtype, const Eigen::VectorXd& v) {
    Tensor t;
    t.dtype = dtype;
    t.shape = {static_cast<std::size_t>(v.size())};
    t.data.resize(t.byte_size());
    for (Eigen::Index i = 0; i < v.size(); ++i)
        t.set_element_from_f64(static_cast<std::size_t>(i), v(i));
    return t;
}

}  // namespace specfilter

#endif  // SPECFILTER_TENSOR_HPP
