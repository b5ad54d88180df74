#ifndef SPECFILTER_NPY_HPP
#define SPECFILTER_NPY_HPP

#include <cstring>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "specfilter/atomic_file.hpp"
#include "specfilter/common.hpp"
#include "specfilter/tensor.hpp"

namespace specfilter {
namespace npy {

inline constexpr char kMagic[6] = {'\x93', 'N', 'U', 'M', 'P', 'Y'};

// npy carries strictly little-endian floats; bf16 has no descriptor and is
// only representable in safetensors.
inline const char* descr_for(Dtype d) {
    switch (d) {
        case Dtype::f16: return "<f2";
        case Dtype::f32: return "<f4";
        case Dtype::f64: return "<f8";
        case Dtype::bf16: break;
    }
    raise(errc::unsupported_dtype, "npy cannot store bf16");
}

inline Dtype dtype_from_descr(const std::string& descr) {
    if (descr == "<f2") return Dtype::f16;
    if (descr == "<f4") return Dtype::f32;
    if (descr == "<f8") return Dtype::f64;
    raise(errc::unsupported_dtype, "unsupported npy descr '" + descr + "'");
}

namespace detail {

// Targeted parser for the Python dict literal in an npy header:
// {'descr': '<f4', 'fortran_order': False, 'shape': (2, 2), }
struct HeaderParser {
    std::string_view text;
    std::size_t pos = 0;

    [[noreturn]] void fail(const std::string& what) const {
        raise(errc::malformed_header, what + " in npy header");
    }

    void skip_ws() {
        while (pos < text.size() && (text[pos] == ' ' || text[pos] == '\t' ||
                                     text[pos] == '\n' || text[pos] == '\r'))
            ++pos;
    }

    bool eat(char c) {
        skip_ws();
        if (pos < text.size() && text[pos] == c) {
            ++pos;
            return true;
        }
        return false;
    }

    char peek() {
        skip_ws();
        return pos < text.size() ? text[pos] : '\0';
    }

    std::string parse_string() {
        skip_ws();
        if (pos >= text.size() || (text[pos] != '\'' && text[pos] != '"')) fail("expected string");
        const char quote = text[pos++];
        std::string out;
        while (pos < text.size() && text[pos] != quote) out.push_back(text[pos++]);
        if (pos >= text.size()) fail("unterminated string");
        ++pos;
        return out;
    }

    bool parse_bool() {
        skip_ws();
        if (text.substr(pos, 4) == "True") {
            pos += 4;
            return true;
        }
        if (text.substr(pos, 5) == "False") {
            pos += 5;
            return false;
        }
        fail("expected True/False");
    }

    std::size_t parse_uint() {
        skip_ws();
        if (pos >= text.size() || text[pos] < '0' || text[pos] > '9') fail("expected integer");
        std::size_t v = 0;
        while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9')
            v = v * 10 + static_cast<std::size_t>(text[pos++] - '0');
        if (pos < text.size() && (text[pos] == 'L' || text[pos] == 'l')) ++pos;
        return v;
    }

    std::vector<std::size_t> parse_shape() {
        if (!eat('(')) fail("expected shape tuple");
        std::vector<std::size_t> shape;
        while (true) {
            if (peek() == ')') {
                ++pos;
                break;
            }
            shape.push_back(parse_uint());
            if (eat(',')) continue;
            if (!eat(')')) fail("malformed shape tuple");
            break;
        }
        return shape;
    }
};

struct ParsedHeader {
    std::string descr;
    bool fortran_order = false;
    std::vector<std::size_t> shape;
};

inline ParsedHeader parse_header_dict(std::string_view text) {
    HeaderParser p{text};
    if (!p.eat('{')) p.fail("expected '{'");
    ParsedHeader h;
    bool saw_descr = false, saw_order = false, saw_shape = false;
    while (true) {
        if (p.peek() == '}') {
            ++p.pos;
            break;
        }
        const std::string key = p.parse_string();
        if (!p.eat(':')) p.fail("expected ':' after key");
        if (key == "descr") {
            h.descr = p.parse_string();
            saw_descr = true;
        } else if (key == "fortran_order") {
            h.fortran_order = p.parse_bool();
            saw_order = true;
        } else if (key == "shape") {
            h.shape = p.parse_shape();
            saw_shape = true;
        } else {
            p.fail("unknown key '" + key + "'");
        }
        if (!p.eat(',')) {
            if (!p.eat('}')) p.fail("expected ',' or '}'");
            break;
        }
    }
    if (!saw_descr || !saw_order || !saw_shape) p.fail("missing required key");
    return h;
}

}  // namespace detail

// Parse a complete npy byte stream (used directly for npz members).
inline Tensor decode(std::span<const std::uint8_t> bytes, const std::string& what = "npy") {
    if (bytes.size() < 10 || std::memcmp(bytes.data(), kMagic, 6) != 0)
        raise(errc::malformed_header, what + ": bad magic");
    const unsigned major = bytes[6];
    const unsigned minor = bytes[7];
    if ((major != 1 && major != 2) || minor != 0)
        raise(errc::malformed_header,
              what + ": unsupported version " + std::to_string(major) + "." + std::to_string(minor));
    std::size_t header_len, header_off;
    if (major == 1) {
        std::uint16_t n;
        std::memcpy(&n, bytes.data() + 8, 2);
        header_len = n;
        header_off = 10;
    } else {
        if (bytes.size() < 12) raise(errc::malformed_header, what + ": truncated preamble");
        std::uint32_t n;
        std::memcpy(&n, bytes.data() + 8, 4);
        header_len = n;
        header_off = 12;
    }
    if (header_off + header_len > bytes.size())
        raise(errc::malformed_header, what + ": header extends past end of file");

    const std::string_view header_text(reinterpret_cast<const char*>(bytes.data()) + header_off,
                                       header_len);
    const auto h = detail::parse_header_dict(header_text);
    if (h.fortran_order)
        raise(errc::malformed_header, what + ": fortran_order=True is not supported");
    if (h.descr.size() >= 1 && h.descr[0] == '>')
        raise(errc::unsupported_dtype, what + ": big-endian data is not supported");

    Tensor t;
    t.dtype = dtype_from_descr(h.descr);
    t.shape = h.shape;
    const std::size_t payload = bytes.size() - header_off - header_len;
    if (payload != t.byte_size())
        raise(errc::truncated_payload, what + ": expected " + std::to_string(t.byte_size()) +
                                           " payload bytes, found " + std::to_string(payload));
    t.data.assign(bytes.begin() + static_cast<std::ptrdiff_t>(header_off + header_len),
                  bytes.end());
    return t;
}

// Serialize a tensor to npy bytes. Output is deterministic for a given tensor.
inline std::vector<std::uint8_t> encode(const Tensor& t) {
    if (!t.consistent()) raise(errc::truncated_payload, "tensor payload size mismatch");
    std::string dict = "{'descr': '";
    dict += descr_for(t.dtype);
    dict += "', 'fortran_order': False, 'shape': (";
    for (std::size_t i = 0; i < t.shape.size(); ++i) {
        dict += std::to_string(t.shape[i]);
        if (t.shape.size() == 1 || i + 1 < t.shape.size()) dict += ",";
        if (i + 1 < t.shape.size()) dict += " ";
    }
    dict += "), }";

    // Pad so the payload starts at a 64-byte-aligned offset; version 2 only
    // when the dict cannot fit the 16-bit length field.
    std::size_t preamble = 10;
    unsigned major = 1;
    std::size_t header_len = dict.size() + 1;  // trailing '\n'
    if (preamble + header_len > preamble + 65535) {
        major = 2;
        preamble = 12;
    }
    std::size_t total = preamble + header_len;
    const std::size_t padded_total = (total + 63) / 64 * 64;
    header_len += padded_total - total;
    if (major == 1 && header_len > 65535) {
        major = 2;
        preamble = 12;
        total = preamble + dict.size() + 1;
        const std::size_t padded2 = (total + 63) / 64 * 64;
        header_len = dict.size() + 1 + (padded2 - total);
    }

    std::vector<std::uint8_t> out;
    out.reserve(preamble + header_len + t.data.size());
    out.insert(out.end(), kMagic, kMagic + 6);
    out.push_back(major);
    out.push_back(0);
    if (major == 1) {
        const std::uint16_t n = static_cast<std::uint16_t>(header_len);
        out.push_back(static_cast<std::uint8_t>(n & 0xFF));
        out.push_back(static_cast<std::uint8_t>(n >> 8));
    } else {
        const std::uint32_t n = static_cast<std::uint32_t>(header_len);
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((n >> (8 * i)) & 0xFF));
    }
    out.insert(out.end(), dict.begin(), dict.end());
    out.resize(out.size() + header_len - dict.size() - 1, ' ');
    out.push_back('\n');
    out.insert(out.end(), t.data.begin(), t.data.end());
    return out;
}

}  // namespace npy

inline Tensor read_npy(const std::string& path) {
    const auto bytes = read_file_bytes(path);
    return npy::decode(bytes, path);
}

inline void write_npy(const std::string& path, const Tensor& t) {
    const auto bytes = npy::encode(t);
    AtomicFile f(path);
    f.write(bytes.data(), bytes.size());
    f.commit();
}

}  // namespace specfilter

#endif  // SPECFILTER_NPY_HPP
