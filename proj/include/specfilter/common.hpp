#ifndef SPECFILTER_COMMON_HPP
#define SPECFILTER_COMMON_HPP

#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <stdexcept>
#include <string>

namespace specfilter {

inline constexpr const char* kVersion = "0.1.0";

// Error codes cover every failure class the library can raise. The CLI maps
// them onto process exit codes (usage -> 2, everything else -> 3).
enum class errc {
    // tensor / file formats
    malformed_header,
    unsupported_dtype,
    truncated_payload,
    not_an_archive,
    bad_magic_length,
    bad_json,
    overlapping_offsets,
    unknown_dtype_tag,
    name_not_found,
    duplicate_name,
    io_failure,
    // statistics
    empty_sequence,
    empty_set,
    shape_mismatch,
    role_mismatch,
    not_finite,
    // spectral
    convergence_failure,
    degenerate_spectrum,
    k_out_of_range,
    not_symmetric,
    not_positive_semidefinite,
    // weight editing
    dim_mismatch,
    non_float_tensor,
    missing_layer,
    missing_pair,
    // testbed
    non_orthonormal_directions,
    // cli / config
    conflicting_flags,
    invalid_config,
};

inline const char* errc_name(errc c) {
    switch (c) {
        case errc::malformed_header:          return "MalformedHeader";
        case errc::unsupported_dtype:         return "UnsupportedDtype";
        case errc::truncated_payload:         return "TruncatedPayload";
        case errc::not_an_archive:            return "NotAnArchive";
        case errc::bad_magic_length:          return "BadMagicLength";
        case errc::bad_json:                  return "BadJson";
        case errc::overlapping_offsets:       return "OverlappingOffsets";
        case errc::unknown_dtype_tag:         return "UnknownDtypeTag";
        case errc::name_not_found:            return "NameNotFound";
        case errc::duplicate_name:            return "DuplicateName";
        case errc::io_failure:                return "IoFailure";
        case errc::empty_sequence:            return "EmptySequence";
        case errc::empty_set:                 return "EmptySet";
        case errc::shape_mismatch:            return "ShapeMismatch";
        case errc::role_mismatch:             return "RoleMismatch";
        case errc::not_finite:                return "NotFinite";
        case errc::convergence_failure:       return "ConvergenceFailure";
        case errc::degenerate_spectrum:       return "DegenerateSpectrum";
        case errc::k_out_of_range:            return "KOutOfRange";
        case errc::not_symmetric:             return "NotSymmetric";
        case errc::dim_mismatch:              return "DimMismatch";
        case errc::non_float_tensor:          return "NonFloatTensor";
        case errc::missing_layer:             return "MissingLayer";
        case errc::missing_pair:              return "MissingPair";
        case errc::non_orthonormal_directions:return "NonOrthonormalDirections";
        case errc::conflicting_flags:         return "ConflictingFlags";
        case errc::invalid_config:            return "InvalidConfig";
    }
    return "UnknownError";
}

class Error : public std::runtime_error {
  public:
    Error(errc code, const std::string& message)
        : std::runtime_error(std::string(errc_name(code)) + ": " + message), code_(code) {}

    errc code() const noexcept { return code_; }

    // Usage-class errors come from flag/config validation, not from data.
    bool is_usage() const noexcept {
        return code_ == errc::conflicting_flags || code_ == errc::invalid_config;
    }

  private:
    errc code_;
};

[[noreturn]] inline void raise(errc code, const std::string& message) {
    throw Error(code, message);
}

// --- logging ----------------------------------------------------------------
// Minimal stderr logger. Level comes from SPECFILTER_LOG (error|warn|info|debug),
// default warn. Reports on stdout stay byte-deterministic; logs never mix in.

enum class log_level : int { error = 0, warn = 1, info = 2, debug = 3 };

namespace detail {

inline log_level parse_log_level(const char* s) {
    if (s == nullptr) return log_level::warn;
    if (std::strcmp(s, "error") == 0) return log_level::error;
    if (std::strcmp(s, "warn") == 0) return log_level::warn;
    if (std::strcmp(s, "info") == 0) return log_level::info;
    if (std::strcmp(s, "debug") == 0) return log_level::debug;
    return log_level::warn;
}

inline log_level& log_threshold() {
    static log_level lvl = parse_log_level(std::getenv("SPECFILTER_LOG"));
    return lvl;
}

inline void vlog(log_level lvl, const char* tag, const char* fmt, std::va_list ap) {
    if (static_cast<int>(lvl) > static_cast<int>(log_threshold())) return;
    std::fprintf(stderr, "[specfilter %s] ", tag);
    std::vfprintf(stderr, fmt, ap);
    std::fputc('\n', stderr);
}

}  // namespace detail

inline void set_log_level(log_level lvl) { detail::log_threshold() = lvl; }

#if defined(__GNUC__)
#define SPECFILTER_PRINTF_ATTR __attribute__((format(printf, 1, 2)))
#else
#define SPECFILTER_PRINTF_ATTR
#endif

inline void log_error(const char* fmt, ...) SPECFILTER_PRINTF_ATTR;
inline void log_warn(const char* fmt, ...) SPECFILTER_PRINTF_ATTR;
inline void log_info(const char* fmt, ...) SPECFILTER_PRINTF_ATTR;
inline void log_debug(const char* fmt, ...) SPECFILTER_PRINTF_ATTR;

inline void log_error(const char* fmt, ...) {
    std::va_list ap;
    va_start(ap, fmt);
    detail::vlog(log_level::error, "error", fmt, ap);
    va_end(ap);
}
inline void log_warn(const char* fmt, ...) {
    std::va_list ap;
    va_start(ap, fmt);
    detail::vlog(log_level::warn, "warn", fmt, ap);
    va_end(ap);
}
inline void log_info(const char* fmt, ...) {
    std::va_list ap;
    va_start(ap, fmt);
    detail::vlog(log_level::info, "info", fmt, ap);
    va_end(ap);
}
inline void log_debug(const char* fmt, ...) {
    std::va_list ap;
    va_start(ap, fmt);
    detail::vlog(log_level::debug, "debug", fmt, ap);
    va_end(ap);
}

#undef SPECFILTER_PRINTF_ATTR

// FNV-1a over raw bytes; used to fingerprint spectra and operators in reports.
inline std::uint64_t fnv1a64(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[19];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return std::string(buf);
}

}  // namespace specfilter

#endif  // SPECFILTER_COMMON_HPP
