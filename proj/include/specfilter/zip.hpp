#ifndef SPECFILTER_ZIP_HPP
#define SPECFILTER_ZIP_HPP

#include <cstring>
#include <span>
#include <string>
#include <vector>

#include <zlib.h>

#include "specfilter/atomic_file.hpp"
#include "specfilter/common.hpp"

namespace specfilter {
namespace zip {

// Minimal ZIP support for npz archives: stored and deflate entries, no zip64,
// no encryption. Sizes and CRCs are taken from the central directory, so
// entries written with data descriptors (flag bit 3) read fine.

struct Entry {
    std::string name;
    std::vector<std::uint8_t> data;
};

namespace detail {

template <typename T>
inline T read_le(std::span<const std::uint8_t> buf, std::size_t off) {
    T v;
    std::memcpy(&v, buf.data() + off, sizeof(T));
    return v;
}

inline std::vector<std::uint8_t> inflate_raw(std::span<const std::uint8_t> src,
                                             std::size_t expected_size,
                                             const std::string& member) {
    std::vector<std::uint8_t> out(expected_size);
    z_stream zs{};
    if (inflateInit2(&zs, -15) != Z_OK)
        raise(errc::io_failure, member + ": inflateInit failed");
    zs.next_in = const_cast<Bytef*>(src.data());
    zs.avail_in = static_cast<uInt>(src.size());
    zs.next_out = out.data();
    zs.avail_out = static_cast<uInt>(out.size());
    const int rc = inflate(&zs, Z_FINISH);
    inflateEnd(&zs);
    if (rc != Z_STREAM_END || zs.total_out != expected_size)
        raise(errc::truncated_payload, member + ": deflate stream is corrupt");
    return out;
}

}  // namespace detail

inline std::vector<Entry> read_archive(const std::string& path) {
    const auto buf = read_file_bytes(path);
    constexpr std::uint32_t kEocdSig = 0x06054b50;
    constexpr std::uint32_t kCentralSig = 0x02014b50;
    constexpr std::uint32_t kLocalSig = 0x04034b50;

    if (buf.size() < 22) raise(errc::not_an_archive, path + ": too small for a ZIP archive");

    // EOCD: scan backwards over as much trailing comment as the format allows.
    std::size_t eocd = std::string::npos;
    const std::size_t scan_limit = buf.size() >= 22 + 65535 ? buf.size() - 22 - 65535 : 0;
    for (std::size_t i = buf.size() - 22 + 1; i-- > scan_limit;) {
        if (detail::read_le<std::uint32_t>(buf, i) == kEocdSig) {
            eocd = i;
            break;
        }
    }
    if (eocd == std::string::npos)
        raise(errc::not_an_archive, path + ": no end-of-central-directory record");

    const std::uint16_t entry_count = detail::read_le<std::uint16_t>(buf, eocd + 10);
    const std::uint32_t cd_size = detail::read_le<std::uint32_t>(buf, eocd + 12);
    const std::uint32_t cd_offset = detail::read_le<std::uint32_t>(buf, eocd + 16);
    if (static_cast<std::size_t>(cd_offset) + cd_size > buf.size())
        raise(errc::not_an_archive, path + ": central directory out of bounds");

    std::vector<Entry> entries;
    std::size_t pos = cd_offset;
    for (std::uint16_t e = 0; e < entry_count; ++e) {
        if (pos + 46 > buf.size() || detail::read_le<std::uint32_t>(buf, pos) != kCentralSig)
            raise(errc::not_an_archive, path + ": corrupt central directory");
        const std::uint16_t method = detail::read_le<std::uint16_t>(buf, pos + 10);
        const std::uint32_t crc = detail::read_le<std::uint32_t>(buf, pos + 16);
        const std::uint32_t csize = detail::read_le<std::uint32_t>(buf, pos + 20);
        const std::uint32_t usize = detail::read_le<std::uint32_t>(buf, pos + 24);
        const std::uint16_t name_len = detail::read_le<std::uint16_t>(buf, pos + 28);
        const std::uint16_t extra_len = detail::read_le<std::uint16_t>(buf, pos + 30);
        const std::uint16_t comment_len = detail::read_le<std::uint16_t>(buf, pos + 32);
        const std::uint32_t local_off = detail::read_le<std::uint32_t>(buf, pos + 42);
        if (pos + 46 + name_len > buf.size())
            raise(errc::not_an_archive, path + ": corrupt central directory");
        std::string name(reinterpret_cast<const char*>(buf.data()) + pos + 46, name_len);
        pos += 46 + name_len + extra_len + comment_len;

        // Local header lengths may differ from the central ones; honor them
        // when locating the payload.
        if (static_cast<std::size_t>(local_off) + 30 > buf.size() ||
            detail::read_le<std::uint32_t>(buf, local_off) != kLocalSig)
            raise(errc::not_an_archive, path + ": bad local header for '" + name + "'");
        const std::uint16_t lname = detail::read_le<std::uint16_t>(buf, local_off + 26);
        const std::uint16_t lextra = detail::read_le<std::uint16_t>(buf, local_off + 28);
        const std::size_t data_off = static_cast<std::size_t>(local_off) + 30 + lname + lextra;
        if (data_off + csize > buf.size())
            raise(errc::truncated_payload, path + ": member '" + name + "' extends past end");

        const std::span<const std::uint8_t> raw(buf.data() + data_off, csize);
        Entry entry;
        entry.name = std::move(name);
        if (method == 0) {
            if (csize != usize)
                raise(errc::not_an_archive, path + ": stored member size mismatch");
            entry.data.assign(raw.begin(), raw.end());
        } else if (method == 8) {
            entry.data = detail::inflate_raw(raw, usize, entry.name);
        } else {
            raise(errc::not_an_archive,
                  path + ": unsupported compression method for '" + entry.name + "'");
        }
        const auto actual_crc =
            crc32(0L, entry.data.data(), static_cast<uInt>(entry.data.size()));
        if (actual_crc != crc)
            raise(errc::truncated_payload, path + ": CRC mismatch in '" + entry.name + "'");
        entries.push_back(std::move(entry));
    }
    return entries;
}

// Writes all members stored (uncompressed), with fixed timestamps so that the
// same input always yields the same bytes.
inline void write_archive(const std::string& path, const std::vector<Entry>& entries) {
    AtomicFile f(path);
    auto put16 = [&](std::uint16_t v) { f.write(&v, 2); };
    auto put32 = [&](std::uint32_t v) { f.write(&v, 4); };

    struct Record {
        std::uint32_t crc, size, offset;
        const Entry* entry;
    };
    std::vector<Record> records;
    std::uint32_t offset = 0;
    for (const auto& e : entries) {
        const auto crc = static_cast<std::uint32_t>(
            crc32(0L, e.data.data(), static_cast<uInt>(e.data.size())));
        const auto size = static_cast<std::uint32_t>(e.data.size());
        records.push_back({crc, size, offset, &e});

        put32(0x04034b50);
        put16(20);      // version needed
        put16(0);       // flags
        put16(0);       // method: stored
        put16(0);       // mod time
        put16(0x0021);  // mod date: 1980-01-01
        put32(crc);
        put32(size);
        put32(size);
        put16(static_cast<std::uint16_t>(e.name.size()));
        put16(0);
        f.write(e.name.data(), e.name.size());
        f.write(e.data.data(), e.data.size());
        offset += 30 + static_cast<std::uint32_t>(e.name.size()) + size;
    }

    const std::uint32_t cd_offset = offset;
    std::uint32_t cd_size = 0;
    for (const auto& r : records) {
        put32(0x02014b50);
        put16(20);  // version made by
        put16(20);  // version needed
        put16(0);
        put16(0);
        put16(0);
        put16(0x0021);
        put32(r.crc);
        put32(r.size);
        put32(r.size);
        put16(static_cast<std::uint16_t>(r.entry->name.size()));
        put16(0);
        put16(0);
        put16(0);
        put16(0);
        put32(0);
        put32(r.offset);
        f.write(r.entry->name.data(), r.entry->name.size());
        cd_size += 46 + static_cast<std::uint32_t>(r.entry->name.size());
    }

    put32(0x06054b50);
    put16(0);
    put16(0);
    put16(static_cast<std::uint16_t>(records.size()));
    put16(static_cast<std::uint16_t>(records.size()));
    put32(cd_size);
    put32(cd_offset);
    put16(0);
    f.commit();
}

}  // namespace zip
}  // namespace specfilter

#endif  // SPECFILTER_ZIP_HPP
