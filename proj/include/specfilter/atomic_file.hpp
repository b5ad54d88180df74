#ifndef SPECFILTER_ATOMIC_FILE_HPP
#define SPECFILTER_ATOMIC_FILE_HPP

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "specfilter/common.hpp"

namespace specfilter {

// Temp-file-then-rename writer. The destination either keeps its previous
// content or atomically becomes the fully written new file; an exception
// thrown mid-stream discards the temp file.
class AtomicFile {
  public:
    explicit AtomicFile(const std::string& path) : path_(path) {
        static std::atomic<unsigned> counter{0};
        tmp_path_ = path + ".tmp" + std::to_string(counter.fetch_add(1));
        out_.open(tmp_path_, std::ios::binary | std::ios::trunc);
        if (!out_) raise(errc::io_failure, "cannot create temp file for " + path);
    }

    ~AtomicFile() {
        if (!committed_) {
            out_.close();
            std::error_code ec;
            std::filesystem::remove(tmp_path_, ec);
        }
    }

    AtomicFile(const AtomicFile&) = delete;
    AtomicFile& operator=(const AtomicFile&) = delete;

    std::ostream& stream() { return out_; }

    void write(const void* data, std::size_t n) {
        out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    }

    void commit() {
        out_.flush();
        if (!out_) raise(errc::io_failure, "write failed for " + path_);
        out_.close();
        std::error_code ec;
        std::filesystem::rename(tmp_path_, path_, ec);
        if (ec) {
            std::filesystem::remove(tmp_path_, ec);
            raise(errc::io_failure, "rename to " + path_ + " failed");
        }
        committed_ = true;
    }

  private:
    std::string path_;
    std::string tmp_path_;
    std::ofstream out_;
    bool committed_ = false;
};

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) raise(errc::io_failure, "cannot open " + path);
    in.seekg(0, std::ios::end);
    const auto size = in.tellg();
    in.seekg(0, std::ios::beg);
    std::vector<std::uint8_t> buf(static_cast<std::size_t>(size));
    if (size > 0) in.read(reinterpret_cast<char*>(buf.data()), size);
    if (!in) raise(errc::io_failure, "cannot read " + path);
    return buf;
}

}  // namespace specfilter

#endif  // SPECFILTER_ATOMIC_FILE_HPP
