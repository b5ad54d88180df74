#ifndef SPECFILTER_SAFETENSORS_HPP
#define SPECFILTER_SAFETENSORS_HPP

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "specfilter/atomic_file.hpp"
#include "specfilter/common.hpp"
#include "specfilter/tensor.hpp"

namespace specfilter {

namespace safetensors_detail {

struct TagInfo {
    const char* tag;
    std::size_t size;
    std::optional<Dtype> dtype;
};

inline const std::vector<TagInfo>& known_tags() {
    static const std::vector<TagInfo> tags = {
        {"F64", 8, Dtype::f64}, {"F32", 4, Dtype::f32},   {"F16", 2, Dtype::f16},
        {"BF16", 2, Dtype::bf16}, {"F8_E4M3", 1, std::nullopt}, {"F8_E5M2", 1, std::nullopt},
        {"I64", 8, std::nullopt}, {"I32", 4, std::nullopt}, {"I16", 2, std::nullopt},
        {"I8", 1, std::nullopt},  {"U64", 8, std::nullopt}, {"U32", 4, std::nullopt},
        {"U16", 2, std::nullopt}, {"U8", 1, std::nullopt},  {"BOOL", 1, std::nullopt},
    };
    return tags;
}

inline const TagInfo* find_tag(const std::string& tag) {
    for (const auto& t : known_tags())
        if (tag == t.tag) return &t;
    return nullptr;
}

inline const char* tag_for_dtype(Dtype d) {
    switch (d) {
        case Dtype::f16:  return "F16";
        case Dtype::bf16: return "BF16";
        case Dtype::f32:  return "F32";
        case Dtype::f64:  return "F64";
    }
    return "F32";
}

// nlohmann collapses duplicate object keys silently; a SAX pass catches them.
struct DuplicateKeyCheck : nlohmann::json_sax<nlohmann::json> {
    int depth = 0;
    std::set<std::string> top_keys;
    std::string duplicate;

    bool track_key(const std::string& k) {
        if (depth == 1 && !top_keys.insert(k).second) {
            duplicate = k;
            return false;
        }
        return true;
    }
    bool null() override { return true; }
    bool boolean(bool) override { return true; }
    bool number_integer(number_integer_t) override { return true; }
    bool number_unsigned(number_unsigned_t) override { return true; }
    bool number_float(number_float_t, const string_t&) override { return true; }
    bool string(string_t&) override { return true; }
    bool binary(binary_t&) override { return true; }
    bool start_object(std::size_t) override {
        ++depth;
        return true;
    }
    bool key(string_t& k) override { return track_key(k); }
    bool end_object() override {
        --depth;
        return true;
    }
    bool start_array(std::size_t) override { return true; }
    bool end_array() override { return true; }
    bool parse_error(std::size_t, const std::string&, const nlohmann::detail::exception&) override {
        return false;
    }
};

}  // namespace safetensors_detail

struct TensorEntry {
    std::string dtype_tag;        // tag as written in the file, e.g. "F32", "I64"
    std::optional<Dtype> dtype;   // set only for editable float dtypes
    std::vector<std::size_t> shape;
    std::uint64_t begin = 0;      // offsets relative to the data section
    std::uint64_t end = 0;

    std::size_t element_count() const {
        std::size_t n = 1;
        for (std::size_t s : shape) n *= s;
        return n;
    }
    std::uint64_t byte_size() const { return end - begin; }
};

// Lazily opened checkpoint: holds validated header only, never tensor data.
class CheckpointHandle {
  public:
    const std::string& path() const { return path_; }
    const std::vector<std::pair<std::string, TensorEntry>>& entries() const { return entries_; }
    const std::map<std::string, std::string>& metadata() const { return metadata_; }
    std::uint64_t data_start() const { return data_start_; }

    bool has(const std::string& name) const { return index_.count(name) > 0; }

    const TensorEntry& entry(const std::string& name) const {
        const auto it = index_.find(name);
        if (it == index_.end())
            raise(errc::name_not_found, "no tensor '" + name + "' in " + path_);
        return entries_[it->second].second;
    }

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        out.reserve(entries_.size());
        for (const auto& [n, _] : entries_) out.push_back(n);
        return out;
    }

  private:
    friend CheckpointHandle open_safetensors(const std::string&);
    std::string path_;
    std::vector<std::pair<std::string, TensorEntry>> entries_;
    std::map<std::string, std::size_t> index_;
    std::map<std::string, std::string> metadata_;
    std::uint64_t data_start_ = 0;
    std::uint64_t data_len_ = 0;
};

inline CheckpointHandle open_safetensors(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) raise(errc::io_failure, "cannot open " + path);
    in.seekg(0, std::ios::end);
    const std::uint64_t file_size = static_cast<std::uint64_t>(in.tellg());
    in.seekg(0, std::ios::beg);
    if (file_size < 8) raise(errc::bad_magic_length, path + ": shorter than the 8-byte prefix");

    std::uint64_t header_len = 0;
    in.read(reinterpret_cast<char*>(&header_len), 8);
    if (!in || header_len > file_size - 8)
        raise(errc::bad_magic_length,
              path + ": declared header length " + std::to_string(header_len) +
                  " exceeds file size " + std::to_string(file_size));

    std::string header_text(header_len, '\0');
    in.read(header_text.data(), static_cast<std::streamsize>(header_len));
    if (!in) raise(errc::io_failure, "cannot read header of " + path);

    safetensors_detail::DuplicateKeyCheck dup;
    if (!nlohmann::json::sax_parse(header_text, &dup)) {
        if (!dup.duplicate.empty())
            raise(errc::duplicate_name, path + ": duplicate tensor name '" + dup.duplicate + "'");
        raise(errc::bad_json, path + ": header is not valid JSON");
    }

    nlohmann::ordered_json header;
    try {
        header = nlohmann::ordered_json::parse(header_text);
    } catch (const nlohmann::json::exception&) {
        raise(errc::bad_json, path + ": header is not valid JSON");
    }
    if (!header.is_object()) raise(errc::bad_json, path + ": header is not a JSON object");

    CheckpointHandle h;
    h.path_ = path;
    h.data_start_ = 8 + header_len;
    h.data_len_ = file_size - h.data_start_;

    for (const auto& [name, value] : header.items()) {
        if (name == "__metadata__") {
            if (!value.is_object())
                raise(errc::bad_json, path + ": __metadata__ must be an object");
            for (const auto& [mk, mv] : value.items()) {
                if (!mv.is_string())
                    raise(errc::bad_json, path + ": __metadata__ values must be strings");
                h.metadata_[mk] = mv.get<std::string>();
            }
            continue;
        }
        if (!value.is_object())
            raise(errc::bad_json, path + ": entry '" + name + "' is not an object");
        for (const auto& [k, _] : value.items())
            if (k != "dtype" && k != "shape" && k != "data_offsets")
                raise(errc::bad_json, path + ": entry '" + name + "' has unknown key '" + k + "'");
        if (!value.contains("dtype") || !value["dtype"].is_string())
            raise(errc::bad_json, path + ": entry '" + name + "' lacks a dtype string");
        if (!value.contains("shape") || !value["shape"].is_array())
            raise(errc::bad_json, path + ": entry '" + name + "' lacks a shape array");
        if (!value.contains("data_offsets") || !value["data_offsets"].is_array() ||
            value["data_offsets"].size() != 2)
            raise(errc::bad_json, path + ": entry '" + name + "' lacks data_offsets [begin,end]");

        TensorEntry e;
        e.dtype_tag = value["dtype"].get<std::string>();
        const auto* tag = safetensors_detail::find_tag(e.dtype_tag);
        if (tag == nullptr)
            raise(errc::unknown_dtype_tag,
                  path + ": entry '" + name + "' has unknown dtype '" + e.dtype_tag + "'");
        e.dtype = tag->dtype;
        for (const auto& s : value["shape"]) {
            if (!s.is_number_unsigned())
                raise(errc::bad_json, path + ": entry '" + name + "' has a non-integer extent");
            e.shape.push_back(s.get<std::size_t>());
        }
        const auto& off = value["data_offsets"];
        if (!off[0].is_number_unsigned() || !off[1].is_number_unsigned())
            raise(errc::bad_json, path + ": entry '" + name + "' has non-integer offsets");
        e.begin = off[0].get<std::uint64_t>();
        e.end = off[1].get<std::uint64_t>();
        if (e.begin > e.end || e.end > h.data_len_)
            raise(errc::overlapping_offsets,
                  path + ": entry '" + name + "' offsets [" + std::to_string(e.begin) + "," +
                      std::to_string(e.end) + ") fall outside the data section");
        if (e.byte_size() != e.element_count() * tag->size)
            raise(errc::overlapping_offsets,
                  path + ": entry '" + name + "' byte range does not match dtype*shape");

        h.index_[name] = h.entries_.size();
        h.entries_.emplace_back(name, std::move(e));
    }

    // non-empty ranges must not overlap
    std::vector<std::pair<std::uint64_t, std::uint64_t>> ranges;
    for (const auto& [name, e] : h.entries_)
        if (e.begin < e.end) ranges.emplace_back(e.begin, e.end);
    std::sort(ranges.begin(), ranges.end());
    for (std::size_t i = 1; i < ranges.size(); ++i)
        if (ranges[i].first < ranges[i - 1].second)
            raise(errc::overlapping_offsets, path + ": tensor byte ranges overlap");

    return h;
}

inline std::vector<std::uint8_t> read_tensor_raw(const CheckpointHandle& h,
                                                 const std::string& name) {
    const TensorEntry& e = h.entry(name);
    std::ifstream in(h.path(), std::ios::binary);
    if (!in) raise(errc::io_failure, "cannot open " + h.path());
    in.seekg(static_cast<std::streamoff>(h.data_start() + e.begin));
    std::vector<std::uint8_t> buf(static_cast<std::size_t>(e.byte_size()));
    if (!buf.empty()) in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!in) raise(errc::io_failure, "cannot read tensor '" + name + "' from " + h.path());
    return buf;
}

inline Tensor read_tensor(const CheckpointHandle& h, const std::string& name) {
    const TensorEntry& e = h.entry(name);
    if (!e.dtype)
        raise(errc::unsupported_dtype,
              "tensor '" + name + "' has dtype " + e.dtype_tag + " which cannot be decoded");
    Tensor t;
    t.dtype = *e.dtype;
    t.shape = e.shape;
    t.data = read_tensor_raw(h, name);
    return t;
}

// A tensor to write: either in-memory data or a bit-exact copy from another file.
struct TensorSource {
    struct CopyFrom {
        const CheckpointHandle* src;
        std::string name;
    };
    std::string dtype_tag;
    std::vector<std::size_t> shape;
    std::variant<Tensor, CopyFrom> payload;

    static TensorSource from_tensor(Tensor t) {
        TensorSource s;
        s.dtype_tag = safetensors_detail::tag_for_dtype(t.dtype);
        s.shape = t.shape;
        s.payload = std::move(t);
        return s;
    }

    static TensorSource copy_of(const CheckpointHandle& h, const std::string& name) {
        TensorSource s;
        const TensorEntry& e = h.entry(name);
        s.dtype_tag = e.dtype_tag;
        s.shape = e.shape;
        s.payload = CopyFrom{&h, name};
        return s;
    }

    std::uint64_t byte_size() const {
        if (std::holds_alternative<Tensor>(payload))
            return std::get<Tensor>(payload).byte_size();
        const auto& c = std::get<CopyFrom>(payload);
        return c.src->entry(c.name).byte_size();
    }
};

inline void write_safetensors_sources(
    const std::string& path,
    const std::vector<std::pair<std::string, TensorSource>>& tensors,
    const std::map<std::string, std::string>& metadata) {
    std::set<std::string> seen;
    for (const auto& [name, _] : tensors) {
        if (name.empty() || name == "__metadata__")
            raise(errc::invalid_config, "invalid tensor name '" + name + "'");
        if (!seen.insert(name).second)
            raise(errc::duplicate_name, "duplicate tensor name '" + name + "'");
    }

    nlohmann::ordered_json header = nlohmann::ordered_json::object();
    if (!metadata.empty()) {
        nlohmann::ordered_json meta = nlohmann::ordered_json::object();
        for (const auto& [k, v] : metadata) meta[k] = v;
        header["__metadata__"] = std::move(meta);
    }
    std::uint64_t offset = 0;
    for (const auto& [name, src] : tensors) {
        const std::uint64_t size = src.byte_size();
        header[name] = {{"dtype", src.dtype_tag},
                        {"shape", src.shape},
                        {"data_offsets", {offset, offset + size}}};
        offset += size;
    }

    std::string header_text = header.dump();
    // pad with spaces so the data section starts 8-byte aligned
    const std::size_t total = 8 + header_text.size();
    header_text.append((8 - total % 8) % 8, ' ');

    AtomicFile f(path);
    const std::uint64_t header_len = header_text.size();
    f.write(&header_len, 8);
    f.write(header_text.data(), header_text.size());
    for (const auto& [name, src] : tensors) {
        if (std::holds_alternative<Tensor>(src.payload)) {
            const Tensor& t = std::get<Tensor>(src.payload);
            if (!t.consistent())
                raise(errc::truncated_payload,
                      "tensor '" + name + "' payload does not match its shape");
            f.write(t.data.data(), t.data.size());
        } else {
            const auto& c = std::get<TensorSource::CopyFrom>(src.payload);
            const TensorEntry& e = c.src->entry(c.name);
            std::ifstream in(c.src->path(), std::ios::binary);
            if (!in) raise(errc::io_failure, "cannot open " + c.src->path());
            in.seekg(static_cast<std::streamoff>(c.src->data_start() + e.begin));
            std::uint64_t remaining = e.byte_size();
            std::vector<char> buf(4 << 20);
            while (remaining > 0) {
                const std::size_t chunk =
                    static_cast<std::size_t>(std::min<std::uint64_t>(remaining, buf.size()));
                in.read(buf.data(), static_cast<std::streamsize>(chunk));
                if (!in) raise(errc::io_failure, "cannot read from " + c.src->path());
                f.write(buf.data(), chunk);
                remaining -= chunk;
            }
        }
    }
    f.commit();
}

inline void write_safetensors(const std::string& path,
                              const std::vector<std::pair<std::string, Tensor>>& tensors,
                              const std::map<std::string, std::string>& metadata = {}) {
    std::vector<std::pair<std::string, TensorSource>> sources;
    sources.reserve(tensors.size());
    for (const auto& [name, t] : tensors)
        sources.emplace_back(name, TensorSource::from_tensor(t));
    write_safetensors_sources(path, sources, metadata);
}

}  // namespace specfilter

#endif  // SPECFILTER_SAFETENSORS_HPP
