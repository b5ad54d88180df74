#ifndef SPECFILTER_NPZ_HPP
#define SPECFILTER_NPZ_HPP

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "specfilter/npy.hpp"
#include "specfilter/zip.hpp"

namespace specfilter {

inline std::map<std::string, Tensor> read_npz(const std::string& path) {
    const auto entries = zip::read_archive(path);
    std::map<std::string, Tensor> out;
    for (const auto& e : entries) {
        if (e.name.size() < 4 || e.name.substr(e.name.size() - 4) != ".npy")
            raise(errc::malformed_header,
                  path + ": member '" + e.name + "' is not an npy file");
        const std::string key = e.name.substr(0, e.name.size() - 4);
        if (out.count(key))
            raise(errc::duplicate_name, path + ": duplicate member '" + e.name + "'");
        out.emplace(key, npy::decode(e.data, path + ":" + e.name));
    }
    return out;
}

// Members are written in the given order, stored uncompressed.
inline void write_npz(const std::string& path,
                      const std::vector<std::pair<std::string, Tensor>>& tensors) {
    std::vector<zip::Entry> entries;
    entries.reserve(tensors.size());
    for (const auto& [name, tensor] : tensors) {
        for (const auto& e : entries)
            if (e.name == name + ".npy")
                raise(errc::duplicate_name, path + ": duplicate member '" + name + "'");
        entries.push_back({name + ".npy", npy::encode(tensor)});
    }
    zip::write_archive(path, entries);
}

}  // namespace specfilter

#endif  // SPECFILTER_NPZ_HPP
