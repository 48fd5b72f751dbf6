#pragma once

#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "pointtrack/tensor.hpp"

namespace pointtrack {

// Single-file tensor container: 4-byte magic, u32 format version, u64 header
// length, JSON header, then raw little-endian float32 payloads in the order
// declared by the header. Shared by scene, checkpoint and track files.

inline constexpr char kContainerMagic[4] = {'P', 'T', 'C', 'F'};
inline constexpr uint32_t kContainerVersion = 1;

struct ContainerData {
    std::string kind;
    nlohmann::json meta;
    std::vector<std::pair<std::string, Tensor<float>>> tensors;

    const Tensor<float>& tensor(const std::string& name) const {
        for (const auto& [n, t] : tensors)
            if (n == name) return t;
        throw io_error("container tensor not found: " + name);
    }
    bool has_tensor(const std::string& name) const {
        for (const auto& [n, t] : tensors)
            if (n == name) return true;
        return false;
    }
};

inline void write_container(const std::string& path, const ContainerData& c) {
    nlohmann::json header;
    header["kind"] = c.kind;
    header["meta"] = c.meta;
    auto& specs = header["tensors"] = nlohmann::json::array();
    for (const auto& [name, t] : c.tensors) {
        nlohmann::json spec;
        spec["name"] = name;
        spec["dtype"] = "float32";
        spec["shape"] = t.shape();
        specs.push_back(spec);
    }
    const std::string hs = header.dump();

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw io_error("cannot open for writing: " + path);
    f.write(kContainerMagic, 4);
    const uint32_t ver = kContainerVersion;
    f.write(reinterpret_cast<const char*>(&ver), 4);
    const uint64_t hlen = hs.size();
    f.write(reinterpret_cast<const char*>(&hlen), 8);
    f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (const auto& [name, t] : c.tensors)
        f.write(reinterpret_cast<const char*>(t.data()),
                static_cast<std::streamsize>(t.numel() * sizeof(float)));
    if (!f) throw io_error("write failed: " + path);
}

inline ContainerData read_container(const std::string& path, const std::string& expect_kind = "") {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw io_error("cannot open: " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, kContainerMagic, 4) != 0)
        throw corrupt_error("bad container magic: " + path);
    uint32_t ver = 0;
    f.read(reinterpret_cast<char*>(&ver), 4);
    if (!f) throw corrupt_error("truncated container header: " + path);
    if (ver != kContainerVersion)
        throw version_error(format_msg("unsupported container version ", ver, " in ", path));
    uint64_t hlen = 0;
    f.read(reinterpret_cast<char*>(&hlen), 8);
    if (!f || hlen > (1ull << 30)) throw corrupt_error("bad container header length: " + path);
    std::string hs(hlen, '\0');
    f.read(hs.data(), static_cast<std::streamsize>(hlen));
    if (!f) throw corrupt_error("truncated container header: " + path);

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(hs);
    } catch (const nlohmann::json::exception& e) {
        throw corrupt_error(format_msg("container header is not valid JSON (", e.what(), "): ", path));
    }

    ContainerData c;
    try {
        c.kind = header.at("kind").get<std::string>();
        c.meta = header.value("meta", nlohmann::json::object());
        for (const auto& spec : header.at("tensors")) {
            const std::string name = spec.at("name").get<std::string>();
            const std::string dtype = spec.at("dtype").get<std::string>();
            if (dtype != "float32")
                throw version_error("unsupported tensor dtype '" + dtype + "' in " + path);
            const std::vector<int64_t> shape = spec.at("shape").get<std::vector<int64_t>>();
            Tensor<float> t(shape);
            f.read(reinterpret_cast<char*>(t.data()),
                   static_cast<std::streamsize>(t.numel() * sizeof(float)));
            if (!f) throw corrupt_error("truncated tensor payload '" + name + "' in " + path);
            c.tensors.emplace_back(name, std::move(t));
        }
    } catch (const nlohmann::json::exception& e) {
        throw corrupt_error(format_msg("malformed container header (", e.what(), "): ", path));
    }
    if (!expect_kind.empty() && c.kind != expect_kind)
        throw io_error(format_msg("container kind mismatch: expected '", expect_kind, "', found '",
                                  c.kind, "' in ", path));
    return c;
}

}  // namespace pointtrack
