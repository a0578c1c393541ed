#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "glucast/array.hpp"

namespace glucast {

struct NamedParam {
    std::string name;
    Array value;
};

constexpr int kModelFormatVersion = 1;

namespace detail {

inline bool is_little_endian() {
    const std::uint16_t probe = 1;
    unsigned char b;
    std::memcpy(&b, &probe, 1);
    return b == 1;
}

inline void swap_doubles(std::vector<double>& v) {
    for (double& d : v) {
        unsigned char* p = reinterpret_cast<unsigned char*>(&d);
        for (int i = 0; i < 4; ++i) std::swap(p[i], p[7 - i]);
    }
}

} // namespace detail

/// Writes a parameter container: one line of JSON manifest followed by the
/// raw little-endian 64-bit float blob, parameters concatenated in manifest
/// order. The manifest carries caller metadata under "meta".
inline void save_param_container(const std::string& path, const nlohmann::json& meta,
                                 const std::vector<NamedParam>& params) {
    nlohmann::json manifest;
    manifest["format"] = "glucast-model";
    manifest["version"] = kModelFormatVersion;
    manifest["meta"] = meta;
    std::uint64_t blob_doubles = 0;
    nlohmann::json plist = nlohmann::json::array();
    for (const NamedParam& p : params) {
        nlohmann::json e;
        e["name"] = p.name;
        e["shape"] = p.value.shape();
        plist.push_back(e);
        blob_doubles += p.value.size();
    }
    manifest["params"] = plist;
    manifest["blob_bytes"] = blob_doubles * 8;

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << manifest.dump() << '\n';
    for (const NamedParam& p : params) {
        if (detail::is_little_endian()) {
            out.write(reinterpret_cast<const char*>(p.value.data()),
                      static_cast<std::streamsize>(p.value.size() * 8));
        } else {
            std::vector<double> tmp = p.value.vec();
            detail::swap_doubles(tmp);
            out.write(reinterpret_cast<const char*>(tmp.data()),
                      static_cast<std::streamsize>(tmp.size() * 8));
        }
    }
    if (!out) throw std::runtime_error("write failed for " + path);
}

/// Reads only the manifest "meta" block, leaving the blob untouched.
inline nlohmann::json peek_model_meta(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(path + ": empty model file");
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(line);
    } catch (const std::exception& e) {
        throw std::runtime_error(path + ": bad manifest: " + e.what());
    }
    if (manifest.value("format", "") != "glucast-model")
        throw std::runtime_error(path + ": not a glucast model file");
    return manifest.at("meta");
}

inline std::pair<nlohmann::json, std::vector<NamedParam>> load_param_container(
    const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(path + ": empty model file");

    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(line);
    } catch (const std::exception& e) {
        throw std::runtime_error(path + ": bad manifest: " + e.what());
    }
    if (manifest.value("format", "") != "glucast-model")
        throw std::runtime_error(path + ": not a glucast model file");
    if (manifest.value("version", -1) != kModelFormatVersion)
        throw std::runtime_error(path + ": unsupported model format version");

    std::vector<NamedParam> params;
    std::uint64_t total = 0;
    for (const auto& e : manifest.at("params")) {
        NamedParam p;
        p.name = e.at("name").get<std::string>();
        std::vector<std::size_t> shape = e.at("shape").get<std::vector<std::size_t>>();
        std::size_t n = shape.empty() ? 0 : 1;
        for (std::size_t s : shape) n *= s;
        total += n;
        std::vector<double> data(n);
        in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(n * 8));
        if (static_cast<std::uint64_t>(in.gcount()) != n * 8)
            throw std::runtime_error(path + ": truncated model file");
        if (!detail::is_little_endian()) detail::swap_doubles(data);
        p.value = Array::from_data(std::move(shape), std::move(data));
        params.push_back(std::move(p));
    }
    if (manifest.value("blob_bytes", std::uint64_t(0)) != total * 8)
        throw std::runtime_error(path + ": blob size mismatch");
    return {manifest.at("meta"), std::move(params)};
}

} // namespace glucast
