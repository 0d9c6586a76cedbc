// SPDX-License-Identifier: Apache-2.0
#include "nbfusion/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "nbfusion/errors.hpp"

namespace nbf {

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
    const unsigned char bytes[4] = {
        static_cast<unsigned char>(v & 0xff),
        static_cast<unsigned char>((v >> 8) & 0xff),
        static_cast<unsigned char>((v >> 16) & 0xff),
        static_cast<unsigned char>((v >> 24) & 0xff),
    };
    out.write(reinterpret_cast<const char*>(bytes), 4);
}

void put_f64(std::ostream& out, double v) {
    const std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    unsigned char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(bytes), 8);
}

std::uint32_t get_u32(std::istream& in, const char* what) {
    unsigned char bytes[4];
    in.read(reinterpret_cast<char*>(bytes), 4);
    if (in.gcount() != 4) throw TruncationError(std::string("nbck: file ends inside ") + what);
    return static_cast<std::uint32_t>(bytes[0]) | (static_cast<std::uint32_t>(bytes[1]) << 8) |
           (static_cast<std::uint32_t>(bytes[2]) << 16) | (static_cast<std::uint32_t>(bytes[3]) << 24);
}

double get_f64(std::istream& in, const char* what) {
    unsigned char bytes[8];
    in.read(reinterpret_cast<char*>(bytes), 8);
    if (in.gcount() != 8) throw TruncationError(std::string("nbck: file ends inside ") + what);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    return std::bit_cast<double>(bits);
}

}  // namespace

void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, const Tensor*>>& tensors,
                     const MetaMap& info, const std::string& config_digest) {
    nlohmann::json meta;
    meta["version"] = 1;
    meta["precision"] = "f64";
    meta["config_digest"] = config_digest;
    meta["info"] = info;
    nlohmann::json list = nlohmann::json::array();
    for (const auto& [name, tensor] : tensors) {
        nlohmann::json entry;
        entry["name"] = name;
        entry["shape"] = tensor->shape();
        list.push_back(std::move(entry));
    }
    meta["tensors"] = std::move(list);
    const std::string meta_text = meta.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("nbck: cannot open '" + path + "' for writing");
    out.write("NBCK", 4);
    put_u32(out, static_cast<std::uint32_t>(meta_text.size()));
    out.write(meta_text.data(), static_cast<std::streamsize>(meta_text.size()));
    for (const auto& [name, tensor] : tensors) {
        for (double v : tensor->vec()) put_f64(out, v);
    }
    if (!out) throw IoError("nbck: write failed for '" + path + "'");
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("nbck: cannot open '" + path + "'");
    char magic[4];
    in.read(magic, 4);
    if (in.gcount() != 4) throw TruncationError("nbck: file shorter than magic");
    if (std::memcmp(magic, "NBCK", 4) != 0) throw FormatError("nbck: bad magic in '" + path + "'");
    const std::uint32_t meta_len = get_u32(in, "metadata length");
    std::string meta_text(meta_len, '\0');
    in.read(meta_text.data(), meta_len);
    if (in.gcount() != static_cast<std::streamsize>(meta_len)) {
        throw TruncationError("nbck: file ends inside metadata");
    }
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(meta_text);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("nbck: metadata is not valid JSON: ") + e.what());
    }
    if (meta.value("version", 0) != 1) throw FormatError("nbck: unknown version");
    if (meta.value("precision", "") != "f64") throw FormatError("nbck: unknown precision");

    LoadedCheckpoint ck;
    ck.precision = meta["precision"];
    ck.config_digest = meta.value("config_digest", "");
    if (meta.contains("info")) {
        for (const auto& [k, v] : meta["info"].items()) ck.info[k] = v.get<std::string>();
    }
    for (const auto& entry : meta["tensors"]) {
        const std::string name = entry["name"];
        const std::vector<std::size_t> shape = entry["shape"].get<std::vector<std::size_t>>();
        Tensor t(shape);
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = get_f64(in, "payload");
        ck.tensors.emplace_back(name, std::move(t));
    }
    char extra;
    if (in.read(&extra, 1).gcount() == 1) throw FormatError("nbck: trailing bytes after payload");
    return ck;
}

const Tensor* LoadedCheckpoint::find(const std::string& name) const {
    for (const auto& [n, t] : tensors) {
        if (n == name) return &t;
    }
    return nullptr;
}

std::string digest_hex(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace nbf
