// SPDX-License-Identifier: Apache-2.0
#include "nbfusion/embedding_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

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

void put_f32(std::ostream& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

std::uint32_t get_u32(std::istream& in, const char* what) {
    unsigned char bytes[4];
    in.read(reinterpret_cast<char*>(bytes), 4);
    if (in.gcount() != 4) throw TruncationError(std::string("nbemb: file ends inside ") + what);
    return static_cast<std::uint32_t>(bytes[0]) | (static_cast<std::uint32_t>(bytes[1]) << 8) |
           (static_cast<std::uint32_t>(bytes[2]) << 16) | (static_cast<std::uint32_t>(bytes[3]) << 24);
}

float get_f32(std::istream& in, const char* what) {
    return std::bit_cast<float>(get_u32(in, what));
}

}  // namespace

void save_embeddings(const std::string& path, const std::vector<EmbeddingRecord>& records,
                     std::uint32_t d_i, std::uint32_t d_t) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("nbemb: cannot open '" + path + "' for writing");
    out.write("NBEM", 4);
    put_u32(out, kNbembVersion);
    put_u32(out, static_cast<std::uint32_t>(records.size()));
    put_u32(out, d_i);
    put_u32(out, d_t);
    for (const EmbeddingRecord& rec : records) {
        if (rec.image_vec.size() != d_i || rec.text_vec.size() != d_t) {
            throw ShapeError("nbemb: record dims do not match header");
        }
        const unsigned char head[2] = {rec.label, static_cast<unsigned char>(rec.noisy ? 1 : 0)};
        out.write(reinterpret_cast<const char*>(head), 2);
        for (float v : rec.image_vec) put_f32(out, v);
        for (float v : rec.text_vec) put_f32(out, v);
    }
    if (!out) throw IoError("nbemb: write failed for '" + path + "'");
}

std::vector<EmbeddingRecord> load_embeddings(const std::string& path,
                                             std::optional<EmbeddingDims> expected,
                                             EmbeddingDims* dims_out) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("nbemb: cannot open '" + path + "'");
    char magic[4];
    in.read(magic, 4);
    if (in.gcount() != 4) throw TruncationError("nbemb: file shorter than magic");
    if (std::memcmp(magic, "NBEM", 4) != 0) {
        throw FormatError("nbemb: bad magic in '" + path + "'");
    }
    const std::uint32_t version = get_u32(in, "header");
    if (version != kNbembVersion) {
        throw FormatError("nbemb: unknown version " + std::to_string(version));
    }
    const std::uint32_t count = get_u32(in, "header");
    const std::uint32_t d_i = get_u32(in, "header");
    const std::uint32_t d_t = get_u32(in, "header");
    if (expected && (expected->d_i != d_i || expected->d_t != d_t)) {
        throw ConfigError("nbemb: header dims " + std::to_string(d_i) + "/" + std::to_string(d_t) +
                          " do not match configured " + std::to_string(expected->d_i) + "/" +
                          std::to_string(expected->d_t));
    }
    if (dims_out) *dims_out = {d_i, d_t};

    std::vector<EmbeddingRecord> records;
    records.reserve(count);
    for (std::uint32_t r = 0; r < count; ++r) {
        unsigned char head[2];
        in.read(reinterpret_cast<char*>(head), 2);
        if (in.gcount() != 2) throw TruncationError("nbemb: file ends inside record header");
        EmbeddingRecord rec;
        rec.label = head[0];
        rec.noisy = head[1] != 0;
        rec.image_vec.resize(d_i);
        for (std::uint32_t j = 0; j < d_i; ++j) rec.image_vec[j] = get_f32(in, "record payload");
        rec.text_vec.resize(d_t);
        for (std::uint32_t j = 0; j < d_t; ++j) rec.text_vec[j] = get_f32(in, "record payload");
        records.push_back(std::move(rec));
    }
    char extra;
    if (in.read(&extra, 1).gcount() == 1) {
        throw FormatError("nbemb: trailing bytes after declared records");
    }
    return records;
}

}  // namespace nbf
