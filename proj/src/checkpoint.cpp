#include "xlf5/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "xlf5/errors.hpp"

namespace xlf5 {

namespace {
constexpr char kMagic[8] = {'X', 'L', 'F', '5', 'C', 'K', 'P', '1'};

void wr_u32(std::ofstream& f, uint32_t v) {
    uint8_t b[4] = {uint8_t(v), uint8_t(v >> 8), uint8_t(v >> 16), uint8_t(v >> 24)};
    f.write(reinterpret_cast<const char*>(b), 4);
}
uint32_t rd_u32(std::istream& f) {
    uint8_t b[4];
    f.read(reinterpret_cast<char*>(b), 4);
    return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 | uint32_t(b[3]) << 24;
}
}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
    for (const auto& [n, t] : blobs)
        if (n == name) return &t;
    return nullptr;
}

const Tensor& Checkpoint::require(const std::string& name) const {
    const Tensor* t = find(name);
    if (!t) fail(ErrorCode::config_error, "checkpoint missing blob: " + name);
    return *t;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::ofstream f(path, std::ios::binary);
    if (!f) fail(ErrorCode::io_error, "cannot write " + path);
    f.write(kMagic, 8);
    std::string cfg = ckpt.config.dump();
    wr_u32(f, uint32_t(cfg.size()));
    f.write(cfg.data(), std::streamsize(cfg.size()));
    wr_u32(f, uint32_t(ckpt.blobs.size()));
    for (const auto& [name, t] : ckpt.blobs) {
        wr_u32(f, uint32_t(name.size()));
        f.write(name.data(), std::streamsize(name.size()));
        wr_u32(f, uint32_t(t.rank()));
        for (int64_t d : t.shape()) wr_u32(f, uint32_t(d));
        f.write(reinterpret_cast<const char*>(t.data()), std::streamsize(t.numel() * 4));
    }
    if (!f) fail(ErrorCode::io_error, "short write: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) fail(ErrorCode::io_error, "cannot open " + path);
    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, kMagic, 8) != 0)
        fail(ErrorCode::parse_error, "bad checkpoint magic: " + path);
    Checkpoint ckpt;
    uint32_t cfg_len = rd_u32(f);
    std::string cfg(cfg_len, '\0');
    f.read(cfg.data(), cfg_len);
    if (!f) fail(ErrorCode::parse_error, "truncated checkpoint config: " + path);
    try {
        ckpt.config = nlohmann::json::parse(cfg);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::parse_error, std::string("checkpoint config: ") + e.what());
    }
    uint32_t n_blobs = rd_u32(f);
    for (uint32_t i = 0; i < n_blobs; ++i) {
        uint32_t name_len = rd_u32(f);
        std::string name(name_len, '\0');
        f.read(name.data(), name_len);
        uint32_t rank = rd_u32(f);
        std::vector<int64_t> shape;
        for (uint32_t r = 0; r < rank; ++r) shape.push_back(int64_t(rd_u32(f)));
        Tensor t(shape);
        f.read(reinterpret_cast<char*>(t.data()), std::streamsize(t.numel() * 4));
        if (!f) fail(ErrorCode::parse_error, "truncated checkpoint blob: " + name);
        ckpt.blobs.emplace_back(std::move(name), std::move(t));
    }
    return ckpt;
}

}  // namespace xlf5
