#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "xlf5/tensor.hpp"

namespace xlf5 {

// Self-describing model container: a JSON config document plus named float32
// parameter blobs (same little-endian binary convention as mel files).
struct Checkpoint {
    nlohmann::json config;
    std::vector<std::pair<std::string, Tensor>> blobs;

    void add(const std::string& name, const Tensor& t) { blobs.emplace_back(name, t); }
    const Tensor* find(const std::string& name) const;
    const Tensor& require(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace xlf5
