#pragma once

// Binary checkpoint container: named double-precision buffers. Stores model
// parameters, normalization statistics, and an architecture descriptor so a
// checkpoint alone is enough to rebuild and run the model.

#include <string>
#include <utility>
#include <vector>

#include "falldet/nn.hpp"

namespace falldet::ckpt {

struct Blob {
    int rows = 0, cols = 0;
    std::vector<double> data;
};

// Ordered so writes are deterministic.
using BlobMap = std::vector<std::pair<std::string, Blob>>;

const Blob* find(const BlobMap& m, const std::string& name);

// Layout: "FMDL" | version u16 | count u32 | count x (name_len u16, name,
// rows u32, cols u32, rows*cols f64). All little-endian.
void save(const std::string& path, const BlobMap& blobs);
BlobMap load(const std::string& path);  // IoError on malformed input

// Architecture descriptor <-> blob ("meta.arch").
Blob encode_arch(const nn::ModelConfig& cfg);
nn::ModelConfig decode_arch(const Blob& b);

// Full model save/load. `extra` carries non-parameter buffers (normalization
// stats); load rebuilds the model from the embedded descriptor and returns the
// leftovers.
void save_model(const std::string& path, const nn::FallModel& model, uint64_t seed,
                const BlobMap& extra);
BlobMap load_model(const std::string& path, nn::FallModel& model);

}  // namespace falldet::ckpt
