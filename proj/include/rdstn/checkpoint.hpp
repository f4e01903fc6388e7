#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "rdstn/config.hpp"
#include "rdstn/model.hpp"

namespace rdstn {

// Adam moments aligned with Model::parameters() order.
struct AdamState {
    std::int64_t step = 0;
    std::vector<Matrix> m;
    std::vector<Matrix> v;

    static AdamState zeros_like(const Model& model);
};

struct NamedArray {
    std::string name;
    Matrix values;
};

enum class ArrayDtype { f32, f64 };

// On disk:
//   8 bytes   magic "RDSTNCK1"
//   8 bytes   little-endian u64 metadata length
//   metadata  JSON: config, step, histories, array directory, checksums
//   payload   raw little-endian arrays in directory order
struct Checkpoint {
    RunConfig config;
    std::int64_t step = 0;
    nlohmann::json metric_history = nlohmann::json::array();
    std::vector<double> loss_history;
    std::vector<NamedArray> arrays;  // "encoder.*", "decoder.*", then "optim.m.*", "optim.v.*"
    std::int64_t optimizer_step = 0;
};

Checkpoint make_checkpoint(const Model& model, const AdamState* optimizer, const RunConfig& config, std::int64_t step,
                           const nlohmann::json& metric_history, const std::vector<double>& loss_history);

// f64 keeps parameters bit-exact; f32 is a compact export.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path, ArrayDtype dtype = ArrayDtype::f64);
// Validates the whole file (size, checksum) before returning anything.
Checkpoint load_checkpoint(const std::filesystem::path& path);

// "crc32:xxxxxxxx" over the serialised arrays.
std::string content_checksum(const Checkpoint& ckpt, ArrayDtype dtype = ArrayDtype::f64);

Model restore_model(const Checkpoint& ckpt);
// Copies parameters into an existing model; throws ConfigMismatch when the
// model was built from a different architecture.
void load_parameters(Model& model, const Checkpoint& ckpt);
AdamState restore_optimizer(const Checkpoint& ckpt, const Model& model);

}  // namespace rdstn
