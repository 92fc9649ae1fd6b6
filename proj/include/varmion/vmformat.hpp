#pragma once

#include <string>
#include <utility>
#include <vector>

#include "varmion/dataset.hpp"
#include "varmion/tensor.hpp"

namespace varmion {

// Binary containers, little-endian throughout. Every array is encoded as
//   u16 name length, name bytes, u8 dtype (1 = f64), u8 rank,
//   u64 extent per axis, then the row-major f64 payload.
//
// Dataset file: magic "VMDS", u32 version, u64 metadata-JSON length, the JSON
// bytes, then the arrays in one fixed order (factor_ids trailing, optional).
//
// Checkpoint file: magic "VMCK", u32 version, u64 arch-JSON length + bytes,
// u32 parameter-array count + arrays, u32 optimizer-array count + arrays,
// u64 report-JSON length + bytes. Optimizer arrays are named "m/<param>",
// "v/<param>" plus the scalar "adam/step". The stored report always carries
// wall_seconds = 0 so identical runs produce identical files.

void write_dataset(const std::string& path, const Dataset& ds);

// output_ids is left empty; recompute it against the mesh when needed.
Dataset read_dataset(const std::string& path);

struct CheckpointData {
    nlohmann::json arch;
    std::vector<std::pair<std::string, Tensor>> params;
    std::vector<std::pair<std::string, Tensor>> opt_arrays;
    nlohmann::json report;
};

void write_checkpoint(const std::string& path, const CheckpointData& ck);
CheckpointData read_checkpoint(const std::string& path);

}  // namespace varmion
