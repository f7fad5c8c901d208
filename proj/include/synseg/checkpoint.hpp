#pragma once

#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "synseg/tensor.hpp"

namespace synseg {

// Binary tensor container.
//
// Layout:
//   bytes 0..7   magic "SYNSEG\0\x01"
//   bytes 8..15  little-endian u64: manifest length in bytes
//   manifest     UTF-8 JSON; carries format_version, a tensor index
//                (name/shape/offset/nbytes), and caller fields (config echo,
//                step count, loss tail, ...)
//   blobs        concatenated float32 little-endian row-major tensor data;
//                index offsets are relative to the start of this section
//
// Writes go to "<path>.tmp" and are renamed into place, so a crash never
// leaves a partial file at the target path.

struct CheckpointData {
  nlohmann::ordered_json manifest;
  std::vector<std::pair<std::string, DenseArray>> tensors;  // in index order

  const DenseArray* find(const std::string& name) const;
};

void write_checkpoint(const std::string& path, nlohmann::ordered_json manifest_fields,
                      const std::vector<std::pair<std::string, DenseArray>>& tensors);

CheckpointData read_checkpoint(const std::string& path);

}  // namespace synseg
