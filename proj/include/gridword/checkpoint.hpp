#pragma once

#include <string>
#include <utility>
#include <vector>

#include "gridword/params.hpp"
#include "gridword/tensor.hpp"

namespace gridword {

/// Checkpoint layout (little-endian):
///   magic "GRIDWORD-CKPT-V1\n"
///   u32 config_len, config text (key=value lines)
///   u32 tensor_count
///   per tensor: u32 name_len, name bytes, u32 ndim (always 2),
///               u64 dims[ndim], f64 data[prod(dims)]
/// Tensors are written params first then buffers, in registry order.
struct Checkpoint {
    std::string config_text;
    std::vector<std::pair<std::string, TensorPtr>> tensors;

    TensorPtr find(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const std::string& config_text,
                     const ParamStore& store);

/// Raises IoError on open/read failure, VersionError on a bad magic or a
/// truncated file.
Checkpoint load_checkpoint(const std::string& path);

/// Copies values into a freshly constructed store. Every store tensor must be
/// present with matching shape and vice versa; any mismatch raises
/// VersionError.
void load_into_store(const Checkpoint& ckpt, ParamStore& store);

}  // namespace gridword
