#pragma once

#include <map>
#include <string>

#include "ccast/tensor.hpp"

namespace ccast {

/// Flat named-tensor container, magic "CKPT". Entries are written in name
/// order; save/load round-trips are bit-exact.
void save_ckpt(const std::string& path, const std::map<std::string, Tensor>& entries);
std::map<std::string, Tensor> load_ckpt(const std::string& path);

}  // namespace ccast
