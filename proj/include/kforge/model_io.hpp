#ifndef KFORGE_MODEL_IO_HPP
#define KFORGE_MODEL_IO_HPP

#include <string>
#include <vector>

#include "kforge/autoregressive.hpp"
#include "kforge/data.hpp"
#include "kforge/swap.hpp"

namespace kforge {

// On-disk model container: 8-byte magic, little-endian u32 header length,
// JSON metadata header, then the conditionals' parameters as little-endian
// 64-bit floats in natural order.
struct ModelBundle {
  std::string kind;  // "joint" or "knockoff"
  AutoregressiveModel model;
  Standardizer standardizer;
  std::vector<std::string> columns;
  SwapSampler sampler;  // knockoff models carry the learned swap logits
  bool has_sampler = false;
};

void save_model(const std::string& path, const ModelBundle& bundle);

// Validates magic, version, dimensions, and parameter block sizes before
// constructing the model.
ModelBundle load_model(const std::string& path);

}  // namespace kforge

#endif
