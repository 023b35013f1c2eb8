#pragma once

#include <optional>
#include <string>

#include "tbnet/model.hpp"
#include "tbnet/optimizer.hpp"

namespace tbnet {

/// Binary weight container:
///   magic "TBW1" | u32le header length | JSON header | raw payload
/// The header carries the format version, the model spec, optional
/// optimizer scalars, and a tensor manifest (name, dtype, shape, offset,
/// length, crc32). Tensors are laid out sorted by name and serialized
/// little-endian, so identical inputs produce byte-identical files.
/// Optimizer velocity tensors are stored under an "opt/" name prefix.

struct LoadResult {
  Model<float> model;
  std::optional<OptimizerState<float>> optimizer;
};

void save_model(Model<float>& model, const std::string& path,
                const OptimizerState<float>* optimizer = nullptr);

/// Validates magic, version, manifest consistency, and per-tensor
/// checksums before constructing anything; a failure never yields a
/// partial model. Throws FormatError with a distinct kind per failure.
LoadResult load_model(const std::string& path);

std::string spec_to_json_string(const ModelSpec& spec);
ModelSpec spec_from_json_string(const std::string& text);

}  // namespace tbnet
