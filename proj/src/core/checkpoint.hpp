#pragma once

#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "core/nn.hpp"

namespace foodpipe {

// Versioned single-file model container: JSON header (hyperparameters, seed,
// training metadata) followed by named float32 tensors with exact bits, so a
// reload reproduces predictions bit for bit.
struct Checkpoint {
  nlohmann::json header;
  std::vector<std::pair<std::string, nn::Tensor>> tensors;

  const nn::Tensor* find(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// Copies network parameters into / out of a checkpoint, matched by name.
void store_params(Checkpoint& ckpt, const std::vector<nn::ParamT<float>*>& params);
void load_params(const Checkpoint& ckpt, const std::vector<nn::ParamT<float>*>& params);

}  // namespace foodpipe
