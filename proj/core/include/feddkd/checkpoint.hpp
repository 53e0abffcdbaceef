#pragma once

#include <string>

#include "feddkd/model.hpp"

namespace feddkd {

/// Text checkpoint: one spec line per layer, then one
/// (layer_index, tensor_name, shape, values) block per tensor. Values are
/// printed with 17 significant digits so load_params(save_params(p)) == p.
void save_params(const ParamSet& params, const std::string& path);

ParamSet load_params(const std::string& path);

}  // namespace feddkd
