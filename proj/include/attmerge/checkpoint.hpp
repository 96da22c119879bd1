// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "attmerge/dataio.hpp"
#include "attmerge/model.hpp"

namespace attmerge {

/// Model configuration as container metadata plus every parameter tensor.
TensorContainer to_container(Model &model,
                             std::vector<std::pair<std::string, std::string>> extra = {});
/// Rebuilds a model; throws FormatError when a tensor is missing or misshapen.
Model from_container(const TensorContainer &container);

void save_model(const fs::path &path, Model &model,
                std::vector<std::pair<std::string, std::string>> extra = {});
Model load_model(const fs::path &path);

} // namespace attmerge
