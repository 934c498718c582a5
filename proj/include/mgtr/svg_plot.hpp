#pragma once

#include <string>

#include "mgtr/decoder.hpp"
#include "mgtr/scene.hpp"

namespace mgtr {

// Bird's-eye SVG of one prediction: map, agent history, ground truth, and the
// predicted modes (world frame). Purely an artifact for inspection.
void write_prediction_svg(const std::string& path, const Scenario& s, int target_id,
                          const GmmModeSet& world_modes);

}  // namespace mgtr
