#pragma once

#include <string>
#include <vector>

#include "semba/types.hpp"

namespace semba {

/// Y x X conspicuity grid. `variant` and `fixation_index` record where the map came from.
struct AttentionMap {
    GridDims dims;
    std::vector<double> values;  // row-major, dims.cell_count() entries
    std::string variant;
    int fixation_index = -1;

    AttentionMap() = default;
    AttentionMap(GridDims d, double fill = 0.0) : dims(d), values(d.cell_count(), fill) {}

    double at(Cell c) const { return values.at(dims.index(c)); }
    double& at(Cell c) { return values.at(dims.index(c)); }
};

}  // namespace semba
