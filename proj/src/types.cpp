#include "semba/types.hpp"

#include <algorithm>
#include <cmath>

namespace semba {

Cell cell_of(Point2 p, GridDims grid, ImageDims image) {
    int col = static_cast<int>(std::floor(p.x * grid.cols / image.width));
    int row = static_cast<int>(std::floor(p.y * grid.rows / image.height));
    return {std::clamp(row, 0, grid.rows - 1), std::clamp(col, 0, grid.cols - 1)};
}

Point2 cell_center(Cell c, GridDims grid, ImageDims image) {
    return {(c.col + 0.5) * image.width / grid.cols, (c.row + 0.5) * image.height / grid.rows};
}

std::uint64_t split_seed(std::uint64_t base, std::uint64_t index) {
    std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace semba
