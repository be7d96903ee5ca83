#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace semba {

/// Pixel-space point. Image domain is the continuous rectangle [0,width]x[0,height];
/// pixel (i,j) covers [i,i+1)x[j,j+1).
struct Point2 {
    double x = 0.0;
    double y = 0.0;
    friend bool operator==(const Point2&, const Point2&) = default;
};

/// Grid cell index (row-major).
struct Cell {
    int row = 0;
    int col = 0;
    friend bool operator==(const Cell&, const Cell&) = default;
    friend auto operator<=>(const Cell&, const Cell&) = default;
};

struct GridDims {
    int rows = 20;
    int cols = 32;
    friend bool operator==(const GridDims&, const GridDims&) = default;
    std::size_t cell_count() const { return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols); }
    bool contains(Cell c) const { return c.row >= 0 && c.row < rows && c.col >= 0 && c.col < cols; }
    std::size_t index(Cell c) const { return static_cast<std::size_t>(c.row) * cols + c.col; }
    Cell cell_at(std::size_t idx) const {
        return {static_cast<int>(idx / cols), static_cast<int>(idx % cols)};
    }
};

struct ImageDims {
    int width = 0;
    int height = 0;
    friend bool operator==(const ImageDims&, const ImageDims&) = default;
};

/// Axis-aligned box in pixels, (x_min, y_min) - (x_max, y_max).
struct BBox {
    double x_min = 0.0;
    double y_min = 0.0;
    double x_max = 0.0;
    double y_max = 0.0;

    friend bool operator==(const BBox&, const BBox&) = default;
    double width() const { return x_max - x_min; }
    double height() const { return y_max - y_min; }
    double area() const { return width() * height(); }
    Point2 center() const { return {0.5 * (x_min + x_max), 0.5 * (y_min + y_max)}; }
    bool valid() const { return x_min < x_max && y_min < y_max; }
    bool contains(Point2 p) const { return p.x >= x_min && p.x <= x_max && p.y >= y_min && p.y <= y_max; }
    BBox clipped(ImageDims dims) const;
};

inline BBox BBox::clipped(ImageDims dims) const {
    auto clamp = [](double v, double lo, double hi) { return v < lo ? lo : (v > hi ? hi : v); };
    return {clamp(x_min, 0.0, dims.width), clamp(y_min, 0.0, dims.height),
            clamp(x_max, 0.0, dims.width), clamp(y_max, 0.0, dims.height)};
}

/// Cell containing a pixel point under a uniform tiling (floor division). Points on the far
/// image edge are clamped into the last row/column.
Cell cell_of(Point2 p, GridDims grid, ImageDims image);

/// Pixel center of a grid cell.
Point2 cell_center(Cell c, GridDims grid, ImageDims image);

/// All pseudo-random draws go through an explicitly passed engine.
using Rng = std::mt19937_64;

/// Derives an independent seed for stream `index` of a base seed (splitmix64 finalizer).
std::uint64_t split_seed(std::uint64_t base, std::uint64_t index);

/// Raised when a parsed file or message violates its schema.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace semba
