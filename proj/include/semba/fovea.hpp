#pragma once

#include <array>
#include <vector>

#include "semba/image.hpp"
#include "semba/types.hpp"

namespace semba {

struct FoveaConfig {
    double eta = 0.156;           // fovea std as a fraction of each image axis
    int levels = 5;               // pyramid depth L
    int distortion_levels = 7;    // D
    double sigma_base = 1.0;      // px; level l carries roughly 2^l * sigma_base of blur

    /// Throws std::invalid_argument on eta <= 0, L < 2 or D < 1.
    void validate() const;
};

/// Focal point plus the elliptic fovea (sigma_x, sigma_y) = eta * (width, height).
class FocalFrame {
public:
    FocalFrame(Point2 focal_point, ImageDims dims, double eta);

    Point2 focal_point() const { return focal_; }
    ImageDims dims() const { return dims_; }
    double sigma_x() const { return sigma_x_; }
    double sigma_y() const { return sigma_y_; }
    double eta() const { return eta_; }

private:
    Point2 focal_;
    ImageDims dims_;
    double eta_;
    double sigma_x_;
    double sigma_y_;
};

/// Mahalanobis distance under diag(sigma_x^2, sigma_y^2).
double mahalanobis_distance(Point2 p, const FocalFrame& frame);

/// Largest Mahalanobis distance among the four image corners; the outer edge of level D.
double max_corner_distance(const FocalFrame& frame);

/// 1 + floor(D * m / m_max), clamped to [1, D].
int distortion_level_for_distance(double m, double m_max, int distortion_levels);
int distortion_level(Point2 p, const FocalFrame& frame, const FoveaConfig& config);

/// Per-level blend weights for a pixel at Mahalanobis distance m. Level l is kept through a
/// Gaussian window exp(-m^2 / (2 * 4^l)); the weights are the successive differences of those
/// windows, so they are non-negative, sum to 1, and are exactly (1, 0, ..., 0) at m = 0.
std::vector<double> blend_weights(double m, int levels);

/// Gaussian pyramid of one source image, reusable across focal points.
class Foveator {
public:
    Foveator(const Image& source, FoveaConfig config);

    const FoveaConfig& config() const { return config_; }
    ImageDims dims() const { return {width_, height_}; }
    int channels() const { return channels_; }

    /// Full foveated raster around the frame's focal point.
    Image foveate(const FocalFrame& frame) const;

    /// Foveated (unquantised) value of one pixel, written to `out[0..channels)`.
    void pixel(int x, int y, const FocalFrame& frame, float* out) const;

    /// Mean foveated colour inside a box, one value per channel (unquantised).
    std::array<double, 3> mean_in_box(const BBox& box, const FocalFrame& frame) const;

private:
    float sample_level(int level, double x, double y, int c) const;

    FoveaConfig config_;
    int width_;
    int height_;
    int channels_;
    std::vector<FloatImage> pyramid_;
};

Image foveate(const Image& image, const FocalFrame& frame, const FoveaConfig& config);

}  // namespace semba
