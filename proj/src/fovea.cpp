#include "semba/fovea.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace semba {

void FoveaConfig::validate() const {
    if (!(eta > 0.0) || !std::isfinite(eta)) throw std::invalid_argument("fovea eta must be > 0");
    if (levels < 2) throw std::invalid_argument("fovea pyramid needs at least 2 levels");
    if (distortion_levels < 1) throw std::invalid_argument("distortion levels D must be >= 1");
    if (!(sigma_base > 0.0)) throw std::invalid_argument("fovea sigma_base must be > 0");
}

FocalFrame::FocalFrame(Point2 focal_point, ImageDims dims, double eta)
    : focal_(focal_point), dims_(dims), eta_(eta), sigma_x_(eta * dims.width), sigma_y_(eta * dims.height) {
    if (dims.width < 1 || dims.height < 1) throw std::invalid_argument("focal frame needs positive image dimensions");
    if (!(eta > 0.0)) throw std::invalid_argument("fovea eta must be > 0");
    if (focal_.x < 0.0 || focal_.x > dims.width || focal_.y < 0.0 || focal_.y > dims.height) {
        throw std::invalid_argument("focal point outside the image");
    }
}

double mahalanobis_distance(Point2 p, const FocalFrame& frame) {
    const double dx = (p.x - frame.focal_point().x) / frame.sigma_x();
    const double dy = (p.y - frame.focal_point().y) / frame.sigma_y();
    return std::sqrt(dx * dx + dy * dy);
}

double max_corner_distance(const FocalFrame& frame) {
    const double w = frame.dims().width;
    const double h = frame.dims().height;
    double best = 0.0;
    for (Point2 corner : {Point2{0, 0}, Point2{w, 0}, Point2{0, h}, Point2{w, h}}) {
        best = std::max(best, mahalanobis_distance(corner, frame));
    }
    return best;
}

int distortion_level_for_distance(double m, double m_max, int distortion_levels) {
    if (!(m_max > 0.0)) return 1;
    const int d = 1 + static_cast<int>(std::floor(distortion_levels * m / m_max));
    return std::clamp(d, 1, distortion_levels);
}

int distortion_level(Point2 p, const FocalFrame& frame, const FoveaConfig& config) {
    return distortion_level_for_distance(mahalanobis_distance(p, frame), max_corner_distance(frame),
                                         config.distortion_levels);
}

std::vector<double> blend_weights(double m, int levels) {
    std::vector<double> w(static_cast<std::size_t>(levels), 0.0);
    double previous = 0.0;
    for (int l = 0; l + 1 < levels; ++l) {
        const double scale = std::ldexp(1.0, l);  // 2^l
        const double window = std::exp(-0.5 * (m / scale) * (m / scale));
        w[l] = window - previous;
        previous = window;
    }
    w[levels - 1] = 1.0 - previous;
    return w;
}

Foveator::Foveator(const Image& source, FoveaConfig config)
    : config_(config), width_(source.width), height_(source.height), channels_(source.channels) {
    config_.validate();
    if (source.empty()) throw std::invalid_argument("cannot foveate an empty image");
    pyramid_.reserve(config_.levels);
    pyramid_.emplace_back(source);
    for (int l = 1; l < config_.levels; ++l) {
        // Blur in the previous level's pixel units so the accumulated blur of level l is about
        // 2^l * sigma_base original pixels (the 2x2 decimation box supplies variance 1/4).
        const double increment = l == 1 ? 4.0 : 3.0;
        const double sigma = std::sqrt(std::max(increment * config_.sigma_base * config_.sigma_base - 0.25, 0.09));
        const FloatImage blurred = gaussian_blur(pyramid_.back(), sigma);
        FloatImage down((blurred.width + 1) / 2, (blurred.height + 1) / 2, channels_);
        for (int y = 0; y < down.height; ++y) {
            for (int x = 0; x < down.width; ++x) {
                const int x1 = std::min(2 * x + 1, blurred.width - 1);
                const int y1 = std::min(2 * y + 1, blurred.height - 1);
                for (int c = 0; c < channels_; ++c) {
                    down.at(x, y, c) = 0.25f * (blurred.at(2 * x, 2 * y, c) + blurred.at(x1, 2 * y, c) +
                                                blurred.at(2 * x, y1, c) + blurred.at(x1, y1, c));
                }
            }
        }
        pyramid_.push_back(std::move(down));
    }
}

float Foveator::sample_level(int level, double x, double y, int c) const {
    const FloatImage& img = pyramid_[level];
    if (level == 0) return img.at(static_cast<int>(x), static_cast<int>(y), c);
    // Pixel centre (x + 0.5) in original units maps to (x + 0.5) / 2^l - 0.5 in level units.
    const double scale = std::ldexp(1.0, -level);
    const double u = std::clamp((x + 0.5) * scale - 0.5, 0.0, img.width - 1.0);
    const double v = std::clamp((y + 0.5) * scale - 0.5, 0.0, img.height - 1.0);
    const int u0 = static_cast<int>(u);
    const int v0 = static_cast<int>(v);
    const int u1 = std::min(u0 + 1, img.width - 1);
    const int v1 = std::min(v0 + 1, img.height - 1);
    const float fu = static_cast<float>(u - u0);
    const float fv = static_cast<float>(v - v0);
    const float top = img.at(u0, v0, c) * (1.0f - fu) + img.at(u1, v0, c) * fu;
    const float bottom = img.at(u0, v1, c) * (1.0f - fu) + img.at(u1, v1, c) * fu;
    return top * (1.0f - fv) + bottom * fv;
}

void Foveator::pixel(int x, int y, const FocalFrame& frame, float* out) const {
    const double m = mahalanobis_distance({x + 0.5, y + 0.5}, frame);
    const auto w = blend_weights(m, config_.levels);
    for (int c = 0; c < channels_; ++c) out[c] = 0.0f;
    for (int l = 0; l < config_.levels; ++l) {
        if (w[l] < 1e-12) continue;
        for (int c = 0; c < channels_; ++c) out[c] += static_cast<float>(w[l]) * sample_level(l, x, y, c);
    }
}

Image Foveator::foveate(const FocalFrame& frame) const {
    if (frame.dims() != dims()) throw std::invalid_argument("focal frame dimensions do not match the image");
    Image out(width_, height_, channels_);
    float value[3];
    for (int y = 0; y < height_; ++y) {
        for (int x = 0; x < width_; ++x) {
            pixel(x, y, frame, value);
            for (int c = 0; c < channels_; ++c) {
                out.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(std::lround(value[c]), 0L, 255L));
            }
        }
    }
    return out;
}

std::array<double, 3> Foveator::mean_in_box(const BBox& box, const FocalFrame& frame) const {
    if (frame.dims() != dims()) throw std::invalid_argument("focal frame dimensions do not match the image");
    const BBox b = box.clipped(dims());
    const int x0 = static_cast<int>(std::floor(b.x_min));
    const int y0 = static_cast<int>(std::floor(b.y_min));
    const int x1 = std::min(static_cast<int>(std::ceil(b.x_max)), width_);
    const int y1 = std::min(static_cast<int>(std::ceil(b.y_max)), height_);
    std::array<double, 3> acc{0.0, 0.0, 0.0};
    float value[3];
    long count = 0;
    for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
            pixel(x, y, frame, value);
            for (int c = 0; c < channels_; ++c) acc[c] += value[c];
            ++count;
        }
    }
    if (count > 0) {
        for (double& v : acc) v /= static_cast<double>(count);
    }
    return acc;
}

Image foveate(const Image& image, const FocalFrame& frame, const FoveaConfig& config) {
    return Foveator(image, config).foveate(frame);
}

}  // namespace semba
