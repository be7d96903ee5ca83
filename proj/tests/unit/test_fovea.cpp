#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <numeric>

#include "semba/fovea.hpp"

using namespace semba;
namespace fs = std::filesystem;

namespace {

Image astronaut() { return read_image(fs::path(SEMBA_TEST_DATA) / "astronaut.png"); }

// Variance of the 4-neighbour Laplacian of gray(x, y) over the patch centred at (cx, cy).
template <typename Gray>
double laplacian_variance(Gray gray, int cx, int cy, int half) {
    double sum = 0.0, sq = 0.0;
    long n = 0;
    for (int y = cy - half + 1; y < cy + half - 1; ++y) {
        for (int x = cx - half + 1; x < cx + half - 1; ++x) {
            const double l = gray(x - 1, y) + gray(x + 1, y) + gray(x, y - 1) + gray(x, y + 1) - 4 * gray(x, y);
            sum += l;
            sq += l * l;
            ++n;
        }
    }
    const double mean = sum / n;
    return sq / n - mean * mean;
}

}  // namespace

TEST_CASE("mahalanobis distance examples") {
    const ImageDims dims{1000, 500};
    const FocalFrame f({400, 200}, dims, 0.1);
    CHECK(f.sigma_x() == doctest::Approx(100));
    CHECK(f.sigma_y() == doctest::Approx(50));
    CHECK(mahalanobis_distance({400, 200}, f) == 0.0);
    CHECK(mahalanobis_distance({500, 200}, f) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(mahalanobis_distance({700, 400}, f) == doctest::Approx(5.0).epsilon(1e-15));
    CHECK(mahalanobis_distance({100, 0}, f) == doctest::Approx(5.0).epsilon(1e-15));
}

TEST_CASE("distance rescales by 1/eta") {
    const ImageDims dims{640, 480};
    for (Point2 p : {Point2{0, 0}, Point2{17.5, 300}, Point2{639, 479}}) {
        const double base = mahalanobis_distance(p, FocalFrame({320, 240}, dims, 0.156)) * 0.156;
        for (double eta : {0.01, 0.05, 0.4, 3.0}) {
            const double scaled = mahalanobis_distance(p, FocalFrame({320, 240}, dims, eta)) * eta;
            CHECK(scaled == doctest::Approx(base).epsilon(1e-9));
        }
    }
}

TEST_CASE("distortion level examples") {
    const ImageDims dims{1680, 1050};
    FoveaConfig cfg;
    const FocalFrame f({300, 700}, dims, cfg.eta);
    CHECK(distortion_level(f.focal_point(), f, cfg) == 1);
    const double m_max = max_corner_distance(f);
    CHECK(m_max == doctest::Approx(mahalanobis_distance({1680, 0}, f)));
    CHECK(distortion_level({1680, 0}, f, cfg) == 7);
    CHECK(distortion_level_for_distance(0.5 * m_max, m_max, 7) == 4);
    CHECK(distortion_level_for_distance(-1.0, m_max, 7) == 1);
    CHECK(distortion_level_for_distance(2 * m_max, m_max, 7) == 7);
    // Every level is reachable and the map is monotone.
    int previous = 1;
    std::vector<int> seen(8, 0);
    for (int i = 0; i <= 7000; ++i) {
        const int d = distortion_level_for_distance(m_max * i / 7000.0, m_max, 7);
        CHECK(d >= previous);
        previous = d;
        seen[d] = 1;
    }
    CHECK(std::accumulate(seen.begin() + 1, seen.end(), 0) == 7);
}

TEST_CASE("config and frame validation") {
    FoveaConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.levels = 1;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = {};
    cfg.eta = 0.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = {};
    cfg.distortion_levels = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    CHECK_THROWS_AS(FocalFrame({-1, 0}, {10, 10}, 0.1), std::invalid_argument);
    const Image img(8, 8, 1, 10);
    const Foveator fov(img, FoveaConfig{});
    CHECK_THROWS_AS(fov.foveate(FocalFrame({2, 2}, {9, 8}, 0.1)), std::invalid_argument);
    CHECK_THROWS_AS(Foveator(Image{}, FoveaConfig{}), std::invalid_argument);
}

TEST_CASE("blend weights") {
    for (int L : {2, 3, 5, 8}) {
        const auto w0 = blend_weights(0.0, L);
        CHECK(w0[0] == 1.0);
        for (int l = 1; l < L; ++l) CHECK(w0[l] == 0.0);
        for (double m = 0.0; m < 40.0; m += 0.37) {
            const auto w = blend_weights(m, L);
            CHECK(std::abs(std::accumulate(w.begin(), w.end(), 0.0) - 1.0) < 1e-6);
            for (double v : w) CHECK(v >= 0.0);
        }
        // Weight drifts toward coarser levels with distance.
        double prev_centroid = 0.0;
        for (double m = 0.0; m < 40.0; m += 0.5) {
            const auto w = blend_weights(m, L);
            double c = 0.0;
            for (int l = 0; l < L; ++l) c += l * w[l];
            CHECK(c >= prev_centroid - 1e-12);
            prev_centroid = c;
        }
    }
}

TEST_CASE("gaussian blur keeps constants and mass") {
    FloatImage flat(31, 17, 3);
    for (auto& v : flat.data) v = 77.0f;
    const FloatImage b = gaussian_blur(flat, 3.0);
    for (float v : b.data) CHECK(v == doctest::Approx(77.0f).epsilon(1e-5));
    FloatImage spike(41, 41, 1);
    spike.at(20, 20, 0) = 1000.0f;
    const FloatImage s = gaussian_blur(spike, 2.0);
    CHECK(std::accumulate(s.data.begin(), s.data.end(), 0.0) == doctest::Approx(1000.0).epsilon(1e-4));
    CHECK(s.at(20, 20, 0) < 1000.0f);
    // second moment ~ sigma^2
    double m2 = 0.0;
    for (int y = 0; y < 41; ++y)
        for (int x = 0; x < 41; ++x) m2 += s.at(x, y, 0) * (x - 20) * (x - 20);
    CHECK(m2 / 1000.0 == doctest::Approx(4.0).epsilon(0.02));
}

TEST_CASE("image I/O round trips") {
    const fs::path dir = fs::temp_directory_path() / "semba_test_fovea_io";
    fs::create_directories(dir);
    Image rgb(13, 7, 3);
    for (std::size_t i = 0; i < rgb.pixels.size(); ++i) rgb.pixels[i] = static_cast<std::uint8_t>(i * 37);
    Image gray(9, 5, 1);
    for (std::size_t i = 0; i < gray.pixels.size(); ++i) gray.pixels[i] = static_cast<std::uint8_t>(i * 11);
    write_image(rgb, dir / "a.png");
    write_image(rgb, dir / "a.ppm");
    write_image(gray, dir / "g.png");
    write_image(gray, dir / "g.pgm");
    CHECK(read_image(dir / "a.png").pixels == rgb.pixels);
    CHECK(read_image(dir / "a.ppm").pixels == rgb.pixels);
    CHECK(read_image(dir / "g.png").pixels == gray.pixels);
    CHECK(read_image(dir / "g.pgm").pixels == gray.pixels);
    CHECK_THROWS(write_image(gray, dir / "bad.ppm"));
    CHECK_THROWS(read_image(dir / "missing.png"));
    fs::remove_all(dir);
}

TEST_CASE("focal pixel is the original pixel") {
    const Image img = astronaut();
    REQUIRE(img.width == 512);
    FoveaConfig cfg;
    const Foveator fov(img, cfg);
    for (Point2 f : {Point2{256.5, 256.5}, Point2{100.5, 400.5}, Point2{0.5, 0.5}}) {
        const FocalFrame frame(f, img.dims(), cfg.eta);
        const Image out = fov.foveate(frame);
        const int x = static_cast<int>(f.x), y = static_cast<int>(f.y);
        for (int c = 0; c < 3; ++c) CHECK(std::abs(out.at(x, y, c) - img.at(x, y, c)) <= 1);
    }
}

TEST_CASE("huge fovea is the identity") {
    const Image img = astronaut();
    FoveaConfig cfg;
    cfg.eta = 10.0;
    const Image out = foveate(img, FocalFrame({200, 300}, img.dims(), cfg.eta), cfg);
    int worst = 0;
    for (std::size_t i = 0; i < img.pixels.size(); ++i) worst = std::max(worst, std::abs(out.pixels[i] - img.pixels[i]));
    CHECK(worst <= 1);
}

TEST_CASE("foveation is idempotent near the focal point") {
    const Image img = astronaut();
    FoveaConfig cfg;
    const FocalFrame frame({256.5, 256.5}, img.dims(), cfg.eta);
    const Image once = foveate(img, frame, cfg);
    const Image twice = foveate(once, frame, cfg);
    for (int y = 250; y <= 262; ++y)
        for (int x = 250; x <= 262; ++x)
            for (int c = 0; c < 3; ++c) CHECK(std::abs(once.at(x, y, c) - twice.at(x, y, c)) <= 2);
}

TEST_CASE("sharpness falls along rays on stationary texture") {
    // Uniform noise has the same spectrum everywhere, so patch sharpness isolates the blur.
    Image img(512, 384, 3);
    Rng rng(17);
    std::uniform_int_distribution<int> px(0, 255);
    for (auto& v : img.pixels) v = static_cast<std::uint8_t>(px(rng));
    FoveaConfig cfg;
    const Foveator fov(img, cfg);
    const int half = 32;
    for (Point2 f : {Point2{256, 192}, Point2{120, 100}, Point2{400, 300}}) {
        // unquantised output: 8-bit rounding leaves a noise floor once the periphery is flat
        const FocalFrame frame(f, img.dims(), cfg.eta);
        FloatImage out(img.width, img.height, 3);
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x) fov.pixel(x, y, frame, &out.at(x, y, 0));
        auto gray = [&](int x, int y) { return (out.at(x, y, 0) + out.at(x, y, 1) + out.at(x, y, 2)) / 3.0; };
        int violations = 0;
        for (int dir = 0; dir < 8; ++dir) {
            const double a = dir * M_PI / 4;
            double prev = 1e300;
            for (int step = 0;; ++step) {
                const int cx = static_cast<int>(std::lround(f.x + std::cos(a) * 24 * step));
                const int cy = static_cast<int>(std::lround(f.y + std::sin(a) * 24 * step));
                if (cx - half < 1 || cy - half < 1 || cx + half > img.width - 1 || cy + half > img.height - 1) break;
                const double s = laplacian_variance(gray, cx, cy, half);
                if (s > prev) {
                    ++violations;
                    MESSAGE("focal " << f.x << "," << f.y << " ray " << dir << " step " << step << ": " << s << " > " << prev);
                }
                prev = s;
            }
        }
        CHECK(violations == 0);
    }
}

TEST_CASE("mean in box") {
    Image img(20, 10, 3, 0);
    for (int y = 0; y < 10; ++y)
        for (int x = 10; x < 20; ++x) img.at(x, y, 0) = 200;
    FoveaConfig cfg;
    cfg.eta = 50.0;
    const Foveator fov(img, cfg);
    const FocalFrame frame({5, 5}, img.dims(), cfg.eta);
    const auto left = fov.mean_in_box({0, 0, 10, 10}, frame);
    const auto right = fov.mean_in_box({10, 0, 20, 10}, frame);
    CHECK(left[0] < 2.0);
    CHECK(right[0] > 198.0);
    CHECK(right[1] == doctest::Approx(0.0).epsilon(1e-6));
}
