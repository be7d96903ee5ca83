#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "semba/detections.hpp"

using namespace semba;
namespace fs = std::filesystem;

namespace {

std::set<Cell> as_set(const std::vector<Cell>& v) { return {v.begin(), v.end()}; }

// Intersection area of the box with every cell rectangle, enumerated cell by cell.
std::set<Cell> area_oracle(const BBox& b, GridDims g, ImageDims im) {
    std::set<Cell> out;
    const double cw = static_cast<double>(im.width) / g.cols;
    const double ch = static_cast<double>(im.height) / g.rows;
    for (int r = 0; r < g.rows; ++r) {
        for (int c = 0; c < g.cols; ++c) {
            const double w = std::min(b.x_max, (c + 1) * cw) - std::max(b.x_min, c * cw);
            const double h = std::min(b.y_max, (r + 1) * ch) - std::max(b.y_min, r * ch);
            if (w > 0 && h > 0) out.insert({r, c});
        }
    }
    return out;
}

// Integer boxes on an image whose cells are whole pixels: mark covered pixels, collect cells.
std::set<Cell> raster_oracle(int x0, int y0, int x1, int y1, GridDims g, ImageDims im) {
    std::set<Cell> out;
    const int cw = im.width / g.cols, ch = im.height / g.rows;
    for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) out.insert({y / ch, x / cw});
    return out;
}

fs::path temp_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

}  // namespace

TEST_CASE("overlapped cells examples") {
    const GridDims g{20, 32};
    const ImageDims im{1680, 1050};
    CHECK(overlapped_cells({0, 0, 1680, 1050}, g, im).size() == 640u);
    const auto one = overlapped_cells({60, 60, 90, 90}, g, im);
    REQUIRE(one.size() == 1u);
    CHECK(one[0] == Cell{1, 1});
    for (int k = 1; k < 32; ++k) {
        const double x = 52.5 * k;
        const BBox b{x - 3, 60, x + 3, 90};
        CHECK(as_set(overlapped_cells(b, g, im)) == area_oracle(b, g, im));
        CHECK(overlapped_cells(b, g, im).size() == 2u);
    }
    // touching a boundary is zero area
    CHECK(overlapped_cells({52.5, 60, 100, 90}, g, im).size() == 1u);
    CHECK(overlapped_cells({5, 5, 5, 10}, g, im).empty());
}

TEST_CASE("overlapped cells match brute-force oracles on random boxes") {
    Rng rng(99);
    const GridDims g{20, 32};
    const ImageDims im{1680, 1050};
    std::uniform_real_distribution<double> ux(0, 1680), uy(0, 1050);
    int mismatches = 0;
    for (int t = 0; t < 5000; ++t) {
        double a = ux(rng), b = ux(rng), c = uy(rng), d = uy(rng);
        if (t % 5 == 0) {  // snap some edges onto cell boundaries
            a = 52.5 * std::round(a / 52.5);
            c = 52.5 * std::round(c / 52.5);
        }
        const BBox box{std::min(a, b), std::min(c, d), std::max(a, b), std::max(c, d)};
        if (!box.valid()) continue;
        mismatches += as_set(overlapped_cells(box, g, im)) != area_oracle(box, g, im);
    }
    CHECK(mismatches == 0);

    const GridDims g2{20, 32};
    const ImageDims im2{640, 400};
    std::uniform_int_distribution<int> px(0, 640), py(0, 400);
    mismatches = 0;
    for (int t = 0; t < 2000; ++t) {
        int x0 = px(rng), x1 = px(rng), y0 = py(rng), y1 = py(rng);
        if (x0 > x1) std::swap(x0, x1);
        if (y0 > y1) std::swap(y0, y1);
        if (x0 == x1 || y0 == y1) continue;
        mismatches += as_set(overlapped_cells({double(x0), double(y0), double(x1), double(y1)}, g2, im2)) !=
                      raster_oracle(x0, y0, x1, y1, g2, im2);
    }
    CHECK(mismatches == 0);
}

TEST_CASE("distance level from the box centre") {
    const ImageDims im{1680, 1050};
    FoveaConfig cfg;
    const FocalFrame f({840, 525}, im, cfg.eta);
    Detection d;
    d.bbox = {800, 500, 880, 550};
    CHECK(assign_distance_level(d, f, cfg).distance_level == 1);
    d.bbox = {1640, 1010, 1680, 1050};
    const double m_corner = mahalanobis_distance(d.bbox.center(), f);
    const double m_max = max_corner_distance(f);
    CHECK(assign_distance_level(d, f, cfg).distance_level ==
          distortion_level_for_distance(m_corner, m_max, cfg.distortion_levels));
    d.bbox = {1660, 1030, 1680, 1050};
    CHECK(assign_distance_level(d, f, cfg).distance_level == 7);
    // centre at half of m_max along the x axis
    const double dx = 0.5 * m_max * f.sigma_x();
    d.bbox = {840 + dx - 10, 515, 840 + dx + 10, 535};
    CHECK(assign_distance_level(d, f, cfg).distance_level == 4);
}

TEST_CASE("score completion") {
    const auto full = complete_scores({{0, 0.6}, {2, 0.2}}, 4);
    CHECK(full[0] == doctest::Approx(0.6));
    CHECK(full[1] == doctest::Approx(0.1));
    CHECK(full[2] == doctest::Approx(0.2));
    CHECK(full[3] == doctest::Approx(0.1));
    const auto over = complete_scores({{0, 0.9}, {1, 0.9}}, 3);
    CHECK(over[0] == doctest::Approx(0.5));
    CHECK(over[2] == 0.0);
    CHECK_THROWS(complete_scores({{5, 0.1}}, 3));
    CHECK_THROWS(complete_scores({{0, 1.5}}, 3));
}

TEST_CASE("detection JSON errors name the field") {
    auto bad = [](const std::string& text) {
        try {
            detection_from_json(nlohmann::json::parse(text), 3);
        } catch (const FormatError& e) {
            return std::string(e.what());
        }
        return std::string();
    };
    CHECK(bad(R"({"scores":{"0":1}})").find("bbox") != std::string::npos);
    CHECK(bad(R"({"bbox":[0,0,1],"scores":{"0":1}})").find("bbox") != std::string::npos);
    CHECK(bad(R"({"bbox":[5,0,1,1],"scores":{"0":1}})").find("bbox") != std::string::npos);
    CHECK(bad(R"({"bbox":[0,0,1,1]})").find("scores") != std::string::npos);
    CHECK(bad(R"({"bbox":[0,0,1,1],"scores":{"x":1}})").find("scores") != std::string::npos);
    CHECK(bad(R"({"bbox":[0,0,1,1],"scores":{"0":1},"true_class":9})").find("true_class") != std::string::npos);
    CHECK(bad(R"({"bbox":[0,0,1,1],"scores":{"1":0.5}})").empty());
}

TEST_CASE("malformed log lines report line number and field") {
    const fs::path dir = temp_dir("semba_test_det_log");
    {
        std::ofstream out(dir / "bad.jsonl");
        out << R"({"image_id":"a","fixation_cell":[0,0],"detections":[]})" << "\n\n";
        out << R"({"image_id":"a","fixation_cell":[0],"detections":[]})" << "\n";
    }
    try {
        read_detection_log(dir / "bad.jsonl", 3);
        FAIL("expected a FormatError");
    } catch (const FormatError& e) {
        const std::string what = e.what();
        CHECK(what.find("line 3") != std::string::npos);
        CHECK(what.find("fixation_cell") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_record_line("{not json", 3, 7), FormatError);
    fs::remove_all(dir);
}

TEST_CASE("replay lookup, determinism and round trip") {
    const fs::path dir = temp_dir("semba_test_det_replay");
    Rng rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<DetectionRecord> records;
    for (int i = 0; i < 40; ++i) {
        DetectionRecord r;
        r.image_id = "img" + std::to_string(i % 4);
        r.fixation_cell = {i % 20, (3 * i) % 32};
        r.focal_point = Point2{u(rng) * 1680, u(rng) * 1050};
        r.image_dims = ImageDims{1680, 1050};
        for (int j = 0; j < 1 + i % 3; ++j) {
            Detection d;
            d.bbox = {10.0 * j, 20.0, 10.0 * j + 33.3, 90.1};
            std::vector<double> s(5);
            double tot = 0.0;
            for (auto& v : s) tot += (v = u(rng));
            for (auto& v : s) v /= tot;
            d.scores = s;
            if (j == 0) d.true_class = i % 5;
            r.detections.push_back(d);
        }
        records.push_back(r);
    }
    write_detection_log(dir / "log.jsonl", records);
    const auto back = read_detection_log(dir / "log.jsonl", 5);
    REQUIRE(back.size() == records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        CHECK(back[i].image_id == records[i].image_id);
        CHECK(back[i].fixation_cell == records[i].fixation_cell);
        REQUIRE(back[i].detections.size() == records[i].detections.size());
        for (std::size_t j = 0; j < records[i].detections.size(); ++j) {
            const auto& a = records[i].detections[j];
            const auto& b = back[i].detections[j];
            CHECK(a.bbox == b.bbox);
            CHECK(a.true_class == b.true_class);
            for (std::size_t k = 0; k < 5; ++k) CHECK(std::abs(a.scores[k] - b.scores[k]) < 1e-9);
        }
    }

    auto replay = load_detection_log(dir / "log.jsonl", 5);
    FixationQuery q;
    q.image_id = "img1";
    q.dims = {1680, 1050};
    q.cell = {1, 3};  // record i=1
    const GridDims g{20, 32};
    q.focal_point = cell_center(q.cell, g, q.dims);
    const auto hit = replay->detect(q);
    CHECK(hit.size() == records[1].detections.size());
    CHECK(hit[0].source_fixation == q.focal_point);
    q.cell = {19, 31};
    CHECK(replay->detect(q).empty());
    q.image_id = "nope";
    CHECK(replay->detect(q).empty());

    auto again = load_detection_log(dir / "log.jsonl", 5);
    for (int i = 0; i < 40; ++i) {
        FixationQuery qi;
        qi.image_id = records[i].image_id;
        qi.cell = records[i].fixation_cell;
        qi.dims = {1680, 1050};
        const auto a = replay->detect(qi);
        const auto b = again->detect(qi);
        REQUIRE(a.size() == b.size());
        for (std::size_t j = 0; j < a.size(); ++j) CHECK(a[j].scores == b[j].scores);
        const auto c = replay->detect(qi);
        for (std::size_t j = 0; j < a.size(); ++j) CHECK(a[j].scores == c[j].scores);
    }
    fs::remove_all(dir);
}

TEST_CASE("file order is fusion order for a shared key") {
    std::vector<DetectionRecord> records(2);
    for (int i = 0; i < 2; ++i) {
        records[i].image_id = "x";
        records[i].fixation_cell = {2, 2};
        Detection d;
        d.bbox = {0, 0, 10, 10.0 + i};
        d.scores = {0.5, 0.5};
        records[i].detections.push_back(d);
    }
    ReplayDetector r(records);
    CHECK(r.key_count() == 1u);
    FixationQuery q;
    q.image_id = "x";
    q.cell = {2, 2};
    q.dims = {100, 100};
    const auto out = r.detect(q);
    REQUIRE(out.size() == 2u);
    CHECK(out[0].bbox.y_max == 10);
    CHECK(out[1].bbox.y_max == 11);
}
