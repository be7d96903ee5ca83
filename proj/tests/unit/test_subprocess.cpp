#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>

#include "semba/subprocess_detector.hpp"

using namespace semba;
namespace fs = std::filesystem;

namespace {

SubprocessConfig fake(const std::string& mode, int timeout_ms = 5000) {
    SubprocessConfig c;
    c.command = "python3 " + (fs::path(SEMBA_TEST_DATA) / "fake_detector.py").string() + " " + mode + " 3";
    c.timeout = std::chrono::milliseconds(timeout_ms);
    c.class_count = 3;
    return c;
}

FixationQuery query(Point2 p) {
    FixationQuery q;
    q.image_id = "astro";
    q.image_path = fs::path(SEMBA_TEST_DATA) / "astronaut.png";
    q.dims = {512, 512};
    q.focal_point = p;
    q.eta = 0.156;
    return q;
}

}  // namespace

TEST_CASE("request line shape") {
    const auto j = nlohmann::json::parse(SubprocessDetector::request_line("/x/y.png", {10.5, 20}, 0.2));
    CHECK(j["type"] == "detect");
    CHECK(j["image_path"] == "/x/y.png");
    CHECK(j["focal_point"][0] == 10.5);
    CHECK(j["focal_point"][1] == 20.0);
    CHECK(j["eta"] == 0.2);
}

TEST_CASE("response parsing") {
    const auto dets = SubprocessDetector::parse_response(
        R"({"type":"detections","detections":[{"bbox":[1,2,3,4],"scores":{"1":0.8}}]})", 3);
    REQUIRE(dets.size() == 1u);
    CHECK(dets[0].scores[1] == doctest::Approx(0.8));
    CHECK(dets[0].scores[0] == doctest::Approx(0.1));
    CHECK_THROWS_AS(SubprocessDetector::parse_response("nope", 3), ProtocolError);
    CHECK_THROWS_AS(SubprocessDetector::parse_response(R"({"type":"x"})", 3), ProtocolError);
    CHECK_THROWS_AS(SubprocessDetector::parse_response(R"({"type":"detections"})", 3), ProtocolError);
    try {
        SubprocessDetector::parse_response(R"({"type":"detections","detections":[{"bbox":[3,3,1,1],"scores":{}}]})", 3);
        FAIL("expected ProtocolError");
    } catch (const ProtocolError& e) {
        CHECK(e.payload().find("[3,3,1,1]") != std::string::npos);
    }
}

TEST_CASE("one response per request, in order") {
    SubprocessDetector det(fake("normal"));
    for (int i = 0; i < 6; ++i) {
        const auto out = det.detect(query({100.0 + i, 200.0}));
        REQUIRE(out.size() == 1u);
        CHECK(out[0].scores[i % 3] == doctest::Approx(0.7));
        CHECK(out[0].bbox.center().x == doctest::Approx(100.0 + i));
        CHECK(out[0].source_fixation == Point2{100.0 + i, 200.0});
    }
}

TEST_CASE("boxes are clipped to the image") {
    SubprocessDetector det(fake("normal"));
    const auto out = det.detect(query({2.0, 505.0}));
    REQUIRE(out.size() == 1u);
    CHECK(out[0].bbox.x_min == 0.0);
    CHECK(out[0].bbox.y_max == 512.0);
}

TEST_CASE("protocol violations carry the payload") {
    {
        SubprocessDetector det(fake("garbage"));
        try {
            det.detect(query({10, 10}));
            FAIL("expected ProtocolError");
        } catch (const ProtocolError& e) {
            CHECK(e.payload().find("this is not json") != std::string::npos);
        }
        // channel is closed after a violation
        CHECK_THROWS_AS(det.detect(query({10, 10})), ProtocolError);
    }
    {
        SubprocessDetector det(fake("badtype"));
        try {
            det.detect(query({10, 10}));
            FAIL("expected ProtocolError");
        } catch (const ProtocolError& e) {
            CHECK(e.payload().find("hello") != std::string::npos);
        }
    }
}

TEST_CASE("timeout") {
    SubprocessDetector det(fake("sleep", 400));
    const auto t0 = std::chrono::steady_clock::now();
    CHECK_THROWS_AS(det.detect(query({10, 10})), ProtocolError);
    const auto waited = std::chrono::steady_clock::now() - t0;
    CHECK(waited >= std::chrono::milliseconds(350));
    CHECK(waited < std::chrono::milliseconds(5000));
}

TEST_CASE("premature exit") {
    SubprocessDetector det(fake("exit"));
    try {
        det.detect(query({10, 10}));
        FAIL("expected ProtocolError");
    } catch (const ProtocolError& e) {
        CHECK(std::string(e.what()).find("exit") != std::string::npos);
    }
}

TEST_CASE("prefoveated requests point at a readable image") {
    auto cfg = fake("stat");
    cfg.prefoveate = true;
    SubprocessDetector det(cfg);
    const auto out = det.detect(query({256, 256}));
    REQUIRE(out.size() == 1u);
    CHECK(out[0].scores[0] == doctest::Approx(0.9));
}

TEST_CASE("empty command is rejected") {
    SubprocessConfig c;
    CHECK_THROWS_AS(SubprocessDetector{c}, std::invalid_argument);
}
