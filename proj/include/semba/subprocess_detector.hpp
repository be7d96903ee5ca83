#pragma once

#include <chrono>
#include <memory>
#include <stdexcept>
#include <string>

#include "semba/detections.hpp"
#include "semba/fovea.hpp"

namespace semba {

/// Protocol violation by an external detector. `payload` holds the raw offending bytes.
class ProtocolError : public std::runtime_error {
public:
    ProtocolError(const std::string& what, std::string payload)
        : std::runtime_error(what + (payload.empty() ? "" : " [payload: " + payload + "]")), payload_(std::move(payload)) {}
    const std::string& payload() const { return payload_; }

private:
    std::string payload_;
};

struct SubprocessConfig {
    std::string command;  // run through /bin/sh -c
    std::chrono::milliseconds timeout{30000};
    bool prefoveate = false;  // send a foveated temporary PNG instead of the source image path
    FoveaConfig fovea;
    int class_count = 80;
};

/// External detector speaking newline-delimited JSON on stdin/stdout:
///   request  {"type":"detect","image_path":...,"focal_point":[x,y],"eta":...}
///   response {"type":"detections","detections":[{bbox, scores}, ...]}
/// One request in flight at a time; each detect() consumes exactly one response line.
class SubprocessDetector final : public DetectorAdapter {
public:
    explicit SubprocessDetector(SubprocessConfig config);
    ~SubprocessDetector() override;

    SubprocessDetector(const SubprocessDetector&) = delete;
    SubprocessDetector& operator=(const SubprocessDetector&) = delete;

    std::vector<Detection> detect(const FixationQuery& query) override;

    /// Raw request line (without newline) that detect() would send.
    static std::string request_line(const std::filesystem::path& image_path, Point2 focal_point, double eta);

    /// Parses one response line; throws ProtocolError with the line attached.
    static std::vector<Detection> parse_response(const std::string& line, int class_count);

private:
    void write_all(const std::string& data);
    std::string read_line();
    void shutdown();

    SubprocessConfig config_;
    int pid_ = -1;
    int to_child_ = -1;
    int from_child_ = -1;
    std::string buffer_;
    int temp_counter_ = 0;
};

std::unique_ptr<DetectorAdapter> subprocess_detector(SubprocessConfig config);

}  // namespace semba
