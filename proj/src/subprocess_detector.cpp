#include "semba/subprocess_detector.hpp"

#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <filesystem>
#include <mutex>

#include "semba/image.hpp"

namespace semba {

namespace {

void ignore_sigpipe_once() {
    static std::once_flag flag;
    std::call_once(flag, [] { ::signal(SIGPIPE, SIG_IGN); });
}

std::string truncate_payload(const std::string& s) { return s.size() > 4096 ? s.substr(0, 4096) + "..." : s; }

}  // namespace

SubprocessDetector::SubprocessDetector(SubprocessConfig config) : config_(std::move(config)) {
    if (config_.command.empty()) throw std::invalid_argument("subprocess detector needs a command");
    ignore_sigpipe_once();
    int in_pipe[2];
    int out_pipe[2];
    if (::pipe(in_pipe) != 0) throw std::runtime_error(std::string("pipe: ") + std::strerror(errno));
    if (::pipe(out_pipe) != 0) {
        ::close(in_pipe[0]);
        ::close(in_pipe[1]);
        throw std::runtime_error(std::string("pipe: ") + std::strerror(errno));
    }
    pid_ = ::fork();
    if (pid_ < 0) throw std::runtime_error(std::string("fork: ") + std::strerror(errno));
    if (pid_ == 0) {
        ::setpgid(0, 0);  // own group, so shutdown reaches whatever the shell spawns
        ::dup2(in_pipe[0], STDIN_FILENO);
        ::dup2(out_pipe[1], STDOUT_FILENO);
        ::close(in_pipe[0]);
        ::close(in_pipe[1]);
        ::close(out_pipe[0]);
        ::close(out_pipe[1]);
        ::execl("/bin/sh", "sh", "-c", config_.command.c_str(), static_cast<char*>(nullptr));
        ::_exit(127);
    }
    ::setpgid(pid_, pid_);
    ::close(in_pipe[0]);
    ::close(out_pipe[1]);
    to_child_ = in_pipe[1];
    from_child_ = out_pipe[0];
}

SubprocessDetector::~SubprocessDetector() { shutdown(); }

void SubprocessDetector::shutdown() {
    if (to_child_ >= 0) ::close(to_child_);
    if (from_child_ >= 0) ::close(from_child_);
    to_child_ = from_child_ = -1;
    if (pid_ > 0) {
        int status = 0;
        // Give the child a moment to exit on EOF, then make sure it is gone.
        for (int i = 0; i < 50; ++i) {
            if (::waitpid(pid_, &status, WNOHANG) == pid_) {
                ::kill(-pid_, SIGKILL);
                pid_ = -1;
                return;
            }
            ::usleep(2000);
        }
        ::kill(-pid_, SIGKILL);
        ::waitpid(pid_, &status, 0);
        pid_ = -1;
    }
}

void SubprocessDetector::write_all(const std::string& data) {
    std::size_t written = 0;
    while (written < data.size()) {
        const ssize_t n = ::write(to_child_, data.data() + written, data.size() - written);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw ProtocolError("detector process closed its input (premature exit?)", truncate_payload(data));
        }
        written += static_cast<std::size_t>(n);
    }
}

std::string SubprocessDetector::read_line() {
    using clock = std::chrono::steady_clock;
    const auto deadline = clock::now() + config_.timeout;
    while (true) {
        const auto nl = buffer_.find('\n');
        if (nl != std::string::npos) {
            std::string line = buffer_.substr(0, nl);
            buffer_.erase(0, nl + 1);
            return line;
        }
        const auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - clock::now());
        if (remaining.count() <= 0) {
            throw ProtocolError("detector response timed out after " + std::to_string(config_.timeout.count()) + " ms",
                                truncate_payload(buffer_));
        }
        pollfd pfd{from_child_, POLLIN, 0};
        const int ready = ::poll(&pfd, 1, static_cast<int>(remaining.count()));
        if (ready < 0) {
            if (errno == EINTR) continue;
            throw std::runtime_error(std::string("poll: ") + std::strerror(errno));
        }
        if (ready == 0) continue;
        char chunk[4096];
        const ssize_t n = ::read(from_child_, chunk, sizeof(chunk));
        if (n < 0) {
            if (errno == EINTR) continue;
            throw std::runtime_error(std::string("read: ") + std::strerror(errno));
        }
        if (n == 0) throw ProtocolError("detector process exited before responding", truncate_payload(buffer_));
        buffer_.append(chunk, static_cast<std::size_t>(n));
    }
}

std::string SubprocessDetector::request_line(const std::filesystem::path& image_path, Point2 focal_point, double eta) {
    nlohmann::json req = {{"type", "detect"},
                          {"image_path", image_path.string()},
                          {"focal_point", {focal_point.x, focal_point.y}},
                          {"eta", eta}};
    return req.dump();
}

std::vector<Detection> SubprocessDetector::parse_response(const std::string& line, int class_count) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception&) {
        throw ProtocolError("detector response is not valid JSON", truncate_payload(line));
    }
    if (!j.is_object() || j.value("type", "") != "detections") {
        throw ProtocolError("detector response must have type \"detections\"", truncate_payload(line));
    }
    if (!j.contains("detections") || !j["detections"].is_array()) {
        throw ProtocolError("detector response lacks a detections array", truncate_payload(line));
    }
    std::vector<Detection> out;
    for (const auto& d : j["detections"]) {
        try {
            out.push_back(detection_from_json(d, class_count));
        } catch (const FormatError& e) {
            throw ProtocolError(std::string("malformed detection: ") + e.what(), truncate_payload(line));
        }
    }
    return out;
}

std::vector<Detection> SubprocessDetector::detect(const FixationQuery& query) {
    if (to_child_ < 0) throw ProtocolError("detector process is not running", "");
    std::filesystem::path sent_path = query.image_path;
    std::filesystem::path temp_path;
    if (config_.prefoveate) {
        FoveaConfig fovea = config_.fovea;
        fovea.eta = query.eta;
        const Image source = read_image(query.image_path);
        const Image foveated = foveate(source, FocalFrame(query.focal_point, source.dims(), query.eta), fovea);
        temp_path = std::filesystem::temp_directory_path() /
                    ("semba_fov_" + std::to_string(::getpid()) + "_" + std::to_string(pid_) + "_" +
                     std::to_string(temp_counter_++) + ".png");
        write_image(foveated, temp_path);
        sent_path = temp_path;
    }
    std::vector<Detection> dets;
    try {
        write_all(request_line(sent_path, query.focal_point, query.eta) + "\n");
        dets = parse_response(read_line(), config_.class_count);
    } catch (const ProtocolError&) {
        // The channel is out of sync after any violation; later calls must not read stale replies.
        if (!temp_path.empty()) std::filesystem::remove(temp_path);
        shutdown();
        throw;
    }
    if (!temp_path.empty()) std::filesystem::remove(temp_path);
    std::vector<Detection> out;
    for (auto& d : dets) {
        d.bbox = d.bbox.clipped(query.dims);
        if (!d.bbox.valid()) continue;
        d.source_fixation = query.focal_point;
        out.push_back(std::move(d));
    }
    return out;
}

std::unique_ptr<DetectorAdapter> subprocess_detector(SubprocessConfig config) {
    return std::make_unique<SubprocessDetector>(std::move(config));
}

}  // namespace semba
