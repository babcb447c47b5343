#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

namespace stagematte::pipeline {

struct ServerOptions {
    std::filesystem::path manifest;
    std::optional<std::filesystem::path> predictions;  // <dir>/<id>.png
    std::optional<std::filesystem::path> static_dir;
    std::string host = "127.0.0.1";
    int port = 8080;  // 0 picks a free port
};

/// Annotation API over a dataset manifest:
///   GET /api/samples
///   GET /api/samples/{id}/layer/{image|background|prediction|diff}
///   GET|PUT /api/samples/{id}/scribbles
class AnnotationServer {
public:
    explicit AnnotationServer(ServerOptions options);
    ~AnnotationServer();
    AnnotationServer(const AnnotationServer&) = delete;
    AnnotationServer& operator=(const AnnotationServer&) = delete;

    /// Binds the socket and returns the bound port.
    int bind();
    /// Serves until `stop`; call `bind` first.
    void run();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace stagematte::pipeline
