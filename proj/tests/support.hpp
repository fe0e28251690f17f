#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <thread>

#include <httplib.h>

#include "paravul/random.hpp"

namespace testing {

/// Fresh directory under the system temp location, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("paravul-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

/// Local HTTP server on an ephemeral port, serving POST handlers.
class LocalServer {
public:
    LocalServer() = default;
    ~LocalServer() { stop(); }
    LocalServer(const LocalServer&) = delete;
    LocalServer& operator=(const LocalServer&) = delete;

    httplib::Server& server() { return server_; }

    void start() {
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    void stop() {
        if (thread_.joinable()) {
            server_.stop();
            thread_.join();
        }
    }
    std::string url(const std::string& path) const { return "http://127.0.0.1:" + std::to_string(port_) + path; }

private:
    httplib::Server server_;
    std::thread thread_;
    int port_ = 0;
};

/// Random printable text with code-ish structure: comments, strings, blank lines.
inline std::string random_source(paravul::Rng& rng, std::size_t pieces) {
    static const char* parts[] = {"a", "b;", " ", "\t", "\n", "\n\n", "// c", "/* d */", "/*\n*/", "\"s\"",
                                  "'q'", "\"//x\"", "'/*'", "x = 1;", "f();", "\\", "\"e\\\"f\"", "{", "}", "*/"};
    std::string out;
    for (std::size_t i = 0; i < pieces; ++i) {
        out += parts[rng.below(std::size(parts))];
    }
    return out;
}

}  // namespace testing
