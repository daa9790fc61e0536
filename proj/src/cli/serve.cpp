#include <sys/socket.h>

#include <thread>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "tracelm/cli.hpp"
#include "tracelm/error.hpp"

namespace tracelm {

struct StaticServer::Impl {
    httplib::Server server;
    std::thread thread;
};

StaticServer::StaticServer() : impl_(std::make_unique<Impl>()) {}

StaticServer::~StaticServer() { stop(); }

void StaticServer::start(const std::filesystem::path& root, const std::filesystem::path& viewer,
                         const std::string& host, int port) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(root)) throw LoadError("not a directory: " + root.string());
    if (!viewer.empty() && !fs::is_directory(viewer)) throw LoadError("not a directory: " + viewer.string());

    auto& srv = impl_->server;
    // httplib defaults to SO_REUSEPORT, which would let two servers share a port.
    srv.set_socket_options([](socket_t sock) {
        int yes = 1;
        setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
    });
    srv.set_file_extension_and_mimetype_mapping("json", "application/json");
    srv.set_file_extension_and_mimetype_mapping("js", "text/javascript");
    srv.set_file_extension_and_mimetype_mapping("mjs", "text/javascript");
    srv.set_file_extension_and_mimetype_mapping("wasm", "application/wasm");
    srv.set_mount_point("/", root.string());
    if (!viewer.empty()) srv.set_mount_point("/", viewer.string());
    srv.set_logger([](const httplib::Request& req, const httplib::Response& res) {
        spdlog::info("{} {} {}", req.method, req.path, res.status);
    });

    if (port == 0) {
        port_ = srv.bind_to_any_port(host);
        if (port_ < 0) throw LoadError("cannot bind " + host);
    } else {
        if (!srv.bind_to_port(host, port)) {
            throw LoadError("cannot bind " + host + ":" + std::to_string(port) + " (port in use?)");
        }
        port_ = port;
    }
    impl_->thread = std::thread([&srv] { srv.listen_after_bind(); });
    srv.wait_until_ready();
}

void StaticServer::stop() {
    if (!impl_) return;
    if (impl_->thread.joinable()) {
        impl_->server.stop();
        impl_->thread.join();
    }
}

}  // namespace tracelm
