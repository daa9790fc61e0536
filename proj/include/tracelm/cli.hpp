#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

namespace tracelm {

/// Process exit statuses shared by every subcommand.
enum ExitCode : int {
    kExitOk = 0,
    kExitFindings = 1,  // validation violations or diff differences
    kExitUsage = 2,     // bad arguments, unreadable or malformed inputs, port in use
    kExitPartial = 3,   // generate finished some jobs but not all
};

/// Runs `trace <subcommand> ...`. args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Static file server over a trace root, optionally layered over a viewer
/// bundle (trace root files win on a path collision). GET/HEAD only.
class StaticServer {
public:
    StaticServer();
    ~StaticServer();
    StaticServer(const StaticServer&) = delete;
    StaticServer& operator=(const StaticServer&) = delete;

    /// Binds and starts serving on a background thread. Port 0 picks a free
    /// port. Throws LoadError when a directory is missing or the port is taken.
    void start(const std::filesystem::path& root, const std::filesystem::path& viewer, const std::string& host,
               int port);
    int port() const noexcept { return port_; }
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    int port_ = 0;
};

}  // namespace tracelm
