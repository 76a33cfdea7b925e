#pragma once

#include "abr/render.hpp"

#include <filesystem>
#include <memory>
#include <string>
#include <thread>

namespace httplib {
class Server;
}

namespace abr::service {

struct Config {
  std::filesystem::path libraryRoot;  // empty disables the /assets endpoints
  std::filesystem::path baseDir = ".";  // resolves relative data and scene paths
  int threads = 0;                      // HTTP worker threads; 0 lets httplib decide
  std::string corsOrigin = "*";
};

/// Library root from ABR_LIBRARY_ROOT and CORS origin from ABR_CORS_ORIGIN.
Config config_from_env();

void install_routes(httplib::Server& server, const Config& config);

/// Points on a three-turn helix with unit tangent vectors; the glyph preview field.
scene::DataObject helix_field(int count = 48);
/// Renders `glyph` (already rotated into canonical orientation) on the helix field.
render::RenderResult render_glyph_preview(const mesh::TriMesh& glyph, int width, int height, int threads = 0);

class Server {
 public:
  explicit Server(Config config);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds (port 0 picks a free port) and serves on a background thread.
  int start(const std::string& host, int port);
  /// Binds and serves on the calling thread until stop().
  void run(const std::string& host, int port);
  void stop();
  int port() const { return port_; }

 private:
  Config config_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  int port_ = 0;
};

}  // namespace abr::service
