#include "reader_server.hpp"

#include <atomic>
#include <mutex>

#include "httplib.h"

namespace dcesynth::reader {

namespace {

std::mutex g_mutex;
httplib::Server* g_server = nullptr;

}  // namespace

void serve(ReaderService& service, const std::string& host, int port, const std::function<void(int)>& on_listen) {
  httplib::Server server;
  auto handler = [&service](const httplib::Request& req, httplib::Response& res) {
    const auto out = route(service, req.method, req.path, req.body);
    res.status = out.status;
    res.set_content(out.body, out.content_type);
    res.set_header("Cache-Control", "no-store");
  };
  server.Get(".*", handler);
  server.Post(".*", handler);

  int bound = port;
  if (port == 0) {
    bound = server.bind_to_any_port(host);
  } else if (!server.bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) throw IoError("cannot bind " + host + ":" + std::to_string(port));
  {
    std::lock_guard lock(g_mutex);
    g_server = &server;
  }
  if (on_listen) on_listen(bound);
  server.listen_after_bind();
  std::lock_guard lock(g_mutex);
  g_server = nullptr;
}

void stop_reader_server() {
  std::lock_guard lock(g_mutex);
  if (g_server != nullptr) g_server->stop();
}

}  // namespace dcesynth::reader
