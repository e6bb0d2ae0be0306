#pragma once

#include <functional>
#include <string>

#include "dcesynth/reader.hpp"

namespace dcesynth::reader {

/// Serves `service` over HTTP until stop_reader_server() is called. Port 0
/// binds an ephemeral port; `on_listen` receives the bound port before the
/// accept loop starts.
void serve(ReaderService& service, const std::string& host, int port, const std::function<void(int)>& on_listen = {});
void stop_reader_server();

}  // namespace dcesynth::reader
