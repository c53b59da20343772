// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace smoj::cli {

struct ServeOptions {
  std::string address = "127.0.0.1";
  unsigned short port = 8080;  // 0 picks a free port
  std::vector<std::uint8_t> asset_bytes;
  std::size_t channels = 16;
  std::filesystem::path static_dir;  // empty: built-in placeholder page
};

// Returns an empty string for a well-formed drive frame ("w1 ... wK"),
// otherwise the reason it was rejected.
std::string check_drive_frame(std::string_view text, std::size_t channels);

// HTTP + WebSocket server:
//   GET /asset.smoj  the asset bytes
//   GET /, /<file>   static viewer bundle
//   WS  /drive       weight frames, relayed unchanged to every /viewers client
//   WS  /viewers     receives relayed frames
// All sessions run on one I/O thread, which is the broadcast sequence point.
class LiveServer {
 public:
  explicit LiveServer(ServeOptions opts);  // throws std::system_error if the port is busy
  ~LiveServer();
  LiveServer(const LiveServer&) = delete;
  LiveServer& operator=(const LiveServer&) = delete;

  unsigned short port() const;
  std::uint64_t frames_relayed() const;
  std::size_t viewer_count() const;
  void stop();

 private:
  struct Impl;
  std::shared_ptr<Impl> impl_;
};

}  // namespace smoj::cli
