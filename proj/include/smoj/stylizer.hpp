// SPDX-License-Identifier: Apache-2.0
//
// Client for an external stylization service, and a deterministic mock.
//
// Wire contract: POST /v1/stylize, multipart/form-data with
//   image   PNG
//   params  "key=value" lines: prompt, strength, edge, identity
// 200 replies carry a PNG body plus X-Latency-Seconds and X-Service-Mode
// headers; errors are 4xx/5xx with a text body.
#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "smoj/image_io.hpp"

namespace smoj::stylize {

struct Params {
  std::string prompt;
  double strength = 0.5;   // style transition strength
  double edge = 0.5;       // edge preservation level
  double identity = 0.5;   // identity consistency factor

  friend bool operator==(const Params&, const Params&) = default;
};

// Throws Error(kInvalidArgument) for an empty prompt or values outside [0,1].
void check_params(const Params& p);
// Newlines and backslashes in the prompt are escaped; numbers use the
// shortest round-trip decimal form.
std::string encode_params(const Params& p);
Params decode_params(std::string_view text);

struct Request {
  std::vector<std::uint8_t> png;
  Params params;
  double timeout_seconds = 30.0;
};

struct Response {
  std::vector<std::uint8_t> png;
  Image8 image;
  double service_latency = 0.0;  // X-Latency-Seconds
  double elapsed = 0.0;          // client wall clock
  std::string service_mode;      // X-Service-Mode
};

// endpoint: "http://host:port". Errors: kTimeout past the deadline, kService
// for non-200 replies (status and body in the message), kParse for an
// undecodable body, kValidation when the reply dimensions differ, kIo when
// the endpoint is unreachable.
Response stylize(const Request& req, const std::string& endpoint);

enum class MockMode { kEcho, kTint, kFail, kSlow };

MockMode parse_mock_mode(std::string_view name);
std::string mock_mode_name(MockMode mode);

struct MockOptions {
  MockMode mode = MockMode::kEcho;
  // Tint: out = clamp(round(in + strength * tint)) on RGB; alpha unchanged.
  std::array<int, 3> tint{48, -32, 16};
  // Slow: reply (as echo) after this delay.
  double slow_seconds = 2.0;
};

// Applies the tint formula; the oracle for tests.
Image8 apply_tint(const Image8& in, double strength, const std::array<int, 3>& tint);

class MockServer {
 public:
  // port 0 picks a free port. Throws Error(kIo) if the port is busy.
  MockServer(int port, MockOptions opts);
  ~MockServer();
  MockServer(const MockServer&) = delete;
  MockServer& operator=(const MockServer&) = delete;

  int port() const;
  std::string endpoint() const;
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace smoj::stylize
