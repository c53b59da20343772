// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <future>
#include <random>

#include "smoj/error.hpp"
#include "smoj/stylizer.hpp"

using namespace smoj;
using namespace smoj::stylize;

namespace {

Image8 random_image(int w, int h, int channels, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> u(0, 255);
  Image8 img{w, h, channels, {}};
  img.pixels.resize(static_cast<std::size_t>(w) * h * channels);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(u(rng));
  return img;
}

Request make_request(const Image8& img, double strength = 0.5) {
  Request r;
  r.png = encode_png(img);
  r.params.prompt = "watercolor";
  r.params.strength = strength;
  r.timeout_seconds = 5.0;
  return r;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::kRuntime;
}

}  // namespace

TEST(Params, RoundTripWithEscapes) {
  Params p{"line one\nline \\two = x", 0.1, 1.0, 0.0};
  const std::string text = encode_params(p);
  EXPECT_EQ(decode_params(text), p);
  EXPECT_EQ(text.find("line one\n"), std::string::npos);
  Params q{"plain", 1.0 / 3.0, 0.3, 0.7};
  const Params back = decode_params(encode_params(q));
  EXPECT_EQ(back.strength, q.strength);
  EXPECT_EQ(back, q);
}

TEST(Params, DecodeAcceptsHandWrittenText) {
  const Params p = decode_params("prompt=ink\nstrength=0.25\nedge=1\nidentity=0\n");
  EXPECT_EQ(p, (Params{"ink", 0.25, 1.0, 0.0}));
}

TEST(Params, Errors) {
  EXPECT_EQ(code_of([] { check_params({"", 0.5, 0.5, 0.5}); }), ErrorCode::kInvalidArgument);
  EXPECT_EQ(code_of([] { check_params({"x", 1.5, 0.5, 0.5}); }), ErrorCode::kInvalidArgument);
  EXPECT_EQ(code_of([] { check_params({"x", 0.5, -0.1, 0.5}); }), ErrorCode::kInvalidArgument);
  EXPECT_EQ(code_of([] { check_params({"x", 0.5, 0.5, std::nan("")}); }), ErrorCode::kInvalidArgument);
  EXPECT_NO_THROW(check_params({"x", 0.0, 1.0, 0.5}));
  EXPECT_EQ(code_of([] { decode_params("prompt=x\nstrength=0.5\nedge=0.5\n"); }), ErrorCode::kParse);
  EXPECT_EQ(code_of([] { decode_params("prompt=x\nstrength=0.5\nedge=0.5\nidentity=0.5\ncolor=1\n"); }),
            ErrorCode::kParse);
  EXPECT_EQ(code_of([] { decode_params("prompt=x\nstrength=abc\nedge=0.5\nidentity=0.5\n"); }),
            ErrorCode::kParse);
  EXPECT_EQ(code_of([] { decode_params("prompt x\n"); }), ErrorCode::kParse);
}

TEST(MockModes, NamesRoundTrip) {
  for (auto m : {MockMode::kEcho, MockMode::kTint, MockMode::kFail, MockMode::kSlow}) {
    EXPECT_EQ(parse_mock_mode(mock_mode_name(m)), m);
  }
  EXPECT_EQ(code_of([] { parse_mock_mode("sepia"); }), ErrorCode::kInvalidArgument);
}

TEST(Tint, FormulaOracle) {
  const Image8 img = random_image(9, 7, 4, 1);
  const std::array<int, 3> tint{48, -32, 16};
  for (double s : {0.0, 0.25, 0.5, 1.0}) {
    const Image8 out = apply_tint(img, s, tint);
    for (std::size_t p = 0; p < img.pixels.size(); p += 4) {
      for (int c = 0; c < 3; ++c) {
        const double v = std::floor(img.pixels[p + c] + s * tint[c] + 0.5);
        ASSERT_EQ(out.pixels[p + c], static_cast<std::uint8_t>(std::min(255.0, std::max(0.0, v))));
      }
      ASSERT_EQ(out.pixels[p + 3], img.pixels[p + 3]);
    }
  }
  EXPECT_EQ(apply_tint(img, 0.0, tint), img);
}

TEST(MockService, EchoReturnsInput) {
  MockServer server(0, {});
  const Image8 img = random_image(16, 12, 3, 2);
  const Response r = stylize::stylize(make_request(img), server.endpoint());
  EXPECT_EQ(r.image, img);
  EXPECT_EQ(r.service_mode, "echo");
  EXPECT_GE(r.service_latency, 0.0);
  EXPECT_GE(r.elapsed, r.service_latency);
}

TEST(MockService, TintMatchesFormulaAndStrengthZeroIsIdentity) {
  MockServer server(0, {MockMode::kTint});
  const Image8 img = random_image(20, 10, 4, 3);
  for (double s : {0.0, 0.3, 1.0}) {
    const Response r = stylize::stylize(make_request(img, s), server.endpoint());
    EXPECT_EQ(r.service_mode, "tint");
    EXPECT_EQ(r.image, apply_tint(img, s, {48, -32, 16}));
    if (s == 0.0) EXPECT_EQ(r.image, img);
  }
}

TEST(MockService, FailIsServiceError) {
  MockServer server(0, {MockMode::kFail});
  try {
    stylize::stylize(make_request(random_image(4, 4, 3, 4)), server.endpoint());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kService);
    EXPECT_NE(std::string(e.what()).find("500"), std::string::npos);
  }
}

TEST(MockService, SlowTimesOutNearDeadline) {
  MockOptions o;
  o.mode = MockMode::kSlow;
  o.slow_seconds = 3.0;
  MockServer server(0, o);
  Request req = make_request(random_image(4, 4, 3, 5));
  req.timeout_seconds = 0.5;
  const auto t0 = std::chrono::steady_clock::now();
  EXPECT_EQ(code_of([&] { stylize::stylize(req, server.endpoint()); }), ErrorCode::kTimeout);
  const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_GE(dt, 0.45);
  EXPECT_LE(dt, 0.55);
}

TEST(MockService, SlowSucceedsWithinDeadline) {
  MockOptions o;
  o.mode = MockMode::kSlow;
  o.slow_seconds = 0.3;
  MockServer server(0, o);
  const Image8 img = random_image(6, 5, 3, 6);
  const Response r = stylize::stylize(make_request(img), server.endpoint());
  EXPECT_EQ(r.image, img);
  EXPECT_EQ(r.service_mode, "slow");
  EXPECT_GE(r.service_latency, 0.29);
}

TEST(MockService, ConcurrentRequests) {
  MockServer server(0, {MockMode::kTint});
  std::vector<std::future<bool>> jobs;
  for (int i = 0; i < 8; ++i) {
    jobs.push_back(std::async(std::launch::async, [&, i] {
      const Image8 img = random_image(8 + i, 8, 3, 100 + i);
      const double s = 0.1 * i;
      return stylize::stylize(make_request(img, s), server.endpoint()).image == apply_tint(img, s, {48, -32, 16});
    }));
  }
  for (auto& j : jobs) EXPECT_TRUE(j.get());
}

TEST(Client, RejectsUndecodableInputBeforeSending) {
  MockServer server(0, {});
  Request req = make_request(random_image(4, 4, 3, 7));
  req.png = {1, 2, 3};
  EXPECT_EQ(code_of([&] { stylize::stylize(req, server.endpoint()); }), ErrorCode::kParse);
}

TEST(Client, UnreachableAndBadEndpoints) {
  int port;
  {
    MockServer probe(0, {});
    port = probe.port();
  }
  const Request req = make_request(random_image(4, 4, 3, 8));
  EXPECT_EQ(code_of([&] { stylize::stylize(req, "http://127.0.0.1:" + std::to_string(port)); }), ErrorCode::kIo);
  EXPECT_EQ(code_of([&] { stylize::stylize(req, "https://127.0.0.1:1"); }), ErrorCode::kInvalidArgument);
  EXPECT_EQ(code_of([&] { stylize::stylize(req, "http://127.0.0.1:notaport"); }), ErrorCode::kInvalidArgument);
  Request bad = req;
  bad.timeout_seconds = 0.0;
  EXPECT_EQ(code_of([&] { stylize::stylize(bad, "http://127.0.0.1:1"); }), ErrorCode::kInvalidArgument);
  bad = req;
  bad.params.strength = 2.0;
  EXPECT_EQ(code_of([&] { stylize::stylize(bad, "http://127.0.0.1:1"); }), ErrorCode::kInvalidArgument);
}

TEST(MockServer, BusyPort) {
  MockServer first(0, {});
  EXPECT_EQ(code_of([&] { MockServer second(first.port(), {}); }), ErrorCode::kIo);
}
