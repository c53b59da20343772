// SPDX-License-Identifier: Apache-2.0
#include "smoj/animation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "smoj/error.hpp"

namespace smoj::anim {

namespace {

struct ActiveComponent {
  const GaussianSet* set;
  double weight;
};

void check_blend_inputs(const AvatarAsset& asset, const BlendWeights& w, const BlendOptions& opts) {
  if (w.size() != asset.components.size()) {
    throw Error(ErrorCode::kInvalidArgument, "blend: got " + std::to_string(w.size()) + " weights for " +
                                                 std::to_string(asset.components.size()) + " components");
  }
  for (float v : w.weights) {
    if (!std::isfinite(v)) throw Error(ErrorCode::kInvalidArgument, "blend: non-finite weight");
  }
  if (!opts.skip_validation) {
    // Structural checks only; value ranges are the caller's business here.
    for (std::size_t i = 0; i < asset.components.size(); ++i) {
      if (asset.components[i].size() != asset.rest.size()) {
        throw Error(ErrorCode::kValidation, "blend: component " + std::to_string(i) + " splat count mismatch");
      }
    }
  }
}

}  // namespace

void blend_into(const AvatarAsset& asset, const BlendWeights& w, GaussianSet& out, const BlendOptions& opts) {
  check_blend_inputs(asset, w, opts);
  const std::size_t m = asset.rest.size();
  out.gaussians.resize(m);

  std::vector<ActiveComponent> active;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (w.weights[i] != 0.f) active.push_back({&asset.components[i], static_cast<double>(w.weights[i])});
  }

  for (std::size_t j = 0; j < m; ++j) {
    const Gaussian& r = asset.rest.gaussians[j];
    if (active.empty()) {
      out.gaussians[j] = r;
      continue;
    }
    double pos[3], scl[3], ori[4], col[3], opa;
    for (int c = 0; c < 3; ++c) {
      pos[c] = r.position[c];
      scl[c] = r.scale[c];
      col[c] = r.color[c];
    }
    for (int c = 0; c < 4; ++c) ori[c] = r.orientation[c];
    opa = r.opacity;

    for (const auto& a : active) {
      const Gaussian& g = a.set->gaussians[j];
      for (int c = 0; c < 3; ++c) {
        pos[c] += a.weight * (static_cast<double>(g.position[c]) - r.position[c]);
        scl[c] += a.weight * (static_cast<double>(g.scale[c]) - r.scale[c]);
        col[c] += a.weight * (static_cast<double>(g.color[c]) - r.color[c]);
      }
      for (int c = 0; c < 4; ++c) ori[c] += a.weight * (static_cast<double>(g.orientation[c]) - r.orientation[c]);
      opa += a.weight * (static_cast<double>(g.opacity) - r.opacity);
    }

    Gaussian& o = out.gaussians[j];
    for (int c = 0; c < 3; ++c) {
      o.position[c] = static_cast<float>(pos[c]);
      o.scale[c] = std::max(static_cast<float>(scl[c]), opts.scale_floor);
      o.color[c] = static_cast<float>(col[c]);
    }
    o.opacity = std::clamp(static_cast<float>(opa), 0.f, 1.f);

    const double norm = std::sqrt(ori[0] * ori[0] + ori[1] * ori[1] + ori[2] * ori[2] + ori[3] * ori[3]);
    if (!(norm > 1e-12)) {
      o.orientation = r.orientation;
    } else if (std::abs(norm - 1.0) <= 1e-6) {
      // Already unit within tolerance; leave bits untouched so one-hot blends
      // reproduce the stored component exactly.
      for (int c = 0; c < 4; ++c) o.orientation[c] = static_cast<float>(ori[c]);
    } else {
      for (int c = 0; c < 4; ++c) o.orientation[c] = static_cast<float>(ori[c] / norm);
    }
  }
}

GaussianSet blend(const AvatarAsset& asset, const BlendWeights& w, const BlendOptions& opts) {
  GaussianSet out;
  blend_into(asset, w, out, opts);
  return out;
}

void check_timeline(const BlendTimeline& t) {
  if (t.frames.empty()) throw Error(ErrorCode::kInvalidArgument, "timeline is empty");
  for (std::size_t i = 1; i < t.frames.size(); ++i) {
    if (!(t.frames[i].time > t.frames[i - 1].time)) {
      throw Error(ErrorCode::kInvalidArgument, "timeline timestamps must be strictly increasing (frame " +
                                                   std::to_string(i) + ")");
    }
  }
  const std::size_t k = t.frames.front().weights.size();
  for (const auto& f : t.frames) {
    if (f.weights.size() != k) throw Error(ErrorCode::kInvalidArgument, "timeline frames differ in weight count");
  }
}

BlendWeights sample_weights(const BlendTimeline& timeline, double t) {
  check_timeline(timeline);
  const auto& frames = timeline.frames;
  auto snap = [](double a, double b) { return std::abs(a - b) <= 1e-9 * std::max(1.0, std::abs(a)); };
  if (t <= frames.front().time || snap(t, frames.front().time)) return frames.front().weights;
  if (t >= frames.back().time || snap(t, frames.back().time)) return frames.back().weights;
  auto it = std::upper_bound(frames.begin(), frames.end(), t,
                             [](double value, const Keyframe& k) { return value < k.time; });
  const Keyframe& b = *it;
  const Keyframe& a = *(it - 1);
  if (snap(t, a.time)) return a.weights;
  if (snap(t, b.time)) return b.weights;
  const double s = (t - a.time) / (b.time - a.time);
  BlendWeights out = a.weights;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.weights[i] = static_cast<float>(a.weights.weights[i] + s * (b.weights.weights[i] - a.weights.weights[i]));
  }
  return out;
}

std::vector<double> sample_times(const BlendTimeline& timeline, double rate) {
  check_timeline(timeline);
  if (!(rate > 0.0) || !std::isfinite(rate)) throw Error(ErrorCode::kInvalidArgument, "sample rate must be > 0");
  const double first = timeline.frames.front().time;
  const double last = timeline.frames.back().time;
  std::vector<double> times;
  for (std::size_t i = 0;; ++i) {
    const double t = first + static_cast<double>(i) / rate;
    if (t > last + 1e-9 * std::max(1.0, std::abs(last))) break;
    times.push_back(t);
  }
  return times;
}

std::vector<GaussianSet> blend_timeline(const AvatarAsset& asset, const BlendTimeline& timeline, double rate,
                                        const BlendOptions& opts) {
  std::vector<GaussianSet> out;
  for (double t : sample_times(timeline, rate)) out.push_back(blend(asset, sample_weights(timeline, t), opts));
  return out;
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    parts.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

double parse_number(std::string_view s, std::size_t line) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw Error(ErrorCode::kParse, "timeline line " + std::to_string(line) + ": bad number '" + std::string(s) + "'");
  }
  return v;
}

}  // namespace

BlendTimeline parse_timeline(std::string_view text) {
  BlendTimeline tl;
  std::size_t line_no = 0;
  bool have_header = false;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t end = text.find('\n', start);
    std::string_view line = trim(text.substr(start, end == std::string_view::npos ? text.size() - start : end - start));
    start = end == std::string_view::npos ? text.size() + 1 : end + 1;
    ++line_no;
    if (line.empty()) continue;
    if (!have_header) {
      constexpr std::string_view kHeader = "# smoj-timeline v1";
      if (line.substr(0, kHeader.size()) != kHeader) {
        throw Error(ErrorCode::kParse, "timeline: missing '# smoj-timeline v1' header");
      }
      const auto names = trim(line.substr(kHeader.size()));
      if (names.empty()) throw Error(ErrorCode::kParse, "timeline: header lists no channels");
      for (auto n : split(names, ',')) tl.channel_names.emplace_back(n);
      have_header = true;
      continue;
    }
    if (line.front() == '#') continue;
    const auto fields = split(line, ',');
    if (fields.size() != tl.channel_names.size() + 1) {
      throw Error(ErrorCode::kParse, "timeline line " + std::to_string(line_no) + ": expected " +
                                         std::to_string(tl.channel_names.size() + 1) + " fields, found " +
                                         std::to_string(fields.size()));
    }
    Keyframe kf;
    kf.time = parse_number(fields[0], line_no);
    for (std::size_t i = 1; i < fields.size(); ++i) {
      kf.weights.weights.push_back(static_cast<float>(parse_number(fields[i], line_no)));
    }
    tl.frames.push_back(std::move(kf));
  }
  if (!have_header) throw Error(ErrorCode::kParse, "timeline: missing header");
  check_timeline(tl);
  if (tl.frames.size() >= 2) {
    tl.rate_hint = static_cast<double>(tl.frames.size() - 1) / (tl.frames.back().time - tl.frames.front().time);
  }
  return tl;
}

BlendTimeline load_timeline(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open timeline " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_timeline(ss.str());
}

std::string format_timeline(const BlendTimeline& timeline) {
  std::string out = "# smoj-timeline v1 ";
  for (std::size_t i = 0; i < timeline.channel_names.size(); ++i) {
    if (i) out += ',';
    out += timeline.channel_names[i];
  }
  out += '\n';
  char buf[64];
  for (const auto& f : timeline.frames) {
    auto r = std::to_chars(buf, buf + sizeof buf, f.time);
    out.append(buf, r.ptr);
    for (float w : f.weights.weights) {
      out += ',';
      r = std::to_chars(buf, buf + sizeof buf, w);
      out.append(buf, r.ptr);
    }
    out += '\n';
  }
  return out;
}

void check_timeline_channels(const BlendTimeline& timeline, const AvatarAsset& asset) {
  if (timeline.channel_names != asset.channel_names) {
    throw Error(ErrorCode::kValidation, "timeline channel order does not match the asset's channel names");
  }
}

namespace {

struct Preset {
  std::string_view name;
  std::vector<std::pair<std::string_view, float>> channels;
};

const std::vector<Preset>& presets() {
  static const std::vector<Preset> table = {
      {"neutrality", {}},
      {"happiness", {{"mouthSmileLeft", 0.8f}, {"mouthSmileRight", 0.8f}}},
      {"frustration",
       {{"browDownLeft", 0.6f}, {"browDownRight", 0.6f}, {"mouthFrownLeft", 0.7f}, {"mouthFrownRight", 0.7f}}},
      {"playfulness",
       {{"eyeBlinkLeft", 0.9f},
        {"mouthSmileLeft", 0.7f},
        {"mouthSmileRight", 0.4f},
        {"jawLeft", 0.3f},
        {"lipsPucker", 0.3f}}},
      {"anger",
       {{"browDownLeft", 1.0f},
        {"browDownRight", 1.0f},
        {"mouthStretchLeft", 0.5f},
        {"mouthStretchRight", 0.5f},
        {"jawOpen", 0.2f}}},
      {"surprise", {{"browUpLeft", 1.0f}, {"browUpRight", 1.0f}, {"jawOpen", 0.7f}}},
  };
  return table;
}

}  // namespace

std::vector<std::string> emotion_preset_names() {
  std::vector<std::string> names;
  for (const auto& p : presets()) names.emplace_back(p.name);
  return names;
}

BlendWeights emotion_preset(std::string_view name) {
  for (const auto& p : presets()) {
    if (p.name != name) continue;
    BlendWeights w = BlendWeights::zeros(kDefaultChannelCount);
    for (const auto& [channel, value] : p.channels) {
      const auto it = std::find(kFacsChannels.begin(), kFacsChannels.end(), channel);
      w.weights[static_cast<std::size_t>(it - kFacsChannels.begin())] = value;
    }
    return w;
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown emotion preset '" + std::string(name) + "'");
}

}  // namespace smoj::anim
