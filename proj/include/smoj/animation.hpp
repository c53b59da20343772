// SPDX-License-Identifier: Apache-2.0
//
// Linear blendshape animation of Gaussian avatars:
//   posed = rest + sum_i w_i * (component_i - rest)
#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "smoj/avatar.hpp"

namespace smoj::anim {

struct BlendOptions {
  // Lower bound applied to every scale component after blending.
  float scale_floor = 1e-6f;
  // Skip asset validation (callers that already validated a shared asset).
  bool skip_validation = false;
};

// Throws Error(kInvalidArgument) on weight-count mismatch and
// Error(kValidation) on an invalid asset.
GaussianSet blend(const AvatarAsset& asset, const BlendWeights& w, const BlendOptions& opts = {});

// Same as blend, writing into `out` (resized as needed) to avoid reallocating
// in playback loops.
void blend_into(const AvatarAsset& asset, const BlendWeights& w, GaussianSet& out, const BlendOptions& opts = {});

struct Keyframe {
  double time = 0.0;  // seconds
  BlendWeights weights;
};

struct BlendTimeline {
  std::vector<Keyframe> frames;  // strictly increasing time
  double rate_hint = 30.0;       // frames per second
  std::vector<std::string> channel_names;
};

// Throws on empty timelines or non-increasing timestamps.
void check_timeline(const BlendTimeline& t);

// Weights at time `t`: linear between neighbouring keyframes, constant
// before the first and after the last. Times within 1e-9 of a keyframe
// return that keyframe exactly.
BlendWeights sample_weights(const BlendTimeline& timeline, double t);

// Sample times first + i / rate for every i with time <= last.
std::vector<double> sample_times(const BlendTimeline& timeline, double rate);

std::vector<GaussianSet> blend_timeline(const AvatarAsset& asset, const BlendTimeline& timeline, double rate,
                                        const BlendOptions& opts = {});

// Text timeline format:
//   # smoj-timeline v1 name1,name2,...
//   t,w1,...,wK
BlendTimeline parse_timeline(std::string_view text);
BlendTimeline load_timeline(const std::filesystem::path& path);
std::string format_timeline(const BlendTimeline& timeline);
// Throws Error(kValidation) if the timeline channel order differs from the asset's.
void check_timeline_channels(const BlendTimeline& timeline, const AvatarAsset& asset);

std::vector<std::string> emotion_preset_names();
// Fixed weight vectors over the 16 FACS channels:
//   neutrality   all zero
//   happiness    mouthSmileLeft/Right 0.8
//   frustration  browDownLeft/Right 0.6, mouthFrownLeft/Right 0.7
//   playfulness  eyeBlinkLeft 0.9, mouthSmileLeft 0.7, mouthSmileRight 0.4, jawLeft 0.3, lipsPucker 0.3
//   anger        browDownLeft/Right 1.0, mouthStretchLeft/Right 0.5, jawOpen 0.2
//   surprise     browUpLeft/Right 1.0, jawOpen 0.7
BlendWeights emotion_preset(std::string_view name);

}  // namespace smoj::anim
