// SPDX-License-Identifier: Apache-2.0
//
// Deterministic synthetic avatars for tests, benchmarks, and demos.
#pragma once

#include <cstdint>

#include "smoj/avatar.hpp"

namespace smoj {

struct SynthOptions {
  std::size_t splats = 1000;
  std::size_t channels = kDefaultChannelCount;
  std::uint64_t seed = 1;
  // Head radius in world units; splats lie on an ellipsoidal shell around the
  // origin with scales proportional to the mean spacing.
  double radius = 1.0;
};

// A head-like shell of splats. Each component displaces a channel-specific
// region (brows, eyelids, jaw, mouth corners) and changes its color slightly,
// so every channel produces a visible, distinct pose.
AvatarAsset make_synthetic_avatar(const SynthOptions& opts);

// Uniformly random valid splats inside a cube of half-width `extent`.
GaussianSet make_random_set(std::size_t count, std::uint64_t seed, double extent = 1.0);

// Random valid asset whose components are independent random perturbations
// of the rest set (used by property tests).
AvatarAsset make_random_asset(std::size_t splats, std::size_t channels, std::uint64_t seed);

}  // namespace smoj
