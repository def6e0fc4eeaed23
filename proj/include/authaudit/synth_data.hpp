#pragma once

// Generated stand-in for a rated image corpus: random smooth images, a planted
// authenticity signal that is a linear readout of one synthetic backbone's
// embedding, and 1-5 ratings from simulated participants.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "authaudit/image.hpp"
#include "authaudit/rng.hpp"

namespace authaudit {

struct SyntheticDatasetOptions {
  std::size_t images = 400;
  // Additional images in category "art", rated lower; meant to be excluded.
  std::size_t extra_excluded = 0;
  std::size_t participants = 25;
  std::uint64_t readout_seed = 101;  // backbone whose embedding carries the signal
  std::uint64_t seed = 1;
  double latent_noise = 0.3;  // SD of image-level noise added to the standardized readout
  double rater_noise = 0.7;   // SD of per-rating noise
  int image_size = kInputSize;
};

struct SyntheticDatasetFiles {
  std::filesystem::path ratings;
  std::filesystem::path metadata;
  std::filesystem::path manifest;
  std::filesystem::path planted_targets;
};

Image synthetic_image(Pcg32& rng, int size = kInputSize);

// Writes images/, ratings.csv, metadata.csv, manifest.csv, planted_targets.csv
// (exact linear readout rescaled to 0-100) and readout.json under `dir`.
SyntheticDatasetFiles generate_synthetic_dataset(const std::filesystem::path& dir,
                                                 const SyntheticDatasetOptions& options);

}  // namespace authaudit
