#include "authaudit/synth_data.hpp"

#include <algorithm>
#include <cmath>

#include "authaudit/binary_io.hpp"
#include "authaudit/csv.hpp"
#include "authaudit/synthetic_backbone.hpp"
#include "json.hpp"

namespace authaudit {

Image synthetic_image(Pcg32& rng, int size) {
  Image img(size, size);
  double c0[3], c1[3];
  for (int c = 0; c < 3; ++c) {
    c0[c] = rng.uniform(20, 235);
    c1[c] = rng.uniform(20, 235);
  }
  const double angle = rng.uniform(0, 2 * M_PI);
  const double gx = std::cos(angle), gy = std::sin(angle);
  std::vector<double> px(static_cast<std::size_t>(size) * size * 3);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double t = 0.5 + 0.5 * ((x / (size - 1.0) - 0.5) * gx + (y / (size - 1.0) - 0.5) * gy) * 1.4;
      for (int c = 0; c < 3; ++c) px[(static_cast<std::size_t>(y) * size + x) * 3 + c] = c0[c] + (c1[c] - c0[c]) * t;
    }
  }
  const int blobs = 2 + static_cast<int>(rng.bounded(5));
  for (int b = 0; b < blobs; ++b) {
    const double cy = rng.uniform(0, size), cx = rng.uniform(0, size);
    const double ry = rng.uniform(0.05, 0.3) * size, rx = rng.uniform(0.05, 0.3) * size;
    const double col[3] = {rng.uniform(0, 255), rng.uniform(0, 255), rng.uniform(0, 255)};
    const double stripes = rng.bernoulli(0.5) ? rng.uniform(0.05, 0.4) : 0.0;
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        const double d = ((y - cy) * (y - cy)) / (ry * ry) + ((x - cx) * (x - cx)) / (rx * rx);
        if (d > 1.0) continue;
        const double a = (1.0 - d) * (stripes > 0 ? 0.5 + 0.5 * std::sin(stripes * (x + y)) : 1.0);
        for (int c = 0; c < 3; ++c) {
          double& v = px[(static_cast<std::size_t>(y) * size + x) * 3 + c];
          v = (1.0 - a) * v + a * col[c];
        }
      }
    }
  }
  for (std::size_t i = 0; i < px.size(); ++i) {
    img.rgb[i] = static_cast<std::uint8_t>(std::clamp(std::lround(px[i] + rng.normal(0.0, 4.0)), 0L, 255L));
  }
  return img;
}

namespace {

std::string image_id(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "img_%05zu", i);
  return buf;
}

}  // namespace

SyntheticDatasetFiles generate_synthetic_dataset(const std::filesystem::path& dir,
                                                 const SyntheticDatasetOptions& options) {
  if (options.images < 3 || options.participants < 2) {
    throw std::invalid_argument("synthetic dataset needs at least 3 images and 2 participants");
  }
  std::filesystem::create_directories(dir / "images");
  const std::size_t total = options.images + options.extra_excluded;
  Pcg32 rng(options.seed, 3);

  SyntheticConfig backbone_config;
  backbone_config.seed = options.readout_seed;
  const SyntheticBackbone backbone(backbone_config);
  const std::size_t dim = backbone.meta().embed_dim;
  std::vector<double> w(dim);
  for (auto& v : w) v = rng.normal();

  static const char* kCategories[] = {"people", "animals", "objects", "scenes", "food"};
  static const char* kChallenges[] = {"normal", "detailed", "creativity"};
  CsvTable meta{{"image_id", "generator_id", "category", "challenge"}, {}};
  CsvTable manifest{{"image_id", "path"}, {}};
  std::vector<double> readout(total);
  for (std::size_t i = 0; i < total; ++i) {
    const Image img = synthetic_image(rng, options.image_size);
    const std::string id = image_id(i);
    const std::string rel = "images/" + id + ".png";
    write_png(dir / rel, img);
    const Embedding e = backbone.embed(img);
    double s = 0.0;
    for (std::size_t k = 0; k < dim; ++k) s += w[k] * e.values[k];
    readout[i] = s;
    const bool excluded = i >= options.images;
    meta.rows.push_back({id, "gen" + std::to_string(rng.bounded(6)), excluded ? "art" : kCategories[rng.bounded(5)],
                         kChallenges[rng.bounded(3)]});
    manifest.rows.push_back({id, rel});
  }

  // Standardize the readout over the kept images so the signal scale is fixed.
  double mean = 0.0, var = 0.0;
  for (std::size_t i = 0; i < options.images; ++i) mean += readout[i];
  mean /= static_cast<double>(options.images);
  for (std::size_t i = 0; i < options.images; ++i) var += (readout[i] - mean) * (readout[i] - mean);
  const double sd = std::sqrt(var / static_cast<double>(options.images - 1));
  const auto [lo, hi] = std::minmax_element(readout.begin(), readout.begin() + static_cast<long>(options.images));
  CsvTable planted{{"image_id", "target"}, {}};
  std::vector<std::array<double, 3>> latent(total);
  for (std::size_t i = 0; i < total; ++i) {
    if (i < options.images) {
      planted.rows.push_back({image_id(i), std::to_string(100.0 * (readout[i] - *lo) / (*hi - *lo))});
    }
    const double a = (readout[i] - mean) / sd + rng.normal(0.0, options.latent_noise) - (i >= options.images ? 0.5 : 0.0);
    const double q = 0.8 * a + 0.6 * rng.normal();
    latent[i] = {q, a, rng.normal()};
  }

  CsvTable ratings{{"image_id", "participant_id", "quality", "authenticity", "correspondence"}, {}};
  for (std::size_t p = 0; p < options.participants; ++p) {
    const double bias = rng.normal(0.0, 0.3);
    const double gain = rng.uniform(0.8, 1.2);
    for (std::size_t i = 0; i < total; ++i) {
      std::vector<std::string> row{image_id(i), "p" + std::to_string(p + 1)};
      for (int m = 0; m < 3; ++m) {
        const double v = 3.0 + bias + gain * (latent[i][m] + rng.normal(0.0, options.rater_noise));
        row.push_back(std::to_string(std::clamp(std::lround(v), 1L, 5L)));
      }
      ratings.rows.push_back(std::move(row));
    }
  }

  SyntheticDatasetFiles files{dir / "ratings.csv", dir / "metadata.csv", dir / "manifest.csv",
                              dir / "planted_targets.csv"};
  write_csv(files.ratings, ratings);
  write_csv(files.metadata, meta);
  write_csv(files.manifest, manifest);
  write_csv(files.planted_targets, planted);
  nlohmann::json info{{"readout_backbone", backbone.meta().backbone_name},
                      {"weights", w},
                      {"images", options.images},
                      {"extra_excluded", options.extra_excluded},
                      {"participants", options.participants},
                      {"seed", options.seed},
                      {"latent_noise", options.latent_noise},
                      {"rater_noise", options.rater_noise}};
  write_text(dir / "readout.json", info.dump(1));
  return files;
}

}  // namespace authaudit
