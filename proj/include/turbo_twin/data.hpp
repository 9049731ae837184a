#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "turbo_twin/config.hpp"
#include "turbo_twin/grid.hpp"

namespace turbo {

// 8-bit grayscale PNG; pixel values map to [0,1] by /255.
Grid read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Grid& grid);

struct ManifestEntry {
  std::string id;
  std::filesystem::path template_path;                // relative to the dataset root
  std::optional<std::filesystem::path> printed_path;  // relative to the dataset root
  Authenticity authenticity = Authenticity::original;
  std::string split;  // "train", "test" or empty

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct DatasetManifest {
  std::filesystem::path root;
  std::vector<ManifestEntry> entries;
  Pairing pairing = Pairing::paired;
  std::uint64_t split_seed = 0;

  std::size_t size() const noexcept { return entries.size(); }
  DatasetManifest with_split(std::string_view split) const;
};

inline constexpr const char* kManifestFile = "manifest.csv";

// Checks the pairing invariant: a paired manifest has a print for every template.
void validate_manifest(const DatasetManifest& manifest);
void write_manifest(const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::filesystem::path& root);

// Seed-keyed, disjoint split. Entries are tagged "train"/"test"; the same seed
// always yields the same partition.
std::pair<DatasetManifest, DatasetManifest> split_train_test(const DatasetManifest& manifest, double train_fraction);

// Top-left corners of the four corner-anchored crops, row-major.
std::array<std::pair<std::size_t, std::size_t>, 4> crop_anchors(std::size_t side, std::size_t crop);
std::array<Grid, 4> crop_four(const Grid& image, std::size_t crop);

struct ChannelParams {
  double blur_sigma = 0.0;
  double dot_gain = 0.0;  // >0 spreads ink (dilation), <0 shrinks it (erosion)
  double gamma = 1.0;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;

  friend bool operator==(const ChannelParams&, const ChannelParams&) = default;
};

void validate_channel(const ChannelParams& params);

// Separable Gaussian blur with mirrored borders; sigma 0 is the identity.
Grid gaussian_blur(const Grid& image, double sigma);

// dot gain -> blur -> v^gamma -> additive Gaussian noise -> clip to [0,1].
PrintedCode synth_channel(const DigitalTemplate& t, const ChannelParams& params);

struct SyntheticDatasetSpec {
  std::size_t n = 64;
  std::size_t side = 64;
  double density = 0.5;
  ChannelParams channel;
  std::uint64_t seed = 0;
  double train_fraction = 0.8;
  std::string device = "synthetic";
};

// Bernoulli(density) templates and their channel prints written under
//   root/templates/<id>.png and root/printed/<device>/original/<id>.png
// plus root/manifest.csv with split tags.
DatasetManifest make_synthetic_dataset(const SyntheticDatasetSpec& spec, const std::filesystem::path& root);

struct Sample {
  DigitalTemplate t;
  std::optional<PrintedCode> y;
};

// Loads every entry; crop > 0 replaces each image by its four corner crops
// (ids suffixed _c0.._c3) taken at identical anchors for t and y.
std::vector<Sample> load_samples(const DatasetManifest& manifest, std::size_t crop = 0);

// Indices into a sample list for one batch.
struct BatchPlan {
  std::vector<std::size_t> template_index;
  std::vector<std::size_t> print_index;
  std::vector<bool> paired;  // per position: template and print come from the same sample
  Pairing regime = Pairing::paired;
  std::uint64_t epoch = 0;
};

// Endless, seed-determined sequence of batches over n samples.
//  paired   - aligned (t, y) by sample.
//  unpaired - templates and prints are permuted independently every epoch.
//  hybrid   - a fixed-size random subset of each epoch stays aligned, the rest
//             is shuffled as in unpaired mode; fraction 1 equals paired mode.
// Every sample appears exactly once per epoch on each side; the final batch of
// an epoch may be short.
class BatchStream {
 public:
  BatchStream(std::size_t n_samples, std::size_t batch_size, Pairing pairing, std::uint64_t seed,
              double hybrid_fraction = 0.5);

  BatchPlan next();

  std::size_t batches_per_epoch() const noexcept { return (n_ + batch_size_ - 1) / batch_size_; }
  std::uint64_t epoch() const noexcept { return epoch_; }
  std::size_t cursor() const noexcept { return cursor_; }
  // Restores a position saved from epoch()/cursor().
  void seek(std::uint64_t epoch, std::size_t cursor);

 private:
  void plan_epoch();

  std::size_t n_;
  std::size_t batch_size_;
  Pairing pairing_;
  std::uint64_t seed_;
  double hybrid_fraction_;
  std::uint64_t epoch_ = 0;
  std::size_t cursor_ = 0;
  std::vector<std::size_t> template_order_;
  std::vector<std::size_t> print_order_;
  std::vector<bool> paired_;
};

BatchStream make_batches(const DatasetManifest& manifest, std::size_t batch_size, Pairing pairing, std::uint64_t seed,
                         double hybrid_fraction = 0.5);

}  // namespace turbo
