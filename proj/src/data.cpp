#include "turbo_twin/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include <png.h>

#include "turbo_twin/error.hpp"
#include "turbo_twin/rng.hpp"

namespace turbo {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// PNG

Grid read_png(const fs::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw Error(ErrorCode::IoError, "cannot read " + path.string() + ": " + image.message);
  }
  image.format = PNG_FORMAT_GRAY;
  if (image.width != image.height) {
    png_image_free(&image);
    throw Error(ErrorCode::ShapeError, path.string() + " is not square");
  }
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    throw Error(ErrorCode::IoError, "cannot decode " + path.string() + ": " + image.message);
  }
  std::vector<double> pixels(buffer.size());
  std::transform(buffer.begin(), buffer.end(), pixels.begin(), [](png_byte b) { return b / 255.0; });
  return Grid(image.width, std::move(pixels));
}

void write_png(const fs::path& path, const Grid& grid) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::vector<png_byte> buffer(grid.size());
  std::transform(grid.pixels().begin(), grid.pixels().end(), buffer.begin(), [](double v) {
    return static_cast<png_byte>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
  });
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(grid.side());
  image.height = static_cast<png_uint_32>(grid.side());
  image.format = PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&image, path.c_str(), 0, buffer.data(), 0, nullptr)) {
    throw Error(ErrorCode::IoError, "cannot write " + path.string() + ": " + image.message);
  }
}

// ---------------------------------------------------------------------------
// Manifest

DatasetManifest DatasetManifest::with_split(std::string_view split) const {
  DatasetManifest out = *this;
  out.entries.clear();
  std::copy_if(entries.begin(), entries.end(), std::back_inserter(out.entries),
               [&](const ManifestEntry& e) { return e.split == split; });
  return out;
}

void validate_manifest(const DatasetManifest& manifest) {
  if (manifest.pairing == Pairing::paired) {
    for (const auto& e : manifest.entries) {
      if (!e.printed_path) {
        throw Error(ErrorCode::MissingPairing, "paired manifest entry '" + e.id + "' has no printed file");
      }
    }
  }
}

void write_manifest(const DatasetManifest& manifest) {
  fs::create_directories(manifest.root);
  std::ofstream out(manifest.root / kManifestFile, std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write manifest under " + manifest.root.string());
  out << "# pairing=" << to_string(manifest.pairing) << " split_seed=" << manifest.split_seed << "\n";
  out << "id,template,printed,authenticity,split\n";
  for (const auto& e : manifest.entries) {
    out << e.id << ',' << e.template_path.generic_string() << ','
        << (e.printed_path ? e.printed_path->generic_string() : std::string()) << ','
        << to_string(e.authenticity) << ',' << e.split << '\n';
  }
  if (!out) throw Error(ErrorCode::IoError, "short write of manifest");
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

}  // namespace

DatasetManifest read_manifest(const fs::path& root) {
  std::ifstream in(root / kManifestFile);
  if (!in) throw Error(ErrorCode::IoError, "no " + std::string(kManifestFile) + " under " + root.string());
  DatasetManifest manifest;
  manifest.root = root;
  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line.front() == '#') {
      std::istringstream meta(line.substr(1));
      std::string kv;
      while (meta >> kv) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) continue;
        const auto key = kv.substr(0, eq);
        const auto value = kv.substr(eq + 1);
        if (key == "pairing") manifest.pairing = pairing_from_string(value);
        if (key == "split_seed") manifest.split_seed = std::stoull(value);
      }
      continue;
    }
    if (!header_seen) {
      header_seen = true;
      continue;
    }
    auto f = split_csv(line);
    if (f.size() != 5) throw Error(ErrorCode::IoError, "malformed manifest row: " + line);
    ManifestEntry e;
    e.id = f[0];
    e.template_path = f[1];
    if (!f[2].empty()) e.printed_path = fs::path(f[2]);
    e.authenticity = authenticity_from_string(f[3]);
    e.split = f[4];
    manifest.entries.push_back(std::move(e));
  }
  return manifest;
}

std::pair<DatasetManifest, DatasetManifest> split_train_test(const DatasetManifest& manifest, double train_fraction) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw Error(ErrorCode::RangeError, "train_fraction must be in (0,1)");
  }
  const std::size_t n = manifest.entries.size();
  if (n == 0) throw Error(ErrorCode::EmptyManifest, "cannot split an empty manifest");
  auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
  if (n >= 2) n_train = std::clamp<std::size_t>(n_train, 1, n - 1);

  const auto perm = seeded_permutation(n, mix_seed(manifest.split_seed, 0x5117));
  std::vector<bool> is_train(n, false);
  for (std::size_t i = 0; i < n_train; ++i) is_train[perm[i]] = true;

  DatasetManifest train = manifest;
  DatasetManifest test = manifest;
  train.entries.clear();
  test.entries.clear();
  // Original order is kept inside each part.
  for (std::size_t i = 0; i < n; ++i) {
    ManifestEntry e = manifest.entries[i];
    e.split = is_train[i] ? "train" : "test";
    (is_train[i] ? train : test).entries.push_back(std::move(e));
  }
  return {std::move(train), std::move(test)};
}

// ---------------------------------------------------------------------------
// Crops

std::array<std::pair<std::size_t, std::size_t>, 4> crop_anchors(std::size_t side, std::size_t crop) {
  if (crop == 0 || crop > side) {
    throw Error(ErrorCode::CropTooLarge,
                "crop " + std::to_string(crop) + " does not fit an image of side " + std::to_string(side));
  }
  const std::size_t far = side - crop;
  return {{{0, 0}, {0, far}, {far, 0}, {far, far}}};
}

std::array<Grid, 4> crop_four(const Grid& image, std::size_t crop) {
  const auto anchors = crop_anchors(image.side(), crop);
  std::array<Grid, 4> out;
  for (std::size_t k = 0; k < 4; ++k) {
    Grid c(crop);
    const auto [r0, c0] = anchors[k];
    for (std::size_t r = 0; r < crop; ++r) {
      for (std::size_t col = 0; col < crop; ++col) c(r, col) = image(r0 + r, c0 + col);
    }
    out[k] = std::move(c);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic printing-imaging channel

void validate_channel(const ChannelParams& p) {
  if (!(p.blur_sigma >= 0.0)) throw Error(ErrorCode::RangeError, "channel.blur_sigma must be >= 0");
  if (!(p.dot_gain >= -1.0 && p.dot_gain <= 1.0)) throw Error(ErrorCode::RangeError, "channel.dot_gain must be in [-1,1]");
  if (!(p.gamma > 0.0)) throw Error(ErrorCode::RangeError, "channel.gamma must be > 0");
  if (!(p.noise_sigma >= 0.0)) throw Error(ErrorCode::RangeError, "channel.noise_sigma must be >= 0");
}

namespace {

// Mirror index into [0, n) without repeating the edge pixel.
std::size_t mirror(long i, long n) {
  if (n == 1) return 0;
  const long period = 2 * (n - 1);
  long k = i % period;
  if (k < 0) k += period;
  return static_cast<std::size_t>(k < n ? k : period - k);
}

}  // namespace

Grid gaussian_blur(const Grid& image, double sigma) {
  if (sigma <= 0.0) return image;
  const long radius = static_cast<long>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (long k = -radius; k <= radius; ++k) {
    const double w = std::exp(-0.5 * static_cast<double>(k * k) / (sigma * sigma));
    kernel[static_cast<std::size_t>(k + radius)] = w;
    total += w;
  }
  for (auto& w : kernel) w /= total;

  const long n = static_cast<long>(image.side());
  Grid rows(image.side());
  for (long r = 0; r < n; ++r) {
    for (long c = 0; c < n; ++c) {
      double acc = 0.0;
      for (long k = -radius; k <= radius; ++k) acc += kernel[static_cast<std::size_t>(k + radius)] * image(r, mirror(c + k, n));
      rows(r, c) = acc;
    }
  }
  Grid out(image.side());
  for (long r = 0; r < n; ++r) {
    for (long c = 0; c < n; ++c) {
      double acc = 0.0;
      for (long k = -radius; k <= radius; ++k) acc += kernel[static_cast<std::size_t>(k + radius)] * rows(mirror(r + k, n), c);
      out(r, c) = acc;
    }
  }
  return out;
}

PrintedCode synth_channel(const DigitalTemplate& t, const ChannelParams& params) {
  validate_channel(params);
  std::mt19937_64 rng(params.seed);
  const Grid& src = t.pixels();
  const std::size_t n = src.side();

  // Dot gain: a pixel bordering ink (dilation) or paper (erosion) flips with
  // probability |dot_gain|. Eligibility is judged on the unmodified template.
  Grid inked = src;
  if (params.dot_gain != 0.0) {
    const bool dilate = params.dot_gain > 0.0;
    const double target = dilate ? 1.0 : 0.0;
    std::bernoulli_distribution flip(std::abs(params.dot_gain));
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < n; ++c) {
        const bool draw = flip(rng);
        if (src(r, c) == target) continue;
        const bool borders = (r > 0 && src(r - 1, c) == target) || (r + 1 < n && src(r + 1, c) == target) ||
                             (c > 0 && src(r, c - 1) == target) || (c + 1 < n && src(r, c + 1) == target);
        if (borders && draw) inked(r, c) = target;
      }
    }
  }

  Grid out = gaussian_blur(inked, params.blur_sigma);
  std::normal_distribution<double> noise(0.0, params.noise_sigma > 0.0 ? params.noise_sigma : 1.0);
  for (double& v : out.pixels()) {
    v = std::pow(std::max(v, 0.0), params.gamma);
    if (params.noise_sigma > 0.0) v += noise(rng);
    v = std::clamp(v, 0.0, 1.0);
  }
  return PrintedCode(std::move(out), Authenticity::synthetic, t.id());
}

DatasetManifest make_synthetic_dataset(const SyntheticDatasetSpec& spec, const fs::path& root) {
  if (spec.n < 1) throw Error(ErrorCode::RangeError, "simulate.n must be >= 1");
  if (!(spec.density > 0.0 && spec.density < 1.0)) throw Error(ErrorCode::RangeError, "simulate.density must be in (0,1)");
  if (spec.side < DigitalTemplate::kMinSide) throw Error(ErrorCode::RangeError, "simulate.m must be >= 8");
  validate_channel(spec.channel);

  DatasetManifest manifest;
  manifest.root = root;
  manifest.pairing = Pairing::paired;
  manifest.split_seed = spec.seed;
  const fs::path printed_dir = fs::path("printed") / spec.device / "original";
  try {
    fs::create_directories(root / "templates");
    fs::create_directories(root / printed_dir);
  } catch (const fs::filesystem_error& e) {
    throw Error(ErrorCode::IoError, e.what());
  }

  for (std::size_t i = 0; i < spec.n; ++i) {
    char id[16];
    std::snprintf(id, sizeof(id), "%06zu", i);
    std::mt19937_64 rng(mix_seed(spec.seed, 2 * i));
    std::bernoulli_distribution ink(spec.density);
    Grid g(spec.side);
    for (double& v : g.pixels()) v = ink(rng) ? 1.0 : 0.0;
    DigitalTemplate t(std::move(g), id);

    ChannelParams channel = spec.channel;
    channel.seed = mix_seed(spec.channel.seed ^ spec.seed, 2 * i + 1);
    const PrintedCode y = synth_channel(t, channel);

    ManifestEntry e;
    e.id = id;
    e.template_path = fs::path("templates") / (std::string(id) + ".png");
    e.printed_path = printed_dir / (std::string(id) + ".png");
    e.authenticity = Authenticity::original;
    write_png(root / e.template_path, t.pixels());
    write_png(root / *e.printed_path, y.pixels());
    manifest.entries.push_back(std::move(e));
  }

  if (spec.n >= 2) {
    auto [train, test] = split_train_test(manifest, spec.train_fraction);
    std::set<std::string> test_ids;
    for (const auto& e : test.entries) test_ids.insert(e.id);
    for (auto& e : manifest.entries) e.split = test_ids.contains(e.id) ? "test" : "train";
  } else {
    manifest.entries.front().split = "train";
  }
  write_manifest(manifest);
  return manifest;
}

std::vector<Sample> load_samples(const DatasetManifest& manifest, std::size_t crop) {
  validate_manifest(manifest);
  std::vector<Sample> out;
  for (const auto& e : manifest.entries) {
    Grid t = read_png(manifest.root / e.template_path);
    for (double& v : t.pixels()) v = v >= 0.5 ? 1.0 : 0.0;
    std::optional<Grid> y;
    if (e.printed_path) y = read_png(manifest.root / *e.printed_path);
    if (y && y->side() != t.side()) {
      throw Error(ErrorCode::ShapeMismatch, "template and print of '" + e.id + "' differ in size");
    }
    if (crop == 0) {
      std::optional<PrintedCode> print;
      if (y) print.emplace(std::move(*y), e.authenticity, e.id);
      out.push_back({DigitalTemplate(std::move(t), e.id), std::move(print)});
      continue;
    }
    const auto t_crops = crop_four(t, crop);
    std::optional<std::array<Grid, 4>> y_crops;
    if (y) y_crops = crop_four(*y, crop);
    for (std::size_t k = 0; k < 4; ++k) {
      const std::string id = e.id + "_c" + std::to_string(k);
      std::optional<PrintedCode> print;
      if (y_crops) print.emplace((*y_crops)[k], e.authenticity, id);
      out.push_back({DigitalTemplate(t_crops[k], id), std::move(print)});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Batches

BatchStream::BatchStream(std::size_t n_samples, std::size_t batch_size, Pairing pairing, std::uint64_t seed,
                         double hybrid_fraction)
    : n_(n_samples), batch_size_(batch_size), pairing_(pairing), seed_(seed), hybrid_fraction_(hybrid_fraction) {
  if (n_ == 0) throw Error(ErrorCode::EmptyManifest, "no samples to batch");
  if (batch_size_ == 0) throw Error(ErrorCode::RangeError, "batch size must be >= 1");
  if (batch_size_ > n_) {
    throw Error(ErrorCode::BatchTooLarge,
                "batch size " + std::to_string(batch_size_) + " exceeds " + std::to_string(n_) + " samples");
  }
  if (!(hybrid_fraction_ >= 0.0 && hybrid_fraction_ <= 1.0)) {
    throw Error(ErrorCode::RangeError, "hybrid fraction must be in [0,1]");
  }
  plan_epoch();
}

void BatchStream::plan_epoch() {
  const std::uint64_t epoch_seed = mix_seed(seed_, epoch_);
  template_order_ = seeded_permutation(n_, mix_seed(epoch_seed, 0));
  switch (pairing_) {
    case Pairing::paired:
      print_order_ = template_order_;
      paired_.assign(n_, true);
      break;
    case Pairing::unpaired:
      print_order_ = seeded_permutation(n_, mix_seed(epoch_seed, 1));
      paired_.assign(n_, false);
      break;
    case Pairing::hybrid: {
      const auto keep = static_cast<std::size_t>(std::llround(hybrid_fraction_ * static_cast<double>(n_)));
      const auto selection = seeded_permutation(n_, mix_seed(epoch_seed, 2));
      std::vector<bool> aligned_sample(n_, false);
      for (std::size_t i = 0; i < keep; ++i) aligned_sample[selection[i]] = true;

      print_order_ = template_order_;
      paired_.assign(n_, false);
      std::vector<std::size_t> loose_positions;
      for (std::size_t pos = 0; pos < n_; ++pos) {
        if (aligned_sample[template_order_[pos]]) {
          paired_[pos] = true;
        } else {
          loose_positions.push_back(pos);
        }
      }
      const auto shuffle = seeded_permutation(loose_positions.size(), mix_seed(epoch_seed, 3));
      for (std::size_t k = 0; k < loose_positions.size(); ++k) {
        print_order_[loose_positions[k]] = template_order_[loose_positions[shuffle[k]]];
      }
      break;
    }
  }
}

BatchPlan BatchStream::next() {
  if (cursor_ >= n_) {
    ++epoch_;
    cursor_ = 0;
    plan_epoch();
  }
  BatchPlan plan;
  plan.regime = pairing_;
  plan.epoch = epoch_;
  const std::size_t end = std::min(n_, cursor_ + batch_size_);
  for (std::size_t pos = cursor_; pos < end; ++pos) {
    plan.template_index.push_back(template_order_[pos]);
    plan.print_index.push_back(print_order_[pos]);
    plan.paired.push_back(paired_[pos]);
  }
  cursor_ = end;
  return plan;
}

void BatchStream::seek(std::uint64_t epoch, std::size_t cursor) {
  if (cursor > n_) throw Error(ErrorCode::RangeError, "batch cursor beyond the epoch");
  epoch_ = epoch;
  cursor_ = cursor;
  plan_epoch();
}

BatchStream make_batches(const DatasetManifest& manifest, std::size_t batch_size, Pairing pairing, std::uint64_t seed,
                         double hybrid_fraction) {
  validate_manifest(manifest);
  return BatchStream(manifest.size(), batch_size, pairing, seed, hybrid_fraction);
}

}  // namespace turbo
