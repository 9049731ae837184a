#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "turbo_twin/backbones.hpp"
#include "turbo_twin/data.hpp"
#include "turbo_twin/grid.hpp"

namespace turbo {

inline constexpr double kBinarizeThreshold = 0.5;

// Fraction of pixels where t differs from [t_tilde >= threshold].
double hamming_metric(const Grid& t, const Grid& t_tilde, double threshold = kBinarizeThreshold);
double hamming_metric(const DigitalTemplate& t, const Grid& t_tilde, double threshold = kBinarizeThreshold);

double mse_metric(const Grid& a, const Grid& b);
double mse_metric(std::span<const Grid> a, std::span<const Grid> b);

// Mean over every fully contained window x window patch, uniform weights,
// population (1/N) moments.
double ssim_metric(const Grid& a, const Grid& b, int window = 11, double k1 = 0.01, double k2 = 0.03,
                   double dynamic_range = 1.0);

// Maps one image to a feature vector of fixed length.
using FeatureExtractor = std::function<Eigen::VectorXd(const Grid&)>;

// Pixels in row-major order.
FeatureExtractor identity_extractor();
// Frozen random convolutional embedder: three stride-2 3x3 conv + ReLU layers
// (1 -> 8 -> 16 -> 32 channels) with weights fixed by `seed`; features are the
// per-channel spatial mean and standard deviation (64 values).
FeatureExtractor random_conv_extractor(std::uint64_t seed = 0x7e57);

struct FeatureStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;  // unbiased
  std::size_t n = 0;
};

FeatureStats feature_stats(std::span<const Grid> images, const FeatureExtractor& extractor);
// Rows are samples.
FeatureStats feature_stats(const Eigen::MatrixXd& features);

// |mu1-mu2|^2 + Tr(S1 + S2 - 2 (S1 S2)^{1/2}).
double frechet_distance(const FeatureStats& s1, const FeatureStats& s2);

struct MetricReport {
  double fid_y_to_t = 0.0;  // real templates vs encoder estimates
  double hamming = 0.0;
  double fid_t_to_y = 0.0;  // real prints vs decoder estimates
  double mse = 0.0;
  double ssim = 0.0;
  std::size_t n_samples = 0;

  friend bool operator==(const MetricReport&, const MetricReport&) = default;
};

nlohmann::json report_to_json(const MetricReport& report);
MetricReport report_from_json(const nlohmann::json& j);
// "config_hash,fid_y_to_t,hamming,fid_t_to_y,mse,ssim,n_samples"
std::string report_csv_header();
std::string report_csv_row(const MetricReport& report, const std::string& config_hash);

struct EvalOptions {
  double threshold = kBinarizeThreshold;
  int ssim_window = 11;
  std::size_t chunk = 8;
};

// Encoder over prints, decoder over templates, raw outputs. Samples are
// processed in id order so the report does not depend on the input order.
MetricReport evaluate_model(const Translator& encoder, const Translator& decoder, std::vector<Sample> samples,
                            const FeatureExtractor& extractor, const EvalOptions& options = {});

// t~ = encoder(y) and y~ = decoder(t) for each sample, in input order.
struct Estimates {
  std::vector<Grid> t_tilde;
  std::vector<Grid> y_tilde;
};
Estimates run_models(const Translator& encoder, const Translator& decoder, const std::vector<Sample>& samples,
                     std::size_t chunk = 8);

// Row-major grayscale image of arbitrary shape, values in [0,1].
struct Canvas {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> pixels;

  double at(std::size_t row, std::size_t col) const { return pixels[row * width + col]; }
};

void write_canvas_png(const std::filesystem::path& path, const Canvas& canvas);
Canvas read_canvas_png(const std::filesystem::path& path);

struct NamedModel {
  std::string name;
  const Translator* encoder;
  const Translator* decoder;
};

// Two rows of cells. Per sample a block of 1 + |models| columns:
//   top    y | t~ of each model
//   bottom t | y~ of each model
Canvas sample_grid(const std::vector<NamedModel>& models, const std::vector<Sample>& samples);
Canvas sample_grid(const std::vector<NamedModel>& models, const std::vector<Sample>& samples,
                   const std::filesystem::path& out);

// n x d data -> n x 2 coordinates.
using Projector = std::function<Eigen::MatrixXd(const Eigen::MatrixXd&)>;
// Top-2 principal components; each axis is oriented so its largest-magnitude
// loading is positive.
Projector pca_projector();

struct Embedding {
  Eigen::MatrixXd coords;  // n x 2
  std::vector<std::string> labels;
};

// labels may be empty or one per image.
Embedding embed_2d(std::span<const Grid> images, std::vector<std::string> labels = {},
                   const Projector& projector = pca_projector());
void write_embedding_csv(const std::filesystem::path& path, const Embedding& embedding);

// Real and generated templates and prints, labelled for plotting.
Embedding embed_model(const Translator& encoder, const Translator& decoder, const std::vector<Sample>& samples,
                      const Projector& projector = pca_projector());

// Comparison table across runs; columns follow the report metrics.
struct ReportTable {
  static constexpr std::array<const char*, 5> kColumns = {"FID(y->t~)", "Hamming", "FID(t->y~)", "MSE", "SSIM"};
  std::vector<std::string> runs;
  std::vector<std::array<double, 5>> values;
  std::array<std::size_t, 5> best{};  // row index of the best entry per column

  std::string to_csv() const;
  std::string to_text() const;
};

// Best is the minimum for FID, Hamming and MSE, the maximum for SSIM.
ReportTable make_report_table(const std::vector<std::pair<std::string, MetricReport>>& runs);

}  // namespace turbo
