#include "turbo_twin/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <png.h>

#include "seeding.hpp"
#include "turbo_twin/error.hpp"
#include "turbo_twin/tensor_io.hpp"

namespace turbo {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Pixel metrics

namespace {

void require_same_shape(const Grid& a, const Grid& b, const char* what) {
  if (a.side() != b.side()) throw Error(ErrorCode::ShapeMismatch, std::string(what) + ": grid sizes differ");
}

}  // namespace

double hamming_metric(const Grid& t, const Grid& t_tilde, double threshold) {
  require_same_shape(t, t_tilde, "hamming");
  if (!(threshold > 0.0 && threshold < 1.0)) throw Error(ErrorCode::RangeError, "threshold must be in (0,1)");
  if (t.size() == 0) return 0.0;
  std::size_t wrong = 0;
  const auto a = t.pixels();
  const auto b = t_tilde.pixels();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double bit = b[i] >= threshold ? 1.0 : 0.0;
    wrong += a[i] != bit;
  }
  return static_cast<double>(wrong) / static_cast<double>(a.size());
}

double hamming_metric(const DigitalTemplate& t, const Grid& t_tilde, double threshold) {
  return hamming_metric(t.pixels(), t_tilde, threshold);
}

double mse_metric(const Grid& a, const Grid& b) { return mse_metric(std::span(&a, 1), std::span(&b, 1)); }

double mse_metric(std::span<const Grid> a, std::span<const Grid> b) {
  if (a.size() != b.size()) throw Error(ErrorCode::ShapeMismatch, "mse: batch sizes differ");
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    require_same_shape(a[k], b[k], "mse");
    const auto pa = a[k].pixels();
    const auto pb = b[k].pixels();
    for (std::size_t i = 0; i < pa.size(); ++i) sum += (pa[i] - pb[i]) * (pa[i] - pb[i]);
    count += pa.size();
  }
  return count == 0 ? 0.0 : sum / static_cast<double>(count);
}

double ssim_metric(const Grid& a, const Grid& b, int window, double k1, double k2, double dynamic_range) {
  require_same_shape(a, b, "ssim");
  if (window < 3 || window % 2 == 0) throw Error(ErrorCode::WindowTooLarge, "ssim window must be odd and >= 3");
  const auto w = static_cast<std::size_t>(window);
  if (w > a.side()) throw Error(ErrorCode::WindowTooLarge, "ssim window exceeds the grid");
  const double c1 = (k1 * dynamic_range) * (k1 * dynamic_range);
  const double c2 = (k2 * dynamic_range) * (k2 * dynamic_range);
  const double inv = 1.0 / static_cast<double>(w * w);
  const std::size_t positions = a.side() - w + 1;
  double total = 0.0;
  for (std::size_t r0 = 0; r0 < positions; ++r0) {
    for (std::size_t c0 = 0; c0 < positions; ++c0) {
      double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
      for (std::size_t r = r0; r < r0 + w; ++r) {
        for (std::size_t c = c0; c < c0 + w; ++c) {
          const double x = a(r, c);
          const double y = b(r, c);
          sa += x;
          sb += y;
          saa += x * x;
          sbb += y * y;
          sab += x * y;
        }
      }
      const double ma = sa * inv, mb = sb * inv;
      const double va = saa * inv - ma * ma;
      const double vb = sbb * inv - mb * mb;
      const double cov = sab * inv - ma * mb;
      total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
  }
  return total / static_cast<double>(positions * positions);
}

// ---------------------------------------------------------------------------
// Features

FeatureExtractor identity_extractor() {
  return [](const Grid& g) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(g.size()));
    for (std::size_t i = 0; i < g.size(); ++i) v[static_cast<Eigen::Index>(i)] = g.pixels()[i];
    return v;
  };
}

FeatureExtractor random_conv_extractor(std::uint64_t seed) {
  namespace nn = torch::nn;
  nn::Sequential net{nullptr};
  {
    detail::SeededScope scope(seed);
    auto conv = [](int in, int out) { return nn::Conv2d(nn::Conv2dOptions(in, out, 3).stride(2).padding(1)); };
    net = nn::Sequential(conv(1, 8), nn::ReLU(), conv(8, 16), nn::ReLU(), conv(16, 32), nn::ReLU());
  }
  net->to(torch::kFloat64);
  net->eval();
  for (auto& p : net->parameters()) p.requires_grad_(false);
  return [net](const Grid& g) mutable {
    torch::NoGradGuard no_grad;
    auto x = grid_to_tensor(g, torch::kFloat64);
    auto h = net->forward(x).flatten(2);  // 1 x 32 x hw
    auto mean = h.mean(2).flatten();
    auto sd = h.std(2, /*unbiased=*/false).flatten();
    auto feats = torch::cat({mean, sd}).contiguous();
    Eigen::VectorXd v(feats.numel());
    std::copy_n(feats.data_ptr<double>(), feats.numel(), v.data());
    return v;
  };
}

FeatureStats feature_stats(const Eigen::MatrixXd& features) {
  const auto n = features.rows();
  if (n < 2) throw Error(ErrorCode::BatchTooSmall, "feature statistics need at least 2 samples");
  FeatureStats s;
  s.n = static_cast<std::size_t>(n);
  s.mean = features.colwise().mean().transpose();
  const Eigen::MatrixXd centered = features.rowwise() - s.mean.transpose();
  s.cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
  return s;
}

FeatureStats feature_stats(std::span<const Grid> images, const FeatureExtractor& extractor) {
  if (images.size() < 2) throw Error(ErrorCode::BatchTooSmall, "feature statistics need at least 2 samples");
  Eigen::MatrixXd rows;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const Eigen::VectorXd f = extractor(images[i]);
    if (i == 0) rows.resize(static_cast<Eigen::Index>(images.size()), f.size());
    if (f.size() != rows.cols()) throw Error(ErrorCode::DimMismatch, "extractor returned varying dimensions");
    rows.row(static_cast<Eigen::Index>(i)) = f.transpose();
  }
  return feature_stats(rows);
}

namespace {

constexpr double kPsdTolerance = 1e-8;

Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> checked_eigen(const Eigen::MatrixXd& m, const char* what) {
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym);
  const double scale = std::max(1.0, eig.eigenvalues().cwiseAbs().maxCoeff());
  if (eig.eigenvalues().minCoeff() < -kPsdTolerance * scale) {
    throw Error(ErrorCode::NonPSD, std::string(what) + " is not positive semidefinite");
  }
  return eig;
}

}  // namespace

double frechet_distance(const FeatureStats& s1, const FeatureStats& s2) {
  if (s1.mean.size() != s2.mean.size() || s1.cov.rows() != s2.cov.rows() || s1.cov.rows() != s1.mean.size()) {
    throw Error(ErrorCode::DimMismatch, "feature statistics differ in dimension");
  }
  const auto e1 = checked_eigen(s1.cov, "first covariance");
  checked_eigen(s2.cov, "second covariance");
  const Eigen::VectorXd root = e1.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  const Eigen::MatrixXd sqrt1 = e1.eigenvectors() * root.asDiagonal() * e1.eigenvectors().transpose();
  // (S1 S2)^{1/2} has the same trace as (S1^{1/2} S2 S1^{1/2})^{1/2}, which is symmetric.
  const Eigen::MatrixXd inner = sqrt1 * s2.cov * sqrt1;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> e2(0.5 * (inner + inner.transpose()), Eigen::EigenvaluesOnly);
  const double trace_sqrt = e2.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  const double d = (s1.mean - s2.mean).squaredNorm() + s1.cov.trace() + s2.cov.trace() - 2.0 * trace_sqrt;
  return std::max(d, 0.0);
}

// ---------------------------------------------------------------------------
// Reports

nlohmann::json report_to_json(const MetricReport& r) {
  return {{"fid_y_to_t", r.fid_y_to_t}, {"hamming", r.hamming}, {"fid_t_to_y", r.fid_t_to_y},
          {"mse", r.mse},               {"ssim", r.ssim},       {"n_samples", r.n_samples}};
}

MetricReport report_from_json(const nlohmann::json& j) {
  MetricReport r;
  r.fid_y_to_t = j.at("fid_y_to_t").get<double>();
  r.hamming = j.at("hamming").get<double>();
  r.fid_t_to_y = j.at("fid_t_to_y").get<double>();
  r.mse = j.at("mse").get<double>();
  r.ssim = j.at("ssim").get<double>();
  r.n_samples = j.at("n_samples").get<std::size_t>();
  return r;
}

std::string report_csv_header() { return "config_hash,fid_y_to_t,hamming,fid_t_to_y,mse,ssim,n_samples"; }

std::string report_csv_row(const MetricReport& r, const std::string& config_hash) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%s,%.9g,%.9g,%.9g,%.9g,%.9g,%zu", config_hash.c_str(), r.fid_y_to_t, r.hamming,
                r.fid_t_to_y, r.mse, r.ssim, r.n_samples);
  return buf;
}

Estimates run_models(const Translator& encoder, const Translator& decoder, const std::vector<Sample>& samples,
                     std::size_t chunk) {
  torch::NoGradGuard no_grad;
  Estimates out;
  chunk = std::max<std::size_t>(chunk, 1);
  for (std::size_t start = 0; start < samples.size(); start += chunk) {
    const std::size_t end = std::min(samples.size(), start + chunk);
    std::vector<Grid> ts;
    std::vector<Grid> ys;
    for (std::size_t i = start; i < end; ++i) {
      if (!samples[i].y) throw Error(ErrorCode::MissingPairing, "sample '" + samples[i].t.id() + "' has no print");
      ts.push_back(samples[i].t.pixels());
      ys.push_back(samples[i].y->pixels());
    }
    for (auto& g : tensor_to_grids(encoder(grids_to_tensor(ys)))) out.t_tilde.push_back(std::move(g));
    for (auto& g : tensor_to_grids(decoder(grids_to_tensor(ts)))) out.y_tilde.push_back(std::move(g));
  }
  return out;
}

MetricReport evaluate_model(const Translator& encoder, const Translator& decoder, std::vector<Sample> samples,
                            const FeatureExtractor& extractor, const EvalOptions& options) {
  if (samples.empty()) throw Error(ErrorCode::EmptyTestSet, "no test samples to evaluate");
  std::stable_sort(samples.begin(), samples.end(), [](const Sample& a, const Sample& b) { return a.t.id() < b.t.id(); });
  const Estimates est = run_models(encoder, decoder, samples, options.chunk);

  std::vector<Grid> ts;
  std::vector<Grid> ys;
  MetricReport r;
  r.n_samples = samples.size();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    ts.push_back(samples[i].t.pixels());
    ys.push_back(samples[i].y->pixels());
    r.hamming += hamming_metric(ts[i], est.t_tilde[i], options.threshold);
    r.ssim += ssim_metric(ys[i], est.y_tilde[i], options.ssim_window);
  }
  const double n = static_cast<double>(samples.size());
  r.hamming /= n;
  r.ssim /= n;
  r.mse = mse_metric(ys, est.y_tilde);
  r.fid_y_to_t = frechet_distance(feature_stats(ts, extractor), feature_stats(est.t_tilde, extractor));
  r.fid_t_to_y = frechet_distance(feature_stats(ys, extractor), feature_stats(est.y_tilde, extractor));
  return r;
}

// ---------------------------------------------------------------------------
// Images

void write_canvas_png(const fs::path& path, const Canvas& canvas) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::vector<png_byte> bytes(canvas.pixels.size());
  std::transform(canvas.pixels.begin(), canvas.pixels.end(), bytes.begin(), [](double v) {
    return static_cast<png_byte>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
  });
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(canvas.width);
  image.height = static_cast<png_uint_32>(canvas.height);
  image.format = PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&image, path.c_str(), 0, bytes.data(), 0, nullptr)) {
    throw Error(ErrorCode::IoError, "cannot write " + path.string() + ": " + image.message);
  }
}

Canvas read_canvas_png(const fs::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw Error(ErrorCode::IoError, "cannot read " + path.string() + ": " + image.message);
  }
  image.format = PNG_FORMAT_GRAY;
  std::vector<png_byte> bytes(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, bytes.data(), 0, nullptr)) {
    throw Error(ErrorCode::IoError, "cannot decode " + path.string() + ": " + image.message);
  }
  Canvas c{image.width, image.height, std::vector<double>(bytes.size())};
  std::transform(bytes.begin(), bytes.end(), c.pixels.begin(), [](png_byte b) { return b / 255.0; });
  return c;
}

Canvas sample_grid(const std::vector<NamedModel>& models, const std::vector<Sample>& samples) {
  if (samples.empty()) throw Error(ErrorCode::EmptyTestSet, "sample grid needs at least one sample");
  const std::size_t m = samples.front().t.side();
  const std::size_t block = 1 + models.size();
  Canvas canvas;
  canvas.width = samples.size() * block * m;
  canvas.height = 2 * m;
  canvas.pixels.assign(canvas.width * canvas.height, 0.0);
  auto paste = [&](const Grid& g, std::size_t row, std::size_t col) {
    if (g.side() != m) throw Error(ErrorCode::ShapeMismatch, "sample grid cells differ in size");
    for (std::size_t r = 0; r < m; ++r) {
      for (std::size_t c = 0; c < m; ++c) canvas.pixels[(row * m + r) * canvas.width + col * m + c] = g(r, c);
    }
  };
  std::vector<Estimates> est;
  for (const auto& model : models) est.push_back(run_models(*model.encoder, *model.decoder, samples));
  for (std::size_t s = 0; s < samples.size(); ++s) {
    if (!samples[s].y) throw Error(ErrorCode::MissingPairing, "sample grid needs printed codes");
    const std::size_t col0 = s * block;
    paste(samples[s].y->pixels(), 0, col0);
    paste(samples[s].t.pixels(), 1, col0);
    for (std::size_t k = 0; k < models.size(); ++k) {
      paste(est[k].t_tilde[s], 0, col0 + 1 + k);
      paste(est[k].y_tilde[s], 1, col0 + 1 + k);
    }
  }
  return canvas;
}

Canvas sample_grid(const std::vector<NamedModel>& models, const std::vector<Sample>& samples, const fs::path& out) {
  Canvas canvas = sample_grid(models, samples);
  write_canvas_png(out, canvas);
  return canvas;
}

// ---------------------------------------------------------------------------
// Embedding

Projector pca_projector() {
  return [](const Eigen::MatrixXd& x) {
    const Eigen::MatrixXd centered = x.rowwise() - x.colwise().mean();
    Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
    Eigen::MatrixXd axes = Eigen::MatrixXd::Zero(x.cols(), 2);
    const auto k = std::min<Eigen::Index>(2, svd.matrixV().cols());
    for (Eigen::Index j = 0; j < k; ++j) {
      Eigen::VectorXd v = svd.matrixV().col(j);
      Eigen::Index arg = 0;
      v.cwiseAbs().maxCoeff(&arg);
      if (v[arg] < 0) v = -v;
      axes.col(j) = v;
    }
    return Eigen::MatrixXd(centered * axes);
  };
}

Embedding embed_2d(std::span<const Grid> images, std::vector<std::string> labels, const Projector& projector) {
  if (images.size() < 3) throw Error(ErrorCode::BatchTooSmall, "embedding needs at least 3 images");
  if (!labels.empty() && labels.size() != images.size()) {
    throw Error(ErrorCode::ShapeMismatch, "one label per image expected");
  }
  const auto extract = identity_extractor();
  Eigen::MatrixXd x(static_cast<Eigen::Index>(images.size()), static_cast<Eigen::Index>(images[0].size()));
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].size() != images[0].size()) throw Error(ErrorCode::ShapeMismatch, "images differ in size");
    x.row(static_cast<Eigen::Index>(i)) = extract(images[i]).transpose();
  }
  Embedding e;
  e.coords = projector(x);
  if (e.coords.rows() != x.rows() || e.coords.cols() != 2) {
    throw Error(ErrorCode::ShapeMismatch, "projector must return n x 2 coordinates");
  }
  e.labels = labels.empty() ? std::vector<std::string>(images.size()) : std::move(labels);
  return e;
}

void write_embedding_csv(const fs::path& path, const Embedding& e) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << "x,y,label\n";
  char buf[64];
  for (Eigen::Index i = 0; i < e.coords.rows(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.9g,%.9g,", e.coords(i, 0), e.coords(i, 1));
    out << buf << e.labels[static_cast<std::size_t>(i)] << '\n';
  }
}

Embedding embed_model(const Translator& encoder, const Translator& decoder, const std::vector<Sample>& samples,
                      const Projector& projector) {
  const Estimates est = run_models(encoder, decoder, samples);
  std::vector<Grid> images;
  std::vector<std::string> labels;
  auto add = [&](const Grid& g, const char* label) {
    images.push_back(g);
    labels.emplace_back(label);
  };
  for (const auto& s : samples) add(s.t.pixels(), "template_real");
  for (const auto& g : est.t_tilde) add(g, "template_generated");
  for (const auto& s : samples) add(s.y->pixels(), "print_real");
  for (const auto& g : est.y_tilde) add(g, "print_generated");
  return embed_2d(images, std::move(labels), projector);
}

// ---------------------------------------------------------------------------
// Tables

ReportTable make_report_table(const std::vector<std::pair<std::string, MetricReport>>& runs) {
  ReportTable table;
  for (const auto& [name, r] : runs) {
    table.runs.push_back(name);
    table.values.push_back({r.fid_y_to_t, r.hamming, r.fid_t_to_y, r.mse, r.ssim});
  }
  for (std::size_t c = 0; c < ReportTable::kColumns.size(); ++c) {
    const bool maximize = c == 4;
    for (std::size_t i = 1; i < table.values.size(); ++i) {
      const double v = table.values[i][c];
      const double cur = table.values[table.best[c]][c];
      if (maximize ? v > cur : v < cur) table.best[c] = i;
    }
  }
  return table;
}

std::string ReportTable::to_csv() const {
  std::ostringstream out;
  out << "run";
  for (const char* c : kColumns) out << ',' << c;
  out << '\n';
  char buf[32];
  for (std::size_t i = 0; i < runs.size(); ++i) {
    out << runs[i];
    for (std::size_t c = 0; c < kColumns.size(); ++c) {
      std::snprintf(buf, sizeof(buf), "%.9g", values[i][c]);
      out << ',' << buf;
    }
    out << '\n';
  }
  return out.str();
}

std::string ReportTable::to_text() const {
  std::vector<std::vector<std::string>> cells;
  cells.emplace_back(std::vector<std::string>{"run"});
  for (const char* c : kColumns) cells.back().emplace_back(c);
  char buf[32];
  for (std::size_t i = 0; i < runs.size(); ++i) {
    std::vector<std::string> row{runs[i]};
    for (std::size_t c = 0; c < kColumns.size(); ++c) {
      std::snprintf(buf, sizeof(buf), "%.4f%s", values[i][c], best[c] == i ? "*" : "");
      row.emplace_back(buf);
    }
    cells.push_back(std::move(row));
  }
  std::vector<std::size_t> width(cells.front().size(), 0);
  for (const auto& row : cells) {
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  std::ostringstream out;
  for (const auto& row : cells) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c == 0) {
        out << std::left << std::setw(static_cast<int>(width[c])) << row[c];
      } else {
        out << "  " << std::right << std::setw(static_cast<int>(width[c])) << row[c];
      }
    }
    out << '\n';
  }
  out << "* best in column (min for FID, Hamming, MSE; max for SSIM)\n";
  return out.str();
}

}  // namespace turbo
