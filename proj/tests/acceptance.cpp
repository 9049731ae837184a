// Acceptance gate: one PASS/FAIL line per criterion.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "turbo_twin/backbones.hpp"
#include "turbo_twin/config.hpp"
#include "turbo_twin/data.hpp"
#include "turbo_twin/error.hpp"
#include "turbo_twin/eval.hpp"
#include "turbo_twin/objectives.hpp"
#include "turbo_twin/trainer.hpp"

using namespace turbo;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

const auto kF64 = torch::TensorOptions().dtype(torch::kFloat64);

torch::Tensor central_difference(const std::function<double(const torch::Tensor&)>& f, const torch::Tensor& x0) {
  auto x = x0.detach().clone().contiguous();
  auto g = torch::zeros_like(x);
  auto xf = x.view({-1});
  auto gf = g.view({-1});
  const double h = 1e-6;
  for (int64_t i = 0; i < xf.numel(); ++i) {
    const double v = xf[i].item<double>();
    xf[i] = v + h;
    const double up = f(x);
    xf[i] = v - h;
    const double down = f(x);
    xf[i] = v;
    gf[i] = (up - down) / (2 * h);
  }
  return g;
}

double grad_error(const std::function<torch::Tensor(const torch::Tensor&)>& loss, const torch::Tensor& x0) {
  auto x = x0.clone().requires_grad_(true);
  auto analytic = torch::autograd::grad({loss(x)}, {x})[0];
  auto numeric = central_difference([&](const torch::Tensor& v) { return loss(v).item<double>(); }, x0);
  return (analytic - numeric).abs().max().item<double>() / std::max(numeric.abs().max().item<double>(), 1e-3);
}

ImageMap linear_critic(const torch::Tensor& a) {
  return [a](const torch::Tensor& x) { return (x * a).sum({1, 2, 3}).unsqueeze(1); };
}

// ---------------------------------------------------------------------------

Outcome ac1_reductions() {
  Outcome o;
  double worst = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    torch::manual_seed(seed);
    NetworkSpec spec;
    spec.base_width = 2;
    spec.residual_blocks = 1;
    auto enc = build_translator(spec, 10 + seed);
    auto dec = build_translator(spec, 20 + seed);
    enc.to(torch::kFloat64);
    dec.to(torch::kFloat64);
    CriticMap critics;
    for (LossTerm t : kAllLossTerms) {
      if (is_adversarial(t)) critics[t] = linear_critic(torch::randn({1, 1, 8, 8}, kF64) * 0.2);
    }
    TensorBatch b;
    b.templates = (torch::rand({3, 1, 8, 8}, kF64) > 0.5).to(torch::kFloat64);
    b.prints = torch::rand({3, 1, 8, 8}, kF64);
    auto E = [&](const torch::Tensor& x) { return enc(x); };
    auto D = [&](const torch::Tensor& x) { return dec(x); };
    const auto paths = forward_paths(E, D, b);
    auto rel = [](double a, double h) { return std::abs(a - h) / std::max(std::abs(h), 1e-12); };
    const auto G = AdversarialRole::generator;

    TurboConfig cg = reduction_preset(Preset::cyclegan);
    cg.alpha = 0.5 + 0.1 * seed;
    cg.beta = 1.5 - 0.1 * seed;
    const double got_cg = turbo_loss(paths, b, critics, cg).grand_value();
    const double hand_cg =
        (adversarial_loss(cg.gan_loss, G, {}, critics.at(LossTerm::D_t_tilde)(E(b.prints))) +
         adversarial_loss(cg.gan_loss, G, {}, critics.at(LossTerm::D_y_tilde)(D(b.templates))) +
         cg.alpha * reconstruction_loss(ReconKind::l1, D(E(b.prints)), b.prints) +
         cg.beta * reconstruction_loss(ReconKind::bce, E(D(b.templates)), b.templates))
            .item<double>();
    worst = std::max(worst, rel(got_cg, hand_cg));

    TurboConfig aae = reduction_preset(Preset::aae);
    const double got_aae = turbo_loss(paths, b, critics, aae).grand_value();
    auto code = E(b.prints);
    const double hand_aae = (reconstruction_loss(ReconKind::l1, D(code), b.prints) +
                             adversarial_loss(aae.gan_loss, G, {}, critics.at(LossTerm::D_t_tilde)(code)))
                                .item<double>();
    worst = std::max(worst, rel(got_aae, hand_aae));
  }
  o.require(worst <= 1e-6, "relative error " + fmt("%.3g", worst));
  o.detail = "max relative error " + fmt("%.3g", worst) + (o.detail.empty() ? "" : " (" + o.detail + ")");
  return o;
}

Outcome ac2_gradients() {
  Outcome o;
  const auto start = std::chrono::steady_clock::now();
  torch::manual_seed(2);
  auto real = torch::rand({1, 1, 8, 8}, kF64) * 0.8 - 0.4;
  auto fake = torch::rand({1, 1, 8, 8}, kF64) * 0.8 - 0.4;
  double worst = 0;
  auto track = [&](const std::string& name, double err) {
    worst = std::max(worst, err);
    o.require(err <= 1e-3, name + " " + fmt("%.3g", err));
  };
  for (GanLoss k : {GanLoss::lsgan, GanLoss::hinge, GanLoss::wgan_gp}) {
    const std::string n(to_string(k));
    track(n + "/critic-real",
          grad_error([&](const torch::Tensor& r) { return adversarial_loss(k, AdversarialRole::critic, r, fake); }, real));
    track(n + "/critic-fake",
          grad_error([&](const torch::Tensor& f) { return adversarial_loss(k, AdversarialRole::critic, real, f); }, fake));
    track(n + "/generator", grad_error([&](const torch::Tensor& f) {
            return adversarial_loss(k, AdversarialRole::generator, torch::Tensor(), f);
          }, fake));
  }
  auto ra = torch::rand({2, 1, 8, 8}, kF64);
  auto fa = torch::rand({2, 1, 8, 8}, kF64);
  track("wgan_gp+penalty", grad_error([&](const torch::Tensor& w) {
          ImageMap critic = [&w](const torch::Tensor& x) { return torch::tanh(torch::conv2d(x, w)).mean({1, 2, 3}); };
          return adversarial_loss(GanLoss::wgan_gp, AdversarialRole::critic, critic(ra), critic(fa)) +
                 gradient_penalty(critic, ra, fa, 10, 3);
        }, torch::randn({2, 1, 3, 3}, kF64) * 0.5));
  auto pred = torch::rand({1, 1, 8, 8}, kF64) * 0.8 + 0.1;
  auto t = (torch::rand({1, 1, 8, 8}, kF64) > 0.5).to(torch::kFloat64);
  for (ReconKind k : {ReconKind::l1, ReconKind::l2, ReconKind::bce}) {
    track(std::string(to_string(k)), grad_error([&](const torch::Tensor& p) { return reconstruction_loss(k, p, t); }, pred));
  }
  auto target = torch::rand({1, 1, 8, 8}, kF64);
  track("ssim", grad_error([&](const torch::Tensor& p) { return ssim_loss(p, target, 3); }, pred));
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  o.require(secs < 60, "runtime " + fmt("%.1fs", secs));
  const std::string failures = o.detail;
  o.detail = "max relative error " + fmt("%.3g", worst) + ", " + fmt("%.1fs", secs) +
             (failures.empty() ? "" : " (" + failures + ")");
  return o;
}

Outcome ac3_penalty() {
  Outcome o;
  torch::manual_seed(3);
  auto real = torch::rand({4, 1, 8, 8}, kF64);
  auto fake = torch::rand({4, 1, 8, 8}, kF64);
  double worst = 0;
  for (double w : {0.5, 1.0, 2.0}) {
    auto a = torch::randn({1, 1, 8, 8}, kF64);
    a = a / a.norm() * w;
    for (double lambda : {0.0, 10.0}) {
      const double gp = gradient_penalty(linear_critic(a), real, fake, lambda, 7).item<double>();
      worst = std::max(worst, std::abs(gp - lambda * (w - 1) * (w - 1)));
    }
  }
  o.require(worst <= 1e-6, "deviation " + fmt("%.3g", worst));
  if (o.pass) o.detail = "max |penalty - lambda(w-1)^2| = " + fmt("%.3g", worst);
  return o;
}

Outcome ac4_metrics() {
  Outcome o;
  auto s1 = [](double m, double v) {
    FeatureStats s;
    s.mean = Eigen::VectorXd::Constant(1, m);
    s.cov = Eigen::MatrixXd::Constant(1, 1, v);
    s.n = 2;
    return s;
  };
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0, 1);
  double fid_err = 0;
  for (int i = 0; i < 50; ++i) {
    const double m1 = 3 * u(rng), m2 = 3 * u(rng), v1 = 3 * u(rng), v2 = 3 * u(rng);
    const double closed = (m1 - m2) * (m1 - m2) + std::pow(std::sqrt(v1) - std::sqrt(v2), 2);
    fid_err = std::max(fid_err, std::abs(frechet_distance(s1(m1, v1), s1(m2, v2)) - closed));
    fid_err = std::max(fid_err, frechet_distance(s1(m1, v1), s1(m1, v1)));
  }
  o.require(fid_err <= 1e-8, "frechet " + fmt("%.3g", fid_err));

  auto random_grid = [&](std::size_t side, bool binary) {
    Grid g(side);
    for (double& v : g.pixels()) v = binary ? (u(rng) < 0.5 ? 0.0 : 1.0) : u(rng);
    return g;
  };
  const Grid a = random_grid(16, false);
  o.require(std::abs(ssim_metric(a, a) - 1.0) <= 1e-12, "ssim(a,a)");
  const double c1 = 1e-4, c2 = 9e-4;
  for (auto [x, y] : {std::pair{0.0, 1.0}, std::pair{0.2, 0.7}, std::pair{0.4, 0.4}}) {
    const double closed = (2 * x * y + c1) / (x * x + y * y + c1) * (c2 / c2);
    o.require(std::abs(ssim_metric(Grid(16, x), Grid(16, y)) - closed) <= 1e-6, "ssim constant");
  }
  for (int trial = 0; trial < 20; ++trial) {
    const Grid t = random_grid(16, true), est = random_grid(16, false), b = random_grid(16, false);
    std::size_t wrong = 0;
    double sq = 0;
    for (std::size_t r = 0; r < 16; ++r) {
      for (std::size_t c = 0; c < 16; ++c) {
        wrong += t(r, c) != (est(r, c) >= 0.5 ? 1.0 : 0.0);
        sq += (est(r, c) - b(r, c)) * (est(r, c) - b(r, c));
      }
    }
    o.require(hamming_metric(t, est) == wrong / 256.0, "hamming");
    o.require(mse_metric(est, b) == sq / 256.0, "mse");
  }
  if (o.pass) o.detail = "frechet max error " + fmt("%.3g", fid_err) + ", ssim/hamming/mse exact";
  return o;
}

// ---------------------------------------------------------------------------
// Desk-scale training

struct SmokeData {
  std::vector<Sample> train;
  std::vector<Sample> test;
};

SmokeData smoke_data(const fs::path& root) {
  SyntheticDatasetSpec spec;
  spec.n = 320;
  spec.side = 64;
  spec.density = 0.5;
  spec.train_fraction = 0.8;
  spec.seed = 2024;
  spec.channel.blur_sigma = 1.0;
  spec.channel.noise_sigma = 0.05;
  spec.channel.seed = 7;
  const auto manifest = make_synthetic_dataset(spec, root);
  return {load_samples(manifest.with_split("train")), load_samples(manifest.with_split("test"))};
}

constexpr int kSmokeSteps = 2000;

TurboConfig smoke_config(Preset preset, std::uint64_t seed) {
  TurboConfig cfg = reduction_preset(preset);
  cfg.seed = seed;
  cfg.model.base_width = 8;
  cfg.model.residual_blocks = 3;
  cfg.model.critic_base_width = 8;
  cfg.optimizer.total_steps = kSmokeSteps;
  cfg.optimizer.learning_rate = 1e-3;
  cfg.recon_weight = 30;
  return cfg;
}

double held_out_hamming(const TrainState& s, const std::vector<Sample>& test) {
  return evaluate_model(s.encoder, s.decoder, test, random_conv_extractor()).hamming;
}

struct SmokeRun {
  double untrained = 0;
  double trained = 0;
  double seconds = 0;
};

SmokeRun smoke_run(const SmokeData& data, Preset preset, std::uint64_t seed) {
  const auto cfg = smoke_config(preset, seed);
  SmokeRun r;
  const auto start = std::chrono::steady_clock::now();
  Trainer trainer(cfg, data.train);
  r.untrained = held_out_hamming(trainer.state(), data.test);
  trainer.run(kSmokeSteps);
  r.trained = held_out_hamming(trainer.state(), data.test);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::printf("  [%s seed %llu] hamming %.4f -> %.4f in %.0fs\n", std::string(to_string(preset)).c_str(),
              static_cast<unsigned long long>(seed), r.untrained, r.trained, r.seconds);
  std::fflush(stdout);
  return r;
}

Outcome ac5_smoke(const SmokeRun& r, std::size_t n_train) {
  Outcome o;
  o.require(n_train == 256, "train samples " + std::to_string(n_train));
  o.require(r.trained < 0.25, "hamming not below 0.25");
  o.require(r.trained <= 0.5 * r.untrained, "less than 50% below the untrained baseline");
  o.require(r.seconds <= 1800, "slower than 30 min");
  o.detail = "held-out hamming " + fmt("%.4f", r.trained) + " (untrained " + fmt("%.4f", r.untrained) + ", " +
             fmt("%.0fs", r.seconds) + ")" + (o.pass ? "" : ": " + o.detail);
  return o;
}

Outcome ac6_ordering(const SmokeData& data, const SmokeRun& paired_seed0) {
  Outcome o;
  int ordered = 0;
  std::string detail;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const double p = seed == 0 ? paired_seed0.trained : smoke_run(data, Preset::turbo_paired, seed).trained;
    const double u = smoke_run(data, Preset::turbo_unpaired, seed).trained;
    ordered += p <= u;
    detail += (seed ? ", " : "") + std::string("seed ") + std::to_string(seed) + ": paired " + fmt("%.4f", p) +
              " unpaired " + fmt("%.4f", u) + " ratio " + fmt("%.2f", u / p);
  }
  o.require(ordered >= 2, "ordering held on " + std::to_string(ordered) + "/3 seeds");
  o.detail = std::to_string(ordered) + "/3 seeds ordered (" + detail + ")";
  return o;
}

// ---------------------------------------------------------------------------

Outcome ac7_heuristics() {
  Outcome o;
  ImagePool pool(50, 7);
  pool.query(torch::rand({50, 1, 2, 2}));
  for (int k = 0; k < 100; ++k) pool.query(torch::rand({100, 1, 2, 2}));
  const double freq = pool.swaps() / 1e4;
  o.require(std::abs(freq - 0.5) <= 0.02, "swap frequency " + fmt("%.4f", freq));

  HeuristicParams h;
  h.n_d = 5;
  int critic = 0;
  for (int s = 0; s < 600; ++s) critic += should_update_critic(GanLoss::lsgan, 0, 0, h, s);
  o.require(critic == 500, "n_D alternation");

  HeuristicParams th;
  th.d_threshold = 0.5;
  th.g_threshold = 0.3;
  const struct {
    double d, g;
    bool want;
  } table[] = {{0.6, 0.9, true}, {0.1, 0.9, false}, {0.1, 0.2, true}, {0.6, 0.2, true}, {0.5, 0.3, false}};
  for (const auto& row : table) {
    o.require(should_update_critic(GanLoss::lsgan, row.d, row.g, th, 0) == row.want, "threshold table");
  }
  HeuristicParams only_d;
  only_d.d_threshold = 0.5;
  o.require(should_update_critic(GanLoss::lsgan, 0.6, 0, only_d, 0), "lsgan 0.6 > 0.5");

  HeuristicParams flip;
  flip.p_flip = 1;
  flip.p_noise = 0;
  std::mt19937_64 rng(1);
  auto labels = torch::tensor({1.f, 0.f, 1.f, 1.f, 0.f});
  auto [imgs, flipped] = perturb_critic_inputs(torch::rand({5, 1, 2, 2}), labels, flip, rng);
  o.require(flipped.equal(1 - labels), "p_flip=1");

  // Alternation count inside the trainer.
  std::mt19937_64 g(3);
  std::vector<Sample> samples;
  for (int i = 0; i < 6; ++i) {
    Grid t(32);
    for (double& v : t.pixels()) v = g() % 2 ? 1.0 : 0.0;
    DigitalTemplate dt(t, "s" + std::to_string(i));
    samples.push_back({dt, synth_channel(dt, {})});
  }
  TurboConfig cfg;
  cfg.model.base_width = 4;
  cfg.model.residual_blocks = 1;
  cfg.model.critic_base_width = 4;
  cfg.optimizer.batch_size = 2;
  cfg.heuristics.n_d = 3;
  cfg.heuristics.p_flip = 0;
  Trainer trainer(cfg, samples);
  trainer.run(3);
  bool exact = trainer.state().generator_opt.steps() == 3;
  for (const auto& [term, opt] : trainer.state().critic_opts) exact = exact && opt.steps() == 9;
  o.require(exact, "trainer critic/generator update ratio");
  if (o.pass) o.detail = "swap frequency " + fmt("%.4f", freq) + ", alternation and gating exact";
  return o;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome ac8_determinism(const fs::path& scratch) {
  Outcome o;
  SyntheticDatasetSpec spec;
  spec.n = 8;
  spec.side = 32;
  spec.seed = 8;
  spec.channel.blur_sigma = 0.8;
  spec.channel.noise_sigma = 0.02;
  const auto samples = load_samples(make_synthetic_dataset(spec, scratch / "data8"));
  TurboConfig cfg;
  cfg.seed = 8;
  cfg.model.base_width = 4;
  cfg.model.residual_blocks = 1;
  cfg.model.critic_base_width = 4;
  cfg.optimizer.batch_size = 2;

  auto opts = [&](const std::string& name, int every) {
    TrainOptions t;
    t.log_path = scratch / name / "losses.csv";
    t.checkpoint_dir = scratch / name / "ckpt";
    t.checkpoint_every = every;
    return t;
  };
  Trainer full(cfg, samples, opts("a", 0));
  full.run(8);
  Trainer(cfg, samples, opts("b", 0)).run(8);
  const std::string a = slurp(scratch / "a" / "losses.csv");
  o.require(!a.empty() && a == slurp(scratch / "b" / "losses.csv"), "repeat runs differ");

  {
    Trainer c(cfg, samples, opts("c", 4));
    c.run(4);
    // interrupted two steps after the checkpoint
    c.step();
    c.step();
  }
  auto resumed = Trainer::resume(samples, opts("c", 4));
  o.require(resumed.state().step == 4, "resume did not start at step 4");
  resumed.run(4);
  o.require(a == slurp(scratch / "c" / "losses.csv"), "resumed trajectory differs");
  o.require(full.state().generator_hash() == resumed.state().generator_hash() &&
                full.state().critic_hash() == resumed.state().critic_hash(),
            "resumed parameters differ");
  if (o.pass) o.detail = "byte-identical loss CSVs, resume from step 4 matches";
  return o;
}

Outcome ac9_validation() {
  Outcome o;
  auto rejected = [](const TurboConfig& cfg, ErrorCode code) {
    try {
      validate_config(cfg);
    } catch (const ConfigValidationError& e) {
      for (const auto& issue : e.issues()) {
        if (issue.code == code) return true;
      }
    }
    return false;
  };
  TurboConfig wp;
  wp.gan_loss = GanLoss::wgan_gp;
  wp.critic_kind = CriticKind::patch;
  o.require(rejected(wp, ErrorCode::InvalidCombination), "wgan_gp + patch accepted");
  TurboConfig up;
  up.pairing = Pairing::unpaired;
  o.require(rejected(up, ErrorCode::InconsistentPairing), "unpaired + paired losses accepted");
  TurboConfig wi = wp;
  wi.critic_kind = CriticKind::image;
  o.require(!rejected(wi, ErrorCode::InvalidCombination), "wgan_gp + image rejected");
  o.require(check_config(reduction_preset(Preset::turbo_unpaired)).empty(), "turbo_unpaired preset rejected");
  if (o.pass) o.detail = "both rejected, valid neighbours accepted";
  return o;
}

Outcome ac10_data(const fs::path& scratch) {
  Outcome o;
  DatasetManifest m;
  m.root = scratch;
  m.split_seed = 10;
  for (int i = 0; i < 720; ++i) {
    ManifestEntry e;
    e.id = std::to_string(i);
    e.template_path = "t/" + e.id + ".png";
    e.printed_path = "p/" + e.id + ".png";
    m.entries.push_back(e);
  }
  const auto [tr, te] = split_train_test(m, 0.8);
  const auto [tr2, te2] = split_train_test(m, 0.8);
  o.require(tr.size() == 576 && te.size() == 144, "split sizes");
  o.require(tr.entries == tr2.entries && te.entries == te2.entries, "split not deterministic");
  std::set<std::string> ids;
  for (const auto& e : tr.entries) ids.insert(e.id);
  for (const auto& e : te.entries) o.require(!ids.contains(e.id), "split overlap");

  SyntheticDatasetSpec spec;
  spec.n = 1;
  spec.side = 684;
  spec.seed = 10;
  spec.train_fraction = 0.5;
  const auto manifest = make_synthetic_dataset(spec, scratch / "data684");
  const auto anchors = crop_anchors(684, 256);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = i + 1; j < 4; ++j) {
      const bool apart = anchors[i].first + 256 <= anchors[j].first || anchors[j].first + 256 <= anchors[i].first ||
                         anchors[i].second + 256 <= anchors[j].second || anchors[j].second + 256 <= anchors[i].second;
      o.require(apart, "crops overlap");
    }
  }
  // Markers planted at the same offset inside each crop of t and y must survive cropping together.
  const auto& entry = manifest.entries[0];
  Grid t = read_png(manifest.root / entry.template_path);
  Grid y(684, 0.5);
  for (std::size_t k = 0; k < 4; ++k) {
    y(anchors[k].first + 10 + k, anchors[k].second + 20) = 1.0;
    t(anchors[k].first + 10 + k, anchors[k].second + 20) = 1.0;
    t(anchors[k].first + 11 + k, anchors[k].second + 20) = 0.0;
  }
  write_png(manifest.root / entry.template_path, t);
  write_png(manifest.root / *entry.printed_path, y);
  const auto samples = load_samples(manifest, 256);
  o.require(samples.size() == 4, "four crops");
  for (std::size_t k = 0; k < samples.size(); ++k) {
    o.require(samples[k].t.side() == 256 && samples[k].y->side() == 256, "crop size");
    o.require(samples[k].y->pixels()(10 + k, 20) == 1.0 && samples[k].t.pixels()(10 + k, 20) == 1.0 &&
                  samples[k].t.pixels()(11 + k, 20) == 0.0,
              "markers misaligned in crop " + std::to_string(k));
  }
  if (o.pass) o.detail = "576/144 split, 4 disjoint 256x256 crops, markers aligned";
  return o;
}

}  // namespace

// Optional arguments pick criteria by number, e.g. `acceptance 5 8`; default is all of them.
int main(int argc, char** argv) {
  torch::set_num_threads(1);
  const fs::path scratch = fs::temp_directory_path() / "turbo_twin_acceptance";
  fs::remove_all(scratch);
  fs::create_directories(scratch);

  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
  int failed = 0;
  int ran = 0;
  auto report = [&](int n, const char* title, const std::function<Outcome()>& f) {
    if (!wanted.empty() && !wanted.contains(n)) return;
    Outcome o;
    try {
      o = f();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    ++ran;
    failed += !o.pass;
    std::printf("%s AC%d %s: %s\n", o.pass ? "PASS" : "FAIL", n, title, o.detail.c_str());
    std::fflush(stdout);
  };

  report(1, "loss-algebra reductions", ac1_reductions);
  report(2, "gradient correctness", ac2_gradients);
  report(3, "gradient-penalty oracle", ac3_penalty);
  report(4, "metric oracles", ac4_metrics);

  // AC6 reuses the AC5 data and paired run.
  SmokeData data;
  std::optional<SmokeRun> paired;
  auto smoke = [&] {
    if (!paired) {
      data = smoke_data(scratch / "smoke");
      paired = smoke_run(data, Preset::turbo_paired, 0);
    }
  };
  report(5, "smoke training", [&] {
    smoke();
    return ac5_smoke(*paired, data.train.size());
  });
  report(6, "paired vs unpaired ordering", [&] {
    smoke();
    return ac6_ordering(data, *paired);
  });
  report(7, "heuristic mechanics", ac7_heuristics);
  report(8, "determinism", [&] { return ac8_determinism(scratch / "det"); });
  report(9, "validation gate", ac9_validation);
  report(10, "data protocol", [&] { return ac10_data(scratch / "data"); });

  fs::remove_all(scratch);
  std::printf("%d/%d criteria passed\n", ran - failed, ran);
  return failed == 0 ? 0 : 1;
}
