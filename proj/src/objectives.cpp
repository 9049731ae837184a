#include "turbo_twin/objectives.hpp"

#include <random>

#include "turbo_twin/critics.hpp"
#include "turbo_twin/error.hpp"

namespace turbo {

torch::Tensor adversarial_loss(GanLoss kind, AdversarialRole role, const torch::Tensor& real_scores,
                               const torch::Tensor& fake_scores) {
  if (!fake_scores.defined() || fake_scores.numel() == 0) {
    throw Error(ErrorCode::EmptyBatch, "adversarial loss needs fake scores");
  }
  if (role == AdversarialRole::generator) {
    switch (kind) {
      case GanLoss::lsgan: return 0.5 * (fake_scores - 1.0).pow(2).mean();
      case GanLoss::hinge:
      case GanLoss::wgan_gp: return -fake_scores.mean();
    }
  }
  if (!real_scores.defined() || real_scores.numel() == 0) {
    throw Error(ErrorCode::EmptyBatch, "critic loss needs real scores");
  }
  switch (kind) {
    case GanLoss::lsgan:
      return 0.5 * (real_scores - 1.0).pow(2).mean() + 0.5 * fake_scores.pow(2).mean();
    case GanLoss::hinge:
      return torch::relu(1.0 - real_scores).mean() + torch::relu(1.0 + fake_scores).mean();
    case GanLoss::wgan_gp:
      return fake_scores.mean() - real_scores.mean();
  }
  throw Error(ErrorCode::InvalidSpec, "unknown adversarial loss");
}

torch::Tensor gradient_penalty(const ImageMap& critic, const torch::Tensor& real, const torch::Tensor& fake,
                               double lambda_gp, std::uint64_t seed) {
  if (real.sizes() != fake.sizes()) {
    throw Error(ErrorCode::ShapeMismatch, "gradient penalty needs real and fake batches of equal shape");
  }
  if (real.size(0) == 0) throw Error(ErrorCode::EmptyBatch, "gradient penalty on an empty batch");
  const auto n = real.size(0);

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> eps(static_cast<std::size_t>(n));
  for (auto& e : eps) e = unit(rng);
  std::vector<std::int64_t> shape(static_cast<std::size_t>(real.dim()), 1);
  shape[0] = n;
  auto mix = torch::tensor(eps, torch::TensorOptions().dtype(torch::kFloat64)).to(real.scalar_type()).reshape(shape);

  auto interpolates = (mix * real.detach() + (1.0 - mix) * fake.detach()).requires_grad_(true);
  auto scores = per_sample_scores(critic(interpolates)).sum();
  auto grad = torch::autograd::grad({scores}, {interpolates}, /*grad_outputs=*/{}, /*retain_graph=*/true,
                                    /*create_graph=*/true)[0];
  auto norms = grad.reshape({n, -1}).norm(2, 1);
  return lambda_gp * (norms - 1.0).pow(2).mean();
}

torch::Tensor reconstruction_loss(ReconKind kind, const torch::Tensor& prediction, const torch::Tensor& target) {
  if (prediction.sizes() != target.sizes()) {
    throw Error(ErrorCode::ShapeMismatch, "reconstruction prediction and target shapes differ");
  }
  switch (kind) {
    case ReconKind::l1: return (prediction - target).abs().mean();
    case ReconKind::l2: return (prediction - target).pow(2).mean();
    case ReconKind::bce: {
      auto t = target.detach();
      if (!torch::logical_or(t == 0, t == 1).all().item<bool>()) {
        throw Error(ErrorCode::NonBinaryTarget, "bce reconstruction needs a binary target");
      }
      return torch::binary_cross_entropy(prediction, target.to(prediction.scalar_type()));
    }
  }
  throw Error(ErrorCode::InvalidSpec, "unknown reconstruction kind");
}

torch::Tensor ssim_loss(const torch::Tensor& prediction, const torch::Tensor& target, int window, double k1,
                        double k2, double dynamic_range) {
  if (prediction.sizes() != target.sizes()) throw Error(ErrorCode::ShapeMismatch, "ssim inputs differ in shape");
  if (window < 3 || window % 2 == 0) throw Error(ErrorCode::WindowTooLarge, "ssim window must be odd and >= 3");
  if (prediction.size(-1) < window || prediction.size(-2) < window) {
    throw Error(ErrorCode::WindowTooLarge, "ssim window exceeds the image");
  }
  const double c1 = (k1 * dynamic_range) * (k1 * dynamic_range);
  const double c2 = (k2 * dynamic_range) * (k2 * dynamic_range);
  auto pool = [window](const torch::Tensor& x) { return torch::avg_pool2d(x, window, /*stride=*/1); };
  const auto& a = prediction;
  const auto b = target.to(prediction.scalar_type());
  auto mu_a = pool(a);
  auto mu_b = pool(b);
  auto var_a = pool(a * a) - mu_a * mu_a;
  auto var_b = pool(b * b) - mu_b * mu_b;
  auto cov = pool(a * b) - mu_a * mu_b;
  auto map = ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
  return 1.0 - map.mean();
}

torch::Tensor TensorBatch::paired_index() const {
  auto opts = torch::TensorOptions().dtype(torch::kLong);
  switch (regime) {
    case Pairing::paired: return torch::arange(templates.size(0), opts);
    case Pairing::unpaired: return torch::empty({0}, opts);
    case Pairing::hybrid: return torch::nonzero(paired_mask).flatten();
  }
  return torch::empty({0}, opts);
}

bool PathOutputs::all_finite() const {
  for (const auto* t : {&t_tilde, &y_hat, &y_tilde, &t_hat}) {
    if (t->defined() && !torch::isfinite(*t).all().item<bool>()) return false;
  }
  return true;
}

PathOutputs forward_paths(const ImageMap& encoder, const ImageMap& decoder, const TensorBatch& batch) {
  PathOutputs out;
  out.t_tilde = encoder(batch.prints);
  out.y_hat = decoder(out.t_tilde);
  out.y_tilde = decoder(batch.templates);
  out.t_hat = encoder(out.y_tilde);
  return out;
}

std::map<LossTerm, double> LossBreakdown::term_values() const {
  std::map<LossTerm, double> out;
  for (const auto& [term, value] : terms) out.emplace(term, value.item<double>());
  return out;
}

double term_weight(LossTerm term, const TurboConfig& cfg) {
  const double recon = is_adversarial(term) ? 1.0 : cfg.recon_weight;
  switch (term) {
    case LossTerm::L_y_recon_direct:
    case LossTerm::D_y_hat:
      return cfg.alpha * recon;
    case LossTerm::L_t_recon_reverse:
    case LossTerm::D_t_hat:
      return cfg.beta * recon;
    default:
      return recon;
  }
}

namespace {

// Reconstruction over the aligned items only.
torch::Tensor paired_reconstruction(LossTerm term, ReconKind kind, const torch::Tensor& prediction,
                                    const torch::Tensor& target, const TensorBatch& batch) {
  if (batch.regime == Pairing::unpaired) {
    throw Error(ErrorCode::MissingPairing, std::string(to_string(term)) + " is enabled but the batch is unpaired");
  }
  if (batch.regime == Pairing::paired) return reconstruction_loss(kind, prediction, target);
  auto index = batch.paired_index();
  if (index.numel() == 0) return torch::zeros({}, prediction.options());
  return reconstruction_loss(kind, prediction.index_select(0, index), target.index_select(0, index));
}

torch::Tensor generator_term(LossTerm term, const torch::Tensor& generated, const CriticMap& critics,
                             const TurboConfig& cfg) {
  auto it = critics.find(term);
  if (it == critics.end() || !it->second) {
    throw Error(ErrorCode::InvalidSpec, "no critic supplied for " + std::string(to_string(term)));
  }
  return adversarial_loss(cfg.gan_loss, AdversarialRole::generator, torch::Tensor(), it->second(generated));
}

LossBreakdown assemble(std::map<LossTerm, torch::Tensor> terms, const TurboConfig& cfg, const torch::Tensor& like,
                       bool direct) {
  LossBreakdown out;
  auto total = torch::zeros({}, like.options());
  for (const auto& [term, value] : terms) total = total + term_weight(term, cfg) * value;
  out.terms = std::move(terms);
  auto zero = torch::zeros({}, like.options());
  out.direct_total = direct ? total : zero;
  out.reverse_total = direct ? zero : total;
  out.grand_total = total;
  return out;
}

}  // namespace

LossBreakdown direct_loss(const PathOutputs& outputs, const TensorBatch& batch, const CriticMap& critics,
                          const TurboConfig& cfg) {
  std::map<LossTerm, torch::Tensor> terms;
  if (cfg.enabled(LossTerm::L_t_recon)) {
    terms[LossTerm::L_t_recon] =
        paired_reconstruction(LossTerm::L_t_recon, cfg.template_recon, outputs.t_tilde, batch.templates, batch);
  }
  if (cfg.enabled(LossTerm::D_t_tilde)) {
    terms[LossTerm::D_t_tilde] = generator_term(LossTerm::D_t_tilde, outputs.t_tilde, critics, cfg);
  }
  if (cfg.enabled(LossTerm::L_y_recon_direct)) {
    terms[LossTerm::L_y_recon_direct] = reconstruction_loss(cfg.print_recon, outputs.y_hat, batch.prints);
  }
  if (cfg.enabled(LossTerm::D_y_hat)) {
    terms[LossTerm::D_y_hat] = generator_term(LossTerm::D_y_hat, outputs.y_hat, critics, cfg);
  }
  return assemble(std::move(terms), cfg, outputs.t_tilde.defined() ? outputs.t_tilde : batch.prints, /*direct=*/true);
}

LossBreakdown reverse_loss(const PathOutputs& outputs, const TensorBatch& batch, const CriticMap& critics,
                           const TurboConfig& cfg) {
  std::map<LossTerm, torch::Tensor> terms;
  if (cfg.enabled(LossTerm::L_y_recon_reverse)) {
    terms[LossTerm::L_y_recon_reverse] = paired_reconstruction(LossTerm::L_y_recon_reverse, cfg.print_recon,
                                                               outputs.y_tilde, batch.prints, batch);
  }
  if (cfg.enabled(LossTerm::D_y_tilde)) {
    terms[LossTerm::D_y_tilde] = generator_term(LossTerm::D_y_tilde, outputs.y_tilde, critics, cfg);
  }
  if (cfg.enabled(LossTerm::L_t_recon_reverse)) {
    terms[LossTerm::L_t_recon_reverse] = reconstruction_loss(cfg.template_recon, outputs.t_hat, batch.templates);
  }
  if (cfg.enabled(LossTerm::D_t_hat)) {
    terms[LossTerm::D_t_hat] = generator_term(LossTerm::D_t_hat, outputs.t_hat, critics, cfg);
  }
  return assemble(std::move(terms), cfg, outputs.y_tilde.defined() ? outputs.y_tilde : batch.templates,
                  /*direct=*/false);
}

LossBreakdown combine(const LossBreakdown& direct, const LossBreakdown& reverse) {
  LossBreakdown out;
  out.terms = direct.terms;
  for (const auto& [term, value] : reverse.terms) out.terms[term] = value;
  out.direct_total = direct.direct_total;
  out.reverse_total = reverse.reverse_total;
  out.grand_total = out.direct_total + out.reverse_total;
  return out;
}

LossBreakdown turbo_loss(const PathOutputs& outputs, const TensorBatch& batch, const CriticMap& critics,
                         const TurboConfig& cfg) {
  return combine(direct_loss(outputs, batch, critics, cfg), reverse_loss(outputs, batch, critics, cfg));
}

}  // namespace turbo
