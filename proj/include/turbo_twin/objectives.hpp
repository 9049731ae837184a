#pragma once

#include <cstdint>
#include <functional>
#include <map>

#include <torch/torch.h>

#include "turbo_twin/config.hpp"

namespace turbo {

enum class AdversarialRole { critic, generator };

// Any differentiable image -> score (critic) or image -> image (translator) map.
using ImageMap = std::function<torch::Tensor(const torch::Tensor&)>;
// One critic per enabled adversarial term.
using CriticMap = std::map<LossTerm, ImageMap>;

// Scores of any shape whose first dimension is the batch; patch maps are
// averaged over every position.
//   lsgan  critic  1/2 E(real-1)^2 + 1/2 E fake^2     generator 1/2 E(fake-1)^2
//   hinge  critic  E max(0,1-real) + E max(0,1+fake)  generator -E fake
//   wgan   critic  E fake - E real                    generator -E fake
// The generator role reads only fake_scores.
torch::Tensor adversarial_loss(GanLoss kind, AdversarialRole role, const torch::Tensor& real_scores,
                               const torch::Tensor& fake_scores);

// lambda * E[(||grad_x critic(x_hat)||_2 - 1)^2] at x_hat = e*real + (1-e)*fake,
// e ~ U[0,1] per sample drawn from `seed`. The graph is kept so the result can
// be differentiated w.r.t. the critic's parameters.
torch::Tensor gradient_penalty(const ImageMap& critic, const torch::Tensor& real, const torch::Tensor& fake,
                               double lambda_gp, std::uint64_t seed);

torch::Tensor reconstruction_loss(ReconKind kind, const torch::Tensor& prediction, const torch::Tensor& target);

// 1 - mean SSIM with a uniform window; differentiable in `prediction`.
torch::Tensor ssim_loss(const torch::Tensor& prediction, const torch::Tensor& target, int window = 11,
                        double k1 = 0.01, double k2 = 0.03, double dynamic_range = 1.0);

struct TensorBatch {
  torch::Tensor templates;  // N x 1 x m x m, binary
  torch::Tensor prints;     // N x 1 x m x m, [0,1]
  Pairing regime = Pairing::paired;
  // Hybrid batches: bool N-vector marking the items whose (t, y) are aligned.
  torch::Tensor paired_mask;

  // Indices of aligned items; empty for unpaired batches.
  torch::Tensor paired_index() const;
};

struct PathOutputs {
  torch::Tensor t_tilde;  // encoder(y)
  torch::Tensor y_hat;    // decoder(t_tilde)
  torch::Tensor y_tilde;  // decoder(t)
  torch::Tensor t_hat;    // encoder(y_tilde)

  bool all_finite() const;
};

PathOutputs forward_paths(const ImageMap& encoder, const ImageMap& decoder, const TensorBatch& batch);

struct LossBreakdown {
  std::map<LossTerm, torch::Tensor> terms;
  torch::Tensor direct_total;
  torch::Tensor reverse_total;
  torch::Tensor grand_total;

  std::map<LossTerm, double> term_values() const;
  double direct_value() const { return direct_total.item<double>(); }
  double reverse_value() const { return reverse_total.item<double>(); }
  double grand_value() const { return grand_total.item<double>(); }
};

// Direct path: L(t, t~) + D(t~) + alpha L(y, y^) + alpha D(y^) over enabled terms,
// every L scaled by recon_weight.
LossBreakdown direct_loss(const PathOutputs& outputs, const TensorBatch& batch, const CriticMap& critics,
                          const TurboConfig& cfg);

// Reverse path: L(y, y~) + D(y~) + beta L(t, t^) + beta D(t^) over enabled terms,
// every L scaled by recon_weight.
LossBreakdown reverse_loss(const PathOutputs& outputs, const TensorBatch& batch, const CriticMap& critics,
                           const TurboConfig& cfg);

// grand_total = direct_total + reverse_total.
LossBreakdown combine(const LossBreakdown& direct, const LossBreakdown& reverse);
LossBreakdown turbo_loss(const PathOutputs& outputs, const TensorBatch& batch, const CriticMap& critics,
                         const TurboConfig& cfg);

// Weight applied to a term inside its path total.
double term_weight(LossTerm term, const TurboConfig& cfg);

}  // namespace turbo
