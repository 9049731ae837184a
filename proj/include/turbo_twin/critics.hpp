#pragma once

#include <cstdint>
#include <memory>

#include <torch/torch.h>

#include "turbo_twin/config.hpp"
#include "turbo_twin/tensor_io.hpp"

namespace turbo {

struct CriticSpec {
  CriticKind kind = CriticKind::patch;
  int in_channels = 1;
  int base_width = 64;
  // Patch: number of stride-2 layers (3 gives the 70x70 receptive field).
  // Image: number of residual downsampling stages. 0 picks those defaults.
  int stages = 0;
  // Instance normalization between layers. Must be off for wgan_gp.
  bool normalize = true;

  int effective_stages() const { return stages > 0 ? stages : (kind == CriticKind::patch ? 3 : 4); }

  friend bool operator==(const CriticSpec&, const CriticSpec&) = default;
};

// The critic used for one adversarial term under cfg.
CriticSpec critic_spec(const TurboConfig& cfg);

nlohmann::json spec_to_json(const CriticSpec& spec);
CriticSpec critic_spec_from_json(const nlohmann::json& j);

class CriticNetImpl : public torch::nn::Module {
 public:
  virtual torch::Tensor forward(const torch::Tensor& x) = 0;
};

// Strided convolutions producing a map of raw scores, one per overlapping patch.
class PatchCriticImpl : public CriticNetImpl {
 public:
  explicit PatchCriticImpl(const CriticSpec& spec);
  torch::Tensor forward(const torch::Tensor& x) override;

 private:
  torch::nn::Sequential body_{nullptr};
};

class ResidualDownImpl : public torch::nn::Module {
 public:
  ResidualDownImpl(int in, int out, bool normalize);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Sequential main_{nullptr};
  torch::nn::Conv2d shortcut_{nullptr};
};
TORCH_MODULE(ResidualDown);

// Residual downsampling stages, global average pool and a linear head: one score per image.
class ImageCriticImpl : public CriticNetImpl {
 public:
  explicit ImageCriticImpl(const CriticSpec& spec);
  torch::Tensor forward(const torch::Tensor& x) override;

 private:
  torch::nn::Conv2d stem_{nullptr};
  torch::nn::Sequential stages_{nullptr};
  torch::nn::Linear head_{nullptr};
};

class Critic {
 public:
  Critic(CriticSpec spec, std::uint64_t seed, std::shared_ptr<CriticNetImpl> net);

  // Patch kind: N x 1 x h' x w'. Image kind: N x 1.
  torch::Tensor operator()(const torch::Tensor& x) const;

  const CriticSpec& spec() const noexcept { return spec_; }
  std::uint64_t seed() const noexcept { return seed_; }
  torch::nn::Module& module() const { return *net_; }
  std::vector<torch::Tensor> parameters() const { return net_->parameters(); }
  std::map<std::string, torch::Tensor> named_tensors() const;
  void to(torch::Dtype dtype) const { net_->to(dtype); }

 private:
  CriticSpec spec_;
  std::uint64_t seed_;
  std::shared_ptr<CriticNetImpl> net_;
};

Critic build_critic(const CriticSpec& spec, std::uint64_t seed);

// Mean of each sample's score map: N scores.
torch::Tensor per_sample_scores(const torch::Tensor& scores);

TensorArchive critic_archive(const Critic& critic);
Critic critic_from_archive(const TensorArchive& archive);

}  // namespace turbo
