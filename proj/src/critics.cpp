#include "turbo_twin/critics.hpp"

#include <algorithm>

#include "seeding.hpp"
#include "turbo_twin/backbones.hpp"
#include "turbo_twin/error.hpp"

namespace turbo {

namespace nn = torch::nn;

CriticSpec critic_spec(const TurboConfig& cfg) {
  CriticSpec spec;
  spec.kind = cfg.critic_kind;
  spec.base_width = cfg.model.critic_base_width;
  spec.stages = cfg.model.critic_stages;
  spec.normalize = cfg.model.critic_normalize && cfg.gan_loss != GanLoss::wgan_gp;
  return spec;
}

nlohmann::json spec_to_json(const CriticSpec& spec) {
  return {{"kind", to_string(spec.kind)},
          {"in_channels", spec.in_channels},
          {"base_width", spec.base_width},
          {"stages", spec.stages},
          {"normalize", spec.normalize}};
}

CriticSpec critic_spec_from_json(const nlohmann::json& j) {
  CriticSpec spec;
  spec.kind = critic_kind_from_string(j.at("kind").get<std::string>());
  spec.in_channels = j.at("in_channels").get<int>();
  spec.base_width = j.at("base_width").get<int>();
  spec.stages = j.at("stages").get<int>();
  spec.normalize = j.at("normalize").get<bool>();
  return spec;
}

namespace {

nn::LeakyReLU leaky() { return nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)); }

nn::Conv2d conv(int in, int out, int kernel, int stride, int padding) {
  return nn::Conv2d(nn::Conv2dOptions(in, out, kernel).stride(stride).padding(padding));
}

int widen(int base, int level) { return base * (1 << std::min(level, 3)); }

}  // namespace

PatchCriticImpl::PatchCriticImpl(const CriticSpec& spec) {
  const int n = spec.effective_stages();
  const int w = spec.base_width;
  body_ = nn::Sequential();
  body_->push_back(conv(spec.in_channels, w, 4, 2, 1));
  body_->push_back(leaky());
  for (int i = 1; i < n; ++i) {
    body_->push_back(conv(widen(w, i - 1), widen(w, i), 4, 2, 1));
    if (spec.normalize) body_->push_back(instance_norm(widen(w, i)));
    body_->push_back(leaky());
  }
  body_->push_back(conv(widen(w, n - 1), widen(w, n), 4, 1, 1));
  if (spec.normalize) body_->push_back(instance_norm(widen(w, n)));
  body_->push_back(leaky());
  body_->push_back(conv(widen(w, n), 1, 4, 1, 1));
  register_module("body", body_);
}

torch::Tensor PatchCriticImpl::forward(const torch::Tensor& x) { return body_->forward(x); }

ResidualDownImpl::ResidualDownImpl(int in, int out, bool normalize) {
  main_ = nn::Sequential();
  if (normalize) main_->push_back(instance_norm(in));
  main_->push_back(leaky());
  main_->push_back(conv(in, out, 3, 1, 1));
  if (normalize) main_->push_back(instance_norm(out));
  main_->push_back(leaky());
  main_->push_back(conv(out, out, 3, 1, 1));
  main_->push_back(nn::AvgPool2d(nn::AvgPool2dOptions(2)));
  register_module("main", main_);
  shortcut_ = register_module("shortcut", conv(in, out, 1, 1, 0));
}

torch::Tensor ResidualDownImpl::forward(const torch::Tensor& x) {
  return main_->forward(x) + torch::avg_pool2d(shortcut_->forward(x), 2);
}

ImageCriticImpl::ImageCriticImpl(const CriticSpec& spec) {
  const int w = spec.base_width;
  stem_ = register_module("stem", conv(spec.in_channels, w, 3, 1, 1));
  stages_ = nn::Sequential();
  for (int i = 0; i < spec.effective_stages(); ++i) {
    stages_->push_back(ResidualDown(widen(w, i), widen(w, i + 1), spec.normalize));
  }
  register_module("stages", stages_);
  head_ = register_module("head", nn::Linear(widen(w, spec.effective_stages()), 1));
}

torch::Tensor ImageCriticImpl::forward(const torch::Tensor& x) {
  auto h = stages_->forward(stem_->forward(x));
  h = torch::leaky_relu(h, 0.2).mean({2, 3});
  return head_->forward(h);
}

Critic::Critic(CriticSpec spec, std::uint64_t seed, std::shared_ptr<CriticNetImpl> net)
    : spec_(spec), seed_(seed), net_(std::move(net)) {}

torch::Tensor Critic::operator()(const torch::Tensor& x) const {
  if (x.dim() != 4 || x.size(1) != spec_.in_channels) {
    throw Error(ErrorCode::ShapeError, "critic expects N x " + std::to_string(spec_.in_channels) + " x h x w input");
  }
  const auto min_side = std::min(x.size(2), x.size(3));
  const int n = spec_.effective_stages();
  // Patch: the two stride-1 k4 layers shrink by one each after n halvings.
  const bool too_small = spec_.kind == CriticKind::patch ? (min_side >> n) < 3 : (min_side >> n) < 1;
  if (too_small) {
    throw Error(ErrorCode::ShapeError, "input side " + std::to_string(min_side) + " is smaller than the critic's reach");
  }
  return net_->forward(x);
}

std::map<std::string, torch::Tensor> Critic::named_tensors() const {
  std::map<std::string, torch::Tensor> out;
  for (const auto& p : net_->named_parameters()) out.emplace(p.key(), p.value());
  for (const auto& b : net_->named_buffers()) out.emplace(b.key(), b.value());
  return out;
}

Critic build_critic(const CriticSpec& spec, std::uint64_t seed) {
  if (spec.in_channels < 1 || spec.base_width < 1 || spec.stages < 0 || spec.stages > 8) {
    throw Error(ErrorCode::InvalidSpec, "critic channels/width must be positive and stages in [0,8]");
  }
  detail::SeededScope scope(seed);
  std::shared_ptr<CriticNetImpl> net;
  if (spec.kind == CriticKind::patch) {
    net = std::make_shared<PatchCriticImpl>(spec);
  } else {
    net = std::make_shared<ImageCriticImpl>(spec);
  }
  return Critic(spec, seed, std::move(net));
}

torch::Tensor per_sample_scores(const torch::Tensor& scores) {
  if (scores.dim() == 0) return scores.reshape({1});
  return scores.reshape({scores.size(0), -1}).mean(1);
}

TensorArchive critic_archive(const Critic& critic) {
  TensorArchive archive;
  archive.meta = {{"kind", "critic"}, {"spec", spec_to_json(critic.spec())}, {"seed", critic.seed()}};
  archive.tensors = critic.named_tensors();
  return archive;
}

Critic critic_from_archive(const TensorArchive& archive) {
  if (archive.meta.value("kind", "") != "critic") throw Error(ErrorCode::IoError, "archive does not hold a critic");
  auto critic = build_critic(critic_spec_from_json(archive.meta.at("spec")), archive.meta.at("seed").get<std::uint64_t>());
  load_named_tensors(archive.tensors, critic.module());
  return critic;
}

}  // namespace turbo
