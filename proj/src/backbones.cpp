#include "turbo_twin/backbones.hpp"

#include <algorithm>
#include <mutex>

#include "seeding.hpp"
#include "turbo_twin/error.hpp"

namespace turbo {

namespace nn = torch::nn;

int NetworkSpec::downsampling_factor() const {
  return kind == Backbone::cnn_resnet_cnn ? 4 : (1 << unet_depth);
}

NetworkSpec encoder_spec(const TurboConfig& cfg) {
  NetworkSpec spec;
  spec.kind = cfg.backbone;
  spec.base_width = cfg.model.base_width;
  spec.residual_blocks = cfg.model.residual_blocks;
  spec.unet_depth = cfg.model.unet_depth;
  spec.output_activation = cfg.model.output_activation;
  return spec;
}

NetworkSpec decoder_spec(const TurboConfig& cfg) { return encoder_spec(cfg); }

nlohmann::json spec_to_json(const NetworkSpec& spec) {
  return {{"kind", to_string(spec.kind)},
          {"in_channels", spec.in_channels},
          {"out_channels", spec.out_channels},
          {"base_width", spec.base_width},
          {"residual_blocks", spec.residual_blocks},
          {"unet_depth", spec.unet_depth},
          {"norm", "instance"},
          {"output_activation", to_string(spec.output_activation)}};
}

NetworkSpec network_spec_from_json(const nlohmann::json& j) {
  NetworkSpec spec;
  spec.kind = backbone_from_string(j.at("kind").get<std::string>());
  spec.in_channels = j.at("in_channels").get<int>();
  spec.out_channels = j.at("out_channels").get<int>();
  spec.base_width = j.at("base_width").get<int>();
  spec.residual_blocks = j.at("residual_blocks").get<int>();
  spec.unet_depth = j.at("unet_depth").get<int>();
  spec.output_activation = output_activation_from_string(j.at("output_activation").get<std::string>());
  return spec;
}

nn::InstanceNorm2d instance_norm(int channels) {
  return nn::InstanceNorm2d(nn::InstanceNorm2dOptions(channels).affine(true).eps(1e-5));
}

namespace {

nn::Conv2d conv(int in, int out, int kernel, int stride = 1, int padding = 0) {
  return nn::Conv2d(nn::Conv2dOptions(in, out, kernel).stride(stride).padding(padding));
}

torch::Tensor activate(const torch::Tensor& x, OutputActivation a) {
  if (a == OutputActivation::sigmoid) return torch::sigmoid(x);
  return 0.5 * (torch::tanh(x) + 1.0);
}

void validate_spec(const NetworkSpec& spec) {
  if (spec.in_channels < 1 || spec.out_channels < 1 || spec.base_width < 1) {
    throw Error(ErrorCode::InvalidSpec, "channel counts and base_width must be positive");
  }
  if (spec.residual_blocks < 0) throw Error(ErrorCode::InvalidSpec, "residual_blocks must be >= 0");
  if (spec.kind == Backbone::unet && (spec.unet_depth < 1 || spec.unet_depth > 10)) {
    throw Error(ErrorCode::InvalidSpec, "unet_depth must be in [1,10]");
  }
}

}  // namespace

ResidualBlockImpl::ResidualBlockImpl(int channels) {
  body_ = register_module(
      "body", nn::Sequential(nn::ReflectionPad2d(1), conv(channels, channels, 3), instance_norm(channels),
                             nn::ReLU(), nn::ReflectionPad2d(1), conv(channels, channels, 3),
                             instance_norm(channels)));
}

torch::Tensor ResidualBlockImpl::forward(const torch::Tensor& x) { return x + body_->forward(x); }

ResnetTranslatorImpl::ResnetTranslatorImpl(const NetworkSpec& spec) : activation_(spec.output_activation) {
  const int w = spec.base_width;
  stem_ = register_module("stem", nn::Sequential(nn::ReflectionPad2d(3), conv(spec.in_channels, w, 7),
                                                 instance_norm(w), nn::ReLU()));
  down_ = register_module("down", nn::Sequential(conv(w, 2 * w, 3, 2, 1), instance_norm(2 * w), nn::ReLU(),
                                                 conv(2 * w, 4 * w, 3, 2, 1), instance_norm(4 * w), nn::ReLU()));
  blocks_ = register_module("blocks", nn::Sequential());
  for (int i = 0; i < spec.residual_blocks; ++i) blocks_->push_back(ResidualBlock(4 * w));
  auto up_conv = [](int in, int out) {
    return nn::ConvTranspose2d(nn::ConvTranspose2dOptions(in, out, 3).stride(2).padding(1).output_padding(1));
  };
  up_ = register_module("up", nn::Sequential(up_conv(4 * w, 2 * w), instance_norm(2 * w), nn::ReLU(),
                                             up_conv(2 * w, w), instance_norm(w), nn::ReLU()));
  head_ = register_module("head", nn::Sequential(nn::ReflectionPad2d(3), conv(w, spec.out_channels, 7)));
}

torch::Tensor ResnetTranslatorImpl::forward(const torch::Tensor& x) {
  auto h = stem_->forward(x);
  h = down_->forward(h);
  if (!blocks_->is_empty()) h = blocks_->forward(h);
  h = up_->forward(h);
  return activate(head_->forward(h), activation_);
}

UNetTranslatorImpl::UNetTranslatorImpl(const NetworkSpec& spec) : activation_(spec.output_activation) {
  const int depth = spec.unet_depth;
  std::vector<int> width(depth + 1);
  for (int i = 0; i <= depth; ++i) width[i] = spec.base_width * (1 << std::min(i, 3));

  input_ = register_module("input", nn::Sequential(conv(spec.in_channels, width[0], 3, 1, 1),
                                                   instance_norm(width[0]), nn::ReLU()));
  for (int i = 1; i <= depth; ++i) {
    down_.push_back(register_module(
        "down" + std::to_string(i),
        nn::Sequential(conv(width[i - 1], width[i], 4, 2, 1), instance_norm(width[i]), nn::ReLU(),
                       conv(width[i], width[i], 3, 1, 1), instance_norm(width[i]), nn::ReLU())));
  }
  // up_[k] brings level depth-k back to depth-k-1; merge_[k] fuses it with the skip.
  for (int i = depth; i >= 1; --i) {
    up_.push_back(register_module(
        "up" + std::to_string(i),
        nn::Sequential(
            nn::ConvTranspose2d(nn::ConvTranspose2dOptions(width[i], width[i - 1], 4).stride(2).padding(1)),
            instance_norm(width[i - 1]), nn::ReLU())));
    merge_.push_back(register_module("merge" + std::to_string(i),
                                     nn::Sequential(conv(2 * width[i - 1], width[i - 1], 3, 1, 1),
                                                    instance_norm(width[i - 1]), nn::ReLU())));
  }
  head_ = register_module("head", conv(width[0], spec.out_channels, 1));
}

torch::Tensor UNetTranslatorImpl::forward(const torch::Tensor& x) {
  std::vector<torch::Tensor> skips;
  auto h = input_->forward(x);
  for (auto& down : down_) {
    skips.push_back(h);
    h = down->forward(h);
  }
  for (std::size_t k = 0; k < up_.size(); ++k) {
    h = up_[k]->forward(h);
    h = merge_[k]->forward(torch::cat({h, skips[skips.size() - 1 - k]}, 1));
  }
  return activate(head_->forward(h), activation_);
}

Translator::Translator(NetworkSpec spec, std::uint64_t seed, std::shared_ptr<TranslatorNetImpl> net)
    : spec_(spec), seed_(seed), net_(std::move(net)) {}

torch::Tensor Translator::operator()(const torch::Tensor& x) const {
  if (x.dim() != 4 || x.size(1) != spec_.in_channels) {
    throw Error(ErrorCode::ShapeError, "translator expects N x " + std::to_string(spec_.in_channels) +
                                           " x m x m input");
  }
  const int factor = spec_.downsampling_factor();
  if (x.size(2) % factor != 0 || x.size(3) % factor != 0) {
    throw Error(ErrorCode::ShapeError, "input side " + std::to_string(x.size(2)) + "x" + std::to_string(x.size(3)) +
                                           " is not divisible by " + std::to_string(factor));
  }
  return net_->forward(x);
}

std::map<std::string, torch::Tensor> Translator::named_tensors() const {
  std::map<std::string, torch::Tensor> out;
  for (const auto& p : net_->named_parameters()) out.emplace(p.key(), p.value());
  for (const auto& b : net_->named_buffers()) out.emplace(b.key(), b.value());
  return out;
}

Translator build_translator(const NetworkSpec& spec, std::uint64_t seed) {
  validate_spec(spec);
  detail::SeededScope scope(seed);
  std::shared_ptr<TranslatorNetImpl> net;
  if (spec.kind == Backbone::cnn_resnet_cnn) {
    net = std::make_shared<ResnetTranslatorImpl>(spec);
  } else {
    net = std::make_shared<UNetTranslatorImpl>(spec);
  }
  return Translator(spec, seed, std::move(net));
}

int count_residual_blocks(const Translator& net) {
  auto* resnet = dynamic_cast<ResnetTranslatorImpl*>(&net.module());
  if (resnet == nullptr) {
    throw Error(ErrorCode::WrongKind, "residual blocks are only defined for cnn_resnet_cnn translators");
  }
  return resnet->residual_block_count();
}

void load_named_tensors(const std::map<std::string, torch::Tensor>& named, torch::nn::Module& dst,
                        const std::string& prefix) {
  torch::NoGradGuard no_grad;
  auto assign = [&](const std::string& key, torch::Tensor& target) {
    auto it = named.find(prefix + key);
    if (it == named.end()) throw Error(ErrorCode::IoError, "checkpoint lacks tensor '" + prefix + key + "'");
    if (it->second.sizes() != target.sizes()) {
      throw Error(ErrorCode::ShapeMismatch, "tensor '" + prefix + key + "' has an incompatible shape");
    }
    target.copy_(it->second);
  };
  for (auto& p : dst.named_parameters()) assign(p.key(), p.value());
  for (auto& b : dst.named_buffers()) assign(b.key(), b.value());
}

TensorArchive translator_archive(const Translator& net) {
  TensorArchive archive;
  archive.meta = {{"kind", "translator"}, {"spec", spec_to_json(net.spec())}, {"seed", net.seed()}};
  archive.tensors = net.named_tensors();
  return archive;
}

Translator translator_from_archive(const TensorArchive& archive) {
  if (archive.meta.value("kind", "") != "translator") {
    throw Error(ErrorCode::IoError, "archive does not hold a translator");
  }
  auto net = build_translator(network_spec_from_json(archive.meta.at("spec")), archive.meta.at("seed").get<std::uint64_t>());
  auto dtype = archive.tensors.empty() ? torch::kFloat32 : archive.tensors.begin()->second.scalar_type();
  net.to(dtype);
  load_named_tensors(archive.tensors, net.module());
  return net;
}

void save_translator(const std::filesystem::path& path, const Translator& net) {
  save_archive(path, translator_archive(net));
}

Translator load_translator(const std::filesystem::path& path) { return translator_from_archive(load_archive(path)); }

}  // namespace turbo
