#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "turbo_twin/config.hpp"
#include "turbo_twin/tensor_io.hpp"

namespace turbo {

// Encoder q(t|y) and decoder p(y|t) share this description; only the
// channel counts differ in general (both are 1 for grayscale codes).
struct NetworkSpec {
  Backbone kind = Backbone::cnn_resnet_cnn;
  int in_channels = 1;
  int out_channels = 1;
  int base_width = 64;
  int residual_blocks = 9;
  int unet_depth = 5;
  OutputActivation output_activation = OutputActivation::sigmoid;

  // Input sides must be a multiple of this.
  int downsampling_factor() const;

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

NetworkSpec encoder_spec(const TurboConfig& cfg);
NetworkSpec decoder_spec(const TurboConfig& cfg);

nlohmann::json spec_to_json(const NetworkSpec& spec);
NetworkSpec network_spec_from_json(const nlohmann::json& j);

// Per-channel instance normalization with learnable affine parameters. Every
// backbone and normalized critic uses this factory.
torch::nn::InstanceNorm2d instance_norm(int channels);

class TranslatorNetImpl : public torch::nn::Module {
 public:
  virtual torch::Tensor forward(const torch::Tensor& x) = 0;
};

class ResidualBlockImpl : public torch::nn::Module {
 public:
  explicit ResidualBlockImpl(int channels);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Sequential body_{nullptr};
};
TORCH_MODULE(ResidualBlock);

// Conv stem, two stride-2 convolutions, N residual blocks, two transposed
// convolutions, conv head.
class ResnetTranslatorImpl : public TranslatorNetImpl {
 public:
  explicit ResnetTranslatorImpl(const NetworkSpec& spec);
  torch::Tensor forward(const torch::Tensor& x) override;
  int residual_block_count() const { return static_cast<int>(blocks_->size()); }

 private:
  torch::nn::Sequential stem_{nullptr};
  torch::nn::Sequential down_{nullptr};
  torch::nn::Sequential blocks_{nullptr};
  torch::nn::Sequential up_{nullptr};
  torch::nn::Sequential head_{nullptr};
  OutputActivation activation_;
};

// Encoder/decoder with a skip connection at every resolution level.
class UNetTranslatorImpl : public TranslatorNetImpl {
 public:
  explicit UNetTranslatorImpl(const NetworkSpec& spec);
  torch::Tensor forward(const torch::Tensor& x) override;
  int skip_connection_count() const { return static_cast<int>(down_.size()); }

 private:
  torch::nn::Sequential input_{nullptr};
  std::vector<torch::nn::Sequential> down_;
  std::vector<torch::nn::Sequential> up_;
  std::vector<torch::nn::Sequential> merge_;
  torch::nn::Conv2d head_{nullptr};
  OutputActivation activation_;
};

// A constructed, parameterized image-to-image map.
class Translator {
 public:
  Translator(NetworkSpec spec, std::uint64_t seed, std::shared_ptr<TranslatorNetImpl> net);

  // x: N x C x m x m. Throws ShapeError when m is not a multiple of the
  // downsampling factor. Output has the same spatial size, values in [0,1].
  torch::Tensor operator()(const torch::Tensor& x) const;

  const NetworkSpec& spec() const noexcept { return spec_; }
  std::uint64_t seed() const noexcept { return seed_; }
  torch::nn::Module& module() const { return *net_; }
  std::vector<torch::Tensor> parameters() const { return net_->parameters(); }
  // Parameters and buffers by qualified name.
  std::map<std::string, torch::Tensor> named_tensors() const;

  void to(torch::Dtype dtype) const { net_->to(dtype); }

 private:
  NetworkSpec spec_;
  std::uint64_t seed_;
  std::shared_ptr<TranslatorNetImpl> net_;
};

Translator build_translator(const NetworkSpec& spec, std::uint64_t seed);

// Throws WrongKind for anything but cnn_resnet_cnn.
int count_residual_blocks(const Translator& net);

TensorArchive translator_archive(const Translator& net);
Translator translator_from_archive(const TensorArchive& archive);
void save_translator(const std::filesystem::path& path, const Translator& net);
Translator load_translator(const std::filesystem::path& path);

// Copies tensors with matching names into `dst` (shapes must agree).
void load_named_tensors(const std::map<std::string, torch::Tensor>& named, torch::nn::Module& dst,
                        const std::string& prefix = "");

}  // namespace turbo
