#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <torch/torch.h>

#include "json.hpp"
#include "turbo_twin/grid.hpp"

namespace turbo {

// Stacks grids into an N x 1 x m x m tensor.
torch::Tensor grids_to_tensor(std::span<const Grid> grids, torch::Dtype dtype = torch::kFloat32);
torch::Tensor grid_to_tensor(const Grid& grid, torch::Dtype dtype = torch::kFloat32);

// Accepts m x m, 1 x m x m or 1 x 1 x m x m.
Grid tensor_to_grid(const torch::Tensor& t);
std::vector<Grid> tensor_to_grids(const torch::Tensor& batch);

// FNV-1a over the raw bytes of every tensor, in order.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t tensor_hash(std::span<const torch::Tensor> tensors);

// Checkpoint container: JSON metadata plus a flat map of named tensors.
//   "TTWNCKPT" | u64 header bytes | header JSON | raw tensor bytes
struct TensorArchive {
  nlohmann::json meta = nlohmann::json::object();
  std::map<std::string, torch::Tensor> tensors;
};

inline constexpr int kArchiveSchemaVersion = 1;

void save_archive(const std::filesystem::path& path, const TensorArchive& archive);
TensorArchive load_archive(const std::filesystem::path& path);

}  // namespace turbo
