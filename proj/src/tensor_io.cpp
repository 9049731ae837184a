#include "turbo_twin/tensor_io.hpp"

#include <cstring>
#include <fstream>

#include "turbo_twin/error.hpp"

namespace turbo {

torch::Tensor grids_to_tensor(std::span<const Grid> grids, torch::Dtype dtype) {
  if (grids.empty()) throw Error(ErrorCode::EmptyBatch, "no grids to stack");
  const auto side = static_cast<std::int64_t>(grids.front().side());
  auto out = torch::empty({static_cast<std::int64_t>(grids.size()), 1, side, side}, torch::kFloat64);
  auto* dst = out.data_ptr<double>();
  for (const auto& g : grids) {
    if (static_cast<std::int64_t>(g.side()) != side) {
      throw Error(ErrorCode::ShapeMismatch, "grids of different sides cannot be stacked");
    }
    std::memcpy(dst, g.pixels().data(), g.size() * sizeof(double));
    dst += g.size();
  }
  return out.to(dtype);
}

torch::Tensor grid_to_tensor(const Grid& grid, torch::Dtype dtype) {
  return grids_to_tensor(std::span<const Grid>(&grid, 1), dtype);
}

Grid tensor_to_grid(const torch::Tensor& t) {
  auto flat = t.detach().to(torch::kCPU, torch::kFloat64).contiguous();
  while (flat.dim() > 2 && flat.size(0) == 1) flat = flat.squeeze(0);
  if (flat.dim() != 2 || flat.size(0) != flat.size(1)) {
    throw Error(ErrorCode::ShapeMismatch, "expected a square single-channel image tensor");
  }
  const auto side = static_cast<std::size_t>(flat.size(0));
  const double* src = flat.data_ptr<double>();
  return Grid(side, std::vector<double>(src, src + side * side));
}

std::vector<Grid> tensor_to_grids(const torch::Tensor& batch) {
  if (batch.dim() != 4 || batch.size(1) != 1) {
    throw Error(ErrorCode::ShapeMismatch, "expected an N x 1 x m x m batch");
  }
  std::vector<Grid> out;
  out.reserve(static_cast<std::size_t>(batch.size(0)));
  for (std::int64_t i = 0; i < batch.size(0); ++i) out.push_back(tensor_to_grid(batch[i]));
  return out;
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t tensor_hash(std::span<const torch::Tensor> tensors) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& t : tensors) {
    auto c = t.detach().contiguous();
    h = fnv1a(std::string_view(static_cast<const char*>(c.data_ptr()), c.nbytes()), h);
  }
  return h;
}

namespace {

constexpr char kMagic[8] = {'T', 'T', 'W', 'N', 'C', 'K', 'P', 'T'};

std::string dtype_name(torch::Dtype d) {
  switch (d) {
    case torch::kFloat32: return "f32";
    case torch::kFloat64: return "f64";
    case torch::kInt64: return "i64";
    case torch::kUInt8: return "u8";
    default: throw Error(ErrorCode::IoError, "unsupported tensor dtype in archive");
  }
}

torch::Dtype dtype_from_name(const std::string& s) {
  if (s == "f32") return torch::kFloat32;
  if (s == "f64") return torch::kFloat64;
  if (s == "i64") return torch::kInt64;
  if (s == "u8") return torch::kUInt8;
  throw Error(ErrorCode::IoError, "unknown dtype '" + s + "' in archive");
}

}  // namespace

void save_archive(const std::filesystem::path& path, const TensorArchive& archive) {
  nlohmann::json header;
  header["schema_version"] = kArchiveSchemaVersion;
  header["meta"] = archive.meta;
  nlohmann::json entries = nlohmann::json::array();
  std::vector<torch::Tensor> payload;
  std::uint64_t offset = 0;
  for (const auto& [name, tensor] : archive.tensors) {
    auto c = tensor.detach().to(torch::kCPU).contiguous();
    entries.push_back({{"name", name},
                       {"dtype", dtype_name(c.scalar_type())},
                       {"shape", c.sizes().vec()},
                       {"offset", offset},
                       {"bytes", c.nbytes()}});
    offset += c.nbytes();
    payload.push_back(std::move(c));
  }
  header["tensors"] = entries;
  const std::string text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  const std::uint64_t header_len = text.size();
  out.write(kMagic, sizeof(kMagic));
  out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& t : payload) {
    out.write(static_cast<const char*>(t.data_ptr()), static_cast<std::streamsize>(t.nbytes()));
  }
  if (!out) throw Error(ErrorCode::IoError, "short write to " + path.string());
}

TensorArchive load_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingCheckpoint, "cannot open " + path.string());
  char magic[8];
  std::uint64_t header_len = 0;
  in.read(magic, sizeof(magic));
  in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw Error(ErrorCode::IoError, path.string() + " is not a checkpoint archive");
  }
  std::string text(header_len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(header_len));
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::IoError, path.string() + ": corrupt header: " + e.what());
  }
  if (header.value("schema_version", 0) != kArchiveSchemaVersion) {
    throw Error(ErrorCode::IoError, path.string() + ": unsupported archive schema");
  }

  TensorArchive archive;
  archive.meta = header.at("meta");
  const auto data_start = in.tellg();
  for (const auto& e : header.at("tensors")) {
    const auto shape = e.at("shape").get<std::vector<std::int64_t>>();
    auto t = torch::empty(shape, torch::TensorOptions().dtype(dtype_from_name(e.at("dtype"))));
    const auto bytes = e.at("bytes").get<std::uint64_t>();
    if (bytes != t.nbytes()) throw Error(ErrorCode::IoError, path.string() + ": size mismatch");
    in.seekg(data_start + static_cast<std::streamoff>(e.at("offset").get<std::uint64_t>()));
    in.read(static_cast<char*>(t.data_ptr()), static_cast<std::streamsize>(bytes));
    if (!in) throw Error(ErrorCode::IoError, path.string() + ": truncated tensor data");
    archive.tensors.emplace(e.at("name").get<std::string>(), std::move(t));
  }
  return archive;
}

}  // namespace turbo
