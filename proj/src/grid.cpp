#include "turbo_twin/grid.hpp"

#include <cmath>
#include <numeric>

#include "turbo_twin/error.hpp"

namespace turbo {

Grid::Grid(std::size_t side, std::vector<double> pixels) : side_(side), pixels_(std::move(pixels)) {
  if (pixels_.size() != side_ * side_) {
    throw Error(ErrorCode::ShapeMismatch, "grid of side " + std::to_string(side_) + " needs " +
                                              std::to_string(side_ * side_) + " pixels, got " +
                                              std::to_string(pixels_.size()));
  }
}

double Grid::mean() const {
  if (pixels_.empty()) return 0.0;
  return std::accumulate(pixels_.begin(), pixels_.end(), 0.0) / static_cast<double>(pixels_.size());
}

std::string_view to_string(Authenticity a) {
  switch (a) {
    case Authenticity::original: return "original";
    case Authenticity::fake: return "fake";
    case Authenticity::synthetic: return "synthetic";
  }
  return "original";
}

Authenticity authenticity_from_string(std::string_view s) {
  if (s == "original") return Authenticity::original;
  if (s == "fake") return Authenticity::fake;
  if (s == "synthetic") return Authenticity::synthetic;
  throw Error(ErrorCode::ConfigError, "unknown authenticity '" + std::string(s) + "'");
}

DigitalTemplate::DigitalTemplate(Grid pixels, std::string id) : pixels_(std::move(pixels)), id_(std::move(id)) {
  if (pixels_.side() < kMinSide) {
    throw Error(ErrorCode::ShapeError, "template side must be >= 8, got " + std::to_string(pixels_.side()));
  }
  for (double v : pixels_.pixels()) {
    if (v != 0.0 && v != 1.0) {
      throw Error(ErrorCode::NonBinaryTarget, "template '" + id_ + "' has a non-binary pixel");
    }
  }
}

PrintedCode::PrintedCode(Grid pixels, Authenticity authenticity, std::string id)
    : pixels_(std::move(pixels)), authenticity_(authenticity), id_(std::move(id)) {
  for (double v : pixels_.pixels()) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw Error(ErrorCode::RangeError, "printed code '" + id_ + "' has a pixel outside [0,1]");
    }
  }
}

}  // namespace turbo
