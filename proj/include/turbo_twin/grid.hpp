#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace turbo {

// Square single-channel image stored row-major.
class Grid {
 public:
  Grid() = default;
  explicit Grid(std::size_t side, double fill = 0.0) : side_(side), pixels_(side * side, fill) {}
  Grid(std::size_t side, std::vector<double> pixels);

  std::size_t side() const noexcept { return side_; }
  std::size_t size() const noexcept { return pixels_.size(); }

  double& operator()(std::size_t row, std::size_t col) { return pixels_[row * side_ + col]; }
  double operator()(std::size_t row, std::size_t col) const { return pixels_[row * side_ + col]; }

  std::span<double> pixels() noexcept { return pixels_; }
  std::span<const double> pixels() const noexcept { return pixels_; }

  double mean() const;

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  std::size_t side_ = 0;
  std::vector<double> pixels_;
};

enum class Authenticity { original, fake, synthetic };

std::string_view to_string(Authenticity a);
Authenticity authenticity_from_string(std::string_view s);

// Binary m x m code sent to the printer.
class DigitalTemplate {
 public:
  static constexpr std::size_t kMinSide = 8;

  DigitalTemplate(Grid pixels, std::string id);

  const Grid& pixels() const noexcept { return pixels_; }
  const std::string& id() const noexcept { return id_; }
  std::size_t side() const noexcept { return pixels_.side(); }

 private:
  Grid pixels_;
  std::string id_;
};

// Acquired grayscale image of a printed code, values in [0,1].
class PrintedCode {
 public:
  PrintedCode(Grid pixels, Authenticity authenticity, std::string id);

  const Grid& pixels() const noexcept { return pixels_; }
  Authenticity authenticity() const noexcept { return authenticity_; }
  const std::string& id() const noexcept { return id_; }
  std::size_t side() const noexcept { return pixels_.side(); }

 private:
  Grid pixels_;
  Authenticity authenticity_;
  std::string id_;
};

}  // namespace turbo
