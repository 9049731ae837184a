#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "turbo_twin/error.hpp"

namespace turbo {

// The eight terms of the direct and reverse Turbo losses. L_* are
// reconstruction (log-likelihood) terms, D_* are adversarial (KL) terms.
//
//   direct :  L_t_recon(t, t~)  + D_t_tilde(t~)  + a L_y_recon_direct(y, y^)  + a D_y_hat(y^)
//   reverse:  L_y_recon_reverse(y, y~) + D_y_tilde(y~) + b L_t_recon_reverse(t, t^) + b D_t_hat(t^)
enum class LossTerm {
  L_t_recon,
  D_t_tilde,
  L_y_recon_direct,
  D_y_hat,
  L_y_recon_reverse,
  D_y_tilde,
  L_t_recon_reverse,
  D_t_hat,
};

inline constexpr std::array<LossTerm, 8> kAllLossTerms = {
    LossTerm::L_t_recon,         LossTerm::D_t_tilde, LossTerm::L_y_recon_direct,
    LossTerm::D_y_hat,           LossTerm::L_y_recon_reverse, LossTerm::D_y_tilde,
    LossTerm::L_t_recon_reverse, LossTerm::D_t_hat,
};

using TermSet = std::set<LossTerm>;

std::string_view to_string(LossTerm term);
LossTerm loss_term_from_string(std::string_view s);

bool is_adversarial(LossTerm term);
bool is_direct(LossTerm term);
// Terms that need aligned (t, y) samples.
bool requires_pairing(LossTerm term);

enum class Backbone { cnn_resnet_cnn, unet };
enum class CriticKind { patch, image };
enum class GanLoss { lsgan, hinge, wgan_gp };
enum class Pairing { paired, unpaired, hybrid };
enum class ReconKind { l1, l2, bce };
enum class OutputActivation { sigmoid, tanh_rescaled };
enum class Preset { cyclegan, pix2pix_t2y, pix2pix_y2t, aae, turbo_paired, turbo_unpaired };

std::string_view to_string(Backbone v);
std::string_view to_string(CriticKind v);
std::string_view to_string(GanLoss v);
std::string_view to_string(Pairing v);
std::string_view to_string(ReconKind v);
std::string_view to_string(OutputActivation v);
std::string_view to_string(Preset v);

Backbone backbone_from_string(std::string_view s);
CriticKind critic_kind_from_string(std::string_view s);
GanLoss gan_loss_from_string(std::string_view s);
Pairing pairing_from_string(std::string_view s);
ReconKind recon_kind_from_string(std::string_view s);
OutputActivation output_activation_from_string(std::string_view s);
Preset preset_from_string(std::string_view s);

struct HeuristicParams {
  // Master switch mirroring the "heuristics on/off" experiment column.
  bool enabled = true;
  int n_d = 1;
  std::optional<double> d_threshold;
  std::optional<double> g_threshold;
  int pool_size = 50;
  double p_flip = 0.05;
  double p_noise = 0.1;
  double w_noise = 0.1;

  // Parameters actually applied by the trainer once the master switch is folded in.
  HeuristicParams effective() const;

  friend bool operator==(const HeuristicParams&, const HeuristicParams&) = default;
};

struct OptimizerParams {
  double learning_rate = 2e-4;
  std::array<double, 2> momentum_pair = {0.5, 0.999};
  int batch_size = 4;
  int total_steps = 1000;

  friend bool operator==(const OptimizerParams&, const OptimizerParams&) = default;
};

struct ModelParams {
  int base_width = 64;
  int residual_blocks = 9;
  int unet_depth = 5;
  OutputActivation output_activation = OutputActivation::sigmoid;
  int critic_base_width = 64;
  // 0 selects the kind default: 3 stride-2 layers (patch), 4 residual stages (image).
  int critic_stages = 0;
  bool critic_normalize = true;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

struct TurboConfig {
  Backbone backbone = Backbone::cnn_resnet_cnn;
  CriticKind critic_kind = CriticKind::patch;
  GanLoss gan_loss = GanLoss::lsgan;
  double alpha = 1.0;
  double beta = 1.0;
  Pairing pairing = Pairing::paired;
  TermSet enabled_terms{kAllLossTerms.begin(), kAllLossTerms.end()};
  HeuristicParams heuristics;
  OptimizerParams optimizer;
  std::uint64_t seed = 0;

  ModelParams model;
  ReconKind template_recon = ReconKind::bce;
  ReconKind print_recon = ReconKind::l1;
  double lambda_gp = 10.0;
  // Scales every reconstruction (L_*) term against the adversarial ones.
  double recon_weight = 1.0;
  double hybrid_fraction = 0.5;
  // Optimize direct and reverse losses on alternating steps instead of their sum.
  bool alternate_paths = false;
  bool deterministic = true;

  bool enabled(LossTerm term) const { return enabled_terms.contains(term); }

  friend bool operator==(const TurboConfig&, const TurboConfig&) = default;
};

struct ConfigIssue {
  ErrorCode code;
  std::string field;
  std::string message;
};

class ConfigValidationError : public Error {
 public:
  explicit ConfigValidationError(std::vector<ConfigIssue> issues);
  const std::vector<ConfigIssue>& issues() const noexcept { return issues_; }

 private:
  std::vector<ConfigIssue> issues_;
};

std::vector<ConfigIssue> check_config(const TurboConfig& cfg);

// Returns cfg unchanged or throws ConfigValidationError listing every violation.
TurboConfig validate_config(const TurboConfig& cfg);

TurboConfig reduction_preset(Preset preset);
TurboConfig reduction_preset(std::string_view name);
TermSet preset_terms(Preset preset);

inline constexpr int kConfigSchemaVersion = 1;

// Flat dotted-key JSON object, e.g. {"schema_version": 1, "loss.gan": "hinge"}.
nlohmann::json config_to_json(const TurboConfig& cfg);

// Reads the TurboConfig keys from a flat object. Keys consumed are appended to
// `consumed` when provided so callers can reject unknown keys.
TurboConfig config_from_json(const nlohmann::json& flat, std::set<std::string>* consumed = nullptr);

}  // namespace turbo
