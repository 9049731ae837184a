#include "turbo_twin/config.hpp"

#include <algorithm>
#include <utility>

namespace turbo {

namespace {

template <typename E, std::size_t N>
using NameTable = std::array<std::pair<E, std::string_view>, N>;

template <typename E, std::size_t N>
std::string_view name_of(const NameTable<E, N>& table, E value) {
  for (const auto& [v, name] : table) {
    if (v == value) return name;
  }
  return "?";
}

template <typename E, std::size_t N>
E value_of(const NameTable<E, N>& table, std::string_view name, std::string_view what,
           ErrorCode code = ErrorCode::ConfigError) {
  for (const auto& [v, n] : table) {
    if (n == name) return v;
  }
  throw Error(code, "unknown " + std::string(what) + " '" + std::string(name) + "'");
}

constexpr NameTable<LossTerm, 8> kTermNames{{
    {LossTerm::L_t_recon, "L_t_recon"},
    {LossTerm::D_t_tilde, "D_t_tilde"},
    {LossTerm::L_y_recon_direct, "L_y_recon_direct"},
    {LossTerm::D_y_hat, "D_y_hat"},
    {LossTerm::L_y_recon_reverse, "L_y_recon_reverse"},
    {LossTerm::D_y_tilde, "D_y_tilde"},
    {LossTerm::L_t_recon_reverse, "L_t_recon_reverse"},
    {LossTerm::D_t_hat, "D_t_hat"},
}};
constexpr NameTable<Backbone, 2> kBackboneNames{{{Backbone::cnn_resnet_cnn, "cnn_resnet_cnn"},
                                                 {Backbone::unet, "unet"}}};
constexpr NameTable<CriticKind, 2> kCriticNames{{{CriticKind::patch, "patch"}, {CriticKind::image, "image"}}};
constexpr NameTable<GanLoss, 3> kGanNames{
    {{GanLoss::lsgan, "lsgan"}, {GanLoss::hinge, "hinge"}, {GanLoss::wgan_gp, "wgan_gp"}}};
constexpr NameTable<Pairing, 3> kPairingNames{
    {{Pairing::paired, "paired"}, {Pairing::unpaired, "unpaired"}, {Pairing::hybrid, "hybrid"}}};
constexpr NameTable<ReconKind, 3> kReconNames{
    {{ReconKind::l1, "l1"}, {ReconKind::l2, "l2"}, {ReconKind::bce, "bce"}}};
constexpr NameTable<OutputActivation, 2> kActivationNames{
    {{OutputActivation::sigmoid, "sigmoid"}, {OutputActivation::tanh_rescaled, "tanh_rescaled"}}};
constexpr NameTable<Preset, 6> kPresetNames{{
    {Preset::cyclegan, "cyclegan"},
    {Preset::pix2pix_t2y, "pix2pix_t2y"},
    {Preset::pix2pix_y2t, "pix2pix_y2t"},
    {Preset::aae, "aae"},
    {Preset::turbo_paired, "turbo_paired"},
    {Preset::turbo_unpaired, "turbo_unpaired"},
}};

}  // namespace

std::string_view to_string(LossTerm term) { return name_of(kTermNames, term); }
LossTerm loss_term_from_string(std::string_view s) { return value_of(kTermNames, s, "loss term"); }

bool is_adversarial(LossTerm term) {
  switch (term) {
    case LossTerm::D_t_tilde:
    case LossTerm::D_y_hat:
    case LossTerm::D_y_tilde:
    case LossTerm::D_t_hat:
      return true;
    default:
      return false;
  }
}

bool is_direct(LossTerm term) {
  switch (term) {
    case LossTerm::L_t_recon:
    case LossTerm::D_t_tilde:
    case LossTerm::L_y_recon_direct:
    case LossTerm::D_y_hat:
      return true;
    default:
      return false;
  }
}

bool requires_pairing(LossTerm term) {
  return term == LossTerm::L_t_recon || term == LossTerm::L_y_recon_reverse;
}

std::string_view to_string(Backbone v) { return name_of(kBackboneNames, v); }
std::string_view to_string(CriticKind v) { return name_of(kCriticNames, v); }
std::string_view to_string(GanLoss v) { return name_of(kGanNames, v); }
std::string_view to_string(Pairing v) { return name_of(kPairingNames, v); }
std::string_view to_string(ReconKind v) { return name_of(kReconNames, v); }
std::string_view to_string(OutputActivation v) { return name_of(kActivationNames, v); }
std::string_view to_string(Preset v) { return name_of(kPresetNames, v); }

Backbone backbone_from_string(std::string_view s) { return value_of(kBackboneNames, s, "backbone"); }
CriticKind critic_kind_from_string(std::string_view s) { return value_of(kCriticNames, s, "critic kind"); }
GanLoss gan_loss_from_string(std::string_view s) { return value_of(kGanNames, s, "GAN loss"); }
Pairing pairing_from_string(std::string_view s) { return value_of(kPairingNames, s, "pairing"); }
ReconKind recon_kind_from_string(std::string_view s) { return value_of(kReconNames, s, "reconstruction kind"); }
OutputActivation output_activation_from_string(std::string_view s) {
  return value_of(kActivationNames, s, "output activation");
}
Preset preset_from_string(std::string_view s) {
  return value_of(kPresetNames, s, "preset", ErrorCode::UnknownPreset);
}

HeuristicParams HeuristicParams::effective() const {
  if (enabled) return *this;
  HeuristicParams off = *this;
  off.n_d = 1;
  off.d_threshold.reset();
  off.g_threshold.reset();
  off.pool_size = 0;
  off.p_flip = 0.0;
  off.p_noise = 0.0;
  off.w_noise = 0.0;
  return off;
}

namespace {

std::string describe(const std::vector<ConfigIssue>& issues) {
  std::string out;
  for (const auto& issue : issues) {
    if (!out.empty()) out += "; ";
    out += issue.field + ": " + issue.message;
  }
  return out;
}

bool is_probability(double p) { return p >= 0.0 && p <= 1.0; }

}  // namespace

ConfigValidationError::ConfigValidationError(std::vector<ConfigIssue> issues)
    : Error(issues.empty() ? ErrorCode::ConfigError : issues.front().code, describe(issues)),
      issues_(std::move(issues)) {}

std::vector<ConfigIssue> check_config(const TurboConfig& cfg) {
  std::vector<ConfigIssue> issues;
  auto add = [&](ErrorCode code, std::string field, std::string message) {
    issues.push_back({code, std::move(field), std::move(message)});
  };

  if (cfg.gan_loss == GanLoss::wgan_gp && cfg.critic_kind == CriticKind::patch) {
    add(ErrorCode::InvalidCombination, "critic.kind",
        "wgan_gp with a patch critic does not converge; use critic.kind = image");
  }
  if (cfg.pairing == Pairing::unpaired) {
    for (LossTerm term : cfg.enabled_terms) {
      if (requires_pairing(term)) {
        add(ErrorCode::InconsistentPairing, "loss.terms",
            std::string(to_string(term)) + " needs paired data but data.pairing = unpaired");
      }
    }
  }
  if (!(cfg.alpha >= 0.0)) add(ErrorCode::RangeError, "loss.alpha", "must be >= 0");
  if (!(cfg.beta >= 0.0)) add(ErrorCode::RangeError, "loss.beta", "must be >= 0");
  if (!(cfg.lambda_gp >= 0.0)) add(ErrorCode::RangeError, "loss.lambda_gp", "must be >= 0");
  if (!(cfg.recon_weight >= 0.0)) add(ErrorCode::RangeError, "loss.recon_weight", "must be >= 0");
  if (!is_probability(cfg.hybrid_fraction)) add(ErrorCode::RangeError, "data.hybrid_fraction", "must be in [0,1]");

  const auto& h = cfg.heuristics;
  if (h.n_d < 1) add(ErrorCode::RangeError, "heuristics.n_d", "must be >= 1");
  if (h.pool_size < 0) add(ErrorCode::RangeError, "heuristics.pool_size", "must be >= 0");
  if (!is_probability(h.p_flip)) add(ErrorCode::RangeError, "heuristics.p_flip", "must be in [0,1]");
  if (!is_probability(h.p_noise)) add(ErrorCode::RangeError, "heuristics.p_noise", "must be in [0,1]");
  if (!(h.w_noise >= 0.0)) add(ErrorCode::RangeError, "heuristics.w_noise", "must be >= 0");
  if ((h.d_threshold || h.g_threshold) && cfg.gan_loss != GanLoss::lsgan) {
    add(ErrorCode::ThresholdUnsupported, "heuristics.d_threshold",
        "critic/generator thresholds need a bounded loss (lsgan), got " + std::string(to_string(cfg.gan_loss)));
  }

  const auto& o = cfg.optimizer;
  if (!(o.learning_rate > 0.0)) add(ErrorCode::RangeError, "optimizer.learning_rate", "must be > 0");
  for (int i = 0; i < 2; ++i) {
    if (!(o.momentum_pair[i] >= 0.0 && o.momentum_pair[i] < 1.0)) {
      add(ErrorCode::RangeError, i == 0 ? "optimizer.beta1" : "optimizer.beta2", "must be in [0,1)");
    }
  }
  if (o.batch_size < 1) add(ErrorCode::RangeError, "optimizer.batch_size", "must be >= 1");
  if (o.total_steps < 1) add(ErrorCode::RangeError, "optimizer.total_steps", "must be >= 1");

  const auto& m = cfg.model;
  if (m.base_width < 1) add(ErrorCode::RangeError, "model.base_width", "must be >= 1");
  if (m.residual_blocks < 0) add(ErrorCode::RangeError, "model.residual_blocks", "must be >= 0");
  if (m.unet_depth < 1) add(ErrorCode::RangeError, "model.unet_depth", "must be >= 1");
  if (m.critic_base_width < 1) add(ErrorCode::RangeError, "critic.base_width", "must be >= 1");
  if (m.critic_stages < 0) add(ErrorCode::RangeError, "critic.stages", "must be >= 0");
  return issues;
}

TurboConfig validate_config(const TurboConfig& cfg) {
  auto issues = check_config(cfg);
  if (!issues.empty()) throw ConfigValidationError(std::move(issues));
  return cfg;
}

TermSet preset_terms(Preset preset) {
  using enum LossTerm;
  const TermSet all{kAllLossTerms.begin(), kAllLossTerms.end()};
  auto minus = [](TermSet set, std::initializer_list<LossTerm> removed) {
    for (LossTerm t : removed) set.erase(t);
    return set;
  };
  switch (preset) {
    case Preset::turbo_paired:
      return all;
    case Preset::turbo_unpaired:
      return minus(all, {L_t_recon, L_y_recon_reverse});
    case Preset::cyclegan:
      return minus(preset_terms(Preset::turbo_unpaired), {D_t_hat, D_y_hat});
    case Preset::pix2pix_t2y:
      return {L_y_recon_reverse, D_y_tilde};
    case Preset::pix2pix_y2t:
      return {L_t_recon, D_t_tilde};
    case Preset::aae:
      // Autoencoder on y: reconstruction of y plus the adversarial prior match on the code t~.
      return {L_y_recon_direct, D_t_tilde};
  }
  throw Error(ErrorCode::UnknownPreset, "unhandled preset");
}

TurboConfig reduction_preset(Preset preset) {
  TurboConfig cfg;
  cfg.enabled_terms = preset_terms(preset);
  const bool paired = std::ranges::any_of(cfg.enabled_terms, requires_pairing);
  cfg.pairing = paired ? Pairing::paired : Pairing::unpaired;
  return cfg;
}

TurboConfig reduction_preset(std::string_view name) { return reduction_preset(preset_from_string(name)); }

// ---------------------------------------------------------------------------
// Flat JSON serialization.

namespace {

class FlatReader {
 public:
  FlatReader(const nlohmann::json& flat, std::set<std::string>* consumed) : flat_(flat), consumed_(consumed) {
    if (!flat_.is_object()) throw Error(ErrorCode::ConfigError, "config must be a JSON object");
  }

  bool has(const std::string& key) const { return flat_.contains(key); }

  template <typename T>
  void read(const std::string& key, T& out) {
    if (!flat_.contains(key)) return;
    mark(key);
    try {
      out = flat_.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::ConfigError, key + ": " + e.what());
    }
  }

  template <typename E, typename Parse>
  void read_enum(const std::string& key, E& out, Parse parse) {
    std::string text;
    if (!flat_.contains(key)) return;
    read(key, text);
    try {
      out = parse(text);
    } catch (const Error& e) {
      throw Error(e.code(), key + ": " + e.what());
    }
  }

  void read_optional(const std::string& key, std::optional<double>& out) {
    if (!flat_.contains(key)) return;
    mark(key);
    const auto& v = flat_.at(key);
    if (v.is_null()) {
      out.reset();
    } else if (v.is_number()) {
      out = v.get<double>();
    } else {
      throw Error(ErrorCode::ConfigError, key + ": expected a number or null");
    }
  }

  const nlohmann::json& at(const std::string& key) {
    mark(key);
    return flat_.at(key);
  }

 private:
  void mark(const std::string& key) {
    if (consumed_) consumed_->insert(key);
  }

  const nlohmann::json& flat_;
  std::set<std::string>* consumed_;
};

nlohmann::json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

}  // namespace

nlohmann::json config_to_json(const TurboConfig& cfg) {
  nlohmann::json j = nlohmann::json::object();
  j["schema_version"] = kConfigSchemaVersion;
  j["model.backbone"] = to_string(cfg.backbone);
  j["model.base_width"] = cfg.model.base_width;
  j["model.residual_blocks"] = cfg.model.residual_blocks;
  j["model.unet_depth"] = cfg.model.unet_depth;
  j["model.output_activation"] = to_string(cfg.model.output_activation);
  j["critic.kind"] = to_string(cfg.critic_kind);
  j["critic.base_width"] = cfg.model.critic_base_width;
  j["critic.stages"] = cfg.model.critic_stages;
  j["critic.normalize"] = cfg.model.critic_normalize;
  j["loss.gan"] = to_string(cfg.gan_loss);
  j["loss.alpha"] = cfg.alpha;
  j["loss.beta"] = cfg.beta;
  j["loss.lambda_gp"] = cfg.lambda_gp;
  j["loss.recon_weight"] = cfg.recon_weight;
  j["loss.template_recon"] = to_string(cfg.template_recon);
  j["loss.print_recon"] = to_string(cfg.print_recon);
  j["loss.alternate_paths"] = cfg.alternate_paths;
  nlohmann::json terms = nlohmann::json::array();
  for (LossTerm t : cfg.enabled_terms) terms.push_back(to_string(t));
  j["loss.terms"] = terms;
  j["data.pairing"] = to_string(cfg.pairing);
  j["data.hybrid_fraction"] = cfg.hybrid_fraction;
  j["heuristics.enabled"] = cfg.heuristics.enabled;
  j["heuristics.n_d"] = cfg.heuristics.n_d;
  j["heuristics.d_threshold"] = optional_json(cfg.heuristics.d_threshold);
  j["heuristics.g_threshold"] = optional_json(cfg.heuristics.g_threshold);
  j["heuristics.pool_size"] = cfg.heuristics.pool_size;
  j["heuristics.p_flip"] = cfg.heuristics.p_flip;
  j["heuristics.p_noise"] = cfg.heuristics.p_noise;
  j["heuristics.w_noise"] = cfg.heuristics.w_noise;
  j["optimizer.learning_rate"] = cfg.optimizer.learning_rate;
  j["optimizer.beta1"] = cfg.optimizer.momentum_pair[0];
  j["optimizer.beta2"] = cfg.optimizer.momentum_pair[1];
  j["optimizer.batch_size"] = cfg.optimizer.batch_size;
  j["optimizer.total_steps"] = cfg.optimizer.total_steps;
  j["train.seed"] = cfg.seed;
  j["train.deterministic"] = cfg.deterministic;
  return j;
}

TurboConfig config_from_json(const nlohmann::json& flat, std::set<std::string>* consumed) {
  FlatReader r(flat, consumed);
  if (r.has("schema_version")) {
    int version = 0;
    r.read("schema_version", version);
    if (version != kConfigSchemaVersion) {
      throw Error(ErrorCode::ConfigError, "schema_version: unsupported version " + std::to_string(version));
    }
  }

  TurboConfig cfg;
  // A preset seeds terms and pairing; explicit keys below override it.
  if (r.has("loss.preset")) {
    std::string name;
    r.read("loss.preset", name);
    cfg = reduction_preset(name);
  }

  r.read_enum("model.backbone", cfg.backbone, backbone_from_string);
  r.read("model.base_width", cfg.model.base_width);
  r.read("model.residual_blocks", cfg.model.residual_blocks);
  r.read("model.unet_depth", cfg.model.unet_depth);
  r.read_enum("model.output_activation", cfg.model.output_activation, output_activation_from_string);
  r.read_enum("critic.kind", cfg.critic_kind, critic_kind_from_string);
  r.read("critic.base_width", cfg.model.critic_base_width);
  r.read("critic.stages", cfg.model.critic_stages);
  r.read("critic.normalize", cfg.model.critic_normalize);
  r.read_enum("loss.gan", cfg.gan_loss, gan_loss_from_string);
  r.read("loss.alpha", cfg.alpha);
  r.read("loss.beta", cfg.beta);
  r.read("loss.lambda_gp", cfg.lambda_gp);
  r.read("loss.recon_weight", cfg.recon_weight);
  r.read_enum("loss.template_recon", cfg.template_recon, recon_kind_from_string);
  r.read_enum("loss.print_recon", cfg.print_recon, recon_kind_from_string);
  r.read("loss.alternate_paths", cfg.alternate_paths);
  if (r.has("loss.terms")) {
    const auto& terms = r.at("loss.terms");
    if (!terms.is_array()) throw Error(ErrorCode::ConfigError, "loss.terms: expected an array of term names");
    cfg.enabled_terms.clear();
    for (const auto& t : terms) {
      if (!t.is_string()) throw Error(ErrorCode::ConfigError, "loss.terms: expected strings");
      try {
        cfg.enabled_terms.insert(loss_term_from_string(t.get<std::string>()));
      } catch (const Error& e) {
        throw Error(ErrorCode::ConfigError, std::string("loss.terms: ") + e.what());
      }
    }
  }
  r.read_enum("data.pairing", cfg.pairing, pairing_from_string);
  r.read("data.hybrid_fraction", cfg.hybrid_fraction);
  r.read("heuristics.enabled", cfg.heuristics.enabled);
  r.read("heuristics.n_d", cfg.heuristics.n_d);
  r.read_optional("heuristics.d_threshold", cfg.heuristics.d_threshold);
  r.read_optional("heuristics.g_threshold", cfg.heuristics.g_threshold);
  r.read("heuristics.pool_size", cfg.heuristics.pool_size);
  r.read("heuristics.p_flip", cfg.heuristics.p_flip);
  r.read("heuristics.p_noise", cfg.heuristics.p_noise);
  r.read("heuristics.w_noise", cfg.heuristics.w_noise);
  r.read("optimizer.learning_rate", cfg.optimizer.learning_rate);
  r.read("optimizer.beta1", cfg.optimizer.momentum_pair[0]);
  r.read("optimizer.beta2", cfg.optimizer.momentum_pair[1]);
  r.read("optimizer.batch_size", cfg.optimizer.batch_size);
  r.read("optimizer.total_steps", cfg.optimizer.total_steps);
  r.read("train.seed", cfg.seed);
  r.read("train.deterministic", cfg.deterministic);
  return cfg;
}

}  // namespace turbo
