#include "turbo_twin/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "turbo_twin/error.hpp"
#include "turbo_twin/rng.hpp"

namespace turbo {

namespace fs = std::filesystem;

namespace {

std::string rng_to_string(const std::mt19937_64& rng) {
  std::ostringstream out;
  out << rng;
  return out.str();
}

void rng_from_string(std::mt19937_64& rng, const std::string& text) {
  std::istringstream in(text);
  in >> rng;
  if (!in) throw Error(ErrorCode::IoError, "corrupt rng state in checkpoint");
}

std::uint64_t term_index(LossTerm term) { return static_cast<std::uint64_t>(term); }

std::vector<LossTerm> adversarial_terms(const TurboConfig& cfg) {
  std::vector<LossTerm> out;
  for (LossTerm t : kAllLossTerms) {
    if (cfg.enabled(t) && is_adversarial(t)) out.push_back(t);
  }
  return out;
}

ImageMap as_map(const Translator& net) {
  return [net](const torch::Tensor& x) { return net(x); };
}

ImageMap as_map(const Critic& critic) {
  return [critic](const torch::Tensor& x) { return critic(x); };
}

}  // namespace

// ---------------------------------------------------------------------------
// ImagePool

ImagePool::ImagePool(int capacity, std::uint64_t seed) : capacity_(capacity), rng_(seed) {
  if (capacity < 0) throw Error(ErrorCode::RangeError, "pool capacity must be >= 0");
}

torch::Tensor ImagePool::query(const torch::Tensor& fresh) {
  if (capacity_ == 0) return fresh;
  std::vector<torch::Tensor> out;
  out.reserve(static_cast<std::size_t>(fresh.size(0)));
  std::bernoulli_distribution coin(0.5);
  for (std::int64_t i = 0; i < fresh.size(0); ++i) {
    auto image = fresh[i].detach().clone();
    if (buffer_.size() < static_cast<std::size_t>(capacity_)) {
      buffer_.push_back(image);
      out.push_back(image);
      continue;
    }
    if (coin(rng_)) {
      std::uniform_int_distribution<std::size_t> pick(0, buffer_.size() - 1);
      const std::size_t k = pick(rng_);
      out.push_back(buffer_[k]);
      buffer_[k] = image;
      ++swaps_;
    } else {
      out.push_back(image);
    }
  }
  return torch::stack(out);
}

void ImagePool::save(TensorArchive& archive, const std::string& prefix) const {
  archive.meta[prefix + "rng"] = rng_to_string(rng_);
  archive.meta[prefix + "size"] = buffer_.size();
  archive.meta[prefix + "swaps"] = swaps_;
  for (std::size_t i = 0; i < buffer_.size(); ++i) archive.tensors[prefix + std::to_string(i)] = buffer_[i];
}

void ImagePool::load(const TensorArchive& archive, const std::string& prefix) {
  rng_from_string(rng_, archive.meta.at(prefix + "rng").get<std::string>());
  swaps_ = archive.meta.at(prefix + "swaps").get<std::uint64_t>();
  const auto n = archive.meta.at(prefix + "size").get<std::size_t>();
  buffer_.clear();
  for (std::size_t i = 0; i < n; ++i) {
    auto it = archive.tensors.find(prefix + std::to_string(i));
    if (it == archive.tensors.end()) throw Error(ErrorCode::IoError, "checkpoint lacks pool image " + prefix);
    buffer_.push_back(it->second.clone());
  }
}

// ---------------------------------------------------------------------------
// Heuristics

bool should_update_critic(GanLoss kind, double d_loss, double g_loss, const HeuristicParams& h,
                          std::int64_t substep) {
  if (h.d_threshold || h.g_threshold) {
    if (kind != GanLoss::lsgan) {
      throw Error(ErrorCode::ThresholdUnsupported, "critic thresholds need the bounded lsgan loss");
    }
    return (h.d_threshold && d_loss > *h.d_threshold) || (h.g_threshold && g_loss < *h.g_threshold);
  }
  const std::int64_t cycle = h.n_d + 1;
  return substep % cycle < h.n_d;
}

std::pair<torch::Tensor, torch::Tensor> perturb_critic_inputs(const torch::Tensor& batch, const torch::Tensor& labels,
                                                              const HeuristicParams& h, std::mt19937_64& rng) {
  auto images = batch.detach().clone();
  auto out_labels = labels.detach().clone();
  if (h.p_flip <= 0.0 && h.p_noise <= 0.0) return {images, out_labels};

  std::bernoulli_distribution flip(std::clamp(h.p_flip, 0.0, 1.0));
  std::bernoulli_distribution noisy(std::clamp(h.p_noise, 0.0, 1.0));
  std::normal_distribution<double> gauss(0.0, 1.0);
  const auto per_image = images.numel() / std::max<std::int64_t>(images.size(0), 1);
  for (std::int64_t i = 0; i < images.size(0); ++i) {
    if (flip(rng)) out_labels[i] = 1.0 - out_labels[i].item<double>();
    if (!noisy(rng)) continue;
    std::vector<double> n(static_cast<std::size_t>(per_image));
    for (auto& v : n) v = std::clamp(gauss(rng), 0.0, 1.0);
    auto noise = torch::tensor(n, torch::TensorOptions().dtype(torch::kFloat64))
                     .to(images.scalar_type())
                     .reshape(images[i].sizes());
    images[i] = (1.0 - h.w_noise) * images[i] + h.w_noise * noise;
  }
  return {images, out_labels};
}

// ---------------------------------------------------------------------------
// Adam

Adam::Adam(std::vector<torch::Tensor> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params_) {
    m_.push_back(torch::zeros_like(p));
    v_.push_back(torch::zeros_like(p));
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) {
    if (p.mutable_grad().defined()) p.mutable_grad().zero_();
  }
}

bool Adam::gradients_finite() const {
  for (const auto& p : params_) {
    if (p.grad().defined() && !torch::isfinite(p.grad()).all().item<bool>()) return false;
  }
  return true;
}

void Adam::step() {
  torch::NoGradGuard no_grad;
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& g = params_[i].grad();
    if (!g.defined()) continue;
    m_[i].mul_(beta1_).add_(g, 1.0 - beta1_);
    v_[i].mul_(beta2_).addcmul_(g, g, 1.0 - beta2_);
    auto denom = (v_[i] / c2).sqrt_().add_(eps_);
    params_[i].addcdiv_(m_[i], denom, -lr_ / c1);
  }
}

void Adam::save(TensorArchive& archive, const std::string& prefix) const {
  archive.meta[prefix + "t"] = t_;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    archive.tensors[prefix + "m." + std::to_string(i)] = m_[i];
    archive.tensors[prefix + "v." + std::to_string(i)] = v_[i];
  }
}

void Adam::load(const TensorArchive& archive, const std::string& prefix) {
  torch::NoGradGuard no_grad;
  t_ = archive.meta.at(prefix + "t").get<std::int64_t>();
  for (std::size_t i = 0; i < params_.size(); ++i) {
    for (auto* slot : {&m_, &v_}) {
      const auto key = prefix + (slot == &m_ ? "m." : "v.") + std::to_string(i);
      auto it = archive.tensors.find(key);
      if (it == archive.tensors.end()) throw Error(ErrorCode::IoError, "checkpoint lacks optimizer tensor " + key);
      (*slot)[i].copy_(it->second);
    }
  }
}

// ---------------------------------------------------------------------------
// State

CriticSides critic_sides(LossTerm term, const TensorBatch& batch, const PathOutputs& outputs) {
  switch (term) {
    case LossTerm::D_t_tilde: return {&batch.templates, &outputs.t_tilde};
    case LossTerm::D_t_hat: return {&batch.templates, &outputs.t_hat};
    case LossTerm::D_y_hat: return {&batch.prints, &outputs.y_hat};
    case LossTerm::D_y_tilde: return {&batch.prints, &outputs.y_tilde};
    default: break;
  }
  throw Error(ErrorCode::InvalidSpec, std::string(to_string(term)) + " is not an adversarial term");
}

CriticMap TrainState::critic_map() const {
  CriticMap out;
  for (const auto& [term, critic] : critics) out.emplace(term, as_map(critic));
  return out;
}

std::uint64_t TrainState::generator_hash() const {
  std::vector<torch::Tensor> all;
  for (const auto& [_, t] : encoder.named_tensors()) all.push_back(t);
  for (const auto& [_, t] : decoder.named_tensors()) all.push_back(t);
  return tensor_hash(all);
}

std::uint64_t TrainState::critic_hash() const {
  std::vector<torch::Tensor> all;
  for (const auto& [_, critic] : critics) {
    for (const auto& [name, t] : critic.named_tensors()) all.push_back(t);
  }
  return tensor_hash(all);
}

TrainState init_state(const TurboConfig& config) {
  const TurboConfig cfg = validate_config(config);
  const HeuristicParams h = cfg.heuristics.effective();
  TrainState state{.cfg = cfg,
                   .encoder = build_translator(encoder_spec(cfg), mix_seed(cfg.seed, 1)),
                   .decoder = build_translator(decoder_spec(cfg), mix_seed(cfg.seed, 2)),
                   .rng = std::mt19937_64(mix_seed(cfg.seed, 3))};
  std::vector<torch::Tensor> gen_params = state.encoder.parameters();
  for (auto& p : state.decoder.parameters()) gen_params.push_back(p);
  const auto& opt = cfg.optimizer;
  state.generator_opt = Adam(gen_params, opt.learning_rate, opt.momentum_pair[0], opt.momentum_pair[1]);

  const CriticSpec cspec = critic_spec(cfg);
  for (LossTerm term : adversarial_terms(cfg)) {
    auto critic = build_critic(cspec, mix_seed(cfg.seed, 10 + term_index(term)));
    state.critic_opts.emplace(
        term, Adam(critic.parameters(), opt.learning_rate, opt.momentum_pair[0], opt.momentum_pair[1]));
    state.critics.emplace(term, std::move(critic));
    state.pools.emplace(term, ImagePool(h.pool_size, mix_seed(cfg.seed, 100 + term_index(term))));
  }
  return state;
}

TensorArchive state_archive(const TrainState& state) {
  TensorArchive a;
  a.meta["kind"] = "train_state";
  a.meta["config"] = config_to_json(state.cfg);
  a.meta["step"] = state.step;
  a.meta["substep"] = state.substep;
  a.meta["generator_updates"] = state.generator_updates;
  a.meta["critic_updates"] = state.critic_updates;
  a.meta["stream_epoch"] = state.stream_epoch;
  a.meta["stream_cursor"] = state.stream_cursor;
  a.meta["rng"] = rng_to_string(state.rng);
  a.meta["encoder_spec"] = spec_to_json(state.encoder.spec());
  a.meta["decoder_spec"] = spec_to_json(state.decoder.spec());
  for (const auto& [name, t] : state.encoder.named_tensors()) a.tensors["encoder." + name] = t;
  for (const auto& [name, t] : state.decoder.named_tensors()) a.tensors["decoder." + name] = t;
  state.generator_opt.save(a, "adam.generator.");
  for (const auto& [term, critic] : state.critics) {
    const std::string key(to_string(term));
    for (const auto& [name, t] : critic.named_tensors()) a.tensors["critic." + key + "." + name] = t;
    state.critic_opts.at(term).save(a, "adam." + key + ".");
    state.pools.at(term).save(a, "pool." + key + ".");
  }
  return a;
}

TrainState state_from_archive(const TensorArchive& a) {
  if (a.meta.value("kind", "") != "train_state") throw Error(ErrorCode::IoError, "archive does not hold a train state");
  TrainState state = init_state(config_from_json(a.meta.at("config")));
  load_named_tensors(a.tensors, state.encoder.module(), "encoder.");
  load_named_tensors(a.tensors, state.decoder.module(), "decoder.");
  state.generator_opt.load(a, "adam.generator.");
  for (auto& [term, critic] : state.critics) {
    const std::string key(to_string(term));
    load_named_tensors(a.tensors, critic.module(), "critic." + key + ".");
    state.critic_opts.at(term).load(a, "adam." + key + ".");
    state.pools.at(term).load(a, "pool." + key + ".");
  }
  state.step = a.meta.at("step").get<std::int64_t>();
  state.substep = a.meta.at("substep").get<std::int64_t>();
  state.generator_updates = a.meta.at("generator_updates").get<std::int64_t>();
  state.critic_updates = a.meta.at("critic_updates").get<std::int64_t>();
  state.stream_epoch = a.meta.at("stream_epoch").get<std::uint64_t>();
  state.stream_cursor = a.meta.at("stream_cursor").get<std::size_t>();
  rng_from_string(state.rng, a.meta.at("rng").get<std::string>());
  return state;
}

void save_state(const fs::path& path, const TrainState& state) {
  // Write-then-rename so an interrupted save never leaves a torn checkpoint.
  fs::path tmp = path;
  tmp += ".tmp";
  save_archive(tmp, state_archive(state));
  fs::rename(tmp, path);
}

TrainState load_state(const fs::path& path) { return state_from_archive(load_archive(path)); }

// ---------------------------------------------------------------------------
// Log

std::vector<std::string> loss_log_header(const TurboConfig& cfg) {
  std::vector<std::string> cols{"step"};
  for (LossTerm t : kAllLossTerms) {
    if (cfg.enabled(t)) cols.emplace_back(to_string(t));
  }
  cols.insert(cols.end(), {"direct_total", "reverse_total", "grand_total"});
  for (LossTerm t : adversarial_terms(cfg)) cols.push_back("critic_" + std::string(to_string(t)));
  return cols;
}

std::string format_log_row(const TurboConfig& cfg, const StepRecord& r) {
  std::string row = std::to_string(r.step);
  auto put = [&row](double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    row += ',';
    row += buf;
  };
  for (LossTerm t : kAllLossTerms) {
    if (cfg.enabled(t)) put(r.terms.at(t));
  }
  put(r.direct_total);
  put(r.reverse_total);
  put(r.grand_total);
  for (LossTerm t : adversarial_terms(cfg)) {
    auto it = r.critic_losses.find(t);
    put(it == r.critic_losses.end() ? std::numeric_limits<double>::quiet_NaN() : it->second);
  }
  return row;
}

// ---------------------------------------------------------------------------
// Trainer

namespace {

BatchStream stream_for(const TrainState& state, std::size_t n) {
  const auto& cfg = state.cfg;
  BatchStream stream(n, static_cast<std::size_t>(cfg.optimizer.batch_size), cfg.pairing, mix_seed(cfg.seed, 4),
                     cfg.hybrid_fraction);
  stream.seek(state.stream_epoch, state.stream_cursor);
  return stream;
}

std::size_t checked_size(const std::vector<Sample>& samples) {
  if (samples.empty()) throw Error(ErrorCode::DataExhausted, "no training samples");
  for (const auto& s : samples) {
    if (!s.y) throw Error(ErrorCode::MissingPairing, "sample '" + s.t.id() + "' has no printed code");
  }
  return samples.size();
}

}  // namespace

Trainer::Trainer(const TurboConfig& cfg, const std::vector<Sample>& samples, TrainOptions options)
    : Trainer(init_state(cfg), samples, std::move(options)) {}

Trainer::Trainer(TrainState state, const std::vector<Sample>& samples, TrainOptions options)
    : state_(std::move(state)), options_(std::move(options)), stream_(stream_for(state_, checked_size(samples))) {
  if (state_.cfg.deterministic) torch::set_num_threads(1);
  std::vector<Grid> ts;
  std::vector<Grid> ys;
  for (const auto& s : samples) {
    ts.push_back(s.t.pixels());
    ys.push_back(s.y->pixels());
  }
  templates_ = grids_to_tensor(ts);
  prints_ = grids_to_tensor(ys);
  if (options_.snapshot_dir.empty()) options_.snapshot_dir = options_.checkpoint_dir;
  open_log(state_.step > 0);
}

Trainer Trainer::resume(const std::vector<Sample>& samples, TrainOptions options) {
  const fs::path latest = options.checkpoint_dir / kLatestCheckpoint;
  if (!fs::exists(latest)) throw Error(ErrorCode::MissingCheckpoint, "no checkpoint at " + latest.string());
  return Trainer(load_state(latest), samples, std::move(options));
}

void Trainer::open_log(bool truncate_to_state) {
  if (options_.log_path.empty()) return;
  if (options_.log_path.has_parent_path()) fs::create_directories(options_.log_path.parent_path());
  std::vector<std::string> keep;
  if (truncate_to_state && fs::exists(options_.log_path)) {
    std::ifstream in(options_.log_path);
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
      if (header) {
        header = false;
        continue;
      }
      if (line.empty()) continue;
      if (std::stoll(line.substr(0, line.find(','))) <= state_.step) keep.push_back(line);
    }
  }
  log_.open(options_.log_path, std::ios::trunc);
  if (!log_) throw Error(ErrorCode::IoError, "cannot open loss log " + options_.log_path.string());
  const auto cols = loss_log_header(state_.cfg);
  for (std::size_t i = 0; i < cols.size(); ++i) log_ << (i ? "," : "") << cols[i];
  log_ << '\n';
  for (const auto& line : keep) log_ << line << '\n';
  log_.flush();
}

void Trainer::write_log(const StepRecord& record) {
  if (!log_.is_open()) return;
  log_ << format_log_row(state_.cfg, record) << '\n';
  log_.flush();
}

TensorBatch Trainer::next_batch() {
  const BatchPlan plan = stream_.next();
  state_.stream_epoch = stream_.epoch();
  state_.stream_cursor = stream_.cursor();
  auto index = [](const std::vector<std::size_t>& v) {
    std::vector<std::int64_t> out(v.begin(), v.end());
    return torch::tensor(out, torch::TensorOptions().dtype(torch::kLong));
  };
  TensorBatch batch;
  batch.templates = templates_.index_select(0, index(plan.template_index));
  batch.prints = prints_.index_select(0, index(plan.print_index));
  batch.regime = plan.regime;
  std::vector<std::int64_t> mask(plan.paired.begin(), plan.paired.end());
  batch.paired_mask = torch::tensor(mask, torch::TensorOptions().dtype(torch::kLong)).to(torch::kBool);
  return batch;
}

void Trainer::fail_non_finite(const std::string& where, const std::map<LossTerm, double>& values) const {
  std::ostringstream msg;
  msg << "non-finite loss in " << where << " at step " << state_.step + 1;
  nlohmann::json snapshot{{"where", where}, {"step", state_.step + 1}};
  for (const auto& [term, v] : values) {
    msg << ' ' << to_string(term) << '=' << v;
    snapshot["terms"][std::string(to_string(term))] = std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(std::to_string(v));
  }
  if (!options_.snapshot_dir.empty()) {
    // The state still holds the last finite parameters: nothing was updated.
    fs::create_directories(options_.snapshot_dir);
    save_state(options_.snapshot_dir / "nonfinite.ckpt", state_);
    std::ofstream(options_.snapshot_dir / "nonfinite.json") << snapshot.dump(2) << '\n';
    msg << " (snapshot in " << options_.snapshot_dir.string() << ")";
  }
  throw Error(ErrorCode::NonFiniteLoss, msg.str());
}

void Trainer::critic_phase(const TensorBatch& first_batch, const PathOutputs& first_outputs, StepRecord& record) {
  const auto& cfg = state_.cfg;
  const HeuristicParams h = cfg.heuristics.effective();
  const ImageMap encoder = as_map(state_.encoder);
  const ImageMap decoder = as_map(state_.decoder);
  for (int j = 0; j < h.n_d; ++j) {
    const std::int64_t slot = state_.substep++;
    TensorBatch batch = first_batch;
    PathOutputs outputs = first_outputs;
    if (j > 0) {
      torch::NoGradGuard no_grad;
      batch = next_batch();
      outputs = forward_paths(encoder, decoder, batch);
    }
    for (LossTerm term : adversarial_terms(cfg)) {
      const auto sides = critic_sides(term, batch, outputs);
      auto real = sides.real->detach();
      auto fake = state_.pools.at(term).query(sides.fake->detach());
      auto labels = torch::cat({torch::ones({real.size(0)}, real.options()), torch::zeros({fake.size(0)}, fake.options())});
      auto [images, flipped] = perturb_critic_inputs(torch::cat({real, fake}), labels, h, state_.rng);
      auto real_idx = torch::nonzero(flipped > 0.5).flatten();
      auto fake_idx = torch::nonzero(flipped <= 0.5).flatten();
      // The penalty seed is drawn every slot so the rng sequence never depends on gating.
      const std::uint64_t gp_seed = state_.rng();
      if (real_idx.numel() == 0 || fake_idx.numel() == 0) {
        record.critic_losses[term] = std::numeric_limits<double>::quiet_NaN();
        continue;
      }
      const Critic& critic = state_.critics.at(term);
      auto scores = critic(images);
      auto real_scores = scores.index_select(0, real_idx);
      auto fake_scores = scores.index_select(0, fake_idx);
      auto loss = adversarial_loss(cfg.gan_loss, AdversarialRole::critic, real_scores, fake_scores);
      if (cfg.gan_loss == GanLoss::wgan_gp) {
        const auto k = std::min(real_idx.numel(), fake_idx.numel());
        loss = loss + gradient_penalty(as_map(critic), images.index_select(0, real_idx.slice(0, 0, k)),
                                       images.index_select(0, fake_idx.slice(0, 0, k)), cfg.lambda_gp, gp_seed);
      }
      const double d = loss.item<double>();
      const double g =
          adversarial_loss(cfg.gan_loss, AdversarialRole::generator, torch::Tensor(), fake_scores).item<double>();
      record.critic_losses[term] = d;
      if (!std::isfinite(d)) fail_non_finite("critic " + std::string(to_string(term)), {{term, d}});
      if (!should_update_critic(cfg.gan_loss, d, g, h, slot)) continue;
      auto& opt = state_.critic_opts.at(term);
      opt.zero_grad();
      loss.backward();
      if (!opt.gradients_finite()) fail_non_finite("critic gradient " + std::string(to_string(term)), {{term, d}});
      opt.step();
      ++record.critic_updates;
      ++state_.critic_updates;
    }
  }
}

StepRecord Trainer::step() {
  const auto& cfg = state_.cfg;
  StepRecord record;
  record.step = state_.step + 1;

  const TensorBatch batch = next_batch();
  const PathOutputs outputs = forward_paths(as_map(state_.encoder), as_map(state_.decoder), batch);
  if (!outputs.all_finite()) fail_non_finite("forward pass", {});

  if (!state_.critics.empty()) {
    PathOutputs detached{outputs.t_tilde.detach(), outputs.y_hat.detach(), outputs.y_tilde.detach(),
                         outputs.t_hat.detach()};
    critic_phase(batch, detached, record);
  } else {
    state_.substep += cfg.heuristics.effective().n_d;
  }
  if (options_.on_phase) options_.on_phase("critic", state_);

  // Generator slot of the cycle.
  ++state_.substep;
  const LossBreakdown losses = turbo_loss(outputs, batch, state_.critic_map(), cfg);
  record.terms = losses.term_values();
  record.direct_total = losses.direct_value();
  record.reverse_total = losses.reverse_value();
  record.grand_total = losses.grand_value();
  if (!std::isfinite(record.grand_total)) fail_non_finite("generator loss", record.terms);

  const torch::Tensor* objective = &losses.grand_total;
  if (cfg.alternate_paths) objective = state_.step % 2 == 0 ? &losses.direct_total : &losses.reverse_total;
  if (objective->requires_grad()) {
    state_.generator_opt.zero_grad();
    objective->backward();
    if (!state_.generator_opt.gradients_finite()) fail_non_finite("generator gradient", record.terms);
    state_.generator_opt.step();
  }
  if (options_.on_phase) options_.on_phase("generator", state_);
  ++state_.generator_updates;
  ++state_.step;

  write_log(record);
  history_.push_back(record);
  if (options_.on_step) options_.on_step(record);
  return record;
}

void Trainer::save_checkpoint() const {
  if (options_.checkpoint_dir.empty()) return;
  fs::create_directories(options_.checkpoint_dir);
  char name[40];
  std::snprintf(name, sizeof(name), "step_%08lld.ckpt", static_cast<long long>(state_.step));
  save_state(options_.checkpoint_dir / name, state_);
  fs::copy_file(options_.checkpoint_dir / name, options_.checkpoint_dir / "latest.tmp",
                fs::copy_options::overwrite_existing);
  fs::rename(options_.checkpoint_dir / "latest.tmp", options_.checkpoint_dir / kLatestCheckpoint);
}

void Trainer::run(std::int64_t steps) {
  if (steps < 0) throw Error(ErrorCode::RangeError, "steps must be >= 0");
  for (std::int64_t i = 0; i < steps; ++i) {
    step();
    if (options_.checkpoint_every > 0 && state_.step % options_.checkpoint_every == 0) save_checkpoint();
  }
  if (options_.checkpoint_every == 0 || state_.step % options_.checkpoint_every != 0) save_checkpoint();
}

TrainState train(const TurboConfig& cfg, const std::vector<Sample>& samples, std::int64_t steps,
                 TrainOptions options) {
  Trainer trainer(cfg, samples, std::move(options));
  trainer.run(steps);
  return std::move(trainer.state());
}

}  // namespace turbo
