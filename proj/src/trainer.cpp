#include "edtd7/trainer.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <array>
#include <fstream>

#include "edtd7/errors.hpp"
#include "edtd7/nn_util.hpp"

namespace edtd7 {

namespace {

enum class Stream : std::uint32_t { kInit = 1, kSampling = 2, kNoise = 3 };

std::uint64_t stream_seed(std::uint64_t seed, Stream stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

Hyperparameters effective(Hyperparameters hp) {
  hp.validate();
  hp.ensemble_size = hp.effective_ensemble_size();
  hp.eta = hp.effective_eta();
  return hp;
}

// Seeds the global generator used by module initializers, then hands back
// the encoder dims so this can run inside the member-initializer list.
EncoderDims seeded_encoder_dims(const TransitionDataset& d, const Hyperparameters& hp, std::uint64_t seed) {
  torch::manual_seed(stream_seed(seed, Stream::kInit));
  return {d.state_dim(), d.action_dim(), hp.encoder_hidden, hp.embedding_dim};
}

torch::Tensor column(const std::vector<float>& values, std::int64_t rows, std::int64_t cols, torch::Dtype dtype) {
  auto t = torch::from_blob(const_cast<float*>(values.data()), {rows, cols}, torch::kFloat32);
  return t.to(dtype).clone();
}

}  // namespace

Trainer::Trainer(const TransitionDataset& dataset, const Hyperparameters& hp, std::uint64_t seed, torch::Dtype dtype)
    : dataset_(&dataset),
      hp_(effective(hp)),
      dtype_(dtype),
      encoders_(seeded_encoder_dims(dataset, hp_, seed)),
      buffer_(dataset, hp_.alpha, stream_seed(seed, Stream::kSampling), hp_.min_priority, hp_.ablations.lap),
      noise_generator_(at::make_generator<at::CPUGeneratorImpl>(stream_seed(seed, Stream::kNoise))) {
  const CriticDims critic_dims{dataset.state_dim(), dataset.action_dim(), hp_.embedding_dim, hp_.critic_hidden,
                               hp_.ensemble_size};
  const ActorDims actor_dims{dataset.state_dim(), dataset.action_dim(), hp_.embedding_dim, hp_.actor_hidden};
  critic_ = EnsembleCritic(critic_dims);
  critic_target_ = EnsembleCritic(critic_dims);
  actor_ = Actor(actor_dims);
  actor_target_ = Actor(actor_dims);

  encoders_.to(dtype);
  critic_->to(dtype);
  critic_target_->to(dtype);
  actor_->to(dtype);
  actor_target_->to(dtype);
  hard_copy(*critic_, *critic_target_);
  hard_copy(*actor_, *actor_target_);
  set_trainable(*critic_target_, false);
  set_trainable(*actor_target_, false);

  const auto adam = torch::optim::AdamOptions(hp_.learning_rate);
  encoder_optim_ = std::make_unique<torch::optim::Adam>(encoders_.current()->parameters(), adam);
  critic_optim_ = std::make_unique<torch::optim::Adam>(critic_->parameters(), adam);
  actor_optim_ = std::make_unique<torch::optim::Adam>(actor_->parameters(), adam);

  const auto n = static_cast<std::int64_t>(dataset.size());
  states_ = column(dataset.states(), n, dataset.state_dim(), dtype);
  actions_ = column(dataset.actions(), n, dataset.action_dim(), dtype);
  rewards_ = column(dataset.rewards(), n, 1, dtype).squeeze(1);
  next_states_ = column(dataset.next_states(), n, dataset.state_dim(), dtype);
  std::vector<float> terminal(dataset.terminals().begin(), dataset.terminals().end());
  terminals_ = column(terminal, n, 1, dtype).squeeze(1);
}

Embeddings Trainer::embeddings(Encoder& encoder) const {
  return hp_.ablations.sale ? Embeddings(Encoder(nullptr), hp_.embedding_dim) : Embeddings(encoder, hp_.embedding_dim);
}

StepMetrics Trainer::train_step() {
  ++step_;
  StepMetrics m;
  m.step = step_;

  diagnostics_.indices = buffer_.sample_indices(static_cast<std::size_t>(hp_.batch_size));
  auto idx = torch::tensor(diagnostics_.indices, torch::kInt64);
  auto s = states_.index_select(0, idx);
  auto a = actions_.index_select(0, idx);
  auto r = rewards_.index_select(0, idx);
  auto sn = next_states_.index_select(0, idx);
  auto done = terminals_.index_select(0, idx);

  if (!hp_.ablations.sale) {
    encoder_optim_->zero_grad();
    auto loss = encoder_loss(encoders_.current(), s, a, sn);
    loss.backward();
    encoder_optim_->step();
    m.encoder_loss = loss.item<double>();
  }

  auto target = compute_td_target(critic_target_, *actor_target_, embeddings(encoders_.fixed()), range_,
                                  TargetBatch{r, sn, done}, hp_, &noise_generator_);

  critic_optim_->zero_grad();
  auto critic_result =
      critic_loss(critic_, embeddings(encoders_.target()), CriticBatch{s, a}, target.y, hp_.eta, hp_.min_priority);
  critic_result.loss.backward();
  critic_optim_->step();
  m.critic_loss = critic_result.loss.item<double>();
  m.huber_term = critic_result.huber_term;
  m.es_penalty_value = critic_result.es_value;
  m.mean_q_min = critic_result.mean_q_min;

  auto td = critic_result.td_errors.to(torch::kFloat64).contiguous();
  buffer_.update_priorities(diagnostics_.indices, std::span<const double>(td.data_ptr<double>(), td.numel()),
                            static_cast<std::size_t>(hp_.ensemble_size));

  if (step_ % hp_.policy_update_freq == 0) {
    set_trainable(*critic_, false);
    actor_optim_->zero_grad();
    auto result = actor_loss(actor_, critic_, embeddings(encoders_.target()), s, a, hp_.lambda_bc, hp_.bc_weighting);
    result.loss.backward();
    actor_optim_->step();
    set_trainable(*critic_, true);
    m.actor_loss = result.loss.item<double>();
    m.actor_updated = true;
  }

  if (step_ % hp_.target_update_freq == 0) {
    update_targets();
    m.targets_updated = true;
  }

  diagnostics_.target_noise = target.noise;
  diagnostics_.targets = target.y;
  diagnostics_.td_errors = critic_result.td_errors;
  return m;
}

void Trainer::update_targets() {
  hard_copy(*critic_, *critic_target_);
  hard_copy(*actor_, *actor_target_);
  encoders_.rotate();
  range_.commit();
}

Policy Trainer::snapshot_policy() const {
  auto actor = Actor(actor_->dims());
  auto encoder = Encoder(encoders_.target()->dims());
  actor->to(dtype_);
  encoder->to(dtype_);
  hard_copy(*actor_, *actor);
  hard_copy(*encoders_.target(), *encoder);
  auto embed = embeddings(encoder);
  const auto dtype = dtype_;
  return [actor, embed, dtype](std::span<const float> state) mutable {
    torch::NoGradGuard no_grad;
    auto s = torch::from_blob(const_cast<float*>(state.data()), {1, static_cast<std::int64_t>(state.size())},
                              torch::kFloat32)
                 .to(dtype);
    auto a = actor->forward(s, embed.state(s)).to(torch::kFloat32).contiguous();
    return std::vector<float>(a.data_ptr<float>(), a.data_ptr<float>() + a.numel());
  };
}

void Trainer::save_checkpoint(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  encoders_.save(dir);
  save_module(*critic_, dir / "critics.bin", step_);
  save_module(*critic_target_, dir / "critic_targets.bin", step_);
  save_module(*actor_, dir / "actor.bin", step_);
  save_module(*actor_target_, dir / "actor_target.bin", step_);
  range_.save(dir / "value_range.bin");
  torch::save(*encoder_optim_, (dir / "encoder_optim.bin").string());
  torch::save(*critic_optim_, (dir / "critic_optim.bin").string());
  torch::save(*actor_optim_, (dir / "actor_optim.bin").string());

  torch::serialize::OutputArchive rng;
  rng.write("step", torch::tensor(step_, torch::kInt64));
  rng.write("noise_generator", noise_generator_.get_state());
  auto sampler = buffer_.rng_state();
  rng.write("sampler", torch::from_blob(sampler.data(), {static_cast<std::int64_t>(sampler.size())}, torch::kUInt8).clone());
  auto priorities = buffer_.priorities();
  rng.write("priorities",
            torch::from_blob(priorities.data(), {static_cast<std::int64_t>(priorities.size())}, torch::kFloat64).clone());
  rng.save_to((dir / "rng_state.bin").string());
}

void Trainer::load_checkpoint(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw std::runtime_error("checkpoint directory not found: " + dir.string());
  encoders_.load(dir);
  load_module(*critic_, dir / "critics.bin");
  load_module(*critic_target_, dir / "critic_targets.bin");
  load_module(*actor_, dir / "actor.bin");
  load_module(*actor_target_, dir / "actor_target.bin");
  range_.load(dir / "value_range.bin");
  torch::load(*encoder_optim_, (dir / "encoder_optim.bin").string());
  torch::load(*critic_optim_, (dir / "critic_optim.bin").string());
  torch::load(*actor_optim_, (dir / "actor_optim.bin").string());

  torch::serialize::InputArchive rng;
  rng.load_from((dir / "rng_state.bin").string());
  torch::Tensor step, noise, sampler, priorities;
  rng.read("step", step);
  rng.read("noise_generator", noise);
  rng.read("sampler", sampler);
  rng.read("priorities", priorities);
  step_ = step.item<std::int64_t>();
  noise_generator_.set_state(noise);
  sampler = sampler.contiguous();
  priorities = priorities.contiguous();
  buffer_.restore(std::span<const double>(priorities.data_ptr<double>(), priorities.numel()),
                  std::string(reinterpret_cast<const char*>(sampler.data_ptr<std::uint8_t>()), sampler.numel()));
}

TrainingSummary run_training(Trainer& trainer, const TrainingOptions& options) {
  const auto& hp = trainer.hp();
  if (options.log_freq <= 0) throw ParameterError("log_freq must be positive");
  const auto start = std::chrono::steady_clock::now();
  TrainingSummary summary;

  auto checkpoint = [&](std::int64_t step) {
    auto dir = options.checkpoint_dir / std::to_string(step);
    trainer.save_checkpoint(dir);
    if (options.on_checkpoint) options.on_checkpoint(dir);
    return dir;
  };
  const bool checkpointing = !options.checkpoint_dir.empty();

  while (trainer.step() < hp.max_steps) {
    const auto m = trainer.train_step();
    const bool eval_step = m.step % hp.eval_freq == 0;
    const bool checkpoint_step = checkpointing && options.checkpoint_freq > 0 && m.step % options.checkpoint_freq == 0;
    if (m.step % options.log_freq != 0 && !eval_step) {
      if (checkpoint_step) checkpoint(m.step);
      continue;
    }

    MetricsRecord record;
    record.step = m.step;
    record.critic_loss = m.critic_loss;
    record.es_penalty_value = m.es_penalty_value;
    record.encoder_loss = m.encoder_loss;
    record.actor_loss = m.actor_loss;
    record.mean_q_min = m.mean_q_min;

    if (eval_step && options.env != nullptr) {
      auto report = rollout(*options.env, trainer.snapshot_policy(), options.eval_episodes,
                            options.eval_seed + static_cast<std::uint64_t>(m.step), m.step);
      if (options.reference_scores) {
        report.normalized_score =
            d4rl_score(report.mean_return, options.reference_scores->first, options.reference_scores->second);
      }
      record.eval_mean_return = report.mean_return;
      record.normalized_score = report.normalized_score;
      if (options.on_eval) options.on_eval(report);
      summary.evaluations.push_back(std::move(report));
    }
    record.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (options.on_record) options.on_record(record);
    summary.records.push_back(record);
    if (checkpoint_step) checkpoint(m.step);
  }

  if (checkpointing) {
    auto dir = options.checkpoint_dir / std::to_string(trainer.step());
    summary.final_checkpoint = std::filesystem::exists(dir / "rng_state.bin") ? dir : checkpoint(trainer.step());
  }
  return summary;
}

}  // namespace edtd7
