#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kge/contrastive.hpp"
#include "kge/encoder.hpp"
#include "kge/kg_store.hpp"
#include "kge/sampler.hpp"

namespace kge {

// Flat key=value training configuration. Optional MS-loss entries override
// the mode defaults from LossParams::defaults.
struct TrainConfig {
  std::filesystem::path concepts;
  std::filesystem::path relations;
  std::filesystem::path vocab;

  std::size_t k = 32;
  std::size_t m = 4;
  std::size_t accum = 8;
  std::size_t model_dim = 64;
  std::size_t ffn_dim = 128;
  std::size_t embed_dim = 64;
  std::size_t max_len = 32;
  std::size_t steps = 2000;
  std::size_t warmup = 200;
  double lr = 1e-3;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double init_std = 0.02;
  double rel_noise = 0.01;
  RelMode mode = RelMode::DistMultCos;
  Pooling pooling = Pooling::Cls;
  std::optional<std::uint64_t> seed;
  std::size_t log_every = 50;
  std::size_t checkpoint_every = 0;

  std::optional<double> mu;
  std::optional<double> alpha, beta, lambda, epsilon;
  std::optional<double> alpha_rel, beta_rel, lambda_rel, epsilon_rel;

  static TrainConfig parse(std::string_view text);
  static TrainConfig load(const std::filesystem::path& path);

  // Throws ValidationError for unknown keys or unparsable values.
  void set(std::string_view key, std::string_view value);
  std::string to_text() const;

  LossParams loss_params() const;
  EncoderDims dims(std::size_t vocab_size) const;
  // Numeric bounds and required paths; run before any compute.
  void validate() const;
};

struct LrSchedule {
  double peak = 1e-3;
  std::size_t warmup = 0;
  std::size_t total = 0;
};

// Linear warm-up to `peak` at `warmup`, then linear decay to 0 at `total`.
double lr_at(std::size_t t, const LrSchedule& schedule);

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// One decoupled-weight-decay Adam update of a flat tensor; `t` is the
// 1-based step used for bias correction.
void adamw_update(std::span<double> param, std::span<const double> grad, std::span<double> m, std::span<double> v,
                  std::size_t t, double lr, const AdamWConfig& config);

struct OptimizerState {
  ParamGrads m;
  ParamGrads v;
  std::size_t t = 0;

  static OptimizerState for_params(const EncoderParams& params);
};

// Throws RuntimeError naming the first tensor with a non-finite gradient.
void adamw_step(EncoderParams& params, const ParamGrads& grads, OptimizerState& state, double lr,
                const AdamWConfig& config);

// Loss and accumulated encoder/relation gradients for one micro-batch.
TotalLossResult batch_loss(const EncoderParams& params, const TrainingBatch& batch, const LossParams& loss,
                           RelMode mode, Pooling pooling, ParamGrads* grads);

struct TrainLogRow {
  std::size_t step = 0;
  double lr = 0.0;
  double loss = 0.0;
  double loss_term = 0.0;
  double loss_rel = 0.0;
};

struct TrainOptions {
  std::filesystem::path checkpoint;  // final checkpoint
  std::filesystem::path log;         // optional TSV training log
  std::function<void(const TrainLogRow&)> on_log;
};

struct TrainResult {
  std::filesystem::path checkpoint;
  EncoderParams params;
  Vocab vocab;
  std::vector<TrainLogRow> history;  // one row per optimizer step
};

// The seeded starting point of train(); train with steps=0 saves exactly this.
EncoderParams initial_params(const TrainConfig& config, const RelationStore& store, const Vocab& vocab);

TrainResult train(const TrainConfig& config, const TrainOptions& options);
// Same loop over already-loaded inputs.
TrainResult train(const TrainConfig& config, const ConceptDictionary& dict, const RelationStore& store,
                  const Vocab& vocab, const TrainOptions& options);

// Central difference (f(x+h) - f(x-h)) / 2h.
double central_difference(const std::function<double(double)>& f, double x, double h);

struct GradCheckConfig {
  TrainConfig train;           // inputs, dims, mode, MS params, seed
  std::size_t coordinates = 200;
  double step = 1e-5;
  double tolerance = 1e-4;
  // |grad| below this is compared as an absolute error against tolerance * floor.
  double magnitude_floor = 1e-6;
  double init_std = 0.3;
  std::optional<std::string> corrupt_tensor;  // fault injection: doubles that tensor's analytic gradient
};

struct GradCheckEntry {
  std::string tensor;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckTensorSummary {
  std::string tensor;
  std::size_t samples = 0;
  double max_rel_error = 0.0;
  bool flagged = false;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  std::vector<GradCheckTensorSummary> tensors;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed = false;

  std::string to_tsv() const;
};

double gradient_rel_error(double analytic, double numeric, double floor);

GradCheckReport grad_check(const GradCheckConfig& config);
GradCheckReport grad_check(const GradCheckConfig& config, const ConceptDictionary& dict, const RelationStore& store,
                           const Vocab& vocab);

}  // namespace kge
