#include "kge/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "kge/text.hpp"

namespace kge {
namespace {

std::string format_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

template <typename T>
T parse_number(std::string_view key, std::string_view value) {
  T out{};
  const auto* first = value.data();
  const auto* last = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || ptr != last)
    throw ValidationError("invalid value for '" + std::string(key) + "': '" + std::string(value) + "'");
  return out;
}

// Independent streams for initialization and sampling.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

// --- config ---------------------------------------------------------------

void TrainConfig::set(std::string_view key, std::string_view value) {
  const std::string v = text::trim(value);
  auto sz = [&] { return parse_number<std::size_t>(key, v); };
  auto real = [&] { return parse_number<double>(key, v); };
  if (key == "concepts") concepts = v;
  else if (key == "relations") relations = v;
  else if (key == "vocab") vocab = v;
  else if (key == "k") k = sz();
  else if (key == "m") m = sz();
  else if (key == "accum") accum = sz();
  else if (key == "model_dim" || key == "d") model_dim = sz();
  else if (key == "ffn_dim" || key == "f") ffn_dim = sz();
  else if (key == "embed_dim" || key == "l") embed_dim = sz();
  else if (key == "max_len") max_len = sz();
  else if (key == "steps") steps = sz();
  else if (key == "warmup") warmup = sz();
  else if (key == "lr") lr = real();
  else if (key == "weight_decay") weight_decay = real();
  else if (key == "beta1") beta1 = real();
  else if (key == "beta2") beta2 = real();
  else if (key == "adam_eps") adam_eps = real();
  else if (key == "init_std") init_std = real();
  else if (key == "rel_noise") rel_noise = real();
  else if (key == "mode") mode = parse_rel_mode(v);
  else if (key == "pooling") pooling = parse_pooling(v);
  else if (key == "seed") seed = parse_number<std::uint64_t>(key, v);
  else if (key == "log_every") log_every = sz();
  else if (key == "checkpoint_every") checkpoint_every = sz();
  else if (key == "mu") mu = real();
  else if (key == "alpha") alpha = real();
  else if (key == "beta") beta = real();
  else if (key == "lambda") lambda = real();
  else if (key == "epsilon") epsilon = real();
  else if (key == "alpha_rel") alpha_rel = real();
  else if (key == "beta_rel") beta_rel = real();
  else if (key == "lambda_rel") lambda_rel = real();
  else if (key == "epsilon_rel") epsilon_rel = real();
  else throw ValidationError("unknown config key '" + std::string(key) + "'");
}

TrainConfig TrainConfig::parse(std::string_view contents) {
  TrainConfig cfg;
  std::size_t line_no = 0;
  for (auto line : text::split(contents, '\n')) {
    ++line_no;
    const std::string trimmed = text::trim(line);
    if (trimmed.empty() || trimmed.front() == '#') continue;
    const auto eq = trimmed.find('=');
    if (eq == std::string::npos)
      throw ValidationError("config line " + std::to_string(line_no) + ": expected key=value");
    cfg.set(text::trim(std::string_view(trimmed).substr(0, eq)), std::string_view(trimmed).substr(eq + 1));
  }
  return cfg;
}

TrainConfig TrainConfig::load(const std::filesystem::path& path) {
  TrainConfig cfg = parse(read_file(path));
  const auto base = path.parent_path();
  for (auto* p : {&cfg.concepts, &cfg.relations, &cfg.vocab})
    if (!p->empty() && p->is_relative()) *p = base / *p;
  return cfg;
}

std::string TrainConfig::to_text() const {
  std::ostringstream out;
  out << "concepts=" << concepts.string() << '\n'
      << "relations=" << relations.string() << '\n'
      << "vocab=" << vocab.string() << '\n'
      << "k=" << k << "\nm=" << m << "\naccum=" << accum << '\n'
      << "model_dim=" << model_dim << "\nffn_dim=" << ffn_dim << "\nembed_dim=" << embed_dim << '\n'
      << "max_len=" << max_len << "\nsteps=" << steps << "\nwarmup=" << warmup << '\n'
      << "lr=" << format_double(lr) << "\nweight_decay=" << format_double(weight_decay) << '\n'
      << "beta1=" << format_double(beta1) << "\nbeta2=" << format_double(beta2) << '\n'
      << "adam_eps=" << format_double(adam_eps) << "\ninit_std=" << format_double(init_std) << '\n'
      << "rel_noise=" << format_double(rel_noise) << '\n'
      << "mode=" << rel_mode_name(mode) << "\npooling=" << pooling_name(pooling) << '\n'
      << "log_every=" << log_every << "\ncheckpoint_every=" << checkpoint_every << '\n';
  if (seed) out << "seed=" << *seed << '\n';
  const LossParams lp = loss_params();
  out << "mu=" << format_double(lp.mu) << '\n'
      << "alpha=" << format_double(lp.term.alpha) << "\nbeta=" << format_double(lp.term.beta) << '\n'
      << "lambda=" << format_double(lp.term.lambda) << "\nepsilon=" << format_double(lp.term.epsilon) << '\n'
      << "alpha_rel=" << format_double(lp.rel.alpha) << "\nbeta_rel=" << format_double(lp.rel.beta) << '\n'
      << "lambda_rel=" << format_double(lp.rel.lambda) << "\nepsilon_rel=" << format_double(lp.rel.epsilon) << '\n';
  return out.str();
}

LossParams TrainConfig::loss_params() const {
  LossParams p = LossParams::defaults(mode);
  if (alpha) p.term.alpha = *alpha;
  if (beta) p.term.beta = *beta;
  if (lambda) p.term.lambda = *lambda;
  if (epsilon) p.term.epsilon = *epsilon;
  if (mode == RelMode::DistMultCos) p.rel = p.term;
  if (alpha_rel) p.rel.alpha = *alpha_rel;
  if (beta_rel) p.rel.beta = *beta_rel;
  if (lambda_rel) p.rel.lambda = *lambda_rel;
  if (epsilon_rel) p.rel.epsilon = *epsilon_rel;
  if (mu) p.mu = *mu;
  if (mode == RelMode::None) p.mu = 0.0;
  return p;
}

EncoderDims TrainConfig::dims(std::size_t vocab_size) const {
  return EncoderDims{vocab_size, model_dim, ffn_dim, embed_dim, max_len};
}

void TrainConfig::validate() const {
  if (concepts.empty()) throw ValidationError("missing 'concepts' path");
  if (relations.empty()) throw ValidationError("missing 'relations' path");
  if (vocab.empty()) throw ValidationError("missing 'vocab' path");
  if (!seed) throw ValidationError("missing 'seed'");
  validate_batch_shape(k, m);
  if (accum == 0) throw ValidationError("accum must be at least 1");
  if (model_dim == 0 || ffn_dim == 0 || embed_dim == 0) throw ValidationError("dimensions must be positive");
  if (max_len < 3) throw ValidationError("max_len must be at least 3");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ValidationError("lr must be positive");
  if (!(weight_decay >= 0.0)) throw ValidationError("weight_decay must be non-negative");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw ValidationError("Adam betas must lie in [0, 1)");
  if (!(adam_eps > 0.0)) throw ValidationError("adam_eps must be positive");
  if (!(init_std >= 0.0) || !(rel_noise >= 0.0)) throw ValidationError("init scales must be non-negative");
  loss_params().validate();
}

// --- schedule and optimizer -------------------------------------------------

double lr_at(std::size_t t, const LrSchedule& s) {
  if (t > s.total) return 0.0;
  if (t <= s.warmup) {
    if (s.warmup == 0) return s.total == 0 ? 0.0 : s.peak;
    return s.peak * static_cast<double>(t) / static_cast<double>(s.warmup);
  }
  return s.peak * static_cast<double>(s.total - t) / static_cast<double>(s.total - s.warmup);
}

void adamw_update(std::span<double> param, std::span<const double> grad, std::span<double> m, std::span<double> v,
                  std::size_t t, double lr, const AdamWConfig& c) {
  if (grad.size() != param.size() || m.size() != param.size() || v.size() != param.size())
    throw ValidationError("AdamW buffer size mismatch");
  if (t == 0) throw ValidationError("AdamW step counter must start at 1");
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < param.size(); ++i) {
    param[i] -= lr * c.weight_decay * param[i];
    m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * grad[i];
    v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * grad[i] * grad[i];
    const double m_hat = m[i] / bc1;
    const double v_hat = v[i] / bc2;
    param[i] -= lr * m_hat / (std::sqrt(v_hat) + c.eps);
  }
}

OptimizerState OptimizerState::for_params(const EncoderParams& params) {
  return OptimizerState{params.zeros_like(), params.zeros_like(), 0};
}

void adamw_step(EncoderParams& params, const ParamGrads& grads, OptimizerState& state, double lr,
                const AdamWConfig& config) {
  auto p = params.tensors();
  auto g = const_cast<ParamGrads&>(grads).tensors();
  auto m = state.m.tensors();
  auto v = state.v.tensors();
  if (g.size() != p.size() || m.size() != p.size() || v.size() != p.size())
    throw ValidationError("optimizer state does not match parameters");
  for (const auto& t : g)
    for (double x : t.values())
      if (!std::isfinite(x)) throw RuntimeError("non-finite gradient in tensor " + t.name);
  ++state.t;
  for (std::size_t i = 0; i < p.size(); ++i)
    adamw_update(p[i].values(), g[i].values(), m[i].values(), v[i].values(), state.t, lr, config);
}

// --- training loop ----------------------------------------------------------

TotalLossResult batch_loss(const EncoderParams& params, const TrainingBatch& batch, const LossParams& loss,
                           RelMode mode, Pooling pooling, ParamGrads* grads) {
  const std::size_t k = batch.size();
  std::vector<PooledPass> passes;
  passes.reserve(2 * k);
  Mat e(static_cast<Eigen::Index>(2 * k), static_cast<Eigen::Index>(params.dims.embed_dim));
  for (std::size_t i = 0; i < 2 * k; ++i) {
    const auto& seq = i < k ? batch.head_terms[i] : batch.tail_terms[i - k];
    passes.push_back(pooled_forward(params, seq, pooling));
    e.row(static_cast<Eigen::Index>(i)) = passes.back().embedding.transpose();
  }
  TotalLossResult result = total_loss(e, batch.meta, loss, params.rel_mats, params.rel_vecs, mode);
  if (grads) {
    for (std::size_t r = 0; r < result.d_rel_mats.size(); ++r) grads->rel_mats[r] += result.d_rel_mats[r];
    for (std::size_t r = 0; r < result.d_rel_vecs.size(); ++r) grads->rel_vecs[r] += result.d_rel_vecs[r];
    for (std::size_t i = 0; i < 2 * k; ++i) {
      const auto& seq = i < k ? batch.head_terms[i] : batch.tail_terms[i - k];
      const Vec de = result.d_embeddings.row(static_cast<Eigen::Index>(i)).transpose();
      pooled_backward(params, seq, passes[i], de, *grads);
    }
  }
  return result;
}

EncoderParams initial_params(const TrainConfig& config, const RelationStore& store, const Vocab& vocab) {
  config.validate();
  Rng init_rng(derive_seed(*config.seed, 0));
  return EncoderParams::random(config.dims(vocab.size()), store.labels(), init_rng, config.init_std,
                               config.rel_noise);
}

TrainResult train(const TrainConfig& config, const TrainOptions& options) {
  config.validate();
  const auto dict = ConceptDictionary::load(config.concepts);
  const auto store = RelationStore::load(config.relations, dict);
  const auto vocab = Vocab::load(config.vocab);
  return train(config, dict, store, vocab, options);
}

TrainResult train(const TrainConfig& config, const ConceptDictionary& dict, const RelationStore& store,
                  const Vocab& vocab, const TrainOptions& options) {
  config.validate();
  if (store.empty()) throw ValidationError("relation store is empty");
  const LossParams loss = config.loss_params();

  Rng sample_rng(derive_seed(*config.seed, 1));
  EncoderParams params = initial_params(config, store, vocab);
  BatchSampler sampler(dict, store, vocab, config.max_len, config.k, config.m, sample_rng);
  OptimizerState state = OptimizerState::for_params(params);
  ParamGrads grads = params.zeros_like();
  const LrSchedule schedule{config.lr, config.warmup, config.steps};
  const AdamWConfig adam{config.beta1, config.beta2, config.adam_eps, config.weight_decay};

  std::ofstream log;
  if (!options.log.empty()) {
    log.open(options.log, std::ios::binary);
    if (!log) throw RuntimeError("cannot write training log: " + options.log.string());
    log << "step\tlr\tloss\tloss_term\tloss_rel\n";
  }

  TrainResult result;
  result.history.reserve(config.steps);
  for (std::size_t step = 1; step <= config.steps; ++step) {
    grads.set_zero();
    TrainLogRow row;
    row.step = step;
    for (std::size_t a = 0; a < config.accum; ++a) {
      const TrainingBatch batch = sampler.next();
      const auto r = batch_loss(params, batch, loss, config.mode, config.pooling, &grads);
      row.loss += r.loss;
      row.loss_term += r.loss_term;
      row.loss_rel += r.loss_rel;
    }
    const double n = static_cast<double>(config.accum);
    row.loss /= n;
    row.loss_term /= n;
    row.loss_rel /= n;
    row.lr = lr_at(step, schedule);
    adamw_step(params, grads, state, row.lr, adam);
    result.history.push_back(row);

    const bool emit = config.log_every > 0 && (step % config.log_every == 0 || step == 1 || step == config.steps);
    if (emit) {
      if (log)
        log << row.step << '\t' << format_double(row.lr) << '\t' << format_double(row.loss) << '\t'
            << format_double(row.loss_term) << '\t' << format_double(row.loss_rel) << '\n';
      if (options.on_log) options.on_log(row);
    }
    if (config.checkpoint_every > 0 && step % config.checkpoint_every == 0 && step != config.steps &&
        !options.checkpoint.empty()) {
      auto periodic = options.checkpoint;
      periodic += ".step" + std::to_string(step);
      params.save(periodic);
    }
  }

  if (!params.all_finite()) throw RuntimeError("training diverged: non-finite parameters");
  if (!options.checkpoint.empty()) params.save(options.checkpoint);
  result.checkpoint = options.checkpoint;
  result.params = std::move(params);
  result.vocab = vocab;
  return result;
}

// --- gradient check ----------------------------------------------------------

double central_difference(const std::function<double(double)>& f, double x, double h) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

double gradient_rel_error(double analytic, double numeric, double floor) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / scale;
}

std::string GradCheckReport::to_tsv() const {
  std::ostringstream out;
  out << "tensor\tsamples\tmax_rel_error\tflagged\n";
  for (const auto& t : tensors)
    out << t.tensor << '\t' << t.samples << '\t' << format_double(t.max_rel_error) << '\t'
        << (t.flagged ? "yes" : "no") << '\n';
  out << "# max_rel_error=" << format_double(max_rel_error) << " tolerance=" << format_double(tolerance)
      << " result=" << (passed ? "pass" : "fail") << '\n';
  return out.str();
}

GradCheckReport grad_check(const GradCheckConfig& config) {
  config.train.validate();
  const auto dict = ConceptDictionary::load(config.train.concepts);
  const auto store = RelationStore::load(config.train.relations, dict);
  const auto vocab = Vocab::load(config.train.vocab);
  return grad_check(config, dict, store, vocab);
}

GradCheckReport grad_check(const GradCheckConfig& config, const ConceptDictionary& dict, const RelationStore& store,
                           const Vocab& vocab) {
  const TrainConfig& tc = config.train;
  if (!tc.seed) throw ValidationError("missing 'seed'");
  validate_batch_shape(tc.k, tc.m);
  if (!(config.step > 0.0)) throw ValidationError("finite-difference step must be positive");
  const LossParams loss = tc.loss_params();
  loss.validate();

  Rng init_rng(derive_seed(*tc.seed, 0));
  Rng sample_rng(derive_seed(*tc.seed, 1));
  Rng coord_rng(derive_seed(*tc.seed, 2));
  EncoderParams params =
      EncoderParams::random(tc.dims(vocab.size()), store.labels(), init_rng, config.init_std, config.init_std);
  const TrainingBatch batch = sample_batch(dict, store, vocab, tc.max_len, tc.k, tc.m, sample_rng);

  ParamGrads grads = params.zeros_like();
  batch_loss(params, batch, loss, tc.mode, tc.pooling, &grads);

  std::vector<std::size_t> used_rows;
  for (const auto* seqs : {&batch.head_terms, &batch.tail_terms})
    for (const auto& s : *seqs)
      for (std::size_t i = 0; i < s.ids.size(); ++i)
        if (s.mask[i]) used_rows.push_back(static_cast<std::size_t>(s.ids[i]));
  std::sort(used_rows.begin(), used_rows.end());
  used_rows.erase(std::unique(used_rows.begin(), used_rows.end()), used_rows.end());

  auto ptensors = params.tensors();
  auto gtensors = grads.tensors();
  const std::size_t per_tensor = (config.coordinates + ptensors.size() - 1) / ptensors.size();

  GradCheckReport report;
  report.tolerance = config.tolerance;
  auto eval = [&]() { return batch_loss(params, batch, loss, tc.mode, tc.pooling, nullptr).loss; };

  for (std::size_t ti = 0; ti < ptensors.size(); ++ti) {
    const auto& pt = ptensors[ti];
    GradCheckTensorSummary summary{pt.name, 0, 0.0, false};
    for (std::size_t s = 0; s < per_tensor; ++s) {
      std::size_t idx = coord_rng.uniform_index(pt.size());
      // token_emb rows outside the batch have zero gradient both ways; bias toward used rows.
      if (pt.name == "token_emb" && s % 2 == 0) {
        const auto row = used_rows[coord_rng.uniform_index(used_rows.size())];
        idx = row * pt.cols + coord_rng.uniform_index(pt.cols);
      }
      double analytic = gtensors[ti].data[idx];
      if (config.corrupt_tensor && *config.corrupt_tensor == pt.name) analytic *= 2.0;
      const double saved = pt.data[idx];
      const double numeric = central_difference(
          [&](double x) {
            pt.data[idx] = x;
            return eval();
          },
          saved, config.step);
      pt.data[idx] = saved;
      const double err = gradient_rel_error(analytic, numeric, config.magnitude_floor);
      report.entries.push_back({pt.name, idx, analytic, numeric, err});
      summary.samples++;
      summary.max_rel_error = std::max(summary.max_rel_error, err);
    }
    summary.flagged = summary.max_rel_error > config.tolerance;
    report.max_rel_error = std::max(report.max_rel_error, summary.max_rel_error);
    report.tensors.push_back(summary);
  }
  report.passed = report.max_rel_error <= config.tolerance;
  return report;
}

}  // namespace kge
