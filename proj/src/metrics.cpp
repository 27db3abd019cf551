#include "kge/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "kge/text.hpp"
#include "kge/trainer.hpp"

namespace kge {

ConceptRepresentation parse_concept_representation(std::string_view name) {
  if (name == "preferred") return ConceptRepresentation::Preferred;
  if (name == "mean") return ConceptRepresentation::MeanOfSynonyms;
  throw ValidationError("unknown concept representation '" + std::string(name) + "' (expected preferred or mean)");
}

namespace {

Mat normalize_rows(Mat m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double n = m.row(i).norm();
    if (n > 0.0) m.row(i) /= n;
  }
  return m;
}

ConceptEmbeddings skeleton(const ConceptDictionary& dict) {
  ConceptEmbeddings e;
  for (const auto& c : dict.concepts()) {
    e.ids.push_back(c.id);
    e.types.push_back(c.semantic_types);
  }
  return e;
}

}  // namespace

ConceptEmbeddings concept_embeddings(const ConceptDictionary& dict, const TermEncoder& encoder, Pooling pooling,
                                     ConceptRepresentation representation) {
  Mat vectors(static_cast<Eigen::Index>(dict.size()), static_cast<Eigen::Index>(encoder.params().dims.embed_dim));
  for (std::size_t i = 0; i < dict.size(); ++i) {
    const auto& c = dict.at(i);
    Vec v;
    if (representation == ConceptRepresentation::Preferred) {
      v = encoder.embed(c.preferred().surface, pooling);
    } else {
      v = Vec::Zero(vectors.cols());
      for (const auto& t : c.terms) {
        Vec e = encoder.embed(t.surface, pooling);
        const double n = e.norm();
        if (n > 0.0) v += e / n;
      }
      v /= static_cast<double>(c.terms.size());
    }
    vectors.row(static_cast<Eigen::Index>(i)) = v.transpose();
  }
  return concept_embeddings(dict, vectors);
}

ConceptEmbeddings concept_embeddings(const ConceptDictionary& dict, const Mat& vectors) {
  if (static_cast<std::size_t>(vectors.rows()) != dict.size())
    throw ValidationError("expected one vector per concept");
  ConceptEmbeddings e = skeleton(dict);
  e.unit = normalize_rows(vectors);
  return e;
}

ConceptEmbeddings random_concept_embeddings(const ConceptDictionary& dict, std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  Mat v(static_cast<Eigen::Index>(dict.size()), static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = rng.normal();
  return concept_embeddings(dict, v);
}

double mcsm_upper_bound(std::size_t k) {
  double s = 0.0;
  for (std::size_t i = 1; i <= k; ++i) s += 1.0 / std::log2(static_cast<double>(i) + 1.0);
  return s;
}

double mcsm_discounted_hits(const std::vector<bool>& has_type) {
  double s = 0.0;
  for (std::size_t i = 0; i < has_type.size(); ++i)
    if (has_type[i]) s += 1.0 / std::log2(static_cast<double>(i) + 2.0);
  return s;
}

std::vector<std::size_t> nearest_concepts(const ConceptEmbeddings& emb, std::size_t concept_index, std::size_t k) {
  const auto n = static_cast<std::size_t>(emb.unit.rows());
  if (concept_index >= n) throw ValidationError("concept index out of range");
  const Vec scores = emb.unit * emb.unit.row(static_cast<Eigen::Index>(concept_index)).transpose();
  std::vector<std::size_t> order;
  order.reserve(n - 1);
  for (std::size_t j = 0; j < n; ++j)
    if (j != concept_index) order.push_back(j);
  const std::size_t take = std::min(k, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      const double sa = scores[static_cast<Eigen::Index>(a)];
                      const double sb = scores[static_cast<Eigen::Index>(b)];
                      if (sa != sb) return sa > sb;
                      return emb.ids[a] < emb.ids[b];
                    });
  order.resize(take);
  return order;
}

double mcsm(const ConceptEmbeddings& emb, std::string_view semantic_type, std::size_t k) {
  const std::string type(semantic_type);
  if (k == 0) throw ValidationError("MCSM k must be at least 1");
  if (k >= emb.ids.size())
    throw ValidationError("MCSM k must be smaller than the number of concepts (" + std::to_string(emb.ids.size()) + ")");
  double total = 0.0;
  std::size_t members = 0;
  for (std::size_t v = 0; v < emb.ids.size(); ++v) {
    if (!emb.types[v].count(type)) continue;
    ++members;
    std::vector<bool> hits;
    for (auto j : nearest_concepts(emb, v, k)) hits.push_back(emb.types[j].count(type) > 0);
    total += mcsm_discounted_hits(hits);
  }
  if (members == 0) throw ValidationError("no concepts with semantic type '" + type + "'");
  return total / static_cast<double>(members);
}

std::vector<std::string> semantic_types(const ConceptEmbeddings& emb) {
  std::set<std::string> all;
  for (const auto& t : emb.types) all.insert(t.begin(), t.end());
  return {all.begin(), all.end()};
}

// --- probe ----------------------------------------------------------------------

namespace {

Vec concat(const Vec& a, const Vec& b) {
  Vec x(a.size() + b.size());
  x << a, b;
  return x;
}

Vec softmax(const Vec& z) {
  Vec p = (z.array() - z.maxCoeff()).exp();
  return p / p.sum();
}

}  // namespace

Vec ProbeModel::logits(const Vec& head, const Vec& tail) const {
  const Vec x = concat(head, tail);
  if (x.size() != w.cols()) throw ValidationError("probe input dimension mismatch");
  return w * x + b;
}

Vec ProbeModel::probabilities(const Vec& head, const Vec& tail) const { return softmax(logits(head, tail)); }

std::size_t ProbeModel::predict(const Vec& head, const Vec& tail) const {
  const Vec z = logits(head, tail);
  std::size_t best = 0;
  for (Eigen::Index c = 1; c < z.size(); ++c)
    if (z[c] > z[static_cast<Eigen::Index>(best)]) best = static_cast<std::size_t>(c);
  return best;
}

ProbeModel zero_probe(std::vector<std::string> classes, std::size_t embed_dim) {
  ProbeModel m;
  m.w = Mat::Zero(static_cast<Eigen::Index>(classes.size()), static_cast<Eigen::Index>(2 * embed_dim));
  m.b = Vec::Zero(static_cast<Eigen::Index>(classes.size()));
  m.classes = std::move(classes);
  return m;
}

ProbeMode parse_probe_mode(std::string_view name) {
  if (name == "feature") return ProbeMode::Feature;
  if (name == "fine-tune" || name == "finetune") return ProbeMode::FineTune;
  throw ValidationError("unknown probe mode '" + std::string(name) + "' (expected feature or fine-tune)");
}

std::vector<RelationPair> parse_relation_pairs(std::string_view contents) {
  std::vector<RelationPair> pairs;
  std::size_t line_no = 0;
  for (auto line : text::split(contents, '\n')) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty() || line.front() == '#') continue;
    const auto f = text::split(line, '\t');
    if (f.size() != 3)
      throw ValidationError("pair line " + std::to_string(line_no) + ": expected HEAD<TAB>TAIL<TAB>CLASS");
    RelationPair p{text::trim(f[0]), text::trim(f[1]), text::trim(f[2])};
    if (p.head.empty() || p.tail.empty() || p.label.empty())
      throw ValidationError("pair line " + std::to_string(line_no) + ": empty field");
    pairs.push_back(std::move(p));
  }
  return pairs;
}

std::vector<RelationPair> load_relation_pairs(const std::filesystem::path& path) {
  return parse_relation_pairs(read_file(path));
}

ProbeDataset probe_dataset(const ConceptDictionary& dict, const std::vector<RelationPair>& pairs) {
  ProbeDataset ds;
  for (const auto& p : pairs) {
    const auto& h = dict.get(p.head);
    const auto& t = dict.get(p.tail);
    auto it = std::find(ds.classes.begin(), ds.classes.end(), p.label);
    if (it == ds.classes.end()) {
      ds.classes.push_back(p.label);
      it = ds.classes.end() - 1;
    }
    ds.term_pairs.emplace_back(h.preferred().surface, t.preferred().surface);
    ds.labels.push_back(static_cast<std::size_t>(it - ds.classes.begin()));
  }
  return ds;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n, double train_fraction,
                                                                            std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ValidationError("train fraction must lie in (0, 1)");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.uniform_index(i)]);
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
  return {std::vector<std::size_t>(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train)),
          std::vector<std::size_t>(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end())};
}

double probe_cross_entropy(const ProbeModel& model, const Vec& head, const Vec& tail, std::size_t label, Mat* d_w,
                           Vec* d_b, Vec* d_head, Vec* d_tail) {
  const Vec x = concat(head, tail);
  const Vec p = softmax(model.w * x + model.b);
  const auto y = static_cast<Eigen::Index>(label);
  Vec dz = p;
  dz[y] -= 1.0;
  if (d_w) *d_w += dz * x.transpose();
  if (d_b) *d_b += dz;
  if (d_head || d_tail) {
    const Vec dx = model.w.transpose() * dz;
    if (d_head) *d_head = dx.head(head.size());
    if (d_tail) *d_tail = dx.tail(tail.size());
  }
  return -std::log(std::max(p[y], 1e-300));
}

double probe_eval(const ProbeModel& model, const std::vector<ProbeExample>& test) {
  if (test.empty()) throw ValidationError("empty test set");
  std::size_t correct = 0;
  for (const auto& ex : test)
    if (model.predict(ex.head, ex.tail) == ex.label) ++correct;
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

namespace {

void require_two_classes(const std::vector<std::size_t>& labels, std::size_t class_count) {
  std::set<std::size_t> present(labels.begin(), labels.end());
  if (present.size() < 2) throw ValidationError("probe needs at least two classes in the data");
  for (auto l : labels)
    if (l >= class_count) throw ValidationError("probe label out of range");
}

struct HeadOptimizer {
  Mat m_w, v_w;
  Vec m_b, v_b;
  std::size_t t = 0;

  explicit HeadOptimizer(const ProbeModel& model)
      : m_w(Mat::Zero(model.w.rows(), model.w.cols())),
        v_w(Mat::Zero(model.w.rows(), model.w.cols())),
        m_b(Vec::Zero(model.b.size())),
        v_b(Vec::Zero(model.b.size())) {}

  void step(ProbeModel& model, const Mat& g_w, const Vec& g_b, double lr, double wd) {
    ++t;
    const AdamWConfig cfg{0.9, 0.999, 1e-8, wd};
    adamw_update({model.w.data(), static_cast<std::size_t>(model.w.size())},
                 {g_w.data(), static_cast<std::size_t>(g_w.size())},
                 {m_w.data(), static_cast<std::size_t>(m_w.size())}, {v_w.data(), static_cast<std::size_t>(v_w.size())},
                 t, lr, cfg);
    adamw_update({model.b.data(), static_cast<std::size_t>(model.b.size())},
                 {g_b.data(), static_cast<std::size_t>(g_b.size())},
                 {m_b.data(), static_cast<std::size_t>(m_b.size())}, {v_b.data(), static_cast<std::size_t>(v_b.size())},
                 t, lr, cfg);
  }
};

std::vector<std::size_t> shuffled(std::vector<std::size_t> v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.uniform_index(i)]);
  return v;
}

}  // namespace

ProbeResult probe_train(const std::vector<ProbeExample>& examples, const std::vector<std::string>& classes,
                        const ProbeConfig& config) {
  std::vector<std::size_t> labels;
  for (const auto& e : examples) labels.push_back(e.label);
  require_two_classes(labels, classes.size());
  if (config.batch_size == 0) throw ValidationError("batch size must be positive");
  const auto dim = static_cast<std::size_t>(examples.front().head.size());

  auto [train_idx, test_idx] = split_indices(examples.size(), config.train_fraction, config.seed);
  if (train_idx.empty() || test_idx.empty()) throw ValidationError("too few examples for a 4:1 split");

  ProbeResult result;
  result.model = zero_probe(classes, dim);
  HeadOptimizer opt(result.model);
  Rng rng(config.seed ^ 0x5DEECE66DULL);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto order = shuffled(train_idx, rng);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      Mat g_w = Mat::Zero(result.model.w.rows(), result.model.w.cols());
      Vec g_b = Vec::Zero(result.model.b.size());
      for (std::size_t i = start; i < end; ++i) {
        const auto& ex = examples[order[i]];
        probe_cross_entropy(result.model, ex.head, ex.tail, ex.label, &g_w, &g_b, nullptr, nullptr);
      }
      const double n = static_cast<double>(end - start);
      opt.step(result.model, g_w / n, g_b / n, config.head_lr, config.weight_decay);
    }
  }

  std::vector<ProbeExample> train_set, test_set;
  for (auto i : train_idx) train_set.push_back(examples[i]);
  for (auto i : test_idx) test_set.push_back(examples[i]);
  result.train_accuracy = probe_eval(result.model, train_set);
  result.test_accuracy = probe_eval(result.model, test_set);
  result.train_size = train_set.size();
  result.test_size = test_set.size();
  return result;
}

namespace {

Vec feature(const Vec& e, bool unit) {
  if (!unit) return e;
  const double n = e.norm();
  return n > 0.0 ? Vec(e / n) : e;
}

// Gradient through e -> e/|e|: (I - u u^T) g / |e|.
Vec feature_backward(const Vec& e, const Vec& g, bool unit) {
  if (!unit) return g;
  const double n = e.norm();
  if (n == 0.0) return g;
  const Vec u = e / n;
  return (g - u * u.dot(g)) / n;
}

}  // namespace

std::vector<ProbeExample> probe_examples(const ProbeDataset& data, const TermEncoder& encoder,
                                         const ProbeConfig& config) {
  std::vector<ProbeExample> out;
  out.reserve(data.labels.size());
  for (std::size_t i = 0; i < data.labels.size(); ++i)
    out.push_back({feature(encoder.embed(data.term_pairs[i].first, config.pooling), config.unit_features),
                   feature(encoder.embed(data.term_pairs[i].second, config.pooling), config.unit_features),
                   data.labels[i]});
  return out;
}

ProbeResult probe_train_finetune(const std::vector<std::pair<std::string, std::string>>& term_pairs,
                                 const std::vector<std::size_t>& labels, const std::vector<std::string>& classes,
                                 TermEncoder& encoder, const ProbeConfig& config) {
  if (term_pairs.size() != labels.size()) throw ValidationError("term pairs and labels differ in length");
  require_two_classes(labels, classes.size());
  if (config.batch_size == 0) throw ValidationError("batch size must be positive");

  auto [train_idx, test_idx] = split_indices(term_pairs.size(), config.train_fraction, config.seed);
  if (train_idx.empty() || test_idx.empty()) throw ValidationError("too few examples for a 4:1 split");

  EncoderParams& params = encoder.mutable_params();
  std::vector<std::pair<TokenSequence, TokenSequence>> tokens;
  tokens.reserve(term_pairs.size());
  for (const auto& [h, t] : term_pairs) tokens.emplace_back(encoder.tokens(h), encoder.tokens(t));

  ProbeResult result;
  result.model = zero_probe(classes, params.dims.embed_dim);
  HeadOptimizer head_opt(result.model);
  OptimizerState enc_state = OptimizerState::for_params(params);
  ParamGrads enc_grads = params.zeros_like();
  const AdamWConfig enc_cfg{0.9, 0.999, 1e-8, config.weight_decay};
  Rng rng(config.seed ^ 0x5DEECE66DULL);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto order = shuffled(train_idx, rng);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const double n = static_cast<double>(end - start);
      Mat g_w = Mat::Zero(result.model.w.rows(), result.model.w.cols());
      Vec g_b = Vec::Zero(result.model.b.size());
      enc_grads.set_zero();
      for (std::size_t i = start; i < end; ++i) {
        const auto& [th, tt] = tokens[order[i]];
        const PooledPass ph = pooled_forward(params, th, config.pooling);
        const PooledPass pt = pooled_forward(params, tt, config.pooling);
        const Vec fh = feature(ph.embedding, config.unit_features);
        const Vec ft = feature(pt.embedding, config.unit_features);
        Vec dh, dt;
        probe_cross_entropy(result.model, fh, ft, labels[order[i]], &g_w, &g_b, &dh, &dt);
        pooled_backward(params, th, ph, feature_backward(ph.embedding, dh, config.unit_features) / n, enc_grads);
        pooled_backward(params, tt, pt, feature_backward(pt.embedding, dt, config.unit_features) / n, enc_grads);
      }
      head_opt.step(result.model, g_w / n, g_b / n, config.head_lr, config.weight_decay);
      adamw_step(params, enc_grads, enc_state, config.encoder_lr, enc_cfg);
    }
  }

  auto materialize = [&](const std::vector<std::size_t>& idx) {
    std::vector<ProbeExample> out;
    for (auto i : idx)
      out.push_back({feature(pooled_forward(params, tokens[i].first, config.pooling).embedding, config.unit_features),
                     feature(pooled_forward(params, tokens[i].second, config.pooling).embedding, config.unit_features),
                     labels[i]});
    return out;
  };
  result.train_accuracy = probe_eval(result.model, materialize(train_idx));
  result.test_accuracy = probe_eval(result.model, materialize(test_idx));
  result.train_size = train_idx.size();
  result.test_size = test_idx.size();
  return result;
}

}  // namespace kge
