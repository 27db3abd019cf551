#include "kge/kge.h"

#include <cmath>
#include <cstdio>
#include <memory>
#include <new>
#include <sstream>
#include <string>

#include "kge/common.hpp"
#include "kge/encoder.hpp"
#include "kge/kg_store.hpp"
#include "kge/metrics.hpp"
#include "kge/normalizer.hpp"
#include "kge/synthetic.hpp"
#include "kge/tokenizer.hpp"
#include "kge/trainer.hpp"

struct kge_dictionary {
  kge::ConceptDictionary dict;
};
struct kge_relations {
  kge::RelationStore store;
};
struct kge_vocab {
  kge::Vocab vocab;
};
struct kge_config {
  kge::TrainConfig config;
};
struct kge_model {
  std::shared_ptr<const kge::TermEncoder> encoder;
};
struct kge_index {
  std::unique_ptr<kge::EmbeddingIndex> index;
};
struct kge_text {
  std::string data;
};

namespace {

thread_local std::string g_last_error;

// Runs fn, mapping exceptions to status codes and the thread's last error.
template <typename Fn>
kge_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return KGE_OK;
  } catch (const kge::ValidationError& e) {
    g_last_error = e.what();
    return KGE_INVALID;
  } catch (const kge::RuntimeError& e) {
    g_last_error = e.what();
    return KGE_RUNTIME;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return KGE_RUNTIME;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return KGE_RUNTIME;
  } catch (...) {
    g_last_error = "unknown error";
    return KGE_RUNTIME;
  }
}

template <typename T>
void require(const T* p, const char* what) {
  if (!p) throw kge::ValidationError(std::string("null ") + what);
}

std::string str(const char* s, const char* what) {
  require(s, what);
  return s;
}

kge::Pooling pooling_or_default(const char* name) {
  return name ? kge::parse_pooling(name) : kge::Pooling::Cls;
}

kge_text* make_text(std::string s) { return new kge_text{std::move(s)}; }

std::string format_score(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

extern "C" {

const char* kge_last_error(void) { return g_last_error.c_str(); }
const char* kge_version(void) { return "1.0.0"; }

const char* kge_text_data(const kge_text* text) { return text ? text->data.c_str() : ""; }
size_t kge_text_size(const kge_text* text) { return text ? text->data.size() : 0; }
void kge_text_free(kge_text* text) { delete text; }

// --- dictionary / relations ----------------------------------------------------

kge_status kge_dictionary_load(const char* path, kge_dictionary** out) {
  return guarded([&] {
    require(out, "output handle");
    *out = new kge_dictionary{kge::ConceptDictionary::load(str(path, "path"))};
  });
}

void kge_dictionary_free(kge_dictionary* dict) { delete dict; }
size_t kge_dictionary_size(const kge_dictionary* dict) { return dict ? dict->dict.size() : 0; }
size_t kge_dictionary_term_count(const kge_dictionary* dict) { return dict ? dict->dict.term_count() : 0; }

kge_status kge_relations_load(const char* path, const kge_dictionary* dict, kge_relations** out) {
  return guarded([&] {
    require(out, "output handle");
    require(dict, "dictionary");
    *out = new kge_relations{kge::RelationStore::load(str(path, "path"), dict->dict)};
  });
}

void kge_relations_free(kge_relations* rel) { delete rel; }
size_t kge_relations_size(const kge_relations* rel) { return rel ? rel->store.size() : 0; }
size_t kge_relations_dropped(const kge_relations* rel) { return rel ? rel->store.dropped() : 0; }
size_t kge_relations_label_count(const kge_relations* rel) { return rel ? rel->store.labels().size() : 0; }
const char* kge_relations_label(const kge_relations* rel, size_t index) {
  if (!rel || index >= rel->store.labels().size()) return nullptr;
  return rel->store.labels()[index].c_str();
}

// --- vocab -----------------------------------------------------------------------

kge_status kge_vocab_load(const char* path, kge_vocab** out) {
  return guarded([&] {
    require(out, "output handle");
    *out = new kge_vocab{kge::Vocab::load(str(path, "path"))};
  });
}

kge_status kge_vocab_build(const kge_dictionary* dict, size_t max_size, kge_vocab** out) {
  return guarded([&] {
    require(out, "output handle");
    require(dict, "dictionary");
    if (max_size < 5) throw kge::ValidationError("vocab size must be at least 5");
    *out = new kge_vocab{kge::build_vocab(dict->dict, max_size)};
  });
}

kge_status kge_vocab_save(const kge_vocab* vocab, const char* path) {
  return guarded([&] {
    require(vocab, "vocab");
    vocab->vocab.save(str(path, "path"));
  });
}

size_t kge_vocab_size(const kge_vocab* vocab) { return vocab ? vocab->vocab.size() : 0; }
void kge_vocab_free(kge_vocab* vocab) { delete vocab; }

kge_status kge_vocab_tokenize(const kge_vocab* vocab, const char* surface, size_t max_len, kge_text** out) {
  return guarded([&] {
    require(vocab, "vocab");
    require(out, "output handle");
    const auto seq = kge::tokenize(str(surface, "surface"), vocab->vocab, max_len);
    std::string s;
    for (std::size_t i = 0; i < seq.ids.size() && seq.mask[i]; ++i) {
      if (i) s += ' ';
      s += std::to_string(seq.ids[i]);
    }
    *out = make_text(std::move(s));
  });
}

// --- config / training -------------------------------------------------------------

kge_status kge_config_new(kge_config** out) {
  return guarded([&] {
    require(out, "output handle");
    *out = new kge_config{};
  });
}

kge_status kge_config_load(const char* path, kge_config** out) {
  return guarded([&] {
    require(out, "output handle");
    *out = new kge_config{kge::TrainConfig::load(str(path, "path"))};
  });
}

kge_status kge_config_set(kge_config* config, const char* key, const char* value) {
  return guarded([&] {
    require(config, "config");
    config->config.set(str(key, "key"), str(value, "value"));
  });
}

kge_status kge_config_text(const kge_config* config, kge_text** out) {
  return guarded([&] {
    require(config, "config");
    require(out, "output handle");
    *out = make_text(config->config.to_text());
  });
}

void kge_config_free(kge_config* config) { delete config; }

kge_status kge_train(const kge_config* config, const char* checkpoint_path, const char* log_path, kge_log_fn on_log,
                     void* user) {
  return guarded([&] {
    require(config, "config");
    kge::TrainOptions options;
    options.checkpoint = str(checkpoint_path, "checkpoint path");
    if (log_path) options.log = log_path;
    if (on_log)
      options.on_log = [&](const kge::TrainLogRow& r) { on_log(r.step, r.lr, r.loss, r.loss_term, r.loss_rel, user); };
    kge::train(config->config, options);
  });
}

kge_status kge_gradcheck(const kge_config* config, size_t coordinates, double step, double tolerance,
                         const char* corrupt_tensor, int* passed, double* max_rel_error, kge_text** report) {
  return guarded([&] {
    require(config, "config");
    if (coordinates == 0) throw kge::ValidationError("coordinates must be positive");
    if (!(tolerance > 0.0)) throw kge::ValidationError("tolerance must be positive");
    kge::GradCheckConfig gc;
    gc.train = config->config;
    gc.coordinates = coordinates;
    gc.step = step;
    gc.tolerance = tolerance;
    if (corrupt_tensor) gc.corrupt_tensor = corrupt_tensor;
    const auto r = kge::grad_check(gc);
    if (passed) *passed = r.passed ? 1 : 0;
    if (max_rel_error) *max_rel_error = r.max_rel_error;
    if (report) *report = make_text(r.to_tsv());
  });
}

// --- model ----------------------------------------------------------------------------

kge_status kge_model_load(const char* checkpoint_path, const char* vocab_path, kge_model** out) {
  return guarded([&] {
    require(out, "output handle");
    auto enc = kge::TermEncoder::load(str(checkpoint_path, "checkpoint path"), str(vocab_path, "vocab path"));
    *out = new kge_model{std::make_shared<const kge::TermEncoder>(std::move(enc))};
  });
}

kge_status kge_model_init(const kge_config* config, kge_model** out) {
  return guarded([&] {
    require(config, "config");
    require(out, "output handle");
    const auto& c = config->config;
    c.validate();
    const auto dict = kge::ConceptDictionary::load(c.concepts);
    const auto store = kge::RelationStore::load(c.relations, dict);
    auto vocab = kge::Vocab::load(c.vocab);
    auto params = kge::initial_params(c, store, vocab);
    *out = new kge_model{std::make_shared<const kge::TermEncoder>(std::move(params), std::move(vocab))};
  });
}

kge_status kge_model_save(const kge_model* model, const char* checkpoint_path) {
  return guarded([&] {
    require(model, "model");
    model->encoder->params().save(str(checkpoint_path, "checkpoint path"));
  });
}

size_t kge_model_embed_dim(const kge_model* model) {
  return model ? static_cast<size_t>(model->encoder->params().out_w.rows()) : 0;
}

void kge_model_free(kge_model* model) { delete model; }

kge_status kge_model_embed(const kge_model* model, const char* surface, const char* pooling, double* out) {
  return guarded([&] {
    require(model, "model");
    require(out, "output buffer");
    const kge::Vec e = model->encoder->embed(str(surface, "surface"), pooling_or_default(pooling));
    for (Eigen::Index i = 0; i < e.size(); ++i) out[i] = e[i];
  });
}

// --- index / evaluation ------------------------------------------------------------------

kge_status kge_index_build(const kge_dictionary* dict, const kge_model* model, const char* pooling, kge_index** out) {
  return guarded([&] {
    require(dict, "dictionary");
    require(model, "model");
    require(out, "output handle");
    auto index = std::make_unique<kge::EmbeddingIndex>(
        kge::EmbeddingIndex::build(dict->dict, model->encoder, pooling_or_default(pooling)));
    *out = new kge_index{std::move(index)};
  });
}

void kge_index_free(kge_index* index) { delete index; }
size_t kge_index_size(const kge_index* index) { return index ? index->index->size() : 0; }

kge_status kge_index_query(const kge_index* index, const char* query, size_t top, kge_text** out) {
  return guarded([&] {
    require(index, "index");
    require(out, "output handle");
    std::string s;
    for (const auto& c : index->index->top_k(std::string_view(str(query, "query")), top))
      s += c.concept_id + '\t' + c.term + '\t' + format_score(c.score) + '\n';
    *out = make_text(std::move(s));
  });
}

kge_status kge_index_export(const kge_index* index, kge_text** out) {
  return guarded([&] {
    require(index, "index");
    require(out, "output handle");
    std::ostringstream ss;
    index->index->export_tsv(ss);
    *out = make_text(ss.str());
  });
}

kge_status kge_eval_acc(const kge_index* index, const char* gold_path, const size_t* ks, size_t n, double* out) {
  return guarded([&] {
    require(index, "index");
    require(ks, "k list");
    require(out, "output buffer");
    if (n == 0) throw kge::ValidationError("no k values given");
    const auto gold = kge::load_gold(str(gold_path, "gold path"));
    const auto acc = kge::eval_acc_at_k(*index->index, gold, std::vector<std::size_t>(ks, ks + n));
    for (std::size_t i = 0; i < n; ++i) out[i] = acc[i].accuracy;
  });
}

kge_status kge_eval_f1(const kge_index* index, const char* gold_path, double* precision, double* recall, double* f1) {
  return guarded([&] {
    require(index, "index");
    const auto gold = kge::load_gold(str(gold_path, "gold path"));
    const auto r = kge::eval_f1_one_concept(*index->index, gold);
    if (precision) *precision = r.precision;
    if (recall) *recall = r.recall;
    if (f1) *f1 = r.f1;
  });
}

kge_status kge_eval_mcsm(const kge_dictionary* dict, const kge_model* model, const char* pooling,
                         const char* representation, size_t k, size_t random_dim, uint64_t seed, kge_text** out) {
  return guarded([&] {
    require(dict, "dictionary");
    require(out, "output handle");
    kge::ConceptEmbeddings emb;
    if (model) {
      const auto repr = representation ? kge::parse_concept_representation(representation)
                                       : kge::ConceptRepresentation::Preferred;
      emb = kge::concept_embeddings(dict->dict, *model->encoder, pooling_or_default(pooling), repr);
    } else {
      if (random_dim == 0) throw kge::ValidationError("random embedding dimension must be positive");
      emb = kge::random_concept_embeddings(dict->dict, random_dim, seed);
    }
    std::ostringstream ss;
    ss << "type\tmembers\tmcsm\tbound\n";
    const double bound = kge::mcsm_upper_bound(k);
    for (const auto& t : kge::semantic_types(emb)) {
      std::size_t members = 0;
      for (const auto& ts : emb.types) members += ts.count(t);
      ss << t << '\t' << members << '\t' << format_score(kge::mcsm(emb, t, k)) << '\t' << format_score(bound)
         << '\n';
    }
    *out = make_text(ss.str());
  });
}

void kge_probe_options_default(kge_probe_options* options) {
  if (!options) return;
  const kge::ProbeConfig d;
  options->mode = "feature";
  options->pooling = "cls";
  options->epochs = d.epochs;
  options->batch_size = d.batch_size;
  options->head_lr = d.head_lr;
  options->encoder_lr = d.encoder_lr;
  options->weight_decay = d.weight_decay;
  options->train_fraction = d.train_fraction;
  options->seed = d.seed;
  options->unit_features = d.unit_features ? 1 : 0;
}

kge_status kge_eval_relcls(const kge_dictionary* dict, const kge_model* model, const char* pairs_path,
                           const kge_probe_options* options, double* train_accuracy, double* test_accuracy,
                           size_t* train_size, size_t* test_size) {
  return guarded([&] {
    require(dict, "dictionary");
    require(model, "model");
    require(options, "probe options");
    kge::ProbeConfig pc;
    pc.epochs = options->epochs;
    pc.batch_size = options->batch_size;
    pc.head_lr = options->head_lr;
    pc.encoder_lr = options->encoder_lr;
    pc.weight_decay = options->weight_decay;
    pc.train_fraction = options->train_fraction;
    pc.seed = options->seed;
    pc.unit_features = options->unit_features != 0;
    pc.pooling = pooling_or_default(options->pooling);
    const auto mode = kge::parse_probe_mode(options->mode ? options->mode : "feature");

    const auto pairs = kge::load_relation_pairs(str(pairs_path, "pairs path"));
    const auto data = kge::probe_dataset(dict->dict, pairs);
    kge::ProbeResult r;
    if (mode == kge::ProbeMode::FineTune) {
      kge::TermEncoder encoder = *model->encoder;
      r = kge::probe_train_finetune(data.term_pairs, data.labels, data.classes, encoder, pc);
    } else {
      r = kge::probe_train(kge::probe_examples(data, *model->encoder, pc), data.classes, pc);
    }
    if (train_accuracy) *train_accuracy = r.train_accuracy;
    if (test_accuracy) *test_accuracy = r.test_accuracy;
    if (train_size) *train_size = r.train_size;
    if (test_size) *test_size = r.test_size;
  });
}

void kge_synthetic_options_default(kge_synthetic_options* options) {
  if (!options) return;
  const kge::SyntheticConfig d;
  options->groups = d.groups;
  options->per_group = d.per_group;
  options->synonyms = d.synonyms;
  options->relation_types = d.relation_types;
  options->vocab_size = d.vocab_size;
  options->seed = d.seed;
}

kge_status kge_gen_synthetic(const char* dir, const kge_synthetic_options* options) {
  return guarded([&] {
    require(options, "synthetic options");
    kge::SyntheticConfig c;
    c.groups = options->groups;
    c.per_group = options->per_group;
    c.synonyms = options->synonyms;
    c.relation_types = options->relation_types;
    c.vocab_size = options->vocab_size;
    c.seed = options->seed;
    kge::write_synthetic(c, str(dir, "directory"));
  });
}

}  // extern "C"
