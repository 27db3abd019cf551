#ifndef KGE_KGE_H
#define KGE_KGE_H

#include <stddef.h>
#include <stdint.h>

#if defined(KGE_BUILDING_LIBRARY)
#define KGE_API __attribute__((visibility("default")))
#else
#define KGE_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes. KGE_INVALID covers bad input (files, flags, values);
   KGE_RUNTIME covers failures during compute or I/O on output. */
typedef enum kge_status {
  KGE_OK = 0,
  KGE_INVALID = 1,
  KGE_RUNTIME = 2
} kge_status;

typedef struct kge_dictionary kge_dictionary;
typedef struct kge_relations kge_relations;
typedef struct kge_vocab kge_vocab;
typedef struct kge_config kge_config;
typedef struct kge_model kge_model;
typedef struct kge_index kge_index;
typedef struct kge_text kge_text;

/* Message for the last failed call on this thread; "" if none. */
KGE_API const char* kge_last_error(void);
KGE_API const char* kge_version(void);

/* Owned UTF-8 result buffers. */
KGE_API const char* kge_text_data(const kge_text* text);
KGE_API size_t kge_text_size(const kge_text* text);
KGE_API void kge_text_free(kge_text* text);

/* Concept dictionary and relation store. */
KGE_API kge_status kge_dictionary_load(const char* path, kge_dictionary** out);
KGE_API void kge_dictionary_free(kge_dictionary* dict);
KGE_API size_t kge_dictionary_size(const kge_dictionary* dict);
KGE_API size_t kge_dictionary_term_count(const kge_dictionary* dict);

KGE_API kge_status kge_relations_load(const char* path, const kge_dictionary* dict, kge_relations** out);
KGE_API void kge_relations_free(kge_relations* rel);
KGE_API size_t kge_relations_size(const kge_relations* rel);
KGE_API size_t kge_relations_dropped(const kge_relations* rel);
KGE_API size_t kge_relations_label_count(const kge_relations* rel);
KGE_API const char* kge_relations_label(const kge_relations* rel, size_t index);

/* Vocabulary. */
KGE_API kge_status kge_vocab_load(const char* path, kge_vocab** out);
KGE_API kge_status kge_vocab_build(const kge_dictionary* dict, size_t max_size, kge_vocab** out);
KGE_API kge_status kge_vocab_save(const kge_vocab* vocab, const char* path);
KGE_API size_t kge_vocab_size(const kge_vocab* vocab);
KGE_API void kge_vocab_free(kge_vocab* vocab);
/* Space-separated token ids with [CLS]/[SEP], no padding. */
KGE_API kge_status kge_vocab_tokenize(const kge_vocab* vocab, const char* surface, size_t max_len, kge_text** out);

/* Training configuration: flat key=value. Relative paths in a file resolve
   against the file's directory. */
KGE_API kge_status kge_config_new(kge_config** out);
KGE_API kge_status kge_config_load(const char* path, kge_config** out);
KGE_API kge_status kge_config_set(kge_config* config, const char* key, const char* value);
KGE_API kge_status kge_config_text(const kge_config* config, kge_text** out);
KGE_API void kge_config_free(kge_config* config);

/* Called once per logged optimizer step. */
typedef void (*kge_log_fn)(size_t step, double lr, double loss, double loss_term, double loss_rel, void* user);

/* Trains and writes the final checkpoint. log_path may be NULL. */
KGE_API kge_status kge_train(const kge_config* config, const char* checkpoint_path, const char* log_path,
                             kge_log_fn on_log, void* user);

/* Finite-difference check of the total-loss gradient. *passed is 1 when every
   sampled coordinate is within tolerance. report gets per-coordinate TSV.
   corrupt_tensor (may be NULL) doubles that tensor's analytic gradient. */
KGE_API kge_status kge_gradcheck(const kge_config* config, size_t coordinates, double step, double tolerance,
                                 const char* corrupt_tensor, int* passed, double* max_rel_error, kge_text** report);

/* Encoder checkpoint plus its vocabulary. kge_model_init builds the seeded
   untrained encoder the given config would start from. */
KGE_API kge_status kge_model_load(const char* checkpoint_path, const char* vocab_path, kge_model** out);
KGE_API kge_status kge_model_init(const kge_config* config, kge_model** out);
KGE_API kge_status kge_model_save(const kge_model* model, const char* checkpoint_path);
KGE_API size_t kge_model_embed_dim(const kge_model* model);
KGE_API void kge_model_free(kge_model* model);
/* pooling is "cls" or "avg". out must hold kge_model_embed_dim doubles. */
KGE_API kge_status kge_model_embed(const kge_model* model, const char* surface, const char* pooling, double* out);

/* Embedding index over every dictionary term. */
KGE_API kge_status kge_index_build(const kge_dictionary* dict, const kge_model* model, const char* pooling,
                                   kge_index** out);
KGE_API void kge_index_free(kge_index* index);
KGE_API size_t kge_index_size(const kge_index* index);
/* TSV rows CUI, TERM, SCORE, best first. */
KGE_API kge_status kge_index_query(const kge_index* index, const char* query, size_t top, kge_text** out);
/* CUI <TAB> TERM <TAB> v1,...,vl */
KGE_API kge_status kge_index_export(const kge_index* index, kge_text** out);

/* acc@k for each of ks[0..n); out receives n accuracies. */
KGE_API kge_status kge_eval_acc(const kge_index* index, const char* gold_path, const size_t* ks, size_t n,
                                double* out);
KGE_API kge_status kge_eval_f1(const kge_index* index, const char* gold_path, double* precision, double* recall,
                               double* f1);

/* MCSM per semantic type as TSV (type, members, mcsm, bound). representation
   is "preferred" or "mean". With model NULL, Gaussian embeddings of
   random_dim dimensions drawn from seed are scored instead. */
KGE_API kge_status kge_eval_mcsm(const kge_dictionary* dict, const kge_model* model, const char* pooling,
                                 const char* representation, size_t k, size_t random_dim, uint64_t seed,
                                 kge_text** out);

typedef struct kge_probe_options {
  const char* mode;  /* "feature" or "fine-tune" */
  const char* pooling;
  size_t epochs;
  size_t batch_size;
  double head_lr;
  double encoder_lr;
  double weight_decay;
  double train_fraction;
  uint64_t seed;
  int unit_features; /* nonzero: L2-normalize embeddings before the classifier */
} kge_probe_options;

KGE_API void kge_probe_options_default(kge_probe_options* options);

/* Relation-classification probe. Fine-tune mode trains a private copy of
   the model's encoder. */
KGE_API kge_status kge_eval_relcls(const kge_dictionary* dict, const kge_model* model, const char* pairs_path,
                                   const kge_probe_options* options, double* train_accuracy, double* test_accuracy,
                                   size_t* train_size, size_t* test_size);

typedef struct kge_synthetic_options {
  size_t groups;
  size_t per_group;
  size_t synonyms;
  size_t relation_types;
  size_t vocab_size;
  uint64_t seed;
} kge_synthetic_options;

KGE_API void kge_synthetic_options_default(kge_synthetic_options* options);

/* Writes concepts.tsv, relations.tsv, gold.tsv, pairs.tsv, vocab.txt and
   train.cfg into dir (created if missing). */
KGE_API kge_status kge_gen_synthetic(const char* dir, const kge_synthetic_options* options);

#ifdef __cplusplus
}
#endif

#endif
