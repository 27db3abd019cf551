#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "kge/common.hpp"
#include "kge/encoder.hpp"
#include "kge/kg_store.hpp"

namespace kge {

// --- MCSM ---------------------------------------------------------------------

enum class ConceptRepresentation { Preferred, MeanOfSynonyms };

ConceptRepresentation parse_concept_representation(std::string_view name);

// One unit-norm vector per concept, in dictionary order.
struct ConceptEmbeddings {
  std::vector<std::string> ids;
  std::vector<std::set<std::string>> types;
  Mat unit;  // rows normalized; zero rows stay zero
};

ConceptEmbeddings concept_embeddings(const ConceptDictionary& dict, const TermEncoder& encoder, Pooling pooling,
                                     ConceptRepresentation representation = ConceptRepresentation::Preferred);
ConceptEmbeddings concept_embeddings(const ConceptDictionary& dict, const Mat& vectors);
// Gaussian vectors, the chance-level reference.
ConceptEmbeddings random_concept_embeddings(const ConceptDictionary& dict, std::size_t dim, std::uint64_t seed);

// Sum_{i=1..k} 1/log2(i+1): the value when every neighbor shares the type.
double mcsm_upper_bound(std::size_t k);

// Concept indices of the k nearest neighbors by cosine, excluding the concept
// itself; ties by ascending concept id.
std::vector<std::size_t> nearest_concepts(const ConceptEmbeddings& emb, std::size_t concept_index, std::size_t k);

// Mean over type-T concepts of the discounted count of type-T neighbors.
double mcsm(const ConceptEmbeddings& emb, std::string_view semantic_type, std::size_t k);

// Discounted count for one ranked neighbor type list.
double mcsm_discounted_hits(const std::vector<bool>& neighbor_has_type);

std::vector<std::string> semantic_types(const ConceptEmbeddings& emb);

// --- relation classification probe ---------------------------------------------

struct ProbeModel {
  Mat w;  // C x 2l
  Vec b;  // C
  std::vector<std::string> classes;

  std::size_t class_count() const { return classes.size(); }
  Vec logits(const Vec& head, const Vec& tail) const;
  Vec probabilities(const Vec& head, const Vec& tail) const;
  // Argmax; ties resolve to the lowest class index.
  std::size_t predict(const Vec& head, const Vec& tail) const;
};

ProbeModel zero_probe(std::vector<std::string> classes, std::size_t embed_dim);

struct RelationPair {
  std::string head;
  std::string tail;
  std::string label;
};

// HEAD_CUI <TAB> TAIL_CUI <TAB> CLASS_LABEL
std::vector<RelationPair> load_relation_pairs(const std::filesystem::path& path);
std::vector<RelationPair> parse_relation_pairs(std::string_view contents);

struct ProbeExample {
  Vec head;
  Vec tail;
  std::size_t label = 0;
};

struct ProbeConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 512;
  double head_lr = 1e-3;
  double encoder_lr = 2e-5;  // fine-tune mode only
  double weight_decay = 0.01;
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
  Pooling pooling = Pooling::Cls;
  // Scale embeddings to unit norm before the classifier. The contrastive
  // objective leaves norms arbitrary, so raw scale would otherwise decide how
  // fast a fixed-lr probe can learn.
  bool unit_features = true;
};

enum class ProbeMode { Feature, FineTune };

ProbeMode parse_probe_mode(std::string_view name);

struct ProbeResult {
  ProbeModel model;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  std::size_t train_size = 0;
  std::size_t test_size = 0;
};

// Seeded shuffle, then the first round(train_fraction * n) items train.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n, double train_fraction,
                                                                            std::uint64_t seed);

// Cross-entropy and its gradients for one example; d_head/d_tail are the
// gradients with respect to the two input embeddings.
double probe_cross_entropy(const ProbeModel& model, const Vec& head, const Vec& tail, std::size_t label, Mat* d_w,
                           Vec* d_b, Vec* d_head, Vec* d_tail);

// Feature-based: embeddings fixed, only W and b train.
ProbeResult probe_train(const std::vector<ProbeExample>& examples, const std::vector<std::string>& classes,
                        const ProbeConfig& config);

// Fine-tuned: terms are re-encoded every step and the encoder trains jointly.
// `encoder` is updated in place.
ProbeResult probe_train_finetune(const std::vector<std::pair<std::string, std::string>>& term_pairs,
                                 const std::vector<std::size_t>& labels, const std::vector<std::string>& classes,
                                 TermEncoder& encoder, const ProbeConfig& config);

double probe_eval(const ProbeModel& model, const std::vector<ProbeExample>& test);

// Resolves concept pairs to preferred-term surfaces and class indices.
struct ProbeDataset {
  std::vector<std::pair<std::string, std::string>> term_pairs;
  std::vector<std::size_t> labels;
  std::vector<std::string> classes;  // first-seen order
};

ProbeDataset probe_dataset(const ConceptDictionary& dict, const std::vector<RelationPair>& pairs);

// Frozen features for feature-mode training, honoring config.pooling and
// config.unit_features.
std::vector<ProbeExample> probe_examples(const ProbeDataset& data, const TermEncoder& encoder,
                                         const ProbeConfig& config);

}  // namespace kge
