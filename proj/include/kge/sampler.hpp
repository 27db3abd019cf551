#pragma once

#include <cstddef>
#include <vector>

#include "kge/common.hpp"
#include "kge/contrastive.hpp"
#include "kge/kg_store.hpp"
#include "kge/tokenizer.hpp"

namespace kge {

struct TrainingBatch {
  std::vector<RelationTriplet> triplets;  // k
  std::vector<std::string> head_surfaces;
  std::vector<std::string> tail_surfaces;
  std::vector<TokenSequence> head_terms;
  std::vector<TokenSequence> tail_terms;
  BatchMeta meta;  // concept ids heads-then-tails, relation ids
  std::size_t repeat = 0;

  std::size_t size() const { return triplets.size(); }
};

// Checks k % m == 0 and 2 <= m <= floor(sqrt(k)).
void validate_batch_shape(std::size_t k, std::size_t m);

// k/m distinct triplets (distinct within the batch whenever the store is large
// enough), each repeated m times; every slot draws its own synonym.
class BatchSampler {
 public:
  BatchSampler(const ConceptDictionary& dict, const RelationStore& store, const Vocab& vocab, std::size_t max_len,
               std::size_t k, std::size_t m, Rng& rng);

  TrainingBatch next();

 private:
  const ConceptDictionary& dict_;
  const RelationStore& store_;
  const Vocab& vocab_;
  std::size_t max_len_;
  std::size_t k_;
  std::size_t m_;
  Rng& rng_;
};

TrainingBatch sample_batch(const ConceptDictionary& dict, const RelationStore& store, const Vocab& vocab,
                           std::size_t max_len, std::size_t k, std::size_t m, Rng& rng);

}  // namespace kge
