#include "kge/sampler.hpp"

#include <algorithm>
#include <unordered_set>

namespace kge {

void validate_batch_shape(std::size_t k, std::size_t m) {
  if (m < 2) throw ValidationError("repeat count m must be at least 2");
  if (m * m > k) throw ValidationError("repeat count m must not exceed sqrt(k)");
  if (k % m != 0) throw ValidationError("batch size k must be divisible by m");
}

BatchSampler::BatchSampler(const ConceptDictionary& dict, const RelationStore& store, const Vocab& vocab,
                           std::size_t max_len, std::size_t k, std::size_t m, Rng& rng)
    : dict_(dict), store_(store), vocab_(vocab), max_len_(max_len), k_(k), m_(m), rng_(rng) {
  validate_batch_shape(k, m);
  if (store.empty()) throw ValidationError("relation store is empty");
}

TrainingBatch BatchSampler::next() {
  const std::size_t distinct = k_ / m_;
  const std::size_t n = store_.size();
  std::vector<std::size_t> picks;
  picks.reserve(distinct);
  if (n >= distinct) {
    std::unordered_set<std::size_t> seen;
    while (picks.size() < distinct) {
      const auto t = rng_.uniform_index(n);
      if (seen.insert(t).second) picks.push_back(t);
    }
  } else {
    for (std::size_t i = 0; i < distinct; ++i) picks.push_back(rng_.uniform_index(n));
  }

  TrainingBatch batch;
  batch.repeat = m_;
  batch.triplets.reserve(k_);
  for (auto t : picks)
    for (std::size_t r = 0; r < m_; ++r) batch.triplets.push_back(store_.triplets()[t]);

  batch.meta.concept_ids.resize(2 * k_);
  batch.meta.relation_ids.resize(k_);
  for (std::size_t i = 0; i < k_; ++i) {
    const auto& trip = batch.triplets[i];
    batch.meta.concept_ids[i] = trip.head;
    batch.meta.concept_ids[k_ + i] = trip.tail;
    batch.meta.relation_ids[i] = trip.relation;
    const Term& head = sample_term(dict_.at(trip.head), rng_);
    const Term& tail = sample_term(dict_.at(trip.tail), rng_);
    batch.head_surfaces.push_back(head.surface);
    batch.tail_surfaces.push_back(tail.surface);
    batch.head_terms.push_back(tokenize(head.surface, vocab_, max_len_));
    batch.tail_terms.push_back(tokenize(tail.surface, vocab_, max_len_));
  }
  return batch;
}

TrainingBatch sample_batch(const ConceptDictionary& dict, const RelationStore& store, const Vocab& vocab,
                           std::size_t max_len, std::size_t k, std::size_t m, Rng& rng) {
  return BatchSampler(dict, store, vocab, max_len, k, m, rng).next();
}

}  // namespace kge
