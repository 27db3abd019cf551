#pragma once

#include <filesystem>
#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "kge/common.hpp"
#include "kge/encoder.hpp"
#include "kge/kg_store.hpp"

namespace kge {

struct IndexRow {
  std::string concept_id;
  std::string term;
};

struct Candidate {
  std::string concept_id;
  std::string term;  // best-scoring synonym
  double score = 0.0;

  bool operator==(const Candidate&) const = default;
};

// Immutable matrix of unit-norm term embeddings. Rows are grouped by concept
// in ascending concept-id order.
class EmbeddingIndex {
 public:
  // Rejects zero rows. Rows need not be normalized; they are scaled to unit norm.
  EmbeddingIndex(Mat rows, std::vector<IndexRow> meta, Pooling pooling,
                 std::shared_ptr<const TermEncoder> encoder = nullptr);

  static EmbeddingIndex build(const ConceptDictionary& dict, std::shared_ptr<const TermEncoder> encoder,
                              Pooling pooling);

  std::size_t size() const { return meta_.size(); }
  std::size_t concept_count() const { return concepts_.size(); }
  const Mat& rows() const { return rows_; }
  const std::vector<IndexRow>& meta() const { return meta_; }
  Pooling pooling() const { return pooling_; }
  bool has_concept(std::string_view id) const;

  // Concepts ranked by max cosine over their rows; ties by ascending id.
  std::vector<Candidate> top_k(const Vec& query, std::size_t k) const;
  // Embeds with the index's encoder and pooling.
  std::vector<Candidate> top_k(std::string_view query, std::size_t k) const;

  Vec embed(std::string_view surface) const;

  // CUI <TAB> TERM <TAB> v1,...,vl
  void export_tsv(std::ostream& out) const;

 private:
  Mat rows_;
  std::vector<IndexRow> meta_;
  Pooling pooling_;
  std::shared_ptr<const TermEncoder> encoder_;
  // distinct concept ids, ascending, with [begin, end) row ranges
  std::vector<std::string> concepts_;
  std::vector<std::size_t> concept_begin_;
};

struct GoldQuery {
  std::string query;
  std::vector<std::string> concepts;  // non-empty
};

// QUERY <TAB> CUI[,CUI...]
std::vector<GoldQuery> load_gold(const std::filesystem::path& path);
std::vector<GoldQuery> parse_gold(std::string_view contents);

struct AccuracyAtK {
  std::size_t k = 0;
  double accuracy = 0.0;
};

// A query counts as a hit at k when any of its gold concepts is in the top k.
// Throws ValidationError listing gold concepts absent from the index.
std::vector<AccuracyAtK> eval_acc_at_k(const EmbeddingIndex& index, const std::vector<GoldQuery>& gold,
                                       const std::vector<std::size_t>& ks);

struct F1Result {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t true_positives = 0;
  std::size_t predictions = 0;
  std::size_t gold_mentions = 0;
};

// One top-1 prediction per query.
F1Result eval_f1_one_concept(const EmbeddingIndex& index, const std::vector<GoldQuery>& gold);

}  // namespace kge
