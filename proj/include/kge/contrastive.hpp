#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "kge/common.hpp"

namespace kge {

enum class RelMode { DistMultCos, TransE, None };

RelMode parse_rel_mode(std::string_view name);
std::string_view rel_mode_name(RelMode mode);

struct MsParams {
  double alpha = 2.0;
  double beta = 50.0;
  double lambda = 0.5;
  double epsilon = 0.1;

  void validate() const;
};

struct LossParams {
  MsParams term;
  MsParams rel;
  double mu = 1.0;

  // Term block 2/50/0.5/0.1 in every mode. distmult-cos: rel = term, mu = 1.
  // transe: rel = 0.2/5/28/0.1, mu = 0.1. none: mu = 0.
  static LossParams defaults(RelMode mode);
  void validate() const;
};

// Exponent arguments are clamped to this before exp().
inline constexpr double kMaxExponent = 50.0;

// u.v / (|u||v|); 0 if either vector has zero norm.
double cosine(const Vec& u, const Vec& v);

LabelMat pair_labels(std::span<const std::size_t> concept_ids);
LabelMat rel_pair_labels(std::span<const std::size_t> tail_ids);

// cos(M^T e_head, e_tail)
double rel_similarity(const Vec& e_head, const Mat& m_r, const Vec& e_tail);
// -|e_head + r - e_tail|
double transe_rel_similarity(const Vec& e_head, const Vec& r_vec, const Vec& e_tail);

struct MinedPairs {
  std::vector<std::size_t> positives;  // P_i, ascending
  std::vector<std::size_t> negatives;  // N_i, ascending
};

// Hard-pair mining for one anchor row. `exclude` removes one candidate
// (the anchor itself in the term-term block).
MinedPairs mine_pairs(std::span<const double> sim_row, std::span<const std::uint8_t> label_row, double epsilon,
                      std::optional<std::size_t> exclude);

enum class SelfPairs { Exclude, Include };

struct MsLossResult {
  double loss = 0.0;
  Mat d_sim;  // d(loss)/d(S), same shape as S
};

// Multi-similarity loss averaged over anchor rows. With SelfPairs::Exclude
// (square S only) the anchor's own column is never a candidate.
MsLossResult ms_loss(const Mat& sim, const LabelMat& labels, const MsParams& params,
                     SelfPairs self = SelfPairs::Exclude);

struct BatchMeta {
  std::vector<std::size_t> concept_ids;   // 2k: heads then tails
  std::vector<std::size_t> relation_ids;  // k
};

struct TotalLossResult {
  double loss = 0.0;
  double loss_term = 0.0;
  double loss_rel = 0.0;
  Mat d_embeddings;          // 2k x l
  std::vector<Mat> d_rel_mats;  // same count as the supplied rel_mats
  std::vector<Vec> d_rel_vecs;  // same count as the supplied rel_vecs
};

// L = L_MS(term block) + mu * L_MS^rel. Rows 0..k-1 of `embeddings` are the
// head terms, rows k..2k-1 the tail terms of the same triplets.
TotalLossResult total_loss(const Mat& embeddings, const BatchMeta& meta, const LossParams& params,
                           std::span<const Mat> rel_mats, std::span<const Vec> rel_vecs, RelMode mode);

// Similarity blocks exposed for inspection and tests.
Mat term_similarity(const Mat& embeddings);
Mat rel_similarity_block(const Mat& embeddings, std::span<const std::size_t> relation_ids,
                         std::span<const Mat> rel_mats, std::span<const Vec> rel_vecs, RelMode mode);

}  // namespace kge
