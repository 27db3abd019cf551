#include "kge/contrastive.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace kge {

RelMode parse_rel_mode(std::string_view name) {
  if (name == "distmult-cos") return RelMode::DistMultCos;
  if (name == "transe") return RelMode::TransE;
  if (name == "none") return RelMode::None;
  throw ValidationError("unknown relation mode '" + std::string(name) + "' (expected distmult-cos, transe or none)");
}

std::string_view rel_mode_name(RelMode mode) {
  switch (mode) {
    case RelMode::DistMultCos: return "distmult-cos";
    case RelMode::TransE: return "transe";
    case RelMode::None: return "none";
  }
  return "none";
}

void MsParams::validate() const {
  if (!(alpha > 0.0) || !(beta > 0.0)) throw ValidationError("MS-loss alpha and beta must be positive");
  if (!(epsilon >= 0.0)) throw ValidationError("MS-loss epsilon must be non-negative");
  if (!std::isfinite(lambda)) throw ValidationError("MS-loss lambda must be finite");
}

LossParams LossParams::defaults(RelMode mode) {
  LossParams p;
  switch (mode) {
    case RelMode::DistMultCos:
      p.rel = p.term;
      p.mu = 1.0;
      break;
    case RelMode::TransE:
      p.rel = MsParams{0.2, 5.0, 28.0, 0.1};
      p.mu = 0.1;
      break;
    case RelMode::None:
      p.rel = p.term;
      p.mu = 0.0;
      break;
  }
  return p;
}

void LossParams::validate() const {
  term.validate();
  rel.validate();
  if (!(mu >= 0.0) || !std::isfinite(mu)) throw ValidationError("mu must be a non-negative real");
}

double cosine(const Vec& u, const Vec& v) {
  const double nu = u.norm();
  const double nv = v.norm();
  if (nu == 0.0 || nv == 0.0) return 0.0;
  return u.dot(v) / (nu * nv);
}

LabelMat pair_labels(std::span<const std::size_t> ids) {
  const auto n = static_cast<Eigen::Index>(ids.size());
  LabelMat tau(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      tau(i, j) = ids[static_cast<std::size_t>(i)] == ids[static_cast<std::size_t>(j)] ? 1 : 0;
  return tau;
}

LabelMat rel_pair_labels(std::span<const std::size_t> tail_ids) { return pair_labels(tail_ids); }

double rel_similarity(const Vec& e_head, const Mat& m_r, const Vec& e_tail) {
  const Vec projected = m_r.transpose() * e_head;
  return cosine(projected, e_tail);
}

double transe_rel_similarity(const Vec& e_head, const Vec& r_vec, const Vec& e_tail) {
  return -(e_head + r_vec - e_tail).norm();
}

MinedPairs mine_pairs(std::span<const double> sim, std::span<const std::uint8_t> labels, double epsilon,
                      std::optional<std::size_t> exclude) {
  if (sim.size() != labels.size()) throw ValidationError("similarity and label rows differ in length");
  constexpr double inf = std::numeric_limits<double>::infinity();
  double min_pos = inf;
  double max_neg = -inf;
  for (std::size_t j = 0; j < sim.size(); ++j) {
    if (exclude && *exclude == j) continue;
    if (labels[j])
      min_pos = std::min(min_pos, sim[j]);
    else
      max_neg = std::max(max_neg, sim[j]);
  }
  MinedPairs out;
  for (std::size_t j = 0; j < sim.size(); ++j) {
    if (exclude && *exclude == j) continue;
    if (labels[j]) {
      if (sim[j] < max_neg + epsilon) out.positives.push_back(j);
    } else {
      if (sim[j] > min_pos - epsilon) out.negatives.push_back(j);
    }
  }
  return out;
}

MsLossResult ms_loss(const Mat& sim, const LabelMat& labels, const MsParams& params, SelfPairs self) {
  if (sim.rows() != labels.rows() || sim.cols() != labels.cols())
    throw ValidationError("similarity and label matrices differ in shape");
  if (self == SelfPairs::Exclude && sim.rows() != sim.cols())
    throw ValidationError("self-pair exclusion requires a square similarity matrix");
  if (!sim.allFinite()) throw ValidationError("non-finite similarity entry");
  params.validate();

  MsLossResult out;
  out.d_sim = Mat::Zero(sim.rows(), sim.cols());
  const auto n = static_cast<double>(sim.rows());
  if (sim.rows() == 0) return out;

  std::vector<double> pos_exp, neg_exp;
  for (Eigen::Index i = 0; i < sim.rows(); ++i) {
    const std::span<const double> row(sim.row(i).data(), static_cast<std::size_t>(sim.cols()));
    const std::span<const std::uint8_t> lab(labels.row(i).data(), static_cast<std::size_t>(labels.cols()));
    const auto exclude = self == SelfPairs::Exclude ? std::optional<std::size_t>(static_cast<std::size_t>(i))
                                                    : std::nullopt;
    const MinedPairs mined = mine_pairs(row, lab, params.epsilon, exclude);

    pos_exp.clear();
    neg_exp.clear();
    double pos_sum = 0.0, neg_sum = 0.0;
    for (auto j : mined.positives) {
      const double a = -params.alpha * (row[j] - params.lambda);
      pos_exp.push_back(a < kMaxExponent ? std::exp(a) : 0.0);
      pos_sum += std::exp(std::min(a, kMaxExponent));
    }
    for (auto j : mined.negatives) {
      const double b = params.beta * (row[j] - params.lambda);
      neg_exp.push_back(b < kMaxExponent ? std::exp(b) : 0.0);
      neg_sum += std::exp(std::min(b, kMaxExponent));
    }
    out.loss += std::log1p(pos_sum) / params.alpha + std::log1p(neg_sum) / params.beta;
    // pos_exp/neg_exp hold 0 where the clamp is active: the clamped branch is
    // constant in S.
    for (std::size_t p = 0; p < mined.positives.size(); ++p)
      out.d_sim(i, static_cast<Eigen::Index>(mined.positives[p])) = -pos_exp[p] / (n * (1.0 + pos_sum));
    for (std::size_t q = 0; q < mined.negatives.size(); ++q)
      out.d_sim(i, static_cast<Eigen::Index>(mined.negatives[q])) = neg_exp[q] / (n * (1.0 + neg_sum));
  }
  out.loss /= n;
  return out;
}

namespace {

struct UnitRows {
  Mat unit;
  Vec norm;
};

UnitRows unit_rows(const Mat& e) {
  UnitRows u{Mat::Zero(e.rows(), e.cols()), Vec::Zero(e.rows())};
  for (Eigen::Index i = 0; i < e.rows(); ++i) {
    u.norm[i] = e.row(i).norm();
    if (u.norm[i] > 0.0) u.unit.row(i) = e.row(i) / u.norm[i];
  }
  return u;
}

// Gradient of cos(a_i, b_j) = S_ij w.r.t. the rows of A and B given dS.
void cosine_block_backward(const UnitRows& a, const UnitRows& b, const Mat& s, const Mat& ds, Mat& da, Mat& db) {
  da = Mat::Zero(a.unit.rows(), a.unit.cols());
  db = Mat::Zero(b.unit.rows(), b.unit.cols());
  const Mat ds_b = ds * b.unit;            // sum_j dS_ij b_j
  const Mat ds_t_a = ds.transpose() * a.unit;  // sum_i dS_ij a_i
  const Vec a_self = (ds.array() * s.array()).rowwise().sum();
  const Vec b_self = (ds.array() * s.array()).colwise().sum().transpose();
  for (Eigen::Index i = 0; i < da.rows(); ++i)
    if (a.norm[i] > 0.0) da.row(i) = (ds_b.row(i) - a_self[i] * a.unit.row(i)) / a.norm[i];
  for (Eigen::Index j = 0; j < db.rows(); ++j)
    if (b.norm[j] > 0.0) db.row(j) = (ds_t_a.row(j) - b_self[j] * b.unit.row(j)) / b.norm[j];
}

void check_rel_tensors(std::span<const std::size_t> relation_ids, std::span<const Mat> rel_mats,
                       std::span<const Vec> rel_vecs, RelMode mode, Eigen::Index dim) {
  if (mode == RelMode::None) return;
  const std::size_t available = mode == RelMode::DistMultCos ? rel_mats.size() : rel_vecs.size();
  for (auto r : relation_ids)
    if (r >= available)
      throw ValidationError(std::string("relation id out of range for ") + std::string(rel_mode_name(mode)) +
                            " tensors");
  if (mode == RelMode::DistMultCos) {
    for (const auto& m : rel_mats)
      if (m.rows() != dim || m.cols() != dim) throw ValidationError("relation matrix shape mismatch");
  } else {
    for (const auto& v : rel_vecs)
      if (v.size() != dim) throw ValidationError("relation vector shape mismatch");
  }
}

}  // namespace

Mat term_similarity(const Mat& embeddings) {
  const auto u = unit_rows(embeddings);
  return u.unit * u.unit.transpose();
}

Mat rel_similarity_block(const Mat& embeddings, std::span<const std::size_t> relation_ids,
                         std::span<const Mat> rel_mats, std::span<const Vec> rel_vecs, RelMode mode) {
  const auto k = static_cast<Eigen::Index>(relation_ids.size());
  if (embeddings.rows() != 2 * k) throw ValidationError("expected 2k embeddings for k relation ids");
  check_rel_tensors(relation_ids, rel_mats, rel_vecs, mode, embeddings.cols());
  Mat s = Mat::Zero(k, k);
  if (mode == RelMode::None) return s;
  for (Eigen::Index i = 0; i < k; ++i) {
    const Vec head = embeddings.row(i).transpose();
    const auto r = relation_ids[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < k; ++j) {
      const Vec tail = embeddings.row(k + j).transpose();
      s(i, j) = mode == RelMode::DistMultCos ? rel_similarity(head, rel_mats[r], tail)
                                             : transe_rel_similarity(head, rel_vecs[r], tail);
    }
  }
  return s;
}

TotalLossResult total_loss(const Mat& embeddings, const BatchMeta& meta, const LossParams& params,
                           std::span<const Mat> rel_mats, std::span<const Vec> rel_vecs, RelMode mode) {
  const auto k = static_cast<Eigen::Index>(meta.relation_ids.size());
  if (static_cast<Eigen::Index>(meta.concept_ids.size()) != 2 * k)
    throw ValidationError("concept_ids must hold 2k entries for k relation ids");
  if (embeddings.rows() != 2 * k) throw ValidationError("expected 2k embeddings");
  if (!embeddings.allFinite()) throw ValidationError("non-finite embedding");
  params.validate();
  check_rel_tensors(meta.relation_ids, rel_mats, rel_vecs, mode, embeddings.cols());

  TotalLossResult out;
  out.d_rel_mats.assign(rel_mats.size(), Mat());
  for (std::size_t r = 0; r < rel_mats.size(); ++r) out.d_rel_mats[r] = Mat::Zero(rel_mats[r].rows(), rel_mats[r].cols());
  out.d_rel_vecs.assign(rel_vecs.size(), Vec());
  for (std::size_t r = 0; r < rel_vecs.size(); ++r) out.d_rel_vecs[r] = Vec::Zero(rel_vecs[r].size());

  // term-term block
  const UnitRows units = unit_rows(embeddings);
  const Mat s = units.unit * units.unit.transpose();
  const LabelMat tau = pair_labels(meta.concept_ids);
  const MsLossResult term = ms_loss(s, tau, params.term, SelfPairs::Exclude);
  out.loss_term = term.loss;
  {
    // each row of E enters S both as anchor and as candidate
    Mat da, db;
    cosine_block_backward(units, units, s, term.d_sim, da, db);
    out.d_embeddings = da + db;
  }

  if (mode == RelMode::None) {
    out.loss = out.loss_term;
    return out;
  }

  // term-relation-term block: anchors (head_i, r_i), candidates tail_j.
  const std::span<const std::size_t> tails(meta.concept_ids.data() + k, static_cast<std::size_t>(k));
  const LabelMat tau_rel = rel_pair_labels(tails);
  const Mat heads = embeddings.topRows(k);
  const Mat tail_emb = embeddings.bottomRows(k);
  const double mu = params.mu;

  if (mode == RelMode::DistMultCos) {
    Mat projected(k, embeddings.cols());
    for (Eigen::Index i = 0; i < k; ++i)
      projected.row(i) = (rel_mats[meta.relation_ids[static_cast<std::size_t>(i)]].transpose() *
                          heads.row(i).transpose()).transpose();
    const UnitRows pa = unit_rows(projected);
    const UnitRows tb = unit_rows(tail_emb);
    const Mat s_rel = pa.unit * tb.unit.transpose();
    const MsLossResult rel = ms_loss(s_rel, tau_rel, params.rel, SelfPairs::Include);
    out.loss_rel = rel.loss;
    Mat d_proj, d_tail;
    cosine_block_backward(pa, tb, s_rel, rel.d_sim, d_proj, d_tail);
    for (Eigen::Index i = 0; i < k; ++i) {
      const auto r = meta.relation_ids[static_cast<std::size_t>(i)];
      const Vec dp = d_proj.row(i).transpose();
      out.d_embeddings.row(i) += mu * (rel_mats[r] * dp).transpose();
      out.d_rel_mats[r] += mu * heads.row(i).transpose() * dp.transpose();
    }
    out.d_embeddings.bottomRows(k) += mu * d_tail;
  } else {
    Mat s_rel(k, k);
    for (Eigen::Index i = 0; i < k; ++i) {
      const auto r = meta.relation_ids[static_cast<std::size_t>(i)];
      for (Eigen::Index j = 0; j < k; ++j)
        s_rel(i, j) = -(heads.row(i) + rel_vecs[r].transpose() - tail_emb.row(j)).norm();
    }
    const MsLossResult rel = ms_loss(s_rel, tau_rel, params.rel, SelfPairs::Include);
    out.loss_rel = rel.loss;
    for (Eigen::Index i = 0; i < k; ++i) {
      const auto r = meta.relation_ids[static_cast<std::size_t>(i)];
      for (Eigen::Index j = 0; j < k; ++j) {
        const double g = rel.d_sim(i, j);
        if (g == 0.0) continue;
        const Eigen::RowVectorXd diff = heads.row(i) + rel_vecs[r].transpose() - tail_emb.row(j);
        const double norm = diff.norm();
        if (norm == 0.0) continue;
        const Eigen::RowVectorXd dd = (-g * mu / norm) * diff;  // d/d(diff) of g * -|diff|
        out.d_embeddings.row(i) += dd;
        out.d_rel_vecs[r] += dd.transpose();
        out.d_embeddings.row(k + j) -= dd;
      }
    }
  }
  out.loss = out.loss_term + mu * out.loss_rel;
  return out;
}

}  // namespace kge
