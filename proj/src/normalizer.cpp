#include "kge/normalizer.hpp"

#include <algorithm>
#include <cstdio>
#include <ostream>

#include "kge/text.hpp"

namespace kge {

EmbeddingIndex::EmbeddingIndex(Mat rows, std::vector<IndexRow> meta, Pooling pooling,
                               std::shared_ptr<const TermEncoder> encoder)
    : rows_(std::move(rows)), meta_(std::move(meta)), pooling_(pooling), encoder_(std::move(encoder)) {
  if (static_cast<std::size_t>(rows_.rows()) != meta_.size())
    throw ValidationError("index rows and metadata differ in length");
  for (Eigen::Index i = 0; i < rows_.rows(); ++i) {
    const double n = rows_.row(i).norm();
    const auto& m = meta_[static_cast<std::size_t>(i)];
    if (!(n > 0.0) || !std::isfinite(n))
      throw RuntimeError("zero-norm embedding for term '" + m.term + "' (" + m.concept_id + ")");
    rows_.row(i) /= n;
  }
  // Stable sort rows by concept id so each concept is one contiguous range.
  std::vector<std::size_t> order(meta_.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return meta_[a].concept_id < meta_[b].concept_id; });
  if (!std::is_sorted(order.begin(), order.end())) {
    Mat sorted(rows_.rows(), rows_.cols());
    std::vector<IndexRow> sorted_meta;
    sorted_meta.reserve(meta_.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
      sorted.row(static_cast<Eigen::Index>(i)) = rows_.row(static_cast<Eigen::Index>(order[i]));
      sorted_meta.push_back(meta_[order[i]]);
    }
    rows_ = std::move(sorted);
    meta_ = std::move(sorted_meta);
  }
  for (std::size_t i = 0; i < meta_.size(); ++i) {
    if (i == 0 || meta_[i].concept_id != meta_[i - 1].concept_id) {
      concepts_.push_back(meta_[i].concept_id);
      concept_begin_.push_back(i);
    }
  }
  concept_begin_.push_back(meta_.size());
}

EmbeddingIndex EmbeddingIndex::build(const ConceptDictionary& dict, std::shared_ptr<const TermEncoder> encoder,
                                     Pooling pooling) {
  if (!encoder) throw ValidationError("index build requires an encoder");
  Mat rows(static_cast<Eigen::Index>(dict.term_count()), static_cast<Eigen::Index>(encoder->params().dims.embed_dim));
  std::vector<IndexRow> meta;
  meta.reserve(dict.term_count());
  for (const auto& c : dict.concepts()) {
    for (const auto& t : c.terms) {
      rows.row(static_cast<Eigen::Index>(meta.size())) = encoder->embed(t.surface, pooling).transpose();
      meta.push_back({c.id, t.surface});
    }
  }
  return EmbeddingIndex(std::move(rows), std::move(meta), pooling, std::move(encoder));
}

bool EmbeddingIndex::has_concept(std::string_view id) const {
  return std::binary_search(concepts_.begin(), concepts_.end(), id,
                            [](const auto& a, const auto& b) { return std::string_view(a) < std::string_view(b); });
}

Vec EmbeddingIndex::embed(std::string_view surface) const {
  if (!encoder_) throw ValidationError("index has no encoder for text queries");
  return encoder_->embed(surface, pooling_);
}

std::vector<Candidate> EmbeddingIndex::top_k(const Vec& query, std::size_t k) const {
  if (k == 0) throw ValidationError("k must be at least 1");
  if (query.size() != rows_.cols()) throw ValidationError("query dimension does not match index");
  const double qn = query.norm();
  const Vec scores = qn > 0.0 ? Vec(rows_ * (query / qn)) : Vec::Zero(rows_.rows());

  std::vector<Candidate> best(concepts_.size());
  for (std::size_t c = 0; c < concepts_.size(); ++c) {
    std::size_t arg = concept_begin_[c];
    for (std::size_t r = concept_begin_[c] + 1; r < concept_begin_[c + 1]; ++r)
      if (scores[static_cast<Eigen::Index>(r)] > scores[static_cast<Eigen::Index>(arg)]) arg = r;
    best[c] = {concepts_[c], meta_[arg].term, scores[static_cast<Eigen::Index>(arg)]};
  }
  const std::size_t n = std::min(k, best.size());
  // concepts_ is ascending, so index order breaks score ties by id
  std::vector<std::size_t> order(best.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (best[a].score != best[b].score) return best[a].score > best[b].score;
                      return a < b;
                    });
  std::vector<Candidate> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(best[order[i]]);
  return out;
}

std::vector<Candidate> EmbeddingIndex::top_k(std::string_view query, std::size_t k) const {
  if (text::trim(query).empty()) throw ValidationError("empty query");
  return top_k(embed(query), k);
}

void EmbeddingIndex::export_tsv(std::ostream& out) const {
  char buf[32];
  for (std::size_t i = 0; i < meta_.size(); ++i) {
    out << meta_[i].concept_id << '\t' << meta_[i].term << '\t';
    for (Eigen::Index j = 0; j < rows_.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.9g", rows_(static_cast<Eigen::Index>(i), j));
      if (j) out << ',';
      out << buf;
    }
    out << '\n';
  }
}

std::vector<GoldQuery> parse_gold(std::string_view contents) {
  std::vector<GoldQuery> gold;
  std::size_t line_no = 0;
  for (auto line : text::split(contents, '\n')) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty() || line.front() == '#') continue;
    const auto fields = text::split(line, '\t');
    if (fields.size() != 2)
      throw ValidationError("gold line " + std::to_string(line_no) + ": expected QUERY<TAB>CUI[,CUI...]");
    GoldQuery q;
    q.query = normalize_surface(fields[0]);
    for (auto id : text::split(fields[1], ',')) {
      const std::string trimmed = text::trim(id);
      if (!trimmed.empty()) q.concepts.push_back(trimmed);
    }
    if (q.query.empty() || q.concepts.empty())
      throw ValidationError("gold line " + std::to_string(line_no) + ": empty query or concept list");
    gold.push_back(std::move(q));
  }
  return gold;
}

std::vector<GoldQuery> load_gold(const std::filesystem::path& path) { return parse_gold(read_file(path)); }

namespace {

void check_gold_concepts(const EmbeddingIndex& index, const std::vector<GoldQuery>& gold) {
  std::vector<std::string> missing;
  for (const auto& q : gold)
    for (const auto& c : q.concepts)
      if (!index.has_concept(c) && std::find(missing.begin(), missing.end(), c) == missing.end()) missing.push_back(c);
  if (!missing.empty()) {
    std::string msg = "gold concepts missing from dictionary:";
    for (const auto& m : missing) msg += " " + m;
    throw ValidationError(msg);
  }
}

}  // namespace

std::vector<AccuracyAtK> eval_acc_at_k(const EmbeddingIndex& index, const std::vector<GoldQuery>& gold,
                                       const std::vector<std::size_t>& ks) {
  if (gold.empty()) throw ValidationError("empty gold set");
  if (ks.empty()) throw ValidationError("no k values requested");
  for (auto k : ks)
    if (k == 0) throw ValidationError("k must be at least 1");
  check_gold_concepts(index, gold);
  const std::size_t kmax = *std::max_element(ks.begin(), ks.end());

  std::vector<std::size_t> hits(ks.size(), 0);
  for (const auto& q : gold) {
    const auto ranked = index.top_k(q.query, kmax);
    std::size_t first_hit = ranked.size();
    for (std::size_t r = 0; r < ranked.size(); ++r) {
      if (std::find(q.concepts.begin(), q.concepts.end(), ranked[r].concept_id) != q.concepts.end()) {
        first_hit = r;
        break;
      }
    }
    for (std::size_t i = 0; i < ks.size(); ++i)
      if (first_hit < ks[i]) ++hits[i];
  }
  std::vector<AccuracyAtK> out;
  for (std::size_t i = 0; i < ks.size(); ++i)
    out.push_back({ks[i], static_cast<double>(hits[i]) / static_cast<double>(gold.size())});
  return out;
}

F1Result eval_f1_one_concept(const EmbeddingIndex& index, const std::vector<GoldQuery>& gold) {
  F1Result r;
  for (const auto& q : gold) {
    if (q.concepts.empty()) throw ValidationError("gold concept set must be non-empty");
    ++r.gold_mentions;
    const auto ranked = index.top_k(q.query, 1);
    if (ranked.empty()) continue;
    ++r.predictions;
    if (std::find(q.concepts.begin(), q.concepts.end(), ranked[0].concept_id) != q.concepts.end()) ++r.true_positives;
  }
  r.precision = r.predictions ? static_cast<double>(r.true_positives) / static_cast<double>(r.predictions) : 0.0;
  r.recall = r.gold_mentions ? static_cast<double>(r.true_positives) / static_cast<double>(r.gold_mentions) : 0.0;
  r.f1 = r.precision + r.recall > 0.0 ? 2.0 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
  return r;
}

}  // namespace kge
