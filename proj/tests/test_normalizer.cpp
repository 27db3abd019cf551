#include <doctest.h>

#include <sstream>

#include "kge/normalizer.hpp"
#include "support.hpp"

using namespace kge;
namespace ts = testsupport;

namespace {

std::shared_ptr<const TermEncoder> random_encoder(const ConceptDictionary& dict, std::uint64_t seed) {
  auto vocab = build_vocab(dict, 300);
  Rng rng(seed);
  auto params = EncoderParams::random(EncoderDims{vocab.size(), 8, 12, 6, 16}, {}, rng, 0.3, 0.0);
  return std::make_shared<const TermEncoder>(std::move(params), std::move(vocab));
}

std::vector<std::string> ids_of(const std::vector<Candidate>& cs) {
  std::vector<std::string> out;
  for (const auto& c : cs) out.push_back(c.concept_id);
  return out;
}

}  // namespace

TEST_CASE("index build") {
  const auto dict = ConceptDictionary::parse(ts::kTinyConcepts);
  const auto enc = random_encoder(dict, 1);
  const auto index = EmbeddingIndex::build(dict, enc, Pooling::Cls);
  CHECK(index.size() == dict.term_count());
  CHECK(index.concept_count() == dict.size());
  for (Eigen::Index i = 0; i < index.rows().rows(); ++i) CHECK(std::abs(index.rows().row(i).norm() - 1.0) < 1e-12);
  // rows follow concept id, then term order
  std::size_t r = 0;
  for (const auto& c : dict.concepts())
    for (const auto& t : c.terms) {
      CHECK(index.meta()[r].concept_id == c.id);
      CHECK(index.meta()[r].term == t.surface);
      ++r;
    }
  const auto again = EmbeddingIndex::build(dict, enc, Pooling::Cls);
  CHECK(again.rows() == index.rows());

  const auto three = ConceptDictionary::parse("C1\ten\tT\ta b\nC1\ten\tT\tb a\nC2\ten\tT\tc\nC2\ten\tT\td\n"
                                              "C3\ten\tT\te\nC3\ten\tT\tf\n");
  CHECK(EmbeddingIndex::build(three, random_encoder(three, 2), Pooling::Average).size() == 6);

  CHECK_THROWS_AS(EmbeddingIndex::build(dict, nullptr, Pooling::Cls), ValidationError);
  Mat zero = Mat::Zero(1, 3);
  CHECK_THROWS_WITH_AS(EmbeddingIndex(zero, {{"C1", "nothing"}}, Pooling::Cls), doctest::Contains("nothing"),
                       RuntimeError);
}

TEST_CASE("top_k on indexed surfaces") {
  const auto dict = ConceptDictionary::parse(ts::kTinyConcepts);
  const auto index = EmbeddingIndex::build(dict, random_encoder(dict, 3), Pooling::Cls);
  for (const auto& c : dict.concepts())
    for (const auto& t : c.terms) {
      const auto top = index.top_k(t.surface, 3);
      REQUIRE(top.size() == 3);
      CHECK(top[0].concept_id == c.id);
      CHECK(top[0].term == t.surface);
      CHECK(top[0].score == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(top[0].score >= top[1].score);
      CHECK(top[1].score >= top[2].score);
    }
  CHECK(index.top_k("fever", 50).size() == 5);
  CHECK_THROWS_AS(index.top_k("fever", 0), ValidationError);
  CHECK_THROWS_AS(index.top_k("   ", 1), ValidationError);
}

TEST_CASE("top_k equals a brute-force scan, ties included") {
  Rng rng(4);
  const std::size_t n = 50, l = 8;
  Mat rows(n, l);
  for (Eigen::Index i = 0; i < rows.size(); ++i) rows.data()[i] = rng.normal();
  // rows 45..49 copy rows 0..4 so different concepts tie exactly
  for (std::size_t i = 0; i < 5; ++i) rows.row(45 + i) = rows.row(i);
  std::vector<IndexRow> meta;
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) {
    char id[8];
    std::snprintf(id, sizeof id, "C%02zu", i / 5);
    meta.push_back({id, "t" + std::to_string(i)});
    ids.push_back(id);
  }
  ts::Rows orows(n, std::vector<double>(l));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < l; ++j) orows[i][j] = rows(i, j);
  const EmbeddingIndex index(rows, meta, Pooling::Cls);
  const EmbeddingIndex scaled(rows * 3.7, meta, Pooling::Cls);

  for (int q = 0; q < 20; ++q) {
    Vec query(l);
    if (q < 5) query = rows.row(q).transpose() * 0.5;  // hits a tied pair at score 1
    else
      for (std::size_t j = 0; j < l; ++j) query[j] = rng.normal();
    std::vector<double> oq(query.data(), query.data() + l);
    const auto expect = ts::oracle_rank(orows, ids, oq);
    const auto got = index.top_k(query, 10);
    REQUIRE(got.size() == expect.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(got[i].concept_id == expect[i].first);
      CHECK(std::abs(got[i].score - expect[i].second) < 1e-12);
    }
    CHECK(ids_of(scaled.top_k(query, 10)) == ids_of(got));
  }
}

TEST_CASE("acc@k") {
  const auto dict = ConceptDictionary::parse(ts::kTinyConcepts);
  const auto enc = random_encoder(dict, 5);
  const auto index = EmbeddingIndex::build(dict, enc, Pooling::Cls);

  std::vector<GoldQuery> exact;
  for (const auto& c : dict.concepts())
    for (const auto& t : c.terms) exact.push_back({t.surface, {c.id}});
  const auto acc = eval_acc_at_k(index, exact, {1, 3});
  CHECK(acc[0].k == 1);
  CHECK(acc[0].accuracy == 1.0);
  CHECK(acc[1].accuracy == 1.0);

  // unseen surfaces: acc@k is non-decreasing and matches a brute-force rerank
  const auto gold = parse_gold("back ache\tC0004604\nfebrile\tC0015967\nblood pressure high\tC0020538\n"
                               "kopfschmerz\tC0018681\ndiabetes type two\tC0011849,C0020538\n");
  const auto all = eval_acc_at_k(index, gold, {1, 2, 3, 4, 5});
  for (std::size_t i = 1; i < all.size(); ++i) CHECK(all[i].accuracy >= all[i - 1].accuracy);
  CHECK(all.back().accuracy == 1.0);

  ts::Rows orows;
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < index.size(); ++i) {
    const auto& m = index.meta()[i];
    const Vec e = enc->embed(m.term, Pooling::Cls);
    orows.emplace_back(e.data(), e.data() + e.size());
    ids.push_back(m.concept_id);
  }
  for (std::size_t k = 1; k <= 5; ++k) {
    std::size_t hits = 0;
    for (const auto& q : gold) {
      const Vec e = enc->embed(q.query, Pooling::Cls);
      const auto ranked = ts::oracle_rank(orows, ids, std::vector<double>(e.data(), e.data() + e.size()));
      for (std::size_t i = 0; i < k; ++i)
        if (std::find(q.concepts.begin(), q.concepts.end(), ranked[i].first) != q.concepts.end()) {
          ++hits;
          break;
        }
    }
    CHECK(all[k - 1].accuracy == static_cast<double>(hits) / gold.size());
  }

  const auto bad = parse_gold("fever\tC0015967\nfever\tC9999999\n");
  CHECK_THROWS_WITH_AS(eval_acc_at_k(index, bad, {1}), doctest::Contains("C9999999"), ValidationError);
  CHECK_THROWS_AS(eval_acc_at_k(index, {}, {1}), ValidationError);
  CHECK_THROWS_WITH_AS(parse_gold("fever\n"), doctest::Contains("line 1"), ValidationError);
}

TEST_CASE("one-concept F1") {
  const auto dict = ConceptDictionary::parse(ts::kTinyConcepts);
  const auto index = EmbeddingIndex::build(dict, random_encoder(dict, 6), Pooling::Cls);
  std::vector<GoldQuery> right, wrong, half;
  std::size_t n = 0;
  for (const auto& c : dict.concepts())
    for (const auto& t : c.terms) {
      if (n++ >= 10) break;
      const std::string other = c.id == "C0004604" ? "C0015967" : "C0004604";
      right.push_back({t.surface, {c.id, other}});
      wrong.push_back({t.surface, {other}});
      half.push_back({t.surface, {n % 2 ? c.id : other}});
    }
  REQUIRE(half.size() == 10);
  CHECK(eval_f1_one_concept(index, right).f1 == 1.0);
  CHECK(eval_f1_one_concept(index, wrong).f1 == 0.0);
  const auto h = eval_f1_one_concept(index, half);
  CHECK(h.f1 == doctest::Approx(0.5));
  CHECK(h.precision == h.recall);
  CHECK(h.true_positives == 5);
  CHECK(h.predictions == 10);
}

TEST_CASE("export format") {
  Mat rows(2, 2);
  rows << 3, 4, 0, 2;
  const EmbeddingIndex index(rows, {{"C1", "a"}, {"C2", "b"}}, Pooling::Cls);
  std::ostringstream out;
  index.export_tsv(out);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  CHECK(line.rfind("C1\ta\t", 0) == 0);
  CHECK(std::count(line.begin(), line.end(), ',') == 1);
  std::getline(in, line);
  CHECK(line.rfind("C2\tb\t", 0) == 0);
}
