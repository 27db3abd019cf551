#include <doctest.h>

#include <cstring>
#include <vector>

#include "kge/kge.h"
#include "support.hpp"

namespace ts = testsupport;

namespace {

std::string take(kge_text* t) {
  std::string s(kge_text_data(t), kge_text_size(t));
  kge_text_free(t);
  return s;
}

struct TinyFiles {
  ts::TempDir dir{"capi"};
  std::string concepts = (dir / "c.tsv").string();
  std::string relations = (dir / "r.tsv").string();
  std::string vocab = (dir / "v.txt").string();

  TinyFiles() {
    ts::write_text(concepts, ts::kTinyConcepts);
    ts::write_text(relations, ts::kTinyRelations);
  }
};

// k=8, m=2 over the tiny files; small dims so training is quick.
kge_config* tiny_config(const TinyFiles& f, const char* steps) {
  kge_config* c = nullptr;
  REQUIRE(kge_config_new(&c) == KGE_OK);
  const char* kv[][2] = {{"concepts", f.concepts.c_str()}, {"relations", f.relations.c_str()},
                         {"vocab", f.vocab.c_str()},       {"k", "8"},
                         {"m", "2"},                       {"accum", "2"},
                         {"model_dim", "8"},               {"ffn_dim", "8"},
                         {"embed_dim", "8"},               {"max_len", "16"},
                         {"steps", steps},                 {"warmup", "2"},
                         {"seed", "3"},                    {"log_every", "1"}};
  for (auto& p : kv) REQUIRE(kge_config_set(c, p[0], p[1]) == KGE_OK);
  return c;
}

void log_rows(size_t step, double, double loss, double, double, void* user) {
  static_cast<std::vector<std::pair<size_t, double>>*>(user)->emplace_back(step, loss);
}

}  // namespace

TEST_CASE("status codes and error messages") {
  kge_dictionary* d = nullptr;
  CHECK(kge_dictionary_load("/nonexistent/c.tsv", &d) == KGE_INVALID);
  CHECK(d == nullptr);
  CHECK(std::strlen(kge_last_error()) > 0);

  ts::TempDir dir("capi_err");
  ts::write_text(dir / "c.tsv", "C1\ten\tT\tok\nbroken line\n");
  CHECK(kge_dictionary_load((dir / "c.tsv").c_str(), &d) == KGE_INVALID);
  CHECK(std::string(kge_last_error()).find("line 2") != std::string::npos);

  kge_config* c = nullptr;
  REQUIRE(kge_config_new(&c) == KGE_OK);
  CHECK(kge_config_set(c, "colour", "red") == KGE_INVALID);
  CHECK(kge_config_set(c, "k", "many") == KGE_INVALID);
  // no paths or seed
  CHECK(kge_train(c, (dir / "m.ckpt").c_str(), nullptr, nullptr, nullptr) == KGE_INVALID);
  kge_config_free(c);
  CHECK(kge_dictionary_load(nullptr, &d) == KGE_INVALID);
  CHECK(std::strlen(kge_version()) > 0);
}

TEST_CASE("dictionary, relations and vocabulary") {
  TinyFiles f;
  kge_dictionary* d = nullptr;
  REQUIRE(kge_dictionary_load(f.concepts.c_str(), &d) == KGE_OK);
  CHECK(kge_dictionary_size(d) == 5);
  CHECK(kge_dictionary_term_count(d) == 13);

  kge_relations* r = nullptr;
  REQUIRE(kge_relations_load(f.relations.c_str(), d, &r) == KGE_OK);
  CHECK(kge_relations_size(r) == 6);
  CHECK(kge_relations_dropped(r) == 0);
  CHECK(kge_relations_label_count(r) == 3);
  CHECK(std::string(kge_relations_label(r, 0)) == "RO|has_finding_site");
  CHECK(kge_relations_label(r, 3) == nullptr);

  kge_vocab* v = nullptr;
  REQUIRE(kge_vocab_build(d, 300, &v) == KGE_OK);
  CHECK(kge_vocab_size(v) <= 300);
  REQUIRE(kge_vocab_save(v, f.vocab.c_str()) == KGE_OK);
  kge_vocab* v2 = nullptr;
  REQUIRE(kge_vocab_load(f.vocab.c_str(), &v2) == KGE_OK);
  CHECK(kge_vocab_size(v2) == kge_vocab_size(v));
  kge_text* ids = nullptr;
  REQUIRE(kge_vocab_tokenize(v2, "back pain", 16, &ids) == KGE_OK);
  const auto s = take(ids);
  CHECK(s.rfind("2 ", 0) == 0);  // [CLS]
  CHECK(s.substr(s.size() - 2) == " 3");  // [SEP]

  kge_vocab_free(v);
  kge_vocab_free(v2);
  kge_relations_free(r);
  kge_dictionary_free(d);
}

TEST_CASE("train, load, embed, index and evaluate") {
  TinyFiles f;
  kge_dictionary* d = nullptr;
  REQUIRE(kge_dictionary_load(f.concepts.c_str(), &d) == KGE_OK);
  kge_vocab* v = nullptr;
  REQUIRE(kge_vocab_build(d, 300, &v) == KGE_OK);
  REQUIRE(kge_vocab_save(v, f.vocab.c_str()) == KGE_OK);
  kge_vocab_free(v);

  kge_config* c = tiny_config(f, "5");
  std::vector<std::pair<size_t, double>> rows;
  const auto ckpt = (f.dir / "m.ckpt").string();
  const auto log = (f.dir / "log.tsv").string();
  REQUIRE(kge_train(c, ckpt.c_str(), log.c_str(), log_rows, &rows) == KGE_OK);
  CHECK(rows.size() == 5);
  CHECK(ts::read_bytes(log).rfind("step\tlr\tloss", 0) == 0);

  kge_model* m = nullptr;
  REQUIRE(kge_model_load(ckpt.c_str(), f.vocab.c_str(), &m) == KGE_OK);
  CHECK(kge_model_embed_dim(m) == 8);
  std::vector<double> e(8), e2(8);
  REQUIRE(kge_model_embed(m, "fever", "cls", e.data()) == KGE_OK);
  REQUIRE(kge_model_embed(m, "fever", "cls", e2.data()) == KGE_OK);
  CHECK(e == e2);
  CHECK(kge_model_embed(m, "fever", "max", e.data()) == KGE_INVALID);

  kge_index* idx = nullptr;
  REQUIRE(kge_index_build(d, m, "cls", &idx) == KGE_OK);
  CHECK(kge_index_size(idx) == 13);
  kge_text* q = nullptr;
  REQUIRE(kge_index_query(idx, "fiebre", 3, &q) == KGE_OK);
  const auto top = take(q);
  CHECK(std::count(top.begin(), top.end(), '\n') == 3);
  CHECK(top.rfind("C0015967\tfiebre\t1.000000", 0) == 0);

  kge_text* ex = nullptr;
  REQUIRE(kge_index_export(idx, &ex) == KGE_OK);
  const auto exported = take(ex);
  CHECK(std::count(exported.begin(), exported.end(), '\n') == 13);

  const auto gold = (f.dir / "gold.tsv").string();
  ts::write_text(gold, "fever\tC0015967\ncefalea\tC0018681\n");
  const size_t ks[] = {1, 3};
  double acc[2] = {0, 0};
  REQUIRE(kge_eval_acc(idx, gold.c_str(), ks, 2, acc) == KGE_OK);
  CHECK(acc[0] == 1.0);
  double p = 0, r = 0, f1 = 0;
  REQUIRE(kge_eval_f1(idx, gold.c_str(), &p, &r, &f1) == KGE_OK);
  CHECK(f1 == 1.0);
  ts::write_text(gold, "fever\tC0000000\n");
  CHECK(kge_eval_acc(idx, gold.c_str(), ks, 2, acc) == KGE_INVALID);
  CHECK(std::string(kge_last_error()).find("C0000000") != std::string::npos);

  kge_text* mc = nullptr;
  REQUIRE(kge_eval_mcsm(d, m, "cls", "preferred", 2, 0, 0, &mc) == KGE_OK);
  const auto mcsm = take(mc);
  CHECK(mcsm.rfind("type\tmembers\tmcsm\tbound\n", 0) == 0);
  CHECK(mcsm.find("T047\t2\t") != std::string::npos);
  REQUIRE(kge_eval_mcsm(d, nullptr, "cls", "preferred", 2, 16, 5, &mc) == KGE_OK);
  kge_text_free(mc);
  CHECK(kge_eval_mcsm(d, m, "cls", "preferred", 5, 0, 0, &mc) == KGE_INVALID);

  kge_index_free(idx);
  kge_model_free(m);
  kge_config_free(c);
  kge_dictionary_free(d);
}

TEST_CASE("zero-step training equals the initial model") {
  TinyFiles f;
  kge_dictionary* d = nullptr;
  REQUIRE(kge_dictionary_load(f.concepts.c_str(), &d) == KGE_OK);
  kge_vocab* v = nullptr;
  REQUIRE(kge_vocab_build(d, 300, &v) == KGE_OK);
  REQUIRE(kge_vocab_save(v, f.vocab.c_str()) == KGE_OK);
  kge_config* c = tiny_config(f, "0");
  const auto a = (f.dir / "a.ckpt").string(), b = (f.dir / "b.ckpt").string();
  REQUIRE(kge_train(c, a.c_str(), nullptr, nullptr, nullptr) == KGE_OK);
  kge_model* init = nullptr;
  REQUIRE(kge_model_init(c, &init) == KGE_OK);
  REQUIRE(kge_model_save(init, b.c_str()) == KGE_OK);
  CHECK(ts::read_bytes(a) == ts::read_bytes(b));
  kge_model_free(init);
  kge_config_free(c);
  kge_vocab_free(v);
  kge_dictionary_free(d);
}

TEST_CASE("gradient check through the C API") {
  TinyFiles f;
  kge_dictionary* d = nullptr;
  REQUIRE(kge_dictionary_load(f.concepts.c_str(), &d) == KGE_OK);
  kge_vocab* v = nullptr;
  REQUIRE(kge_vocab_build(d, 300, &v) == KGE_OK);
  REQUIRE(kge_vocab_save(v, f.vocab.c_str()) == KGE_OK);
  kge_config* c = tiny_config(f, "1");
  int passed = 0;
  double err = 1.0;
  kge_text* report = nullptr;
  REQUIRE(kge_gradcheck(c, 60, 1e-5, 1e-4, nullptr, &passed, &err, &report) == KGE_OK);
  CHECK(passed == 1);
  CHECK(err <= 1e-4);
  CHECK(take(report).find("result=pass") != std::string::npos);
  REQUIRE(kge_gradcheck(c, 60, 1e-5, 1e-4, "out_w", &passed, &err, &report) == KGE_OK);
  CHECK(passed == 0);
  kge_text_free(report);
  kge_config_free(c);
  kge_vocab_free(v);
  kge_dictionary_free(d);
}

TEST_CASE("synthetic generation and probe") {
  ts::TempDir dir("capi_syn");
  kge_synthetic_options so;
  kge_synthetic_options_default(&so);
  so.groups = 4;
  so.per_group = 4;
  so.seed = 1;
  REQUIRE(kge_gen_synthetic(dir.path().c_str(), &so) == KGE_OK);
  so.synonyms = 9;
  CHECK(kge_gen_synthetic(dir.path().c_str(), &so) == KGE_INVALID);

  kge_config* c = nullptr;
  REQUIRE(kge_config_load((dir / "train.cfg").c_str(), &c) == KGE_OK);
  kge_text* txt = nullptr;
  REQUIRE(kge_config_text(c, &txt) == KGE_OK);
  CHECK(take(txt).find("seed=1\n") != std::string::npos);
  REQUIRE(kge_config_set(c, "model_dim", "8") == KGE_OK);
  REQUIRE(kge_config_set(c, "embed_dim", "8") == KGE_OK);
  kge_model* m = nullptr;
  REQUIRE(kge_model_init(c, &m) == KGE_OK);
  kge_dictionary* d = nullptr;
  REQUIRE(kge_dictionary_load((dir / "concepts.tsv").c_str(), &d) == KGE_OK);

  kge_probe_options po;
  kge_probe_options_default(&po);
  CHECK(std::string(po.mode) == "feature");
  CHECK(po.head_lr == 1e-3);
  po.epochs = 3;
  double tr = 0, te = 0;
  size_t ntr = 0, nte = 0;
  REQUIRE(kge_eval_relcls(d, m, (dir / "pairs.tsv").c_str(), &po, &tr, &te, &ntr, &nte) == KGE_OK);
  CHECK(ntr + nte == 48);  // 16 heads x 3 tails
  CHECK(ntr == 38);
  po.mode = "fine-tune";
  REQUIRE(kge_eval_relcls(d, m, (dir / "pairs.tsv").c_str(), &po, &tr, &te, &ntr, &nte) == KGE_OK);
  po.mode = "zero-shot";
  CHECK(kge_eval_relcls(d, m, (dir / "pairs.tsv").c_str(), &po, &tr, &te, &ntr, &nte) == KGE_INVALID);

  kge_dictionary_free(d);
  kge_model_free(m);
  kge_config_free(c);
}
