// kge: command-line front end. Talks to the engine only through kge.h.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "kge/kge.h"

namespace {

// Thrown to leave a subcommand with a status code; the message is already set.
struct Failure {
  int code;
  std::string message;
};

void check(kge_status s) {
  if (s != KGE_OK) throw Failure{static_cast<int>(s), kge_last_error()};
}

// RAII wrappers over the C handles.
template <typename T, void (*Free)(T*)>
struct Handle {
  T* p = nullptr;
  Handle() = default;
  Handle(const Handle&) = delete;
  Handle& operator=(const Handle&) = delete;
  ~Handle() {
    if (p) Free(p);
  }
  T** out() { return &p; }
  T* get() const { return p; }
};

using Dict = Handle<kge_dictionary, kge_dictionary_free>;
using Relations = Handle<kge_relations, kge_relations_free>;
using Vocab = Handle<kge_vocab, kge_vocab_free>;
using Config = Handle<kge_config, kge_config_free>;
using Model = Handle<kge_model, kge_model_free>;
using Index = Handle<kge_index, kge_index_free>;
using Text = Handle<kge_text, kge_text_free>;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

// Machine output: the TSV goes to --out when given, otherwise to stdout.
void emit(const std::string& out_path, const std::string& tsv) {
  if (out_path.empty()) {
    std::cout << tsv;
    return;
  }
  std::ofstream f(out_path, std::ios::binary);
  if (!f || !(f << tsv)) throw Failure{KGE_RUNTIME, "cannot write " + out_path};
}

struct Options {
  std::string concepts, relations, vocab, checkpoint, gold, pairs, config, out, log, dir, pooling = "cls";
  std::optional<std::uint64_t> seed;
  std::vector<std::string> sets;
  std::vector<std::string> queries;
  std::vector<std::string> terms;
  std::map<std::string, std::string> overrides;  // train/gradcheck hyperparameters
};

void load_model(const Options& o, Model& model) {
  check(kge_model_load(o.checkpoint.c_str(), o.vocab.c_str(), model.out()));
}

void build_index(const Options& o, Dict& dict, Model& model, Index& index) {
  check(kge_dictionary_load(o.concepts.c_str(), dict.out()));
  load_model(o, model);
  check(kge_index_build(dict.get(), model.get(), o.pooling.c_str(), index.out()));
}

// Config file (optional), then path flags, then hyperparameter flags, then --set.
void make_config(const Options& o, Config& cfg) {
  if (!o.config.empty())
    check(kge_config_load(o.config.c_str(), cfg.out()));
  else
    check(kge_config_new(cfg.out()));
  auto set = [&](const std::string& k, const std::string& v) { check(kge_config_set(cfg.get(), k.c_str(), v.c_str())); };
  if (!o.concepts.empty()) set("concepts", o.concepts);
  if (!o.relations.empty()) set("relations", o.relations);
  if (!o.vocab.empty()) set("vocab", o.vocab);
  for (const auto& [k, v] : o.overrides) set(k, v);
  for (const auto& kv : o.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw Failure{KGE_INVALID, "--set expects key=value, got '" + kv + "'"};
    set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (o.seed) set("seed", std::to_string(*o.seed));
}

void add_hyper(CLI::App* sub, Options& o) {
  static const char* keys[] = {"k",       "m",       "accum",      "model_dim",    "ffn_dim", "embed_dim",
                               "max_len", "steps",   "warmup",     "lr",           "weight_decay", "mode",
                               "mu",      "alpha",   "beta",       "lambda",       "epsilon", "alpha_rel",
                               "beta_rel", "lambda_rel", "epsilon_rel", "init_std", "log_every", "checkpoint_every"};
  for (const char* k : keys) {
    std::string flag = k;
    for (auto& c : flag)
      if (c == '_') c = '-';
    sub->add_option_function<std::string>("--" + flag, [&o, key = std::string(k)](const std::string& v) {
      o.overrides[key] = v;
    }, std::string("override config key '") + k + "'");
  }
  sub->add_option("--config", o.config, "key=value training config file");
  sub->add_option("--concepts", o.concepts, "concept TSV");
  sub->add_option("--relations", o.relations, "relation TSV");
  sub->add_option("--vocab", o.vocab, "vocabulary file");
  sub->add_option("--set", o.sets, "extra config entry key=value (repeatable)");
}

void log_row(size_t step, double lr, double loss, double term, double rel, void*) {
  std::cout << "step " << step << "  lr " << fmt(lr) << "  loss " << fmt(loss) << "  term " << fmt(term) << "  rel "
            << fmt(rel) << '\n';
  std::cout.flush();
}

std::vector<std::size_t> parse_ks(const std::string& s) {
  std::vector<std::size_t> ks;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      std::size_t used = 0;
      const long long v = std::stoll(part, &used);
      if (used != part.size() || v <= 0) throw std::invalid_argument(part);
      ks.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw Failure{KGE_INVALID, "invalid k list '" + s + "'"};
    }
  }
  if (ks.empty()) throw Failure{KGE_INVALID, "empty k list"};
  return ks;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Knowledge-graph contrastive term embeddings", "kge"};
  app.require_subcommand(1);
  app.fallthrough(false);

  Options o;
  std::string ks = "1,3,5";
  std::size_t top = 5, vocab_size = 4000, coordinates = 200, mcsm_k = 40, random_dim = 0;
  double fd_step = 1e-5, tolerance = 1e-4;
  std::string corrupt, representation = "preferred";
  kge_probe_options probe;
  kge_probe_options_default(&probe);
  std::string probe_mode = "feature";
  kge_synthetic_options syn;
  kge_synthetic_options_default(&syn);

  auto* ingest = app.add_subcommand("ingest-check", "load and validate the concept and relation files");
  ingest->add_option("--concepts", o.concepts)->required();
  ingest->add_option("--relations", o.relations);
  ingest->add_option("--out", o.out, "summary TSV");

  auto* bvocab = app.add_subcommand("build-vocab", "build a subword vocabulary from the concept file");
  bvocab->add_option("--concepts", o.concepts)->required();
  bvocab->add_option("--size", vocab_size, "maximum vocabulary size including reserved tokens");
  bvocab->add_option("--out", o.out, "vocabulary file to write")->required();

  auto* train = app.add_subcommand("train", "train the encoder");
  add_hyper(train, o);
  train->add_option("--seed", o.seed)->required();
  train->add_option("--checkpoint", o.checkpoint, "checkpoint to write")->required();
  train->add_option("--out", o.log, "training log TSV");
  train->add_option("--pooling", o.pooling);

  auto* grad = app.add_subcommand("gradcheck", "compare analytic gradients with central differences");
  add_hyper(grad, o);
  grad->add_option("--seed", o.seed)->required();
  grad->add_option("--coordinates", coordinates);
  grad->add_option("--step", fd_step);
  grad->add_option("--tolerance", tolerance);
  grad->add_option("--corrupt", corrupt, "double this tensor's analytic gradient (self-test)");
  grad->add_option("--out", o.out, "per-tensor report TSV");
  grad->add_option("--pooling", o.pooling);

  auto* embed = app.add_subcommand("embed", "embed terms");
  embed->add_option("--checkpoint", o.checkpoint)->required();
  embed->add_option("--vocab", o.vocab)->required();
  embed->add_option("--term", o.terms, "term to embed (repeatable)")->required();
  embed->add_option("--pooling", o.pooling);
  embed->add_option("--out", o.out, "TSV: term, v1,...,vl");

  auto* normalize = app.add_subcommand("normalize", "rank dictionary concepts for a query");
  normalize->add_option("--concepts", o.concepts)->required();
  normalize->add_option("--checkpoint", o.checkpoint)->required();
  normalize->add_option("--vocab", o.vocab)->required();
  normalize->add_option("--query", o.queries, "query (repeatable)")->required();
  normalize->add_option("--top", top);
  normalize->add_option("--pooling", o.pooling);
  normalize->add_option("--out", o.out, "TSV: cui, term, score");

  auto* acc = app.add_subcommand("eval-acc", "acc@k on a gold file");
  auto* f1 = app.add_subcommand("eval-f1", "precision, recall and F1 of top-1 predictions");
  for (auto* sub : {acc, f1}) {
    sub->add_option("--concepts", o.concepts)->required();
    sub->add_option("--checkpoint", o.checkpoint)->required();
    sub->add_option("--vocab", o.vocab)->required();
    sub->add_option("--gold", o.gold)->required();
    sub->add_option("--pooling", o.pooling);
    sub->add_option("--out", o.out);
  }
  acc->add_option("--k", ks, "comma-separated cutoffs");

  auto* mc = app.add_subcommand("eval-mcsm", "conceptual similarity per semantic type");
  mc->add_option("--concepts", o.concepts)->required();
  mc->add_option("--checkpoint", o.checkpoint);
  mc->add_option("--vocab", o.vocab);
  mc->add_option("--k", mcsm_k);
  mc->add_option("--representation", representation, "preferred or mean");
  mc->add_option("--random-dim", random_dim, "score seeded Gaussian embeddings instead of a model");
  mc->add_option("--seed", o.seed);
  mc->add_option("--pooling", o.pooling);
  mc->add_option("--out", o.out);

  auto* rel = app.add_subcommand("eval-relcls", "relation classification probe");
  rel->add_option("--concepts", o.concepts)->required();
  rel->add_option("--checkpoint", o.checkpoint)->required();
  rel->add_option("--vocab", o.vocab)->required();
  rel->add_option("--pairs", o.pairs)->required();
  rel->add_option("--mode", probe_mode, "feature or fine-tune");
  rel->add_option("--epochs", probe.epochs);
  rel->add_option("--batch-size", probe.batch_size);
  rel->add_option("--head-lr", probe.head_lr);
  rel->add_option("--encoder-lr", probe.encoder_lr);
  rel->add_option("--weight-decay", probe.weight_decay);
  rel->add_option("--seed", probe.seed);
  bool raw_features = false;
  rel->add_flag("--raw-features", raw_features, "feed unnormalized embeddings to the classifier");
  rel->add_option("--pooling", o.pooling);
  rel->add_option("--out", o.out);

  auto* exp = app.add_subcommand("export-embeddings", "write every term embedding as TSV");
  exp->add_option("--concepts", o.concepts)->required();
  exp->add_option("--checkpoint", o.checkpoint)->required();
  exp->add_option("--vocab", o.vocab)->required();
  exp->add_option("--pooling", o.pooling);
  exp->add_option("--out", o.out)->required();

  auto* gen = app.add_subcommand("gen-synthetic", "write the synthetic benchmark file family");
  gen->add_option("--dir", o.dir)->required();
  gen->add_option("--seed", o.seed)->required();
  gen->add_option("--groups", syn.groups);
  gen->add_option("--per-group", syn.per_group);
  gen->add_option("--synonyms", syn.synonyms);
  gen->add_option("--relation-types", syn.relation_types);
  gen->add_option("--vocab-size", syn.vocab_size);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    if (ingest->parsed()) {
      Dict dict;
      check(kge_dictionary_load(o.concepts.c_str(), dict.out()));
      std::ostringstream tsv;
      tsv << "concepts\t" << kge_dictionary_size(dict.get()) << "\nterms\t" << kge_dictionary_term_count(dict.get())
          << '\n';
      if (!o.relations.empty()) {
        Relations r;
        check(kge_relations_load(o.relations.c_str(), dict.get(), r.out()));
        tsv << "triplets\t" << kge_relations_size(r.get()) << "\ndropped\t" << kge_relations_dropped(r.get())
            << "\nrelation_labels\t" << kge_relations_label_count(r.get()) << '\n';
      }
      emit(o.out, tsv.str());
    } else if (bvocab->parsed()) {
      Dict dict;
      Vocab vocab;
      check(kge_dictionary_load(o.concepts.c_str(), dict.out()));
      check(kge_vocab_build(dict.get(), vocab_size, vocab.out()));
      check(kge_vocab_save(vocab.get(), o.out.c_str()));
      std::cout << "wrote " << kge_vocab_size(vocab.get()) << " tokens to " << o.out << '\n';
    } else if (train->parsed()) {
      Config cfg;
      make_config(o, cfg);
      check(kge_config_set(cfg.get(), "pooling", o.pooling.c_str()));
      check(kge_train(cfg.get(), o.checkpoint.c_str(), o.log.empty() ? nullptr : o.log.c_str(), log_row, nullptr));
      std::cout << "wrote checkpoint " << o.checkpoint << '\n';
    } else if (grad->parsed()) {
      Config cfg;
      make_config(o, cfg);
      check(kge_config_set(cfg.get(), "pooling", o.pooling.c_str()));
      int passed = 0;
      double worst = 0.0;
      Text report;
      check(kge_gradcheck(cfg.get(), coordinates, fd_step, tolerance, corrupt.empty() ? nullptr : corrupt.c_str(),
                          &passed, &worst, report.out()));
      emit(o.out, kge_text_data(report.get()));
      if (!o.out.empty()) std::cout << "max relative error " << worst << (passed ? " (pass)\n" : " (FAIL)\n");
      if (!passed) throw Failure{KGE_RUNTIME, "gradient check failed"};
    } else if (embed->parsed()) {
      Model model;
      load_model(o, model);
      std::vector<double> v(kge_model_embed_dim(model.get()));
      std::ostringstream tsv;
      for (const auto& t : o.terms) {
        check(kge_model_embed(model.get(), t.c_str(), o.pooling.c_str(), v.data()));
        tsv << t << '\t';
        for (std::size_t i = 0; i < v.size(); ++i) {
          char buf[32];
          std::snprintf(buf, sizeof buf, "%.9g", v[i]);
          tsv << (i ? "," : "") << buf;
        }
        tsv << '\n';
      }
      emit(o.out, tsv.str());
    } else if (normalize->parsed()) {
      Dict dict;
      Model model;
      Index index;
      build_index(o, dict, model, index);
      std::string tsv;
      for (const auto& q : o.queries) {
        Text t;
        check(kge_index_query(index.get(), q.c_str(), top, t.out()));
        tsv += kge_text_data(t.get());
      }
      emit(o.out, tsv);
    } else if (acc->parsed()) {
      const auto kv = parse_ks(ks);
      Dict dict;
      Model model;
      Index index;
      build_index(o, dict, model, index);
      std::vector<double> res(kv.size());
      check(kge_eval_acc(index.get(), o.gold.c_str(), kv.data(), kv.size(), res.data()));
      std::ostringstream tsv;
      tsv << "k\taccuracy\n";
      for (std::size_t i = 0; i < kv.size(); ++i) tsv << kv[i] << '\t' << fmt(res[i]) << '\n';
      emit(o.out, tsv.str());
    } else if (f1->parsed()) {
      Dict dict;
      Model model;
      Index index;
      build_index(o, dict, model, index);
      double p = 0, r = 0, f = 0;
      check(kge_eval_f1(index.get(), o.gold.c_str(), &p, &r, &f));
      emit(o.out, "precision\trecall\tf1\n" + fmt(p) + '\t' + fmt(r) + '\t' + fmt(f) + '\n');
    } else if (mc->parsed()) {
      Dict dict;
      Model model;
      check(kge_dictionary_load(o.concepts.c_str(), dict.out()));
      if (random_dim == 0) {
        if (o.checkpoint.empty() || o.vocab.empty())
          throw Failure{KGE_INVALID, "eval-mcsm needs --checkpoint and --vocab, or --random-dim"};
        load_model(o, model);
      } else if (!o.seed) {
        throw Failure{KGE_INVALID, "--random-dim requires --seed"};
      }
      Text t;
      check(kge_eval_mcsm(dict.get(), model.get(), o.pooling.c_str(), representation.c_str(), mcsm_k, random_dim,
                          o.seed.value_or(0), t.out()));
      emit(o.out, kge_text_data(t.get()));
    } else if (rel->parsed()) {
      Dict dict;
      Model model;
      check(kge_dictionary_load(o.concepts.c_str(), dict.out()));
      load_model(o, model);
      probe.mode = probe_mode.c_str();
      probe.pooling = o.pooling.c_str();
      probe.unit_features = raw_features ? 0 : 1;
      double train_acc = 0, test_acc = 0;
      size_t n_train = 0, n_test = 0;
      check(kge_eval_relcls(dict.get(), model.get(), o.pairs.c_str(), &probe, &train_acc, &test_acc, &n_train,
                            &n_test));
      std::ostringstream tsv;
      tsv << "mode\ttrain_size\ttest_size\ttrain_accuracy\ttest_accuracy\n"
          << probe_mode << '\t' << n_train << '\t' << n_test << '\t' << fmt(train_acc) << '\t' << fmt(test_acc)
          << '\n';
      emit(o.out, tsv.str());
    } else if (exp->parsed()) {
      Dict dict;
      Model model;
      Index index;
      build_index(o, dict, model, index);
      Text t;
      check(kge_index_export(index.get(), t.out()));
      emit(o.out, kge_text_data(t.get()));
      std::cout << "wrote " << kge_index_size(index.get()) << " rows to " << o.out << '\n';
    } else if (gen->parsed()) {
      syn.seed = *o.seed;
      check(kge_gen_synthetic(o.dir.c_str(), &syn));
      std::cout << "wrote synthetic benchmark to " << o.dir << '\n';
    }
  } catch (const Failure& f) {
    std::cerr << "error: " << f.message << '\n';
    return f.code;
  }
  return 0;
}
