#include "kge/synthetic.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "kge/common.hpp"
#include "kge/kg_store.hpp"
#include "kge/tokenizer.hpp"

namespace kge {
namespace {

constexpr const char* kConsonants[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"};
constexpr const char* kVowels[] = {"a", "e", "i", "o", "u"};
constexpr const char* kEnSuffixes[] = {"al", "ic", "ar", "ous", "ine", "oid"};
constexpr const char* kEsSuffixes[] = {"o", "a", "ia", "ero", "ina"};

struct Atom {
  std::string en;       // stem + suffix
  std::string variant;  // same stem, swapped suffix
  std::string es;
};

class WordFactory {
 public:
  explicit WordFactory(Rng& rng) : rng_(rng) {}

  std::string stem(std::size_t syllables) {
    while (true) {
      std::string w;
      for (std::size_t i = 0; i < syllables; ++i) {
        w += kConsonants[rng_.uniform_index(std::size(kConsonants))];
        w += kVowels[rng_.uniform_index(std::size(kVowels))];
      }
      if (stems_.insert(w).second) return w;
    }
  }

  Atom atom() {
    Atom a;
    const std::string s = stem(2);
    const auto i = rng_.uniform_index(std::size(kEnSuffixes));
    const auto j = (i + 1 + rng_.uniform_index(std::size(kEnSuffixes) - 1)) % std::size(kEnSuffixes);
    a.en = s + kEnSuffixes[i];
    a.variant = s + kEnSuffixes[j];
    a.es = stem(2) + kEsSuffixes[rng_.uniform_index(std::size(kEsSuffixes))];
    return a;
  }

 private:
  Rng& rng_;
  std::set<std::string> stems_;
};

std::string concept_id(std::size_t n) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "C%07zu", n + 1);
  return buf;
}

std::string group_label(std::size_t g) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "G%02zu", g);
  return buf;
}

struct Template {
  const char* lang;
  std::string (*render)(const Atom& m, const Atom& s, const Atom& f);
};

const Template kTemplates[] = {
    {"en", [](const Atom& m, const Atom& s, const Atom& f) { return m.en + " " + s.en + " " + f.en; }},
    {"es", [](const Atom& m, const Atom& s, const Atom& f) { return f.es + " de " + s.es + " " + m.es; }},
    {"en", [](const Atom& m, const Atom& s, const Atom& f) { return s.variant + " " + f.variant + ", " + m.en; }},
    {"und", [](const Atom& m, const Atom& s, const Atom& f) { return m.es + " " + s.en + " " + f.variant; }},
};

const char* kRelationNames[] = {"same_group", "next_group", "shares_prefix", "inverse_next"};

}  // namespace

void SyntheticConfig::validate() const {
  if (groups < 2) throw ValidationError("gen-synthetic needs at least 2 groups");
  if (per_group < 2) throw ValidationError("gen-synthetic needs at least 2 concepts per group");
  if (synonyms < 2 || synonyms > std::size(kTemplates))
    throw ValidationError("synonyms per concept must be between 2 and 4");
  if (relation_types < 1 || relation_types > std::size(kRelationNames))
    throw ValidationError("relation types must be between 1 and 4");
  if (vocab_size < 8) throw ValidationError("vocab size too small");
}

SyntheticKg generate_synthetic(const SyntheticConfig& config) {
  config.validate();
  Rng rng(config.seed);
  WordFactory words(rng);

  const std::size_t G = config.groups;
  const std::size_t C = config.per_group;
  const std::size_t modifiers = (C + 1) / 2;
  const std::size_t findings = (C + modifiers - 1) / modifiers;

  std::vector<Atom> sites, mods, finds;
  for (std::size_t g = 0; g < G; ++g) sites.push_back(words.atom());
  for (std::size_t i = 0; i < modifiers; ++i) mods.push_back(words.atom());
  for (std::size_t i = 0; i < G * findings; ++i) finds.push_back(words.atom());

  auto index = [&](std::size_t g, std::size_t c) { return g * C + c; };

  SyntheticKg kg;
  std::ostringstream concepts, gold, relations, pairs;
  concepts << "# CUI\tLANG\tSEMTYPE\tTERM\n";
  for (std::size_t g = 0; g < G; ++g) {
    for (std::size_t c = 0; c < C; ++c) {
      const std::size_t n = index(g, c);
      const Atom& m = mods[c % modifiers];
      const Atom& s = sites[g];
      const Atom& f = finds[g * findings + c / modifiers];
      const std::size_t held_out = n % config.synonyms;
      for (std::size_t t = 0; t < config.synonyms; ++t) {
        const std::string surface = kTemplates[t].render(m, s, f);
        if (t == held_out)
          gold << surface << '\t' << concept_id(n) << '\n';
        else
          concepts << concept_id(n) << '\t' << kTemplates[t].lang << '\t' << group_label(g) << '\t' << surface << '\n';
      }
      ++kg.concept_count;
    }
  }

  // Each head concept carries one relation type, picked by its group parity
  // and finding slot so the classes stay balanced; tails follow by group
  // arithmetic, `fanout` per head.
  const std::size_t R = config.relation_types;
  const std::size_t fanout = std::min<std::size_t>(4, std::min(C, G) - 1);
  for (std::size_t g = 0; g < G; ++g) {
    for (std::size_t c = 0; c < C; ++c) {
      const std::size_t slot = (2 * c) / C;
      const std::size_t r = ((g % 2) * 2 + slot) % R;
      const std::string label = std::string("RO|") + kRelationNames[r];
      for (std::size_t j = 1; j <= fanout; ++j) {
        std::size_t tg = g, tc = c;
        switch (r) {
          case 0: tc = (c + j) % C; break;                         // same_group
          case 1: tg = (g + 1) % G; tc = (c + j) % C; break;       // next_group
          case 2: tg = (g + j) % G; break;                         // shares_prefix: same modifier slot
          case 3: tg = (g + G - 1) % G; tc = (c + j) % C; break;   // inverse_next
        }
        const auto head = concept_id(index(g, c));
        const auto tail = concept_id(index(tg, tc));
        relations << head << '\t' << label << '\t' << tail << '\n';
        pairs << head << '\t' << tail << '\t' << kRelationNames[r] << '\n';
        ++kg.triplet_count;
      }
    }
  }

  kg.concepts_tsv = concepts.str();
  kg.gold_tsv = gold.str();
  kg.relations_tsv = relations.str();
  kg.pairs_tsv = pairs.str();

  const auto dict = ConceptDictionary::parse(kg.concepts_tsv);
  const Vocab vocab = build_vocab(dict, config.vocab_size);
  std::ostringstream v;
  for (std::size_t i = 4; i < vocab.size(); ++i) v << vocab.token(static_cast<TokenId>(i)) << '\n';
  kg.vocab_txt = v.str();
  return kg;
}

SyntheticFiles write_synthetic(const SyntheticConfig& config, const std::filesystem::path& dir) {
  const SyntheticKg kg = generate_synthetic(config);
  std::filesystem::create_directories(dir);
  SyntheticFiles files{dir / "concepts.tsv", dir / "relations.tsv", dir / "gold.tsv",
                       dir / "pairs.tsv",    dir / "vocab.txt",     dir / "train.cfg"};
  auto write = [](const std::filesystem::path& p, const std::string& s) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw RuntimeError("cannot write " + p.string());
    out << s;
  };
  write(files.concepts, kg.concepts_tsv);
  write(files.relations, kg.relations_tsv);
  write(files.gold, kg.gold_tsv);
  write(files.pairs, kg.pairs_tsv);
  write(files.vocab, kg.vocab_txt);
  std::ostringstream cfg;
  cfg << "# desk-scale defaults for the generated benchmark\n"
      << "concepts=concepts.tsv\nrelations=relations.tsv\nvocab=vocab.txt\n"
      << "seed=" << config.seed << '\n'
      << "k=32\nm=4\naccum=8\nmodel_dim=64\nffn_dim=128\nembed_dim=64\nmax_len=32\n"
      << "steps=2000\nwarmup=200\nlr=0.001\nweight_decay=0.01\nmode=distmult-cos\n";
  write(files.config, cfg.str());
  return files;
}

}  // namespace kge
