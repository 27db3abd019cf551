#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace kge {

// Grouped concept benchmark. Concept (g, c) names a (site, modifier, finding)
// combination: the site is shared by the group, modifiers are shared across
// groups, findings are group-specific. Every atom has an "en", a
// suffix-swapped "en" variant and an "es" surface; synonyms are built from
// four templates mixing forms and word order, and one template per concept is
// held out as the normalization gold.
struct SyntheticConfig {
  std::size_t groups = 10;
  std::size_t per_group = 10;
  std::size_t synonyms = 4;  // including the held-out one; 2..4
  std::size_t relation_types = 4;  // 1..4
  std::size_t vocab_size = 4000;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SyntheticKg {
  std::string concepts_tsv;   // CUI LANG SEMTYPE TERM
  std::string relations_tsv;  // HEAD REL TAIL
  std::string gold_tsv;       // QUERY CUI
  std::string pairs_tsv;      // HEAD TAIL CLASS, one per triplet
  std::string vocab_txt;
  std::size_t concept_count = 0;
  std::size_t triplet_count = 0;
};

SyntheticKg generate_synthetic(const SyntheticConfig& config);

struct SyntheticFiles {
  std::filesystem::path concepts, relations, gold, pairs, vocab, config;
};

// Writes concepts.tsv, relations.tsv, gold.tsv, pairs.tsv, vocab.txt and a
// train.cfg holding the default desk-scale training config for these files.
SyntheticFiles write_synthetic(const SyntheticConfig& config, const std::filesystem::path& dir);

}  // namespace kge
