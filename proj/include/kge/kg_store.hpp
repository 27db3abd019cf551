#pragma once

#include <cstddef>
#include <filesystem>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "kge/common.hpp"

namespace kge {

struct Term {
  std::string surface;
  std::string language;  // ISO 639-1 code or "und"

  bool operator==(const Term&) const = default;
};

struct Concept {
  std::string id;
  std::set<std::string> semantic_types;
  std::vector<Term> terms;
  std::size_t preferred_index = 0;

  const Term& preferred() const { return terms[preferred_index]; }
  bool operator==(const Concept&) const = default;
};

// Concepts sorted by id. Indices into concepts() are stable for the
// dictionary's lifetime and are what the rest of the engine passes around.
class ConceptDictionary {
 public:
  ConceptDictionary() = default;
  explicit ConceptDictionary(std::vector<Concept> concepts);

  static ConceptDictionary load(const std::filesystem::path& path);
  static ConceptDictionary parse(std::string_view contents);

  std::size_t size() const { return concepts_.size(); }
  std::size_t term_count() const;
  const std::vector<Concept>& concepts() const { return concepts_; }
  const Concept& at(std::size_t index) const { return concepts_.at(index); }
  const Concept& get(std::string_view id) const;

  bool contains(std::string_view id) const { return find(id) >= 0; }
  // Index of the concept or -1.
  std::ptrdiff_t find(std::string_view id) const;
  std::size_t index_of(std::string_view id) const;

  // Concepts listing this exact (normalized) surface, ascending index.
  std::vector<std::size_t> concepts_for_surface(std::string_view surface) const;

  bool operator==(const ConceptDictionary& other) const { return concepts_ == other.concepts_; }

 private:
  void reindex();

  std::vector<Concept> concepts_;
  std::unordered_map<std::string, std::size_t> by_id_;
  std::unordered_map<std::string, std::vector<std::size_t>> by_surface_;
};

struct RelationTriplet {
  std::size_t head = 0;      // concept index
  std::size_t relation = 0;  // index into RelationStore::labels()
  std::size_t tail = 0;      // concept index

  bool operator==(const RelationTriplet&) const = default;
};

class RelationStore {
 public:
  static RelationStore load(const std::filesystem::path& path, const ConceptDictionary& dict);
  static RelationStore parse(std::string_view contents, const ConceptDictionary& dict);

  std::size_t size() const { return triplets_.size(); }
  bool empty() const { return triplets_.empty(); }
  const std::vector<RelationTriplet>& triplets() const { return triplets_; }
  const std::vector<std::string>& labels() const { return labels_; }
  std::size_t dropped() const { return dropped_; }
  std::ptrdiff_t label_index(std::string_view label) const;

  bool operator==(const RelationStore& o) const {
    return triplets_ == o.triplets_ && labels_ == o.labels_ && dropped_ == o.dropped_;
  }

 private:
  std::vector<RelationTriplet> triplets_;
  std::vector<std::string> labels_;
  std::size_t dropped_ = 0;
};

// Normalizes a surface the way the loader does: NFC, then whitespace trim.
std::string normalize_surface(std::string_view raw);

// Uniform draw over the concept's synonyms.
const Term& sample_term(const ConceptDictionary& dict, std::string_view concept_id, Rng& rng);
const Term& sample_term(const Concept& cpt, Rng& rng);

std::string read_file(const std::filesystem::path& path);

}  // namespace kge
