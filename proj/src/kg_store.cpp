#include "kge/kg_store.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "kge/text.hpp"

namespace kge {
namespace {

// Calls fn(line_number, line) for every non-comment, non-blank line.
template <typename Fn>
void for_each_data_line(std::string_view contents, Fn&& fn) {
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= contents.size()) {
    auto end = contents.find('\n', start);
    if (end == std::string_view::npos) end = contents.size();
    std::string_view line = contents.substr(start, end - start);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!line.empty() && line.front() != '#') fn(line_no, line);
    if (end == contents.size()) break;
    start = end + 1;
  }
}

[[noreturn]] void malformed(std::size_t line_no, const std::string& why) {
  throw ValidationError("line " + std::to_string(line_no) + ": " + why);
}

}  // namespace

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string normalize_surface(std::string_view raw) { return text::trim(text::nfc(raw)); }

ConceptDictionary::ConceptDictionary(std::vector<Concept> concepts) : concepts_(std::move(concepts)) {
  std::sort(concepts_.begin(), concepts_.end(),
            [](const Concept& a, const Concept& b) { return a.id < b.id; });
  for (std::size_t i = 0; i < concepts_.size(); ++i) {
    const auto& c = concepts_[i];
    if (c.terms.empty()) throw ValidationError("concept " + c.id + " has no terms");
    if (c.preferred_index >= c.terms.size())
      throw ValidationError("concept " + c.id + " preferred index out of range");
    if (i > 0 && concepts_[i - 1].id == c.id) throw ValidationError("duplicate concept id " + c.id);
  }
  reindex();
}

void ConceptDictionary::reindex() {
  by_id_.clear();
  by_surface_.clear();
  for (std::size_t i = 0; i < concepts_.size(); ++i) {
    by_id_.emplace(concepts_[i].id, i);
    for (const auto& t : concepts_[i].terms) {
      auto& v = by_surface_[t.surface];
      if (v.empty() || v.back() != i) v.push_back(i);
    }
  }
}

ConceptDictionary ConceptDictionary::load(const std::filesystem::path& path) {
  return parse(read_file(path));
}

ConceptDictionary ConceptDictionary::parse(std::string_view contents) {
  std::map<std::string, Concept> grouped;
  for_each_data_line(contents, [&](std::size_t line_no, std::string_view line) {
    const auto fields = text::split(line, '\t');
    if (fields.size() != 4) malformed(line_no, "expected 4 tab-separated fields, got " + std::to_string(fields.size()));
    const std::string id = text::trim(fields[0]);
    const std::string lang = text::trim(fields[1]);
    const std::string semtype = text::trim(fields[2]);
    std::string surface;
    try {
      surface = normalize_surface(fields[3]);
    } catch (const ValidationError& e) {
      malformed(line_no, e.what());
    }
    if (id.empty()) malformed(line_no, "empty concept id");
    if (lang.empty()) malformed(line_no, "empty language code");
    if (semtype.empty()) malformed(line_no, "empty semantic type");
    if (surface.empty()) malformed(line_no, "empty term");

    auto& cpt = grouped[id];
    cpt.id = id;
    cpt.semantic_types.insert(semtype);
    Term term{std::move(surface), lang};
    if (std::find(cpt.terms.begin(), cpt.terms.end(), term) == cpt.terms.end())
      cpt.terms.push_back(std::move(term));
  });
  if (grouped.empty()) throw ValidationError("empty dictionary");
  std::vector<Concept> concepts;
  concepts.reserve(grouped.size());
  for (auto& [_, c] : grouped) concepts.push_back(std::move(c));
  return ConceptDictionary(std::move(concepts));
}

std::size_t ConceptDictionary::term_count() const {
  std::size_t n = 0;
  for (const auto& c : concepts_) n += c.terms.size();
  return n;
}

std::ptrdiff_t ConceptDictionary::find(std::string_view id) const {
  auto it = by_id_.find(std::string(id));
  return it == by_id_.end() ? -1 : static_cast<std::ptrdiff_t>(it->second);
}

std::size_t ConceptDictionary::index_of(std::string_view id) const {
  const auto i = find(id);
  if (i < 0) throw ValidationError("unknown concept id: " + std::string(id));
  return static_cast<std::size_t>(i);
}

const Concept& ConceptDictionary::get(std::string_view id) const { return concepts_[index_of(id)]; }

std::vector<std::size_t> ConceptDictionary::concepts_for_surface(std::string_view surface) const {
  auto it = by_surface_.find(std::string(surface));
  return it == by_surface_.end() ? std::vector<std::size_t>{} : it->second;
}

RelationStore RelationStore::load(const std::filesystem::path& path, const ConceptDictionary& dict) {
  return parse(read_file(path), dict);
}

RelationStore RelationStore::parse(std::string_view contents, const ConceptDictionary& dict) {
  RelationStore store;
  std::unordered_map<std::string, std::size_t> label_ids;
  for_each_data_line(contents, [&](std::size_t line_no, std::string_view line) {
    const auto fields = text::split(line, '\t');
    if (fields.size() != 3) malformed(line_no, "expected 3 tab-separated fields, got " + std::to_string(fields.size()));
    const std::string head = text::trim(fields[0]);
    const std::string label = text::trim(fields[1]);
    const std::string tail = text::trim(fields[2]);
    if (head.empty() || tail.empty()) malformed(line_no, "empty concept id");
    if (label.empty()) malformed(line_no, "empty relation label");
    const auto h = dict.find(head);
    const auto t = dict.find(tail);
    if (h < 0 || t < 0) {
      ++store.dropped_;
      return;
    }
    auto [it, inserted] = label_ids.emplace(label, store.labels_.size());
    if (inserted) store.labels_.push_back(label);
    store.triplets_.push_back({static_cast<std::size_t>(h), it->second, static_cast<std::size_t>(t)});
  });
  return store;
}

std::ptrdiff_t RelationStore::label_index(std::string_view label) const {
  auto it = std::find(labels_.begin(), labels_.end(), label);
  return it == labels_.end() ? -1 : it - labels_.begin();
}

const Term& sample_term(const Concept& cpt, Rng& rng) {
  return cpt.terms[rng.uniform_index(cpt.terms.size())];
}

const Term& sample_term(const ConceptDictionary& dict, std::string_view concept_id, Rng& rng) {
  return sample_term(dict.get(concept_id), rng);
}

}  // namespace kge
