#include "kge/tokenizer.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include "kge/common.hpp"
#include "kge/kg_store.hpp"
#include "kge/text.hpp"

namespace kge {
namespace {

constexpr std::string_view kReserved[] = {"[PAD]", "[UNK]", "[CLS]", "[SEP]"};

// Greedy longest-prefix segmentation of one word; a single [UNK] if any
// position cannot be matched.
void segment_word(const std::string& word, const Vocab& vocab, std::vector<TokenId>& out) {
  const auto cps = text::code_points(word);
  std::vector<std::size_t> offsets(cps.size() + 1, 0);
  for (std::size_t i = 0; i < cps.size(); ++i) offsets[i + 1] = offsets[i] + cps[i].size();

  std::vector<TokenId> pieces;
  std::size_t start = 0;
  std::string candidate;
  while (start < cps.size()) {
    TokenId found = -1;
    std::size_t found_end = start;
    for (std::size_t end = cps.size(); end > start; --end) {
      candidate.clear();
      if (start > 0) candidate += kContinuation;
      candidate.append(word, offsets[start], offsets[end] - offsets[start]);
      if (vocab.contains(candidate)) {
        found = vocab.id(candidate);
        found_end = end;
        break;
      }
    }
    if (found < 0) {
      out.push_back(kUnkId);
      return;
    }
    pieces.push_back(found);
    start = found_end;
  }
  out.insert(out.end(), pieces.begin(), pieces.end());
}

}  // namespace

Vocab::Vocab() {
  for (std::size_t i = 0; i < std::size(kReserved); ++i) add(std::string(kReserved[i]), 0);
}

void Vocab::add(std::string token, std::size_t line_no) {
  const auto id = static_cast<TokenId>(tokens_.size());
  auto [it, inserted] = ids_.emplace(token, id);
  if (!inserted)
    throw ValidationError("line " + std::to_string(line_no) + ": duplicate token '" + token + "'");
  tokens_.push_back(std::move(token));
}

Vocab Vocab::load(const std::filesystem::path& path) { return parse(read_file(path)); }

Vocab Vocab::parse(std::string_view contents) {
  Vocab v;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < contents.size()) {
    auto end = contents.find('\n', start);
    if (end == std::string_view::npos) end = contents.size();
    std::string_view line = contents.substr(start, end - start);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!line.empty()) v.add(std::string(line), line_no);
    start = end + 1;
  }
  return v;
}

Vocab Vocab::from_tokens(const std::vector<std::string>& tokens) {
  Vocab v;
  std::size_t line_no = 0;
  for (const auto& t : tokens) v.add(t, ++line_no);
  return v;
}

TokenId Vocab::id(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  return it == ids_.end() ? kUnkId : it->second;
}

bool Vocab::contains(std::string_view token) const { return ids_.count(std::string(token)) > 0; }

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot write vocab: " + path.string());
  for (std::size_t i = std::size(kReserved); i < tokens_.size(); ++i) out << tokens_[i] << '\n';
}

std::size_t TokenSequence::length() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

TokenSequence tokenize(std::string_view surface, const Vocab& vocab, std::size_t max_len) {
  if (max_len < 3) throw ValidationError("max_len must be at least 3");
  const std::string lowered = text::lowercase(text::trim(surface));
  if (lowered.empty()) throw ValidationError("cannot tokenize an empty surface");

  std::vector<TokenId> body;
  for (const auto& word : text::split_words(lowered)) segment_word(word, vocab, body);
  if (body.size() > max_len - 2) body.resize(max_len - 2);

  TokenSequence seq;
  seq.ids.assign(max_len, kPadId);
  seq.mask.assign(max_len, 0);
  seq.ids[0] = kClsId;
  std::copy(body.begin(), body.end(), seq.ids.begin() + 1);
  seq.ids[body.size() + 1] = kSepId;
  std::fill(seq.mask.begin(), seq.mask.begin() + static_cast<std::ptrdiff_t>(body.size() + 2), 1);
  return seq;
}

std::string detokenize(const TokenSequence& seq, const Vocab& vocab) {
  std::string out;
  for (std::size_t i = 0; i < seq.ids.size() && seq.mask[i]; ++i) {
    const TokenId id = seq.ids[i];
    if (id == kClsId || id == kSepId || id == kPadId) continue;
    const std::string& tok = vocab.token(id);
    if (tok.rfind(kContinuation, 0) == 0) {
      out += tok.substr(kContinuation.size());
    } else {
      if (!out.empty()) out += ' ';
      out += tok;
    }
  }
  return out;
}

Vocab build_vocab(const ConceptDictionary& dict, std::size_t max_size, std::size_t max_ngram) {
  std::set<std::string> alphabet;
  std::map<std::string, std::size_t> counts;
  for (const auto& cpt : dict.concepts()) {
    for (const auto& term : cpt.terms) {
      for (const auto& word : text::split_words(text::lowercase(term.surface))) {
        const auto cps = text::code_points(word);
        for (std::size_t i = 0; i < cps.size(); ++i) {
          alphabet.insert(cps[i]);
          alphabet.insert(std::string(kContinuation) + cps[i]);
          std::string piece = i == 0 ? std::string() : std::string(kContinuation);
          for (std::size_t j = i; j < cps.size() && j - i < max_ngram; ++j) {
            piece += cps[j];
            if (j > i) ++counts[piece];
          }
        }
      }
    }
  }

  std::vector<std::string> tokens(alphabet.begin(), alphabet.end());
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first.size() > b.first.size();
  });
  const std::size_t reserved = std::size(kReserved);
  for (const auto& [piece, _] : ranked) {
    if (reserved + tokens.size() >= max_size) break;
    tokens.push_back(piece);
  }
  if (reserved + tokens.size() > max_size) tokens.resize(max_size > reserved ? max_size - reserved : 0);
  return Vocab::from_tokens(tokens);
}

}  // namespace kge
