#pragma once

// Shared fixtures and brute-force oracles. The oracles are written from the
// formulas with plain loops over std::vector and do not call the code they
// check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <string>
#include <vector>

namespace testsupport {

using Rows = std::vector<std::vector<double>>;

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("kge_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out << s;
}

inline std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

inline double cos_sim(const std::vector<double>& a, const std::vector<double>& b) {
  const double na = norm(a), nb = norm(b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot(a, b) / (na * nb);
}

struct OracleMined {
  std::vector<std::size_t> pos, neg;
};

// Hard-pair sets for one anchor, straight from the definitions.
inline OracleMined oracle_mine(const std::vector<double>& s, const std::vector<int>& tau, double eps,
                               long self = -1) {
  const double inf = std::numeric_limits<double>::infinity();
  double min_pos = inf, max_neg = -inf;
  for (std::size_t j = 0; j < s.size(); ++j) {
    if (static_cast<long>(j) == self) continue;
    if (tau[j]) min_pos = std::min(min_pos, s[j]);
    else max_neg = std::max(max_neg, s[j]);
  }
  OracleMined m;
  for (std::size_t j = 0; j < s.size(); ++j) {
    if (static_cast<long>(j) == self) continue;
    if (!tau[j] && s[j] > min_pos - eps) m.neg.push_back(j);
    if (tau[j] && s[j] < max_neg + eps) m.pos.push_back(j);
  }
  return m;
}

struct OracleMs {
  double alpha, beta, lambda, eps;
};

inline double clamp_exp(double x) { return std::exp(std::min(x, 50.0)); }

// Mean over rows of the multi-similarity loss.
inline double oracle_ms_loss(const Rows& s, const std::vector<std::vector<int>>& tau, const OracleMs& p,
                             bool exclude_self) {
  double total = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto m = oracle_mine(s[i], tau[i], p.eps, exclude_self ? static_cast<long>(i) : -1);
    double sp = 0.0, sn = 0.0;
    for (auto j : m.pos) sp += clamp_exp(-p.alpha * (s[i][j] - p.lambda));
    for (auto j : m.neg) sn += clamp_exp(p.beta * (s[i][j] - p.lambda));
    total += std::log(1.0 + sp) / p.alpha + std::log(1.0 + sn) / p.beta;
  }
  return total / static_cast<double>(s.size());
}

enum class OracleMode { DistMult, TransE, None };

// L_term + mu * L_rel for 2k embeddings (heads then tails).
inline double oracle_total_loss(const Rows& e, const std::vector<std::size_t>& concept_ids,
                                const std::vector<std::size_t>& rel_ids, const std::vector<Rows>& mats,
                                const Rows& vecs, const OracleMs& term, const OracleMs& rel, double mu,
                                OracleMode mode) {
  const std::size_t n = e.size(), k = n / 2;
  Rows s(n, std::vector<double>(n));
  std::vector<std::vector<int>> tau(n, std::vector<int>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      s[i][j] = cos_sim(e[i], e[j]);
      tau[i][j] = concept_ids[i] == concept_ids[j];
    }
  double loss = oracle_ms_loss(s, tau, term, true);
  if (mode == OracleMode::None) return loss;

  Rows sr(k, std::vector<double>(k));
  std::vector<std::vector<int>> tr(k, std::vector<int>(k));
  const std::size_t l = e[0].size();
  for (std::size_t i = 0; i < k; ++i) {
    std::vector<double> q(l, 0.0);
    if (mode == OracleMode::DistMult) {
      const Rows& m = mats[rel_ids[i]];  // q = M^T e_h
      for (std::size_t c = 0; c < l; ++c)
        for (std::size_t r = 0; r < l; ++r) q[c] += m[r][c] * e[i][r];
    }
    for (std::size_t j = 0; j < k; ++j) {
      if (mode == OracleMode::DistMult) {
        sr[i][j] = cos_sim(q, e[k + j]);
      } else {
        double d2 = 0.0;
        for (std::size_t c = 0; c < l; ++c) {
          const double d = e[i][c] + vecs[rel_ids[i]][c] - e[k + j][c];
          d2 += d * d;
        }
        sr[i][j] = -std::sqrt(d2);
      }
      tr[i][j] = concept_ids[k + i] == concept_ids[k + j];
    }
  }
  return loss + mu * oracle_ms_loss(sr, tr, rel, false);
}

// Full-scan ranking: (concept, best score) sorted by score desc, id asc.
inline std::vector<std::pair<std::string, double>> oracle_rank(const Rows& rows, const std::vector<std::string>& ids,
                                                               const std::vector<double>& query) {
  std::vector<std::pair<std::string, double>> best;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double sc = cos_sim(rows[i], query);
    auto it = std::find_if(best.begin(), best.end(), [&](const auto& b) { return b.first == ids[i]; });
    if (it == best.end()) best.emplace_back(ids[i], sc);
    else it->second = std::max(it->second, sc);
  }
  std::sort(best.begin(), best.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  return best;
}

// Reference AdamW on a flat vector, written from the update rule:
// p -= lr*wd*p; m = b1 m + (1-b1) g; v = b2 v + (1-b2) g^2;
// p -= lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps).
struct OracleAdamW {
  double b1 = 0.9, b2 = 0.999, eps = 1e-8, wd = 0.01;
  std::vector<double> m, v;
  long t = 0;

  void step(std::vector<double>& p, const std::vector<double>& g, double lr) {
    if (m.empty()) m.assign(p.size(), 0.0), v.assign(p.size(), 0.0);
    ++t;
    for (std::size_t i = 0; i < p.size(); ++i) {
      p[i] -= lr * wd * p[i];
      m[i] = b1 * m[i] + (1 - b1) * g[i];
      v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
      const double mh = m[i] / (1 - std::pow(b1, static_cast<double>(t)));
      const double vh = v[i] / (1 - std::pow(b2, static_cast<double>(t)));
      p[i] -= lr * mh / (std::sqrt(vh) + eps);
    }
  }
};

// Small multilingual dictionary used across tests.
inline const char* kTinyConcepts =
    "# CUI\tLANG\tSEMTYPE\tTERM\n"
    "C0004604\ten\tT184\tbackache\n"
    "C0004604\ten\tT184\tback pain\n"
    "C0004604\tes\tT184\tdolor de espalda\n"
    "C0018681\ten\tT184\theadache\n"
    "C0018681\tes\tT184\tcefalea\n"
    "C0018681\tde\tT184\tKopfschmerzen\n"
    "C0015967\ten\tT184\tfever\n"
    "C0015967\tes\tT184\tfiebre\n"
    "C0011849\ten\tT047\tdiabetes mellitus\n"
    "C0011849\tes\tT047\tdiabetes\n"
    "C0020538\ten\tT047\thypertension\n"
    "C0020538\ten\tT047\thigh blood pressure\n"
    "C0020538\tes\tT047\thipertensión\n";

inline const char* kTinyRelations =
    "C0004604\tRO|has_finding_site\tC0018681\n"
    "C0018681\tRO|has_finding_site\tC0004604\n"
    "C0011849\tCHD|is_a\tC0020538\n"
    "C0020538\tCHD|is_a\tC0011849\n"
    "C0015967\tRO|associated_with\tC0011849\n"
    "C0011849\tRO|associated_with\tC0015967\n";

}  // namespace testsupport
