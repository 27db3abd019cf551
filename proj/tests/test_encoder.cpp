#include <doctest.h>

#include "kge/encoder.hpp"
#include "kge/tokenizer.hpp"
#include "support.hpp"

using namespace kge;

namespace {

EncoderDims small_dims() { return EncoderDims{12, 6, 8, 5, 7}; }

TokenSequence seq(std::vector<TokenId> body, std::size_t max_len) {
  TokenSequence s;
  s.ids.assign(max_len, kPadId);
  s.mask.assign(max_len, 0);
  s.ids[0] = kClsId;
  for (std::size_t i = 0; i < body.size(); ++i) s.ids[i + 1] = body[i];
  s.ids[body.size() + 1] = kSepId;
  for (std::size_t i = 0; i < body.size() + 2; ++i) s.mask[i] = 1;
  return s;
}

EncoderParams random_params(std::uint64_t seed, double std = 0.3) {
  Rng rng(seed);
  return EncoderParams::random(small_dims(), {"A|x", "B|y"}, rng, std, std);
}

// Weighted sum of the non-pad hidden rows: a scalar loss with known dL/dH.
double weighted(const HiddenStates& hs, const Mat& w) {
  double s = 0.0;
  for (Eigen::Index r = 0; r < hs.h.rows(); ++r)
    if (hs.mask[static_cast<std::size_t>(r)]) s += hs.h.row(r).dot(w.row(r));
  return s;
}

}  // namespace

TEST_CASE("zero parameters give zero hidden states") {
  const auto p = EncoderParams::zeros(small_dims(), {});
  const auto hs = forward(p, seq({4, 5}, 7));
  CHECK(hs.h.rows() == 7);
  CHECK(hs.h.cols() == 5);
  CHECK(hs.h.isZero(0.0));
}

TEST_CASE("forward is deterministic and position-sensitive") {
  const auto p = random_params(1);
  const auto a = forward(p, seq({4, 5}, 7));
  const auto b = forward(p, seq({4, 5}, 7));
  CHECK(a.h == b.h);
  const auto swapped = forward(p, seq({5, 4}, 7));
  CHECK((swapped.h.row(0) - a.h.row(0)).norm() > 1e-6);
}

TEST_CASE("forward rejects out-of-range ids") {
  const auto p = random_params(1);
  CHECK_THROWS_AS(forward(p, seq({12}, 7)), ValidationError);
}

TEST_CASE("poolings") {
  HiddenStates hs;
  hs.h = Mat::Zero(4, 2);
  hs.h << 1, 2, 3, 4, 100, 100, 7, 7;
  hs.mask = {1, 1, 0, 0};
  CHECK(cls_pool(hs) == Vec((Vec(2) << 1, 2).finished()));
  CHECK(avg_pool(hs).isApprox((Vec(2) << 2, 3).finished()));
  hs.h(3, 0) = -50;  // pad row
  CHECK(avg_pool(hs).isApprox((Vec(2) << 2, 3).finished()));

  HiddenStates z;
  z.h = Mat::Zero(3, 2);
  z.mask = {1, 1, 1};
  CHECK(cls_pool(z).isZero(0.0));

  HiddenStates eq;
  eq.h = Mat::Constant(3, 2, 0.25);
  eq.mask = {1, 1, 1};
  CHECK(avg_pool(eq).isApprox(Vec::Constant(2, 0.25)));
}

TEST_CASE("pad tokens never influence pooled outputs") {
  const auto p = random_params(2);
  auto a = seq({4, 5}, 7);
  auto b = a;
  b.ids[5] = 9;  // beyond [SEP], masked out
  for (auto pool : {Pooling::Cls, Pooling::Average}) {
    CHECK(pooled_forward(p, a, pool).embedding == pooled_forward(p, b, pool).embedding);
  }
}

TEST_CASE("pooled fast path matches the full forward") {
  const auto p = random_params(3);
  const auto s = seq({4, 7, 9}, 7);
  const auto full = forward(p, s);
  CHECK((pooled_forward(p, s, Pooling::Cls).embedding - cls_pool(full)).norm() < 1e-13);
  CHECK((pooled_forward(p, s, Pooling::Average).embedding - avg_pool(full)).norm() < 1e-13);
}

TEST_CASE("backward: zero upstream gives zero gradients; unused token rows stay zero") {
  const auto p = random_params(4);
  const auto s = seq({4, 5}, 7);
  const auto g0 = backward(p, s, Mat::Zero(7, 5));
  auto gz = g0;
  gz.set_zero();
  CHECK(g0 == gz);

  Rng rng(5);
  Mat up(7, 5);
  for (Eigen::Index i = 0; i < up.size(); ++i) up.data()[i] = rng.normal();
  for (Eigen::Index r = 4; r < 7; ++r) up.row(r).setZero();  // pad rows
  const auto g = backward(p, s, up);
  CHECK(g.token_emb.row(8).isZero(0.0));
  CHECK(g.token_emb.row(kPadId).isZero(0.0));
  CHECK_FALSE(g.token_emb.row(4).isZero(0.0));
  for (const auto& m : g.rel_mats) CHECK(m.isZero(0.0));
}

TEST_CASE("backward matches central differences on every tensor") {
  auto p = random_params(6);
  const auto s = seq({4, 5, 11}, 7);
  Rng rng(7);
  Mat w(7, 5);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.normal();
  Mat up = w;
  for (Eigen::Index r = 0; r < up.rows(); ++r)
    if (!s.mask[static_cast<std::size_t>(r)]) up.row(r).setZero();
  auto g = backward(p, s, up);

  auto pt = p.tensors();
  auto gt = g.tensors();
  const double h = 1e-5;
  for (std::size_t t = 0; t < pt.size(); ++t) {
    if (pt[t].name.rfind("rel_", 0) == 0) continue;  // not touched by forward
    for (int trial = 0; trial < 6; ++trial) {
      std::size_t idx = rng.uniform_index(pt[t].size());
      if (pt[t].name == "token_emb") idx = static_cast<std::size_t>(s.ids[rng.uniform_index(5)]) * pt[t].cols + rng.uniform_index(pt[t].cols);
      const double saved = pt[t].data[idx];
      pt[t].data[idx] = saved + h;
      const double fp = weighted(forward(p, s), w);
      pt[t].data[idx] = saved - h;
      const double fm = weighted(forward(p, s), w);
      pt[t].data[idx] = saved;
      const double numeric = (fp - fm) / (2 * h);
      const double analytic = gt[t].data[idx];
      INFO(pt[t].name << "[" << idx << "] analytic " << analytic << " numeric " << numeric);
      CHECK(std::abs(analytic - numeric) <= 1e-4 * std::max({std::abs(analytic), std::abs(numeric), 1e-6}));
    }
  }
}

TEST_CASE("pooled backward matches central differences") {
  auto p = random_params(8);
  const auto s = seq({6, 4}, 7);
  Rng rng(9);
  Vec w(5);
  for (Eigen::Index i = 0; i < 5; ++i) w[i] = rng.normal();
  for (auto pool : {Pooling::Cls, Pooling::Average}) {
    const auto pass = pooled_forward(p, s, pool);
    auto g = p.zeros_like();
    pooled_backward(p, s, pass, w, g);
    auto pt = p.tensors();
    auto gt = g.tensors();
    for (std::size_t t = 0; t < 12; ++t) {
      const std::size_t idx = pt[t].name == "token_emb" ? 6 * pt[t].cols + 1 : rng.uniform_index(pt[t].size());
      const double saved = pt[t].data[idx];
      pt[t].data[idx] = saved + 1e-5;
      const double fp = pooled_forward(p, s, pool).embedding.dot(w);
      pt[t].data[idx] = saved - 1e-5;
      const double fm = pooled_forward(p, s, pool).embedding.dot(w);
      pt[t].data[idx] = saved;
      const double numeric = (fp - fm) / 2e-5;
      INFO(pooling_name(pool) << " " << pt[t].name);
      CHECK(std::abs(gt[t].data[idx] - numeric) <= 1e-4 * std::max({std::abs(numeric), std::abs(gt[t].data[idx]), 1e-6}));
    }
  }
}

TEST_CASE("initialization follows the documented scheme") {
  Rng rng(10);
  EncoderDims dims{500, 64, 128, 64, 32};
  const auto p = EncoderParams::random(dims, {"r"}, rng, 0.02, 0.01);
  const double mean = p.token_emb.mean();
  const double sd = std::sqrt((p.token_emb.array() - mean).square().mean());
  CHECK(std::abs(mean) < 1e-3);
  CHECK(sd == doctest::Approx(0.02).epsilon(0.02));
  CHECK(p.ffn_b1.isZero(0.0));
  CHECK(p.out_b.isZero(0.0));
  const Mat noise = p.rel_mats[0] - Mat::Identity(64, 64);
  CHECK(std::sqrt(noise.array().square().mean()) == doctest::Approx(0.01).epsilon(0.05));
  CHECK(p.relation_count() == 1);
}

TEST_CASE("checkpoint round trip") {
  testsupport::TempDir dir("ckpt");
  const auto p = random_params(11);
  p.save(dir / "a.ckpt");
  Precision prec{};
  const auto q = EncoderParams::load(dir / "a.ckpt", &prec);
  CHECK(prec == Precision::Float64);
  CHECK(q == p);
  CHECK(q.relation_labels == p.relation_labels);

  const auto bytes = testsupport::read_bytes(dir / "a.ckpt");
  CHECK(bytes.substr(0, 4) == "KGE1");

  p.save(dir / "f.ckpt", Precision::Float32);
  const auto f = EncoderParams::load(dir / "f.ckpt", &prec);
  CHECK(prec == Precision::Float32);
  CHECK((f.w_q - p.w_q).cwiseAbs().maxCoeff() < 1e-6);
  // float32 values survive a second round trip exactly
  f.save(dir / "f2.ckpt", Precision::Float32);
  CHECK(testsupport::read_bytes(dir / "f2.ckpt") == testsupport::read_bytes(dir / "f.ckpt"));

  testsupport::write_text(dir / "bad.ckpt", "NOPE" + bytes.substr(4));
  CHECK_THROWS_AS(EncoderParams::load(dir / "bad.ckpt"), ValidationError);
  testsupport::write_text(dir / "short.ckpt", bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(EncoderParams::load(dir / "short.ckpt"), ValidationError);
  testsupport::write_text(dir / "long.ckpt", bytes + "x");
  CHECK_THROWS_AS(EncoderParams::load(dir / "long.ckpt"), ValidationError);
}

TEST_CASE("TermEncoder checks vocabulary size") {
  const auto p = random_params(12);
  CHECK_THROWS_AS(TermEncoder(p, Vocab::from_tokens({"a"})), ValidationError);
  std::vector<std::string> toks;
  for (int i = 0; i < 8; ++i) toks.push_back(std::string(1, static_cast<char>('a' + i)));
  const TermEncoder enc(p, Vocab::from_tokens(toks));
  const Vec e = enc.embed("abc", Pooling::Cls);
  CHECK(e.size() == 5);
  CHECK(e == enc.embed("ABC", Pooling::Cls));
}
