#include "kge/encoder.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>

namespace kge {

Pooling parse_pooling(std::string_view name) {
  if (name == "cls") return Pooling::Cls;
  if (name == "avg" || name == "average") return Pooling::Average;
  throw ValidationError("unknown pooling '" + std::string(name) + "' (expected cls or avg)");
}

std::string_view pooling_name(Pooling p) { return p == Pooling::Cls ? "cls" : "avg"; }

EncoderParams EncoderParams::zeros(const EncoderDims& dims, std::vector<std::string> relation_labels) {
  if (dims.vocab_size == 0 || dims.model_dim == 0 || dims.ffn_dim == 0 || dims.embed_dim == 0 ||
      dims.max_len < 3)
    throw ValidationError("encoder dimensions must be positive and max_len >= 3");
  EncoderParams p;
  p.dims = dims;
  p.relation_labels = std::move(relation_labels);
  const auto V = static_cast<Eigen::Index>(dims.vocab_size);
  const auto d = static_cast<Eigen::Index>(dims.model_dim);
  const auto f = static_cast<Eigen::Index>(dims.ffn_dim);
  const auto l = static_cast<Eigen::Index>(dims.embed_dim);
  const auto T = static_cast<Eigen::Index>(dims.max_len);
  p.token_emb = Mat::Zero(V, d);
  p.pos_emb = Mat::Zero(T, d);
  p.w_q = Mat::Zero(d, d);
  p.w_k = Mat::Zero(d, d);
  p.w_v = Mat::Zero(d, d);
  p.w_o = Mat::Zero(d, d);
  p.ffn_w1 = Mat::Zero(d, f);
  p.ffn_b1 = Vec::Zero(f);
  p.ffn_w2 = Mat::Zero(f, d);
  p.ffn_b2 = Vec::Zero(d);
  p.out_w = Mat::Zero(d, l);
  p.out_b = Vec::Zero(l);
  p.rel_mats.assign(p.relation_labels.size(), Mat::Zero(l, l));
  p.rel_vecs.assign(p.relation_labels.size(), Vec::Zero(l));
  return p;
}

EncoderParams EncoderParams::random(const EncoderDims& dims, std::vector<std::string> relation_labels, Rng& rng,
                                    double init_std, double rel_noise) {
  EncoderParams p = zeros(dims, std::move(relation_labels));
  auto fill = [&](Mat& m, double s) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal(0.0, s);
  };
  fill(p.token_emb, init_std);
  fill(p.pos_emb, init_std);
  fill(p.w_q, init_std);
  fill(p.w_k, init_std);
  fill(p.w_v, init_std);
  fill(p.w_o, init_std);
  fill(p.ffn_w1, init_std);
  fill(p.ffn_w2, init_std);
  fill(p.out_w, init_std);
  for (auto& m : p.rel_mats) {
    fill(m, rel_noise);
    m.diagonal().array() += 1.0;
  }
  for (auto& r : p.rel_vecs)
    for (Eigen::Index i = 0; i < r.size(); ++i) r[i] = rng.normal(0.0, init_std);
  return p;
}

std::vector<TensorView> EncoderParams::tensors() {
  std::vector<TensorView> out;
  auto mat = [&](std::string name, Mat& m) {
    out.push_back({std::move(name), static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()), m.data()});
  };
  auto vec = [&](std::string name, Vec& v) {
    out.push_back({std::move(name), 1, static_cast<std::size_t>(v.size()), v.data()});
  };
  mat("token_emb", token_emb);
  mat("pos_emb", pos_emb);
  mat("w_q", w_q);
  mat("w_k", w_k);
  mat("w_v", w_v);
  mat("w_o", w_o);
  mat("ffn_w1", ffn_w1);
  vec("ffn_b1", ffn_b1);
  mat("ffn_w2", ffn_w2);
  vec("ffn_b2", ffn_b2);
  mat("out_w", out_w);
  vec("out_b", out_b);
  for (std::size_t r = 0; r < rel_mats.size(); ++r) mat("rel_mat[" + relation_labels[r] + "]", rel_mats[r]);
  for (std::size_t r = 0; r < rel_vecs.size(); ++r) vec("rel_vec[" + relation_labels[r] + "]", rel_vecs[r]);
  return out;
}

std::size_t EncoderParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : const_cast<EncoderParams*>(this)->tensors()) n += t.size();
  return n;
}

void EncoderParams::set_zero() {
  for (auto& t : tensors()) std::fill(t.data, t.data + t.size(), 0.0);
}

EncoderParams& EncoderParams::operator+=(const EncoderParams& other) {
  auto mine = tensors();
  auto theirs = const_cast<EncoderParams&>(other).tensors();
  if (mine.size() != theirs.size()) throw ValidationError("parameter layout mismatch");
  for (std::size_t i = 0; i < mine.size(); ++i) {
    if (mine[i].size() != theirs[i].size()) throw ValidationError("shape mismatch in " + mine[i].name);
    for (std::size_t j = 0; j < mine[i].size(); ++j) mine[i].data[j] += theirs[i].data[j];
  }
  return *this;
}

EncoderParams& EncoderParams::operator*=(double s) {
  for (auto& t : tensors())
    for (auto& x : t.values()) x *= s;
  return *this;
}

bool EncoderParams::all_finite() const {
  for (const auto& t : const_cast<EncoderParams*>(this)->tensors())
    for (double x : t.values())
      if (!std::isfinite(x)) return false;
  return true;
}

bool EncoderParams::operator==(const EncoderParams& o) const {
  if (!(dims == o.dims) || relation_labels != o.relation_labels) return false;
  auto a = const_cast<EncoderParams*>(this)->tensors();
  auto b = const_cast<EncoderParams&>(o).tensors();
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].rows != b[i].rows || a[i].cols != b[i].cols) return false;
    if (std::memcmp(a[i].data, b[i].data, a[i].size() * sizeof(double)) != 0) return false;
  }
  return true;
}

// --- checkpoint -----------------------------------------------------------

namespace {

constexpr std::array<char, 4> kMagic = {'K', 'G', 'E', '1'};

template <typename T>
void put_le(std::ostream& out, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  const U bits = std::bit_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(U); ++i) out.put(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

template <typename T>
T get_le(std::istream& in) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    const int c = in.get();
    if (c == std::char_traits<char>::eof()) throw ValidationError("truncated checkpoint");
    bits |= static_cast<U>(static_cast<unsigned char>(c)) << (8 * i);
  }
  return std::bit_cast<T>(bits);
}

}  // namespace

void EncoderParams::save(const std::filesystem::path& path, Precision precision) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot write checkpoint: " + path.string());
  out.write(kMagic.data(), kMagic.size());
  for (std::size_t v : {dims.vocab_size, dims.model_dim, dims.ffn_dim, dims.embed_dim, dims.max_len,
                        relation_labels.size()})
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(v));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(precision));
  for (const auto& label : relation_labels) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(label.size()));
    out.write(label.data(), static_cast<std::streamsize>(label.size()));
  }
  for (const auto& t : const_cast<EncoderParams*>(this)->tensors()) {
    for (double x : t.values()) {
      if (precision == Precision::Float32)
        put_le<float>(out, static_cast<float>(x));
      else
        put_le<double>(out, x);
    }
  }
  if (!out) throw RuntimeError("failed writing checkpoint: " + path.string());
}

EncoderParams EncoderParams::load(const std::filesystem::path& path, Precision* precision) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open checkpoint: " + path.string());
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw ValidationError("not a checkpoint (bad magic): " + path.string());
  EncoderDims dims;
  dims.vocab_size = get_le<std::uint32_t>(in);
  dims.model_dim = get_le<std::uint32_t>(in);
  dims.ffn_dim = get_le<std::uint32_t>(in);
  dims.embed_dim = get_le<std::uint32_t>(in);
  dims.max_len = get_le<std::uint32_t>(in);
  const std::size_t relations = get_le<std::uint32_t>(in);
  const auto tag = get_le<std::uint32_t>(in);
  if (tag != static_cast<std::uint32_t>(Precision::Float32) && tag != static_cast<std::uint32_t>(Precision::Float64))
    throw ValidationError("unknown checkpoint precision tag " + std::to_string(tag));
  std::vector<std::string> labels;
  for (std::size_t r = 0; r < relations; ++r) {
    const auto len = get_le<std::uint32_t>(in);
    if (len > (1u << 20)) throw ValidationError("corrupt relation label length");
    std::string s(len, '\0');
    in.read(s.data(), len);
    if (!in) throw ValidationError("truncated checkpoint");
    labels.push_back(std::move(s));
  }
  EncoderParams p = zeros(dims, std::move(labels));
  for (auto& t : p.tensors())
    for (auto& x : t.values())
      x = tag == static_cast<std::uint32_t>(Precision::Float32) ? static_cast<double>(get_le<float>(in))
                                                                 : get_le<double>(in);
  if (in.peek() != std::char_traits<char>::eof()) throw ValidationError("trailing bytes in checkpoint");
  if (precision) *precision = static_cast<Precision>(tag);
  return p;
}

// --- forward / backward ----------------------------------------------------

namespace {

std::size_t validate_tokens(const EncoderParams& params, const TokenSequence& tokens) {
  if (tokens.ids.size() != tokens.mask.size()) throw ValidationError("token ids and mask differ in length");
  if (tokens.ids.size() > params.dims.max_len)
    throw ValidationError("sequence longer than the encoder's max_len");
  std::size_t length = 0;
  for (std::size_t i = 0; i < tokens.ids.size(); ++i) {
    const auto id = tokens.ids[i];
    if (id < 0 || static_cast<std::size_t>(id) >= params.dims.vocab_size)
      throw ValidationError("token id " + std::to_string(id) + " out of vocabulary range");
    if (tokens.mask[i]) {
      if (length != i) throw ValidationError("attention mask must be a prefix");
      ++length;
    }
  }
  if (length == 0) throw ValidationError("empty token sequence");
  return length;
}

}  // namespace

ForwardCache forward_rows(const EncoderParams& params, const TokenSequence& tokens, std::size_t rows) {
  ForwardCache c;
  c.length = validate_tokens(params, tokens);
  if (rows == 0 || rows > tokens.ids.size()) throw ValidationError("invalid query row count");
  c.rows = rows;
  const auto L = static_cast<Eigen::Index>(c.length);
  const auto R = static_cast<Eigen::Index>(rows);
  const auto n = std::max(L, R);
  const auto d = static_cast<Eigen::Index>(params.dims.model_dim);

  c.x.resize(n, d);
  for (Eigen::Index p = 0; p < n; ++p)
    c.x.row(p) = params.token_emb.row(tokens.ids[static_cast<std::size_t>(p)]) + params.pos_emb.row(p);

  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  c.q.noalias() = c.x.topRows(R) * params.w_q;
  c.k.noalias() = c.x.topRows(L) * params.w_k;
  c.v.noalias() = c.x.topRows(L) * params.w_v;
  c.attn.noalias() = (c.q * c.k.transpose()) * scale;
  for (Eigen::Index i = 0; i < R; ++i) {
    auto row = c.attn.row(i);
    const double mx = row.maxCoeff();
    row = (row.array() - mx).exp();
    row /= row.sum();
  }
  c.ctx.noalias() = c.attn * c.v;
  c.y = c.x.topRows(R);
  c.y.noalias() += c.ctx * params.w_o;
  c.z.noalias() = c.y * params.ffn_w1;
  c.z.rowwise() += params.ffn_b1.transpose();
  c.z = c.z.array().tanh();
  c.u = c.y;
  c.u.noalias() += c.z * params.ffn_w2;
  c.u.rowwise() += params.ffn_b2.transpose();
  c.h.noalias() = c.u * params.out_w;
  c.h.rowwise() += params.out_b.transpose();
  return c;
}

void backward_rows(const EncoderParams& params, const TokenSequence& tokens, const ForwardCache& c, const Mat& dh,
                   ParamGrads& g) {
  if (dh.rows() != c.h.rows() || dh.cols() != c.h.cols()) throw ValidationError("upstream gradient shape mismatch");
  if (!(g.dims == params.dims) || g.rel_mats.size() != params.rel_mats.size())
    throw ValidationError("gradient buffer does not match parameters");
  const auto L = static_cast<Eigen::Index>(c.length);
  const auto R = static_cast<Eigen::Index>(c.rows);
  const double scale = 1.0 / std::sqrt(static_cast<double>(params.dims.model_dim));

  g.out_w.noalias() += c.u.transpose() * dh;
  g.out_b += dh.colwise().sum().transpose();
  Mat du = dh * params.out_w.transpose();

  g.ffn_w2.noalias() += c.z.transpose() * du;
  g.ffn_b2 += du.colwise().sum().transpose();
  Mat dpre = (du * params.ffn_w2.transpose()).array() * (1.0 - c.z.array().square());
  g.ffn_w1.noalias() += c.y.transpose() * dpre;
  g.ffn_b1 += dpre.colwise().sum().transpose();
  Mat dy = du;
  dy.noalias() += dpre * params.ffn_w1.transpose();

  g.w_o.noalias() += c.ctx.transpose() * dy;
  Mat dctx = dy * params.w_o.transpose();
  Mat dattn = dctx * c.v.transpose();
  Mat dv = c.attn.transpose() * dctx;
  // softmax backward: ds = a * (da - sum(da * a))
  Mat dscores(R, L);
  for (Eigen::Index i = 0; i < R; ++i) {
    const double dot = c.attn.row(i).dot(dattn.row(i));
    dscores.row(i) = c.attn.row(i).array() * (dattn.row(i).array() - dot);
  }
  dscores *= scale;
  Mat dq = dscores * c.k;
  Mat dk = dscores.transpose() * c.q;

  const auto xr = c.x.topRows(R);
  const auto xl = c.x.topRows(L);
  g.w_q.noalias() += xr.transpose() * dq;
  g.w_k.noalias() += xl.transpose() * dk;
  g.w_v.noalias() += xl.transpose() * dv;

  Mat dx = Mat::Zero(c.x.rows(), c.x.cols());
  dx.topRows(R) += dy;
  dx.topRows(R).noalias() += dq * params.w_q.transpose();
  dx.topRows(L).noalias() += dk * params.w_k.transpose();
  dx.topRows(L).noalias() += dv * params.w_v.transpose();
  for (Eigen::Index p = 0; p < dx.rows(); ++p) {
    g.token_emb.row(tokens.ids[static_cast<std::size_t>(p)]) += dx.row(p);
    g.pos_emb.row(p) += dx.row(p);
  }
}

HiddenStates forward(const EncoderParams& params, const TokenSequence& tokens) {
  auto cache = forward_rows(params, tokens, tokens.ids.size());
  return {std::move(cache.h), tokens.mask};
}

ParamGrads backward(const EncoderParams& params, const TokenSequence& tokens, const Mat& upstream) {
  auto cache = forward_rows(params, tokens, tokens.ids.size());
  ParamGrads grads = params.zeros_like();
  backward_rows(params, tokens, cache, upstream, grads);
  return grads;
}

Vec cls_pool(const HiddenStates& hidden) { return hidden.h.row(0).transpose(); }

Vec avg_pool(const HiddenStates& hidden) {
  Vec sum = Vec::Zero(hidden.h.cols());
  std::size_t n = 0;
  for (std::size_t i = 0; i < hidden.mask.size(); ++i) {
    if (!hidden.mask[i]) continue;
    sum += hidden.h.row(static_cast<Eigen::Index>(i)).transpose();
    ++n;
  }
  return n == 0 ? sum : Vec(sum / static_cast<double>(n));
}

PooledPass pooled_forward(const EncoderParams& params, const TokenSequence& tokens, Pooling pooling) {
  PooledPass pass;
  pass.pooling = pooling;
  if (pooling == Pooling::Cls) {
    pass.cache = forward_rows(params, tokens, 1);
    pass.embedding = pass.cache.h.row(0).transpose();
  } else {
    const std::size_t length = validate_tokens(params, tokens);
    pass.cache = forward_rows(params, tokens, length);
    pass.embedding = pass.cache.h.colwise().mean().transpose();
  }
  return pass;
}

void pooled_backward(const EncoderParams& params, const TokenSequence& tokens, const PooledPass& pass,
                     const Vec& d_embedding, ParamGrads& grads) {
  const auto rows = pass.cache.h.rows();
  Mat dh(rows, pass.cache.h.cols());
  if (pass.pooling == Pooling::Cls) {
    dh.row(0) = d_embedding.transpose();
  } else {
    for (Eigen::Index i = 0; i < rows; ++i) dh.row(i) = d_embedding.transpose() / static_cast<double>(rows);
  }
  backward_rows(params, tokens, pass.cache, dh, grads);
}

TermEncoder::TermEncoder(EncoderParams params, Vocab vocab) : params_(std::move(params)), vocab_(std::move(vocab)) {
  if (params_.dims.vocab_size != vocab_.size())
    throw ValidationError("checkpoint vocabulary size " + std::to_string(params_.dims.vocab_size) +
                          " does not match vocab file size " + std::to_string(vocab_.size()));
}

TermEncoder TermEncoder::load(const std::filesystem::path& checkpoint, const std::filesystem::path& vocab) {
  return TermEncoder(EncoderParams::load(checkpoint), Vocab::load(vocab));
}

TokenSequence TermEncoder::tokens(std::string_view surface) const {
  return tokenize(surface, vocab_, params_.dims.max_len);
}

Vec TermEncoder::embed(std::string_view surface, Pooling pooling) const {
  return pooled_forward(params_, tokens(surface), pooling).embedding;
}

}  // namespace kge
