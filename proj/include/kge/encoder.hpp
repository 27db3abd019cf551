#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kge/common.hpp"
#include "kge/tokenizer.hpp"

namespace kge {

struct EncoderDims {
  std::size_t vocab_size = 0;  // V
  std::size_t model_dim = 64;  // d
  std::size_t ffn_dim = 128;   // f
  std::size_t embed_dim = 64;  // l
  std::size_t max_len = 32;

  bool operator==(const EncoderDims&) const = default;
};

enum class Precision : std::uint32_t { Float32 = 1, Float64 = 2 };

enum class Pooling { Cls, Average };

Pooling parse_pooling(std::string_view name);
std::string_view pooling_name(Pooling p);

// Mutable view of one parameter tensor, row-major.
struct TensorView {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  double* data = nullptr;

  std::size_t size() const { return rows * cols; }
  std::span<double> values() const { return {data, size()}; }
};

// All trainable tensors. ParamGrads shares the layout.
struct EncoderParams {
  EncoderDims dims;
  std::vector<std::string> relation_labels;

  Mat token_emb;  // V x d
  Mat pos_emb;    // max_len x d
  Mat w_q, w_k, w_v, w_o;  // d x d
  Mat ffn_w1;  // d x f
  Vec ffn_b1;  // f
  Mat ffn_w2;  // f x d
  Vec ffn_b2;  // d
  Mat out_w;   // d x l
  Vec out_b;   // l
  std::vector<Mat> rel_mats;  // |R| of l x l
  std::vector<Vec> rel_vecs;  // |R| of l

  // Zero-filled tensors of the given shape.
  static EncoderParams zeros(const EncoderDims& dims, std::vector<std::string> relation_labels);
  // N(0, std^2) weights, zero biases, M_r = I + N(0, rel_noise^2).
  static EncoderParams random(const EncoderDims& dims, std::vector<std::string> relation_labels, Rng& rng,
                              double init_std = 0.02, double rel_noise = 0.01);

  EncoderParams zeros_like() const { return zeros(dims, relation_labels); }
  std::size_t relation_count() const { return relation_labels.size(); }

  // Fixed field order: token_emb, pos_emb, w_q, w_k, w_v, w_o, ffn_w1,
  // ffn_b1, ffn_w2, ffn_b2, out_w, out_b, rel_mat[r]..., rel_vec[r]...
  std::vector<TensorView> tensors();
  std::size_t parameter_count() const;

  void set_zero();
  EncoderParams& operator+=(const EncoderParams& other);
  EncoderParams& operator*=(double s);
  bool all_finite() const;

  void save(const std::filesystem::path& path, Precision precision = Precision::Float64) const;
  static EncoderParams load(const std::filesystem::path& path, Precision* precision = nullptr);

  bool operator==(const EncoderParams& o) const;
};

using ParamGrads = EncoderParams;

struct HiddenStates {
  Mat h;  // max_len x l
  std::vector<std::uint8_t> mask;
};

// Intermediates of one pass over the first `rows` query positions; keys
// and values always span the non-pad region.
struct ForwardCache {
  std::size_t length = 0;  // non-pad positions
  std::size_t rows = 0;    // query rows computed
  Mat x;      // max(rows, length) x d
  Mat q;      // rows x d
  Mat k, v;   // length x d
  Mat attn;   // rows x length
  Mat ctx;    // rows x d
  Mat y;      // rows x d, after attention residual
  Mat z;      // rows x f, tanh activations
  Mat u;      // rows x d, after ffn residual
  Mat h;      // rows x l
};

ForwardCache forward_rows(const EncoderParams& params, const TokenSequence& tokens, std::size_t rows);
// Accumulates gradients for d(loss)/d(cache.h) into grads.
void backward_rows(const EncoderParams& params, const TokenSequence& tokens, const ForwardCache& cache,
                   const Mat& dh, ParamGrads& grads);

HiddenStates forward(const EncoderParams& params, const TokenSequence& tokens);
ParamGrads backward(const EncoderParams& params, const TokenSequence& tokens, const Mat& upstream);

Vec cls_pool(const HiddenStates& hidden);
Vec avg_pool(const HiddenStates& hidden);

// Pooled embedding computing only the rows the pooling reads.
struct PooledPass {
  Pooling pooling = Pooling::Cls;
  ForwardCache cache;
  Vec embedding;
};

PooledPass pooled_forward(const EncoderParams& params, const TokenSequence& tokens, Pooling pooling);
void pooled_backward(const EncoderParams& params, const TokenSequence& tokens, const PooledPass& pass,
                     const Vec& d_embedding, ParamGrads& grads);

// Params + vocab: surface text in, pooled embedding out.
class TermEncoder {
 public:
  TermEncoder(EncoderParams params, Vocab vocab);

  static TermEncoder load(const std::filesystem::path& checkpoint, const std::filesystem::path& vocab);

  Vec embed(std::string_view surface, Pooling pooling) const;
  TokenSequence tokens(std::string_view surface) const;

  const EncoderParams& params() const { return params_; }
  EncoderParams& mutable_params() { return params_; }
  const Vocab& vocab() const { return vocab_; }

 private:
  EncoderParams params_;
  Vocab vocab_;
};

}  // namespace kge
