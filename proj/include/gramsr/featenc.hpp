#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gramsr/autodiff.hpp"
#include "gramsr/image.hpp"
#include "gramsr/params.hpp"

namespace gramsr {

// N x d row-major matrix of patch features.
struct FeatureMap {
  std::size_t num_patches = 0;
  std::size_t dim = 0;
  std::vector<double> values;

  double at(std::size_t i, std::size_t k) const { return values[i * dim + k]; }
  ad::Var to_var() const { return ad::Var::constant({num_patches, dim}, values); }
  static FeatureMap from_var(const ad::Var& v);
  friend bool operator==(const FeatureMap&, const FeatureMap&) = default;
};

// Adapter output, one conditioning token per patch.
using ConditioningTokens = FeatureMap;

struct GramMatrix {
  std::size_t size = 0;
  std::vector<double> values;

  double at(std::size_t i, std::size_t j) const { return values[i * size + j]; }
  friend bool operator==(const GramMatrix&, const GramMatrix&) = default;
};

enum class EncoderRole { conditioning, gram };
enum class GramNorm { global_frobenius, per_row };

std::string to_string(EncoderRole role);
EncoderRole encoder_role_from_string(const std::string& s);
std::string to_string(GramNorm mode);
GramNorm gram_norm_from_string(const std::string& s);

struct EncoderSpec {
  EncoderRole role = EncoderRole::conditioning;
  std::size_t patch_size = 8;
  std::size_t depth = 2;
  std::size_t dim = 32;
  std::uint64_t seed = 0;
  bool frozen = true;
  std::size_t in_channels = 3;

  friend bool operator==(const EncoderSpec&, const EncoderSpec&) = default;
};

// Conditioning and gram encoders must differ in seed and width.
void validate_encoder_pair(const EncoderSpec& conditioning, const EncoderSpec& gram);

// Frozen patch-feature encoder: patch embedding, 2-D sinusoidal positions,
// then `depth` pre-norm blocks of single-head self-attention and a GELU MLP.
// Weights are a pure function of the spec's seed.
class FeatureEncoder {
 public:
  explicit FeatureEncoder(EncoderSpec spec);

  const EncoderSpec& spec() const { return spec_; }

  FeatureMap extract(const Image& x) const;

  // x: [H, W, C]. Returns the residual stream after each block; the last entry
  // is the feature map.
  std::vector<ad::Var> forward_layers(const ad::Var& x) const;
  ad::Var forward(const ad::Var& x) const { return forward_layers(x).back(); }

  std::size_t num_patches(std::size_t h, std::size_t w) const;

 private:
  struct Block {
    ad::Var wq, wk, wv, wo, w1, b1, w2, b2;
  };

  ad::Var patchify(const ad::Var& x) const;
  ad::Var positions(std::size_t rows, std::size_t cols) const;

  EncoderSpec spec_;
  ad::Var embed_w_;
  ad::Var embed_b_;
  std::vector<Block> blocks_;
};

// Rowwise ReLU(f w1 + b1) w2 + b2, stored in the adapter parameter group as
// adapter.w1 [dim, hidden], adapter.b1, adapter.w2 [hidden, cond], adapter.b2.
struct AdapterParams {
  std::vector<double> w1, b1, w2, b2;
  std::size_t in_dim = 0, hidden = 0, out_dim = 0;
  bool trainable = false;
};

void register_adapter(ParamStore& store, std::size_t in_dim, std::size_t hidden, std::size_t out_dim,
                      Rng& rng);
AdapterParams adapter_params(const ParamStore& store);

ConditioningTokens adapt(const FeatureMap& f, const AdapterParams& params);
ad::Var adapt(const ad::Var& f, ParamBinder& binder);

// Normalizes f (whole-matrix Frobenius norm or per row) and returns F F^T.
// Throws DegenerateInputError on a zero-norm input.
GramMatrix gram(const FeatureMap& f, GramNorm mode = GramNorm::global_frobenius);
ad::Var gram(const ad::Var& f, GramNorm mode = GramNorm::global_frobenius);

// (1/N^2) * ||ga - gb||_F^2
double gram_distance(const GramMatrix& ga, const GramMatrix& gb);
ad::Var gram_distance(const ad::Var& ga, const ad::Var& gb);

ad::Var image_to_var(const Image& img);

}  // namespace gramsr
