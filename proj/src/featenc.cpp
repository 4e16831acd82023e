#include "gramsr/featenc.hpp"

#include <cmath>

#include "gramsr/error.hpp"
#include "gramsr/rng.hpp"

namespace gramsr {

FeatureMap FeatureMap::from_var(const ad::Var& v) {
  if (v.shape().size() != 2) throw ShapeError("feature map: expected [N,d] tensor");
  return FeatureMap{v.dim(0), v.dim(1), std::vector<double>(v.value().begin(), v.value().end())};
}

std::string to_string(EncoderRole role) { return role == EncoderRole::conditioning ? "conditioning" : "gram"; }

EncoderRole encoder_role_from_string(const std::string& s) {
  if (s == "conditioning") return EncoderRole::conditioning;
  if (s == "gram") return EncoderRole::gram;
  throw ConfigError("unknown encoder role: " + s);
}

std::string to_string(GramNorm mode) {
  return mode == GramNorm::global_frobenius ? "global_frobenius" : "per_row";
}

GramNorm gram_norm_from_string(const std::string& s) {
  if (s == "global_frobenius") return GramNorm::global_frobenius;
  if (s == "per_row") return GramNorm::per_row;
  throw ConfigError("unknown gram norm mode: " + s);
}

void validate_encoder_pair(const EncoderSpec& conditioning, const EncoderSpec& gram) {
  if (conditioning.role != EncoderRole::conditioning || gram.role != EncoderRole::gram)
    throw ConfigError("encoder specs carry the wrong roles");
  if (conditioning.seed == gram.seed) throw ConfigError("conditioning and gram encoders share a seed");
  if (conditioning.dim == gram.dim) throw ConfigError("conditioning and gram encoders share a width");
  for (const auto* s : {&conditioning, &gram})
    if (s->patch_size == 0 || s->depth == 0 || s->dim == 0 || !s->frozen)
      throw ConfigError("encoder spec must be frozen with positive patch size, depth and width");
}

namespace {

ad::Var seeded(Rng& rng, ad::Shape shape, std::size_t fan_in) {
  const double bound = std::sqrt(3.0 / static_cast<double>(fan_in));
  const auto n = ad::numel(shape);
  return ad::Var::constant(std::move(shape), uniform_init(rng, n, bound));
}

}  // namespace

FeatureEncoder::FeatureEncoder(EncoderSpec spec) : spec_(spec) {
  if (spec_.patch_size == 0 || spec_.depth == 0 || spec_.dim == 0)
    throw ConfigError("encoder spec: patch size, depth and dim must be positive");
  Rng rng(spec_.seed);
  const std::size_t d = spec_.dim, in = spec_.patch_size * spec_.patch_size * spec_.in_channels;
  embed_w_ = seeded(rng, {in, d}, in);
  embed_b_ = ad::Var::zeros({d});
  for (std::size_t b = 0; b < spec_.depth; ++b) {
    Block blk;
    blk.wq = seeded(rng, {d, d}, d);
    blk.wk = seeded(rng, {d, d}, d);
    blk.wv = seeded(rng, {d, d}, d);
    blk.wo = seeded(rng, {d, d}, d);
    blk.w1 = seeded(rng, {d, 2 * d}, d);
    blk.b1 = ad::Var::zeros({2 * d});
    blk.w2 = seeded(rng, {2 * d, d}, 2 * d);
    blk.b2 = ad::Var::zeros({d});
    blocks_.push_back(std::move(blk));
  }
}

std::size_t FeatureEncoder::num_patches(std::size_t h, std::size_t w) const {
  return (h / spec_.patch_size) * (w / spec_.patch_size);
}

ad::Var FeatureEncoder::patchify(const ad::Var& x) const {
  if (x.shape().size() != 3) throw ShapeError("encoder: expected [H,W,C] input");
  const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2), p = spec_.patch_size;
  if (c != spec_.in_channels)
    throw ShapeError("encoder: expected " + std::to_string(spec_.in_channels) + " channels");
  if (h % p || w % p)
    throw SizeError("encoder: " + std::to_string(h) + "x" + std::to_string(w) +
                    " not divisible by patch size " + std::to_string(p));
  const std::size_t rows = h / p, cols = w / p, n = rows * cols, width = p * p * c;
  std::vector<std::int64_t> idx(n * width);
  std::size_t i = 0;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t q = 0; q < cols; ++q)
      for (std::size_t dy = 0; dy < p; ++dy)
        for (std::size_t dx = 0; dx < p; ++dx)
          for (std::size_t k = 0; k < c; ++k)
            idx[i++] = static_cast<std::int64_t>(((r * p + dy) * w + q * p + dx) * c + k);
  return ad::gather(x, std::move(idx), {n, width});
}

ad::Var FeatureEncoder::positions(std::size_t rows, std::size_t cols) const {
  const std::size_t d = spec_.dim, half = d / 2;
  std::vector<double> pe(rows * cols * d, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t q = 0; q < cols; ++q) {
      double* row = pe.data() + (r * cols + q) * d;
      // First half encodes the patch row, second half the patch column.
      for (std::size_t part = 0; part < 2; ++part) {
        const double pos = static_cast<double>(part == 0 ? r : q);
        const std::size_t off = part * half, len = part == 0 ? half : d - half;
        for (std::size_t k = 0; k < len; k += 2) {
          const double freq = std::pow(10000.0, -static_cast<double>(k) / static_cast<double>(len));
          row[off + k] = std::sin(pos * freq);
          if (k + 1 < len) row[off + k + 1] = std::cos(pos * freq);
        }
      }
    }
  return ad::Var::constant({rows * cols, d}, std::move(pe));
}

std::vector<ad::Var> FeatureEncoder::forward_layers(const ad::Var& x) const {
  using namespace ad;
  const Var patches = patchify(x);
  const std::size_t rows = x.dim(0) / spec_.patch_size, cols = x.dim(1) / spec_.patch_size;
  Var h = add(add_bias(matmul(patches, embed_w_), embed_b_), positions(rows, cols));
  const double attn_scale = 1.0 / std::sqrt(static_cast<double>(spec_.dim));
  std::vector<Var> layers;
  for (const auto& blk : blocks_) {
    const Var n1 = layer_norm_rows(h);
    const Var q = matmul(n1, blk.wq), k = matmul(n1, blk.wk), v = matmul(n1, blk.wv);
    const Var attn = softmax_rows(scale(matmul_nt(q, k), attn_scale));
    h = add(h, matmul(matmul(attn, v), blk.wo));
    const Var n2 = layer_norm_rows(h);
    h = add(h, add_bias(matmul(gelu(add_bias(matmul(n2, blk.w1), blk.b1)), blk.w2), blk.b2));
    layers.push_back(h);
  }
  return layers;
}

FeatureMap FeatureEncoder::extract(const Image& x) const {
  return FeatureMap::from_var(forward(image_to_var(x)));
}

ad::Var image_to_var(const Image& img) {
  return ad::Var::constant({img.height, img.width, img.channels}, img.data);
}

void register_adapter(ParamStore& store, std::size_t in_dim, std::size_t hidden, std::size_t out_dim,
                      Rng& rng) {
  store.add("adapter.w1", {in_dim, hidden},
            uniform_init(rng, in_dim * hidden, std::sqrt(6.0 / static_cast<double>(in_dim))),
            group::kAdapter);
  store.add("adapter.b1", {hidden}, std::vector<double>(hidden, 0.0), group::kAdapter);
  store.add("adapter.w2", {hidden, out_dim},
            uniform_init(rng, hidden * out_dim, std::sqrt(3.0 / static_cast<double>(hidden))),
            group::kAdapter);
  store.add("adapter.b2", {out_dim}, std::vector<double>(out_dim, 0.0), group::kAdapter);
}

AdapterParams adapter_params(const ParamStore& store) {
  AdapterParams a;
  const auto& w1 = store.at("adapter.w1");
  const auto& w2 = store.at("adapter.w2");
  a.w1 = w1.value;
  a.b1 = store.at("adapter.b1").value;
  a.w2 = w2.value;
  a.b2 = store.at("adapter.b2").value;
  a.in_dim = w1.shape[0];
  a.hidden = w1.shape[1];
  a.out_dim = w2.shape[1];
  a.trainable = w1.trainable;
  return a;
}

ConditioningTokens adapt(const FeatureMap& f, const AdapterParams& p) {
  if (f.dim != p.in_dim)
    throw ShapeError("adapter: feature dim " + std::to_string(f.dim) + " vs adapter input " +
                     std::to_string(p.in_dim));
  ConditioningTokens out{f.num_patches, p.out_dim, std::vector<double>(f.num_patches * p.out_dim, 0.0)};
  std::vector<double> hidden(p.hidden);
  for (std::size_t i = 0; i < f.num_patches; ++i) {
    for (std::size_t j = 0; j < p.hidden; ++j) {
      double s = p.b1[j];
      for (std::size_t k = 0; k < f.dim; ++k) s += f.at(i, k) * p.w1[k * p.hidden + j];
      hidden[j] = s > 0.0 ? s : 0.0;
    }
    for (std::size_t j = 0; j < p.out_dim; ++j) {
      double s = p.b2[j];
      for (std::size_t k = 0; k < p.hidden; ++k) s += hidden[k] * p.w2[k * p.out_dim + j];
      out.values[i * p.out_dim + j] = s;
    }
  }
  return out;
}

ad::Var adapt(const ad::Var& f, ParamBinder& binder) {
  using namespace ad;
  const Var w1 = binder.get("adapter.w1");
  if (f.shape().size() != 2 || f.dim(1) != w1.dim(0))
    throw ShapeError("adapter: feature shape " + shape_str(f.shape()) + " vs w1 " + shape_str(w1.shape()));
  const Var h = relu(add_bias(matmul(f, w1), binder.get("adapter.b1")));
  return add_bias(matmul(h, binder.get("adapter.w2")), binder.get("adapter.b2"));
}

namespace {

void check_nondegenerate(std::span<const double> values, std::size_t rows, std::size_t cols,
                         GramNorm mode) {
  if (rows == 0 || cols == 0) throw DegenerateInputError("gram: empty feature map");
  if (mode == GramNorm::global_frobenius) {
    for (double v : values)
      if (v != 0.0) return;
    throw DegenerateInputError("gram: all-zero feature map");
  }
  for (std::size_t r = 0; r < rows; ++r) {
    bool nonzero = false;
    for (std::size_t c = 0; c < cols; ++c) nonzero |= values[r * cols + c] != 0.0;
    if (!nonzero) throw DegenerateInputError("gram: zero feature row " + std::to_string(r));
  }
}

}  // namespace

ad::Var gram(const ad::Var& f, GramNorm mode) {
  if (f.shape().size() != 2) throw ShapeError("gram: expected [N,d] features");
  check_nondegenerate(f.value(), f.dim(0), f.dim(1), mode);
  const ad::Var fn = mode == GramNorm::global_frobenius ? ad::normalize_frobenius(f) : ad::normalize_rows(f);
  return ad::matmul_nt(fn, fn);
}

GramMatrix gram(const FeatureMap& f, GramNorm mode) {
  const ad::Var g = gram(f.to_var(), mode);
  return GramMatrix{f.num_patches, std::vector<double>(g.value().begin(), g.value().end())};
}

ad::Var gram_distance(const ad::Var& ga, const ad::Var& gb) {
  if (ga.shape() != gb.shape()) throw ShapeError("gram_distance: size mismatch");
  return ad::mse(ga, gb);
}

double gram_distance(const GramMatrix& ga, const GramMatrix& gb) {
  if (ga.size != gb.size) throw ShapeError("gram_distance: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < ga.values.size(); ++i) {
    const double d = ga.values[i] - gb.values[i];
    s += d * d;
  }
  return s / static_cast<double>(ga.size * ga.size);
}

}  // namespace gramsr
