#pragma once

#include "apvit/config.hpp"
#include "apvit/image.hpp"
#include "apvit/nn.hpp"

#include <memory>
#include <vector>

namespace apvit {

template <class S>
inline S sigmoid(S x) {
  if (x >= S(0)) return S(1) / (S(1) + std::exp(-x));
  S e = std::exp(x);
  return e / (S(1) + e);
}

// Patch embedding: non-overlapping patches, linear projection, learnable
// class token at position 0, learned positional embeddings on all tokens.
template <class S>
struct PatchEmbed {
  int image_size = 0, patch_size = 0, channels = 0, dim = 0;
  Linear<S> proj;   // (p*p*C) -> D
  Param<S> cls;     // 1 x D
  Param<S> pos;     // (N+1) x D

  struct Cache {
    Mat<S> patches;  // (B*N) x (p*p*C)
  };

  void init(const ModelConfig& cfg, Rng& rng) {
    image_size = cfg.image_size;
    patch_size = cfg.patch_size;
    channels = cfg.channels;
    dim = cfg.embed_dim;
    proj.init("patch.proj", patch_size * patch_size * channels, dim, rng);
    cls.setup("patch.cls", 1, dim);
    pos.setup("patch.pos", cfg.seq_len(), dim);
    fill_normal(pos.w, rng, 0.02);
  }

  int grid() const { return image_size / patch_size; }
  int num_patches() const { return grid() * grid(); }
  int seq_len() const { return num_patches() + 1; }

  Mat<S> forward(const std::vector<const TensorImage*>& images, Cache& c) const {
    const int B = static_cast<int>(images.size());
    const int N = num_patches(), T = seq_len(), P = patch_size;
    const int pdim = P * P * channels;
    c.patches.resize(static_cast<Eigen::Index>(B) * N, pdim);
    for (int b = 0; b < B; ++b) {
      const TensorImage& img = *images[b];
      if (img.h != image_size || img.w != image_size || img.c != channels)
        throw ConfigError("patchify: image shape " + std::to_string(img.h) + "x" +
                          std::to_string(img.w) + "x" + std::to_string(img.c) +
                          " does not match config");
      for (int gy = 0, n = 0; gy < grid(); ++gy)
        for (int gx = 0; gx < grid(); ++gx, ++n) {
          S* row = c.patches.row(static_cast<Eigen::Index>(b) * N + n).data();
          for (int py = 0; py < P; ++py)
            for (int px = 0; px < P; ++px)
              for (int ch = 0; ch < channels; ++ch)
                row[(py * P + px) * channels + ch] =
                    static_cast<S>(img.at(gy * P + py, gx * P + px, ch));
        }
    }
    Mat<S> proj_out = proj.forward(c.patches);
    Mat<S> X(static_cast<Eigen::Index>(B) * T, dim);
    for (int b = 0; b < B; ++b) {
      X.row(static_cast<Eigen::Index>(b) * T) = cls.w.row(0);
      X.middleRows(static_cast<Eigen::Index>(b) * T + 1, N) =
          proj_out.middleRows(static_cast<Eigen::Index>(b) * N, N);
      X.middleRows(static_cast<Eigen::Index>(b) * T, T) += pos.w;
    }
    return X;
  }

  void backward(const Mat<S>& dX, int B, Cache& c) {
    const int N = num_patches(), T = seq_len();
    Mat<S> dProj(static_cast<Eigen::Index>(B) * N, dim);
    for (int b = 0; b < B; ++b) {
      pos.g += dX.middleRows(static_cast<Eigen::Index>(b) * T, T);
      cls.g.row(0) += dX.row(static_cast<Eigen::Index>(b) * T);
      dProj.middleRows(static_cast<Eigen::Index>(b) * N, N) =
          dX.middleRows(static_cast<Eigen::Index>(b) * T + 1, N);
    }
    proj.backward(c.patches, dProj);
  }

  void collect(ParamRefs<S>& ps) {
    proj.collect(ps);
    ps.push_back(&cls);
    ps.push_back(&pos);
  }
};

// One attribute branch: its own encoder over the full token sequence, the
// class-token output as the attribute vector, and a linear score head.
template <class S>
struct AttributeBranch {
  Encoder<S> enc;
  Linear<S> head;  // D -> 1 (ordinal) or D -> |classes| (nominal)

  struct Cache {
    typename Encoder<S>::Cache encc;
    Mat<S> tokens_in;   // branch input
    Mat<S> attr_vecs;   // B x D class-token outputs
  };

  void init(const std::string& name, const ModelConfig& cfg, int score_dim, Rng& rng) {
    enc.init(name + ".enc", cfg.attr_layers_per_branch, cfg.embed_dim, cfg.heads, rng);
    head.init(name + ".head", cfg.embed_dim, score_dim, rng);
  }

  // Returns the B x score_dim scores; fills attention rows (B x N).
  Mat<S> forward(const Mat<S>& X, int B, int T, Cache& c, Mat<S>& attention) const {
    c.tokens_in = X;
    Mat<S> Z = enc.forward(X, B, T, c.encc);
    c.attr_vecs.resize(B, Z.cols());
    attention.resize(B, T - 1);
    for (int b = 0; b < B; ++b) {
      c.attr_vecs.row(b) = Z.row(static_cast<Eigen::Index>(b) * T);
      attention.row(b) = enc.class_token_attention(c.encc, b, T).transpose();
    }
    return head.forward(c.attr_vecs);
  }

  // dScores: B x score_dim; dVecExtra: B x D contributions that bypass the
  // head (prototype loss, target branch). Returns d(branch input).
  Mat<S> backward(const Mat<S>& dScores, const Mat<S>& dVecExtra, int B, int T,
                  Cache& c) {
    Mat<S> dVec = head.backward(c.attr_vecs, dScores);
    if (dVecExtra.size() > 0) dVec += dVecExtra;
    Mat<S> dZ = Mat<S>::Zero(c.tokens_in.rows(), c.tokens_in.cols());
    for (int b = 0; b < B; ++b)
      dZ.row(static_cast<Eigen::Index>(b) * T) = dVec.row(b);
    return enc.backward(dZ, B, T, c.encc);
  }

  void collect(ParamRefs<S>& ps) {
    enc.collect(ps);
    head.collect(ps);
  }
};

// Target branch: shared per-token projection over the stacked attribute
// vectors, a fresh classification token, an encoder, and a linear head.
// Without positional embeddings the output is invariant to attribute order.
template <class S>
struct TargetBranch {
  int A = 0, dim = 0;
  bool use_pos = false;
  Linear<S> proj;  // D -> D, shared across the A tokens
  Param<S> cls;    // 1 x D
  Param<S> pos;    // (A+1) x D, allocated only when enabled
  Encoder<S> enc;
  Linear<S> head;

  struct Cache {
    Mat<S> vecs_in;  // (B*A) x D
    typename Encoder<S>::Cache encc;
    Mat<S> cls_out;  // B x D
  };

  void init(const ModelConfig& cfg, Rng& rng) {
    A = cfg.schema.count();
    dim = cfg.embed_dim;
    use_pos = cfg.target_positional_embeddings;
    proj.init("target.proj", dim, dim, rng);
    cls.setup("target.cls", 1, dim);
    if (use_pos) {
      pos.setup("target.pos", A + 1, dim);
      fill_normal(pos.w, rng, 0.02);
    }
    enc.init("target.enc", cfg.target_layers, dim, cfg.heads, rng);
    head.init("target.head", dim, cfg.target.score_dim(), rng);
  }

  // vecs: (B*A) x D stacked attribute vectors, sample-major.
  Mat<S> forward(const Mat<S>& vecs, int B, Cache& c) const {
    if (vecs.rows() != static_cast<Eigen::Index>(B) * A)
      throw ConfigError("target_forward: expected " + std::to_string(A) +
                        " attribute vectors per sample");
    const int T = A + 1;
    c.vecs_in = vecs;
    Mat<S> projected = proj.forward(vecs);
    Mat<S> X(static_cast<Eigen::Index>(B) * T, dim);
    for (int b = 0; b < B; ++b) {
      X.row(static_cast<Eigen::Index>(b) * T) = cls.w.row(0);
      X.middleRows(static_cast<Eigen::Index>(b) * T + 1, A) =
          projected.middleRows(static_cast<Eigen::Index>(b) * A, A);
      if (use_pos) X.middleRows(static_cast<Eigen::Index>(b) * T, T) += pos.w;
    }
    Mat<S> Z = enc.forward(X, B, T, c.encc);
    c.cls_out.resize(B, dim);
    for (int b = 0; b < B; ++b)
      c.cls_out.row(b) = Z.row(static_cast<Eigen::Index>(b) * T);
    return head.forward(c.cls_out);
  }

  // Returns gradient w.r.t. the stacked attribute vectors, (B*A) x D.
  Mat<S> backward(const Mat<S>& dScores, int B, Cache& c) {
    const int T = A + 1;
    Mat<S> dCls = head.backward(c.cls_out, dScores);
    Mat<S> dZ = Mat<S>::Zero(static_cast<Eigen::Index>(B) * T, dim);
    for (int b = 0; b < B; ++b)
      dZ.row(static_cast<Eigen::Index>(b) * T) = dCls.row(b);
    Mat<S> dX = enc.backward(dZ, B, T, c.encc);
    Mat<S> dProjected(static_cast<Eigen::Index>(B) * A, dim);
    for (int b = 0; b < B; ++b) {
      if (use_pos) pos.g += dX.middleRows(static_cast<Eigen::Index>(b) * T, T);
      cls.g.row(0) += dX.row(static_cast<Eigen::Index>(b) * T);
      dProjected.middleRows(static_cast<Eigen::Index>(b) * A, A) =
          dX.middleRows(static_cast<Eigen::Index>(b) * T + 1, A);
    }
    return proj.backward(c.vecs_in, dProjected);
  }

  void collect(ParamRefs<S>& ps) {
    proj.collect(ps);
    ps.push_back(&cls);
    if (use_pos) ps.push_back(&pos);
    enc.collect(ps);
    head.collect(ps);
  }
};

// Segmentation decoder: transformer stack over the patch tokens (class token
// dropped), per-token linear projection to patch_size^2 values, sigmoid,
// spatial reassembly.
template <class S>
struct Decoder {
  int image_size = 0, patch_size = 0, dim = 0;
  Encoder<S> enc;
  Linear<S> out;  // D -> p*p

  struct Cache {
    Mat<S> tokens_in;  // (B*N) x D
    typename Encoder<S>::Cache encc;
    Mat<S> enc_out;    // (B*N) x D
    Mat<S> sig;        // (B*N) x p*p
  };

  void init(const ModelConfig& cfg, Rng& rng) {
    image_size = cfg.image_size;
    patch_size = cfg.patch_size;
    dim = cfg.embed_dim;
    enc.init("decoder.enc", cfg.decoder_layers, dim, cfg.heads, rng);
    out.init("decoder.out", dim, patch_size * patch_size, rng);
  }

  int grid() const { return image_size / patch_size; }
  int num_patches() const { return grid() * grid(); }

  // X: backbone output (B*T) x D. Returns masks as B x (S*S), row-major.
  Mat<S> forward(const Mat<S>& X, int B, int T, Cache& c) const {
    const int N = num_patches(), P = patch_size, SZ = image_size;
    c.tokens_in.resize(static_cast<Eigen::Index>(B) * N, dim);
    for (int b = 0; b < B; ++b)
      c.tokens_in.middleRows(static_cast<Eigen::Index>(b) * N, N) =
          X.middleRows(static_cast<Eigen::Index>(b) * T + 1, N);
    c.enc_out = enc.forward(c.tokens_in, B, N, c.encc);
    Mat<S> logits = out.forward(c.enc_out);
    c.sig = logits.unaryExpr([](S v) { return sigmoid(v); });
    Mat<S> masks(B, SZ * SZ);
    for (int b = 0; b < B; ++b)
      for (int gy = 0, n = 0; gy < grid(); ++gy)
        for (int gx = 0; gx < grid(); ++gx, ++n) {
          const S* row = c.sig.row(static_cast<Eigen::Index>(b) * N + n).data();
          for (int py = 0; py < P; ++py)
            for (int px = 0; px < P; ++px)
              masks(b, (gy * P + py) * SZ + (gx * P + px)) = row[py * P + px];
        }
    return masks;
  }

  // dMaskLogits: B x (S*S) gradient w.r.t. the pre-sigmoid mask logits
  // (keeps the chain stable where the sigmoid saturates). Returns gradient
  // w.r.t. the backbone tokens (B*T) x D, class-token rows zero.
  Mat<S> backward(const Mat<S>& dMaskLogits, int B, int T, Cache& c) {
    const int N = num_patches(), P = patch_size, SZ = image_size;
    Mat<S> dLogits(static_cast<Eigen::Index>(B) * N, P * P);
    for (int b = 0; b < B; ++b)
      for (int gy = 0, n = 0; gy < grid(); ++gy)
        for (int gx = 0; gx < grid(); ++gx, ++n)
          for (int py = 0; py < P; ++py)
            for (int px = 0; px < P; ++px)
              dLogits(static_cast<Eigen::Index>(b) * N + n, py * P + px) =
                  dMaskLogits(b, (gy * P + py) * SZ + (gx * P + px));
    Mat<S> dEncOut = out.backward(c.enc_out, dLogits);
    Mat<S> dTokens = enc.backward(dEncOut, B, N, c.encc);
    Mat<S> dX = Mat<S>::Zero(static_cast<Eigen::Index>(B) * T, dim);
    for (int b = 0; b < B; ++b)
      dX.middleRows(static_cast<Eigen::Index>(b) * T + 1, N) =
          dTokens.middleRows(static_cast<Eigen::Index>(b) * N, N);
    return dX;
  }

  void collect(ParamRefs<S>& ps) {
    enc.collect(ps);
    out.collect(ps);
  }
};

// Per-sample output bundle.
template <class S>
struct ModelOutput {
  Mat<S> attr_vectors;               // A x D
  std::vector<Vec<S>> attr_scores;   // per attribute: 1 or |classes|
  Vec<S> target_score;               // 1 or |classes|
  Mat<S> mask;                       // image_size x image_size, empty if disabled
  std::vector<Vec<S>> attr_attention;  // per attribute: N, sums to 1
  std::vector<Mat<S>> backbone_attention;  // per layer: T x T mean-head (optional)
};

template <class S>
struct BatchOutput {
  std::vector<Mat<S>> attr_vectors;   // per attribute: B x D
  std::vector<Mat<S>> attr_scores;    // per attribute: B x score_dim
  Mat<S> target_scores;               // B x target_dim
  Mat<S> masks;                       // B x (S*S), empty if decoder disabled
  std::vector<Mat<S>> attr_attention; // per attribute: B x N
};

template <class S>
struct BatchGrads {
  std::vector<Mat<S>> d_attr_scores;   // per attribute: B x score_dim
  std::vector<Mat<S>> d_attr_vectors;  // per attribute: B x D (may be empty)
  Mat<S> d_target_scores;              // B x target_dim
  Mat<S> d_mask_logits;                // B x (S*S), empty if unused
};

template <class S>
class Model {
 public:
  struct Cache {
    typename PatchEmbed<S>::Cache patchc;
    typename Encoder<S>::Cache backbonec;
    std::vector<typename AttributeBranch<S>::Cache> branchc;
    typename TargetBranch<S>::Cache targetc;
    typename Decoder<S>::Cache decoderc;
    Mat<S> backbone_out;  // (B*T) x D
    int B = 0;
  };

  Model(const ModelConfig& cfg, unsigned long long seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(seed);
    patch_.init(cfg_, rng);
    backbone_.init("backbone", cfg_.backbone_layers, cfg_.embed_dim, cfg_.heads, rng);
    branches_.resize(cfg_.schema.count());
    for (int a = 0; a < cfg_.schema.count(); ++a)
      branches_[a].init("attr" + std::to_string(a), cfg_,
                        cfg_.schema.at(a).scale.score_dim(), rng);
    target_.init(cfg_, rng);
    if (cfg_.decoder_enabled) decoder_.init(cfg_, rng);
    params_.clear();
    patch_.collect(params_);
    backbone_.collect(params_);
    for (auto& br : branches_) br.collect(params_);
    target_.collect(params_);
    if (cfg_.decoder_enabled) decoder_.collect(params_);
  }

  const ModelConfig& config() const { return cfg_; }
  int attribute_count() const { return cfg_.schema.count(); }

  ParamRefs<S>& parameters() { return params_; }
  const ParamRefs<S>& parameters() const { return params_; }

  void zero_grads() {
    for (auto* p : params_) p->g.setZero();
  }

  BatchOutput<S> forward_batch(const std::vector<const TensorImage*>& images,
                               Cache& c) const {
    const int B = static_cast<int>(images.size());
    const int T = cfg_.seq_len(), A = attribute_count();
    c.B = B;
    Mat<S> X0 = patch_.forward(images, c.patchc);
    c.backbone_out = backbone_.forward(X0, B, T, c.backbonec);

    BatchOutput<S> out;
    out.attr_vectors.resize(A);
    out.attr_scores.resize(A);
    out.attr_attention.resize(A);
    c.branchc.resize(A);
    for (int a = 0; a < A; ++a) {
      out.attr_scores[a] = branches_[a].forward(c.backbone_out, B, T, c.branchc[a],
                                                out.attr_attention[a]);
      out.attr_vectors[a] = c.branchc[a].attr_vecs;
    }
    Mat<S> stacked(static_cast<Eigen::Index>(B) * A, cfg_.embed_dim);
    for (int b = 0; b < B; ++b)
      for (int a = 0; a < A; ++a)
        stacked.row(static_cast<Eigen::Index>(b) * A + a) = out.attr_vectors[a].row(b);
    out.target_scores = target_.forward(stacked, B, c.targetc);
    if (cfg_.decoder_enabled)
      out.masks = decoder_.forward(c.backbone_out, B, T, c.decoderc);
    return out;
  }

  void backward_batch(const BatchGrads<S>& g, Cache& c) {
    const int B = c.B, T = cfg_.seq_len(), A = attribute_count();
    Mat<S> dStacked = target_.backward(g.d_target_scores, B, c.targetc);
    Mat<S> dBackbone = Mat<S>::Zero(c.backbone_out.rows(), c.backbone_out.cols());
    for (int a = 0; a < A; ++a) {
      Mat<S> dVecExtra(B, cfg_.embed_dim);
      for (int b = 0; b < B; ++b)
        dVecExtra.row(b) = dStacked.row(static_cast<Eigen::Index>(b) * A + a);
      if (a < static_cast<int>(g.d_attr_vectors.size()) &&
          g.d_attr_vectors[a].size() > 0)
        dVecExtra += g.d_attr_vectors[a];
      dBackbone += branches_[a].backward(g.d_attr_scores[a], dVecExtra, B, T,
                                         c.branchc[a]);
    }
    if (cfg_.decoder_enabled && g.d_mask_logits.size() > 0)
      dBackbone += decoder_.backward(g.d_mask_logits, B, T, c.decoderc);
    Mat<S> dX0 = backbone_.backward(dBackbone, B, T, c.backbonec);
    patch_.backward(dX0, B, c.patchc);
  }

  // --- single-sample operations (thin wrappers over the batched path) ---

  Mat<S> patchify(const TensorImage& img) const {
    typename PatchEmbed<S>::Cache pc;
    return patch_.forward({&img}, pc);
  }

  Mat<S> backbone_forward(const Mat<S>& tokens) const {
    if (tokens.rows() != cfg_.seq_len() || tokens.cols() != cfg_.embed_dim)
      throw ConfigError("backbone_forward: bad token shape");
    typename Encoder<S>::Cache ec;
    return backbone_.forward(tokens, 1, cfg_.seq_len(), ec);
  }

  struct AttributeResult {
    Vec<S> attr_vector;  // D
    Vec<S> score;        // 1 or |classes|
    Vec<S> attention;    // N, sums to 1
  };

  AttributeResult attribute_forward(const Mat<S>& tokens, int a) const {
    if (a < 0 || a >= attribute_count())
      throw UsageError("attribute index out of range: " + std::to_string(a));
    typename AttributeBranch<S>::Cache bc;
    Mat<S> attention;
    Mat<S> score = branches_[a].forward(tokens, 1, cfg_.seq_len(), bc, attention);
    AttributeResult r;
    r.attr_vector = bc.attr_vecs.row(0).transpose();
    r.score = score.row(0).transpose();
    r.attention = attention.row(0).transpose();
    return r;
  }

  Vec<S> target_forward(const Mat<S>& attr_vectors) const {
    if (attr_vectors.rows() != attribute_count() ||
        attr_vectors.cols() != cfg_.embed_dim)
      throw ConfigError("target_forward: expected " +
                        std::to_string(attribute_count()) + " x " +
                        std::to_string(cfg_.embed_dim) + " attribute vectors");
    typename TargetBranch<S>::Cache tc;
    return target_.forward(attr_vectors, 1, tc).row(0).transpose();
  }

  // Batched variant used for prototype-replaced inference.
  Mat<S> target_forward_batch(const Mat<S>& stacked_vecs, int B) const {
    typename TargetBranch<S>::Cache tc;
    return target_.forward(stacked_vecs, B, tc);
  }

  Mat<S> decoder_forward(const Mat<S>& tokens) const {
    if (!cfg_.decoder_enabled)
      throw UsageError("decoder_forward called with the decoder disabled");
    typename Decoder<S>::Cache dc;
    Mat<S> masks = decoder_.forward(tokens, 1, cfg_.seq_len(), dc);
    Mat<S> grid(cfg_.image_size, cfg_.image_size);
    for (int y = 0; y < cfg_.image_size; ++y)
      for (int x = 0; x < cfg_.image_size; ++x)
        grid(y, x) = masks(0, y * cfg_.image_size + x);
    return grid;
  }

  ModelOutput<S> forward(const TensorImage& img, bool want_backbone_attention = false) const {
    Cache c;
    BatchOutput<S> bo = forward_batch({&img}, c);
    ModelOutput<S> out;
    const int A = attribute_count();
    out.attr_vectors.resize(A, cfg_.embed_dim);
    out.attr_scores.resize(A);
    out.attr_attention.resize(A);
    for (int a = 0; a < A; ++a) {
      out.attr_vectors.row(a) = bo.attr_vectors[a].row(0);
      out.attr_scores[a] = bo.attr_scores[a].row(0).transpose();
      out.attr_attention[a] = bo.attr_attention[a].row(0).transpose();
    }
    out.target_score = bo.target_scores.row(0).transpose();
    if (cfg_.decoder_enabled) {
      out.mask.resize(cfg_.image_size, cfg_.image_size);
      for (int y = 0; y < cfg_.image_size; ++y)
        for (int x = 0; x < cfg_.image_size; ++x)
          out.mask(y, x) = bo.masks(0, y * cfg_.image_size + x);
    }
    if (want_backbone_attention) {
      out.backbone_attention.resize(cfg_.backbone_layers);
      for (int l = 0; l < cfg_.backbone_layers; ++l)
        out.backbone_attention[l] =
            backbone_.mean_head_attention(c.backbonec, 0, l, cfg_.seq_len());
    }
    return out;
  }

 private:
  ModelConfig cfg_;
  PatchEmbed<S> patch_;
  Encoder<S> backbone_;
  std::vector<AttributeBranch<S>> branches_;
  TargetBranch<S> target_;
  Decoder<S> decoder_;
  ParamRefs<S> params_;
};

}  // namespace apvit
