#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "kfprop/archive.hpp"
#include "kfprop/conv_ops.hpp"
#include "kfprop/flow.hpp"
#include "kfprop/ops.hpp"
#include "kfprop/rng.hpp"
#include "kfprop/sample_ops.hpp"
#include "kfprop/spectral.hpp"

namespace kfprop {

struct ModelConfig {
  std::size_t stride = 4;          // encoder downsampling factor s
  std::size_t local_channels = 32; // channels of the high-resolution stream
  std::size_t token_dim = 32;      // width of the compact token stream
  std::size_t key_dim = 32;        // attention query/key width
  std::size_t grid = 4;            // token grid side m, token count M = m*m
  std::size_t heads = 4;
  std::size_t intra_blocks = 4;
  std::size_t cross_blocks = 2;
  bool use_ffc = true;
  bool tokens_only = false;        // ablation: write-back and warped aggregation disabled
  std::size_t input_channels = 4;
  std::string layout;              // e.g. "IICIIC"; empty derives from the counts

  std::size_t tokens() const { return grid * grid; }

  // Cross blocks at evenly spaced depths, always ending with a cross block.
  std::string block_layout() const {
    if (!layout.empty()) return layout;
    std::string out;
    std::size_t placed = 0;
    for (std::size_t cble = 1; cble <= cross_blocks; ++cble) {
      std::size_t upto = (cble * intra_blocks) / cross_blocks;
      for (; placed < upto; ++placed) out += 'I';
      out += 'C';
    }
    for (; placed < intra_blocks; ++placed) out += 'I';
    if (cross_blocks == 0) out += "";
    return out;
  }

  void validate() const {
    op_require(stride >= 2 && (stride & (stride - 1)) == 0, "stride must be a power of two >= 2");
    op_require(local_channels % 2 == 0, "local channel count must be even");
    op_require(token_dim % heads == 0, "token dim must be divisible by heads");
    op_require(key_dim % heads == 0, "key dim must be divisible by heads");
    op_require(local_channels % heads == 0, "local channels must be divisible by heads");
    op_require(input_channels == 4, "expected 4 input channels (masked RGB + mask)");
    op_require(grid >= 1 && heads >= 1, "grid and heads must be positive");
    std::size_t stages = 0;
    for (std::size_t s = stride; s > 1; s >>= 1) ++stages;
    if (stages > 1)
      op_require(local_channels % (1u << (stages - 1)) == 0,
                 "local channels must halve cleanly per encoder stage");
    for (char ch : layout) op_require(ch == 'I' || ch == 'C', "layout may contain only I and C");
  }
};

// Ordered parameter table; map keeps addresses stable so graphs and the
// optimizer can hold Param pointers.
template <typename T>
struct ParamStore {
  std::map<std::string, Param<T>> params;

  Param<T>& add(const std::string& name, Tensor<T> init) {
    auto [it, fresh] = params.emplace(name, Param<T>(name, std::move(init)));
    op_require(fresh, "duplicate parameter '" + name + "'");
    return it->second;
  }
  Param<T>& at(const std::string& name) {
    auto it = params.find(name);
    op_require(it != params.end(), "unknown parameter '" + name + "'");
    return it->second;
  }
  const Param<T>& at(const std::string& name) const {
    auto it = params.find(name);
    op_require(it != params.end(), "unknown parameter '" + name + "'");
    return it->second;
  }
  void zero_grad() {
    for (auto& [k, p] : params) p.zero_grad();
  }
};

template <typename T>
struct StreamState {
  GVar<T> local;   // H x W x c
  GVar<T> tokens;  // M x d
};

template <typename T>
class Model {
 public:
  ModelConfig cfg;
  ParamStore<T> store;

  Model(ModelConfig c, std::uint64_t seed) : cfg(std::move(c)) {
    cfg.validate();
    Rng rng(seed);
    build_params(rng);
  }

  // ---- forward --------------------------------------------------------

  struct Forward {
    GVar<T> output;      // composited, H_in x W_in x 3
    GVar<T> prediction;  // raw decoded map before compositing
  };

  // target_in: H x W x 4 (masked RGB + mask); keys_in: per-keyframe H x W x 4.
  // flows_fwd[i] lives on the keyframe-i grid and points into the target
  // frame (warping gt by it reproduces the keyframe); flows_bwd[i] is the
  // inverse, on the target grid, and drives the warped feature aggregation.
  // Both come at input resolution and are resized internally.
  Forward forward(Graph<T>& g, const Tensor<T>& target_in,
                  const std::vector<Tensor<T>>& keys_in,
                  const std::vector<FlowField<T>>& flows_fwd,
                  const std::vector<FlowField<T>>& flows_bwd) {
    op_require(target_in.rank() == 3 && target_in.shape[2] == cfg.input_channels,
               "target input must be H x W x 4, got " + shape_str(target_in.shape));
    std::size_t Hin = target_in.shape[0], Win = target_in.shape[1];
    op_require(Hin % cfg.stride == 0 && Win % cfg.stride == 0,
               "input extents must be divisible by the encoder stride");
    std::size_t H = Hin / cfg.stride, W = Win / cfg.stride;
    op_require(H % cfg.grid == 0 && W % cfg.grid == 0,
               "feature extents must be divisible by the token grid");
    std::size_t Tn = keys_in.size();
    op_require(flows_fwd.size() == Tn && flows_bwd.size() == Tn,
               "need one forward and one backward flow per keyframe");

    // Flows and their reliability map, at feature resolution.
    std::vector<Tensor<T>> flows_feat(Tn), fb_feat(Tn);
    for (std::size_t i = 0; i < Tn; ++i) {
      op_require(flows_fwd[i].height() == Hin && flows_fwd[i].width() == Win &&
                     flows_bwd[i].height() == Hin && flows_bwd[i].width() == Win,
                 "flow resolution must match the input resolution");
      FlowField<T> f = resize_flow(flows_fwd[i], H, W);
      FlowField<T> b = resize_flow(flows_bwd[i], H, W);
      fb_feat[i] = fb_consistency(b, f);
      flows_feat[i] = std::move(b.offsets);
    }

    StreamState<T> target = encode(g, target_in);
    std::vector<StreamState<T>> keys;
    for (const auto& k : keys_in) {
      op_require(k.same_shape(target_in), "keyframe input shape mismatch");
      keys.push_back(encode(g, k));
    }

    std::string layout = cfg.block_layout();
    for (std::size_t b = 0; b < layout.size(); ++b) {
      std::string pre = "blk." + std::to_string(b) + ".";
      if (layout[b] == 'I') {
        target = intra_block(g, target, pre, H, W);
        for (auto& k : keys) k = intra_block(g, k, pre, H, W);
      } else {
        cross_block(g, target, keys, flows_feat, fb_feat, pre, H, W);
      }
    }

    GVar<T> pred = decode(g, target.local, Hin, Win);
    Tensor<T> mask(Shape{Hin, Win, 1});
    Tensor<T> rgb(Shape{Hin, Win, 3});
    for (std::size_t i = 0; i < Hin * Win; ++i) {
      for (std::size_t ch = 0; ch < 3; ++ch) rgb.data[i * 3 + ch] = target_in.data[i * 4 + ch];
      mask.data[i] = target_in.data[i * 4 + 3];
    }
    GVar<T> out = composite_by_mask(g, pred, g.input(std::move(rgb)), mask);
    return Forward{out, pred};
  }

  // ---- pieces (public so tests can probe them individually) ------------

  StreamState<T> encode(Graph<T>& g, const Tensor<T>& frame_in) {
    GVar<T> x = g.input(frame_in);
    std::size_t stages = enc_stage_count();
    for (std::size_t st = 0; st < stages; ++st) {
      std::string pre = "enc." + std::to_string(st) + ".";
      x = conv2d(g, x, g.param(store.at(pre + "w")), 2, 1);
      x = add_last(g, x, g.param(store.at(pre + "b")));
      if (st + 1 < stages) x = gelu(g, x);
    }
    return StreamState<T>{x, g.param(store.at("tokens"))};
  }

  GVar<T> decode(Graph<T>& g, GVar<T> local, std::size_t Hin, std::size_t Win) {
    std::size_t stages = enc_stage_count();
    GVar<T> x = local;
    for (std::size_t st = 0; st < stages; ++st) {
      std::string pre = "dec." + std::to_string(st) + ".";
      x = conv_transpose2d(g, x, g.param(store.at(pre + "w")), 2, 1);
      x = add_last(g, x, g.param(store.at(pre + "b")));
      if (st + 1 < stages) x = gelu(g, x);
    }
    const auto& xs = g.val(x);
    op_require(xs.shape[0] == Hin && xs.shape[1] == Win && xs.shape[2] == 3,
               "decoder produced " + shape_str(xs.shape));
    return sigmoid(g, x);
  }

  // Importance-weighted pooling of each patch into one token per head.
  GVar<T> read_op(Graph<T>& g, GVar<T> patches, const std::string& pre) {
    GVar<T> scores = matmul(g, patches, transpose2d(g, g.param(store.at(pre + "ws"))));
    GVar<T> att = softmax(g, scores, 1);
    GVar<T> pooled = head_weighted_sum(g, att, patches);
    return heads_project(g, pooled, g.param(store.at(pre + "wv")));
  }

  // Sigmoid-gated broadcast of each token back over its patch.
  GVar<T> write_op(Graph<T>& g, GVar<T> patches, GVar<T> tokens, const std::string& pre) {
    GVar<T> gates = sigmoid(g, matmul(g, patches, transpose2d(g, g.param(store.at(pre + "ws")))));
    GVar<T> values = matmul(g, tokens, transpose2d(g, g.param(store.at(pre + "wv"))));
    return head_gate_broadcast(g, gates, values);
  }

  // Scaled dot-product attention over tokens. kv_extra lists keyframe token
  // tensors; keys/values are the query tokens concatenated with them, so an
  // empty list is plain self-attention.
  GVar<T> token_attention(Graph<T>& g, GVar<T> q_tokens, const std::vector<GVar<T>>& kv_extra,
                          const std::string& pre) {
    std::size_t d = cfg.token_dim, dk = cfg.key_dim, nh = cfg.heads;
    std::size_t M = cfg.tokens();
    std::vector<GVar<T>> kv_parts;
    kv_parts.push_back(reshape(g, q_tokens, Shape{M * d}));
    for (auto kvt : kv_extra) kv_parts.push_back(reshape(g, kvt, Shape{M * d}));
    GVar<T> kv = reshape(g, concat_last(g, kv_parts), Shape{M * kv_parts.size(), d});

    GVar<T> Q = matmul(g, q_tokens, transpose2d(g, g.param(store.at(pre + "wq"))));
    GVar<T> K = matmul(g, kv, transpose2d(g, g.param(store.at(pre + "wk"))));
    GVar<T> V = matmul(g, kv, g.param(store.at(pre + "wv")));

    std::size_t dkh = dk / nh, dvh = d / nh;
    double att_scale = 1.0 / std::sqrt(static_cast<double>(dkh));
    std::vector<GVar<T>> heads_out;
    for (std::size_t h = 0; h < nh; ++h) {
      GVar<T> Qh = slice_last(g, Q, h * dkh, (h + 1) * dkh);
      GVar<T> Kh = slice_last(g, K, h * dkh, (h + 1) * dkh);
      GVar<T> Vh = slice_last(g, V, h * dvh, (h + 1) * dvh);
      GVar<T> sc = scale(g, matmul(g, Qh, transpose2d(g, Kh)), att_scale);
      GVar<T> att = softmax(g, sc, 1);
      heads_out.push_back(matmul(g, att, Vh));
    }
    return concat_last(g, heads_out);
  }

  // Flow-warped, confidence-weighted aggregation of keyframe features into
  // the target's local stream. flows/fb are plain tensors at feature
  // resolution; fb enters the score input as an extra channel.
  GVar<T> deformable_write(Graph<T>& g, GVar<T> target_local,
                           const std::vector<GVar<T>>& key_locals,
                           const std::vector<Tensor<T>>& flows,
                           const std::vector<Tensor<T>>& fb, const std::string& pre) {
    std::size_t Tn = key_locals.size();
    op_require(Tn >= 1 && flows.size() == Tn && fb.size() == Tn,
               "deformable_write needs one flow and one fb map per keyframe");
    const auto& tv = g.val(target_local);
    std::size_t H = tv.shape[0], W = tv.shape[1];
    Tensor<T> grid = make_grid<T>(H, W);

    std::vector<GVar<T>> samples, fb_vars;
    for (std::size_t i = 0; i < Tn; ++i) {
      op_require(flows[i].shape == Shape({H, W, 2}) && fb[i].shape == Shape({H, W, 1}),
                 "deformable_write: flow/fb resolution mismatch");
      Tensor<T> pos = grid;
      for (std::size_t j = 0; j < pos.numel(); ++j) pos.data[j] += flows[i].data[j];
      samples.push_back(bilinear_sample(g, key_locals[i], g.input(std::move(pos))));
      fb_vars.push_back(g.input(fb[i]));
    }
    GVar<T> stacked = stack_first(g, samples);
    GVar<T> fb_stack = stack_first(g, fb_vars);
    GVar<T> score_in = concat_last(g, {stacked, fb_stack});
    GVar<T> scores = matmul(g, score_in, transpose2d(g, g.param(store.at(pre + "wq"))));
    GVar<T> att = softmax(g, scores, 0);
    GVar<T> values = matmul(g, stacked, transpose2d(g, g.param(store.at(pre + "wv"))));
    GVar<T> agg = sum_axis0(g, mul(g, att, values));
    return add(g, target_local, agg);
  }

  // Two 3x3 convs with gelu, or the spectral block, plus the residual.
  GVar<T> local_resblock(Graph<T>& g, GVar<T> x, const std::string& pre, std::size_t H,
                         std::size_t W) {
    if (!cfg.use_ffc) {
      GVar<T> h = gelu(g, add_last(g, conv2d(g, x, g.param(store.at(pre + "c1.w")), 1, 1),
                                   g.param(store.at(pre + "c1.b"))));
      GVar<T> o = add_last(g, conv2d(g, h, g.param(store.at(pre + "c2.w")), 1, 1),
                           g.param(store.at(pre + "c2.b")));
      return add(g, x, o);
    }
    std::size_t cg = cfg.local_channels / 2;
    GVar<T> xl = slice_last(g, x, 0, cg);
    GVar<T> xg = slice_last(g, x, cg, cfg.local_channels);

    GVar<T> conv_l = add_last(g, conv2d(g, xl, g.param(store.at(pre + "conv.w")), 1, 1),
                              g.param(store.at(pre + "conv.b")));
    GVar<T> g2l = add_last(g, matmul(g, xg, g.param(store.at(pre + "g2l.w"))),
                           g.param(store.at(pre + "g2l.b")));
    GVar<T> yl = gelu(g, add(g, conv_l, g2l));

    GVar<T> freq = fft2_channels(g, xg);
    GVar<T> spec = gelu(g, add_last(g, matmul(g, freq, g.param(store.at(pre + "spec.w"))),
                                    g.param(store.at(pre + "spec.b"))));
    GVar<T> back = ifft2_channels(g, spec, H, W);
    GVar<T> l2g = add_last(g, matmul(g, xl, g.param(store.at(pre + "l2g.w"))),
                           g.param(store.at(pre + "l2g.b")));
    GVar<T> yg = gelu(g, add(g, back, l2g));

    GVar<T> mix = add_last(g, matmul(g, concat_last(g, {yl, yg}), g.param(store.at(pre + "out.w"))),
                           g.param(store.at(pre + "out.b")));
    return add(g, x, mix);
  }

  // One full depth step for a single frame: read into tokens, token
  // self/cross attention + feed-forward, local interaction, write back.
  StreamState<T> intra_block(Graph<T>& g, StreamState<T> s, const std::string& pre, std::size_t H,
                             std::size_t W, const std::vector<GVar<T>>& kv_extra = {}) {
    // read: local -> tokens
    GVar<T> normed_local = layer_norm(g, s.local, g.param(store.at(pre + "read.ln.g")),
                                      g.param(store.at(pre + "read.ln.b")));
    GVar<T> patches = patchify(g, normed_local, cfg.grid);
    GVar<T> rd = read_op(g, patches, pre + "read.");
    GVar<T> rd_proj = add_last(g, matmul(g, rd, g.param(store.at(pre + "read.proj"))),
                               g.param(store.at(pre + "read.proj_b")));
    s.tokens = add(g, s.tokens, rd_proj);

    // token attention + feed-forward, pre-norm residual
    GVar<T> at_in = layer_norm(g, s.tokens, g.param(store.at(pre + "attn.ln.g")),
                               g.param(store.at(pre + "attn.ln.b")));
    std::vector<GVar<T>> kv_normed;
    for (auto kvt : kv_extra)
      kv_normed.push_back(layer_norm(g, kvt, g.param(store.at(pre + "attn.ln.g")),
                                     g.param(store.at(pre + "attn.ln.b"))));
    GVar<T> at = token_attention(g, at_in, kv_normed, pre + "attn.");
    GVar<T> at_proj = add_last(g, matmul(g, at, g.param(store.at(pre + "attn.wo"))),
                               g.param(store.at(pre + "attn.wo_b")));
    s.tokens = add(g, s.tokens, at_proj);

    GVar<T> ff_in = layer_norm(g, s.tokens, g.param(store.at(pre + "ff.ln.g")),
                               g.param(store.at(pre + "ff.ln.b")));
    GVar<T> ff_h = gelu(g, add_last(g, matmul(g, ff_in, g.param(store.at(pre + "ff.w1"))),
                                    g.param(store.at(pre + "ff.b1"))));
    GVar<T> ff_o = add_last(g, matmul(g, ff_h, g.param(store.at(pre + "ff.w2"))),
                            g.param(store.at(pre + "ff.b2")));
    s.tokens = add(g, s.tokens, ff_o);

    // local interaction
    s.local = local_resblock(g, s.local, pre + "local.", H, W);

    // write: tokens -> local
    if (!cfg.tokens_only) {
      GVar<T> wl = layer_norm(g, s.local, g.param(store.at(pre + "write.ln_local.g")),
                              g.param(store.at(pre + "write.ln_local.b")));
      GVar<T> wt = layer_norm(g, s.tokens, g.param(store.at(pre + "write.ln_tokens.g")),
                              g.param(store.at(pre + "write.ln_tokens.b")));
      GVar<T> wpatch = patchify(g, wl, cfg.grid);
      GVar<T> wr = write_op(g, wpatch, wt, pre + "write.");
      GVar<T> wr_proj = add_last(g, matmul(g, wr, g.param(store.at(pre + "write.proj"))),
                                 g.param(store.at(pre + "write.proj_b")));
      s.local = add(g, s.local, unpatchify(g, wr_proj, H, W, cfg.grid));
    }
    return s;
  }

  // Keyframes run the intra structure with self-attention; the target runs
  // it with cross-attention over the keyframe tokens and then receives the
  // warped keyframe features.
  void cross_block(Graph<T>& g, StreamState<T>& target, std::vector<StreamState<T>>& keys,
                   const std::vector<Tensor<T>>& flows, const std::vector<Tensor<T>>& fb,
                   const std::string& pre, std::size_t H, std::size_t W) {
    std::vector<GVar<T>> kv_src;
    for (const auto& k : keys) kv_src.push_back(k.tokens);
    target = intra_block(g, target, pre, H, W, kv_src);
    for (auto& k : keys) k = intra_block(g, k, pre, H, W);
    if (!keys.empty() && !cfg.tokens_only) {
      std::vector<GVar<T>> key_locals;
      for (const auto& k : keys) key_locals.push_back(k.local);
      target.local = deformable_write(g, target.local, key_locals, flows, fb, pre + "deform.");
    }
  }

  std::size_t enc_stage_count() const {
    std::size_t n = 0;
    for (std::size_t s = cfg.stride; s > 1; s >>= 1) ++n;
    return n;
  }

 private:
  void build_params(Rng& rng) {
    std::size_t c = cfg.local_channels, d = cfg.token_dim, dk = cfg.key_dim;
    auto tn = [&rng](Shape s, double std) {
      Tensor<T> t(s);
      for (auto& v : t.data) v = static_cast<T>(rng.trunc_normal(std));
      return t;
    };
    auto zeros = [](Shape s) { return Tensor<T>(s); };
    auto ones = [](Shape s) { return Tensor<T>(s, T(1)); };
    auto he = [&tn](std::size_t kh, std::size_t kw, std::size_t cin, std::size_t cout) {
      double std = std::sqrt(2.0 / static_cast<double>(kh * kw * cin));
      return tn(Shape{kh, kw, cin, cout}, std);
    };

    store.add("tokens", tn(Shape{cfg.tokens(), d}, 0.02));

    // encoder: stride/2 halvings with channel doubling up to c
    std::size_t stages = enc_stage_count();
    std::size_t in_ch = cfg.input_channels;
    for (std::size_t st = 0; st < stages; ++st) {
      std::size_t out_ch = c >> (stages - 1 - st);
      std::string pre = "enc." + std::to_string(st) + ".";
      store.add(pre + "w", he(3, 3, in_ch, out_ch));
      store.add(pre + "b", zeros(Shape{out_ch}));
      in_ch = out_ch;
    }
    // decoder mirror, 4x4 transpose kernels, final maps to RGB
    in_ch = c;
    for (std::size_t st = 0; st < stages; ++st) {
      std::size_t out_ch = st + 1 < stages ? (c >> (st + 1)) : 3;
      std::string pre = "dec." + std::to_string(st) + ".";
      store.add(pre + "w", he(4, 4, out_ch, in_ch));
      store.add(pre + "b", zeros(Shape{out_ch}));
      in_ch = out_ch;
    }

    std::string layout = cfg.block_layout();
    for (std::size_t b = 0; b < layout.size(); ++b) {
      std::string pre = "blk." + std::to_string(b) + ".";
      store.add(pre + "read.ln.g", ones(Shape{c}));
      store.add(pre + "read.ln.b", zeros(Shape{c}));
      store.add(pre + "read.ws", tn(Shape{cfg.heads, c}, 0.02));
      store.add(pre + "read.wv", tn(Shape{c, d}, 0.02));
      store.add(pre + "read.proj", zeros(Shape{d, d}));
      store.add(pre + "read.proj_b", zeros(Shape{d}));

      store.add(pre + "attn.ln.g", ones(Shape{d}));
      store.add(pre + "attn.ln.b", zeros(Shape{d}));
      store.add(pre + "attn.wq", tn(Shape{dk, d}, 0.02));
      store.add(pre + "attn.wk", tn(Shape{dk, d}, 0.02));
      store.add(pre + "attn.wv", tn(Shape{d, d}, 0.02));
      store.add(pre + "attn.wo", zeros(Shape{d, d}));
      store.add(pre + "attn.wo_b", zeros(Shape{d}));

      store.add(pre + "ff.ln.g", ones(Shape{d}));
      store.add(pre + "ff.ln.b", zeros(Shape{d}));
      store.add(pre + "ff.w1", tn(Shape{d, 4 * d}, 0.02));
      store.add(pre + "ff.b1", zeros(Shape{4 * d}));
      store.add(pre + "ff.w2", zeros(Shape{4 * d, d}));
      store.add(pre + "ff.b2", zeros(Shape{d}));

      if (!cfg.use_ffc) {
        store.add(pre + "local.c1.w", he(3, 3, c, c));
        store.add(pre + "local.c1.b", zeros(Shape{c}));
        store.add(pre + "local.c2.w", zeros(Shape{3, 3, c, c}));
        store.add(pre + "local.c2.b", zeros(Shape{c}));
      } else {
        std::size_t cg = c / 2;
        store.add(pre + "local.conv.w", he(3, 3, cg, cg));
        store.add(pre + "local.conv.b", zeros(Shape{cg}));
        store.add(pre + "local.l2g.w", tn(Shape{cg, cg}, 0.02));
        store.add(pre + "local.l2g.b", zeros(Shape{cg}));
        store.add(pre + "local.g2l.w", tn(Shape{cg, cg}, 0.02));
        store.add(pre + "local.g2l.b", zeros(Shape{cg}));
        store.add(pre + "local.spec.w", tn(Shape{2 * cg, 2 * cg}, 0.02));
        store.add(pre + "local.spec.b", zeros(Shape{2 * cg}));
        store.add(pre + "local.out.w", zeros(Shape{c, c}));
        store.add(pre + "local.out.b", zeros(Shape{c}));
      }

      store.add(pre + "write.ln_local.g", ones(Shape{c}));
      store.add(pre + "write.ln_local.b", zeros(Shape{c}));
      store.add(pre + "write.ln_tokens.g", ones(Shape{d}));
      store.add(pre + "write.ln_tokens.b", zeros(Shape{d}));
      store.add(pre + "write.ws", tn(Shape{cfg.heads, c}, 0.02));
      store.add(pre + "write.wv", tn(Shape{c, d}, 0.02));
      store.add(pre + "write.proj", zeros(Shape{c, c}));
      store.add(pre + "write.proj_b", zeros(Shape{c}));

      if (layout[b] == 'C') {
        store.add(pre + "deform.wq", tn(Shape{c, c + 1}, 0.02));
        store.add(pre + "deform.wv", zeros(Shape{c, c}));
      }
    }
  }
};

}  // namespace kfprop
