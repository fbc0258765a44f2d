#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "kfprop/model.hpp"
#include "kfprop/ops.hpp"
#include "kfprop/rng.hpp"

namespace kfprop {

// Central finite differences of a scalar-valued function of one tensor.
inline Tensor<double> finite_diff_grad(const std::function<double(const Tensor<double>&)>& f,
                                       const Tensor<double>& x, double eps = 1e-5) {
  Tensor<double> g(x.shape);
  Tensor<double> probe = x;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    double saved = probe.data[i];
    probe.data[i] = saved + eps;
    double hi = f(probe);
    probe.data[i] = saved - eps;
    double lo = f(probe);
    probe.data[i] = saved;
    g.data[i] = (hi - lo) / (2.0 * eps);
  }
  return g;
}

struct GradCheckReport {
  std::string name;
  double rel_err = 0.0;
  double seconds = 0.0;
  bool pass = false;
};

namespace gcdetail {

using DGraph = Graph<double>;
using DVar = DGraph::Var;
using BuildScalar = std::function<DVar(DGraph&)>;

inline Tensor<double> rand_t(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

// Values bounded away from zero, for ops with a kink at the origin.
inline Tensor<double> rand_away_from_zero(Rng& rng, Shape shape) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.data) {
    double mag = 0.1 + 0.8 * rng.uniform();
    v = rng.uniform() < 0.5 ? -mag : mag;
  }
  return t;
}

// Coordinates at least 0.25 px from the integer lattice, inside [0, n-1].
inline double off_lattice_coord(Rng& rng, std::size_t n) {
  std::size_t cell = rng.uniform_int(n - 1);
  return static_cast<double>(cell) + 0.25 + 0.5 * rng.uniform();
}

// Compares backward() gradients against central finite differences for
// every listed leaf. The relative error is the worst absolute mismatch over
// a denominator of max(1, largest gradient magnitude).
inline double check_leaves(std::vector<Param<double>*> leaves, const BuildScalar& build,
                           double eps = 1e-5) {
  auto eval = [&build]() {
    DGraph g;
    DVar y = build(g);
    return g.val(y).data[0];
  };
  for (auto* l : leaves) l->zero_grad();
  {
    DGraph g;
    DVar y = build(g);
    g.backward(y);
  }
  double worst = 0.0;
  for (auto* l : leaves) {
    const Tensor<double>& a = l->grad;
    double num = 0.0, den = 1.0;
    for (std::size_t i = 0; i < l->value.numel(); ++i) {
      double saved = l->value.data[i];
      l->value.data[i] = saved + eps;
      double hi = eval();
      l->value.data[i] = saved - eps;
      double lo = eval();
      l->value.data[i] = saved;
      double fd = (hi - lo) / (2.0 * eps);
      num = std::max(num, std::abs(a.data[i] - fd));
      den = std::max({den, std::abs(a.data[i]), std::abs(fd)});
    }
    worst = std::max(worst, num / den);
  }
  return worst;
}

inline ModelConfig tiny_model_config(bool use_ffc, std::size_t cross_blocks) {
  ModelConfig c;
  c.stride = 4;
  c.local_channels = 8;
  c.token_dim = 8;
  c.key_dim = 8;
  c.grid = 2;
  c.heads = 2;
  c.intra_blocks = 1;
  c.cross_blocks = cross_blocks;
  c.use_ffc = use_ffc;
  return c;
}

// Zero-initialized residual projections would hide whole gradient paths, so
// checks re-randomize every parameter they exercise.
inline std::vector<Param<double>*> randomize_params(Model<double>& m, Rng& rng,
                                                    const std::vector<std::string>& prefixes) {
  std::vector<Param<double>*> out;
  for (auto& [name, p] : m.store.params) {
    bool hit = false;
    for (const auto& pre : prefixes) hit = hit || name.rfind(pre, 0) == 0;
    if (!hit) continue;
    for (auto& v : p.value.data) v = rng.uniform(-0.6, 0.6);
    out.push_back(&p);
  }
  return out;
}

}  // namespace gcdetail

inline std::vector<GradCheckReport> run_gradcheck(const std::string& filter, double tol,
                                                  std::uint64_t seed, std::ostream* log = nullptr) {
  using namespace gcdetail;
  using std::vector;

  struct Entry {
    std::string name;
    std::function<double(Rng&)> run;
  };
  vector<Entry> entries;

  entries.push_back({"elementwise.add", [](Rng& rng) {
    Param<double> a("a", rand_t(rng, {3, 4})), b("b", rand_t(rng, {3, 4}));
    Param<double> s("s", rand_t(rng, {1}));
    Tensor<double> w = rand_t(rng, {3, 4});
    return check_leaves({&a, &b, &s}, [&](DGraph& g) {
      DVar t = add(g, add(g, g.param(a), g.param(b)), g.param(s));
      return sum_all(g, mul(g, t, g.input(w)));
    });
  }});

  entries.push_back({"elementwise.mul", [](Rng& rng) {
    Param<double> a("a", rand_t(rng, {2, 5})), b("b", rand_t(rng, {2, 5}));
    Param<double> s("s", rand_t(rng, {1}));
    Tensor<double> w = rand_t(rng, {2, 5});
    return check_leaves({&a, &b, &s}, [&](DGraph& g) {
      DVar t = mul(g, mul(g, g.param(a), g.param(b)), g.param(s));
      return sum_all(g, mul(g, t, g.input(w)));
    });
  }});

  entries.push_back({"elementwise.sub_scale", [](Rng& rng) {
    Param<double> a("a", rand_t(rng, {4, 3})), b("b", rand_t(rng, {4, 3}));
    Tensor<double> w = rand_t(rng, {4, 3});
    return check_leaves({&a, &b}, [&](DGraph& g) {
      DVar t = scale(g, sub(g, g.param(a), g.param(b)), 1.7);
      return sum_all(g, mul(g, t, g.input(w)));
    });
  }});

  entries.push_back({"elementwise.sigmoid", [](Rng& rng) {
    Param<double> x("x", rand_t(rng, {3, 5}, -3.0, 3.0));
    Tensor<double> w = rand_t(rng, {3, 5});
    return check_leaves({&x}, [&](DGraph& g) {
      return sum_all(g, mul(g, sigmoid(g, g.param(x)), g.input(w)));
    });
  }});

  entries.push_back({"elementwise.gelu", [](Rng& rng) {
    Param<double> x("x", rand_t(rng, {3, 5}, -3.0, 3.0));
    Tensor<double> w = rand_t(rng, {3, 5});
    return check_leaves({&x}, [&](DGraph& g) {
      return sum_all(g, mul(g, gelu(g, g.param(x)), g.input(w)));
    });
  }});

  entries.push_back({"elementwise.abs", [](Rng& rng) {
    Param<double> x("x", rand_away_from_zero(rng, {4, 4}));
    Tensor<double> w = rand_t(rng, {4, 4});
    return check_leaves({&x}, [&](DGraph& g) {
      return sum_all(g, mul(g, absval(g, g.param(x)), g.input(w)));
    });
  }});

  entries.push_back({"elementwise.add_last", [](Rng& rng) {
    Param<double> x("x", rand_t(rng, {4, 5, 3})), b("b", rand_t(rng, {3}));
    Tensor<double> w = rand_t(rng, {4, 5, 3});
    return check_leaves({&x, &b}, [&](DGraph& g) {
      return sum_all(g, mul(g, add_last(g, g.param(x), g.param(b)), g.input(w)));
    });
  }});

  entries.push_back({"reduce.mean", [](Rng& rng) {
    Param<double> x("x", rand_t(rng, {3, 7}));
    Tensor<double> w = rand_t(rng, {3, 7});
    return check_leaves({&x}, [&](DGraph& g) {
      return mean_all(g, mul(g, g.param(x), g.input(w)));
    });
  }});

  entries.push_back({"reduce.sum_axis0", [](Rng& rng) {
    Param<double> x("x", rand_t(rng, {3, 4, 5}));
    Tensor<double> w = rand_t(rng, {4, 5});
    return check_leaves({&x}, [&](DGraph& g) {
      return sum_all(g, mul(g, sum_axis0(g, g.param(x)), g.input(w)));
    });
  }});

  entries.push_back({"shape.transpose_reshape", [](Rng& rng) {
    Param<double> x("x", rand_t(rng, {3, 5}));
    Tensor<double> w = rand_t(rng, {15});
    return check_leaves({&x}, [&](DGraph& g) {
      DVar t = reshape(g, transpose2d(g, g.param(x)), Shape{15});
      return sum_all(g, mul(g, t, g.input(w)));
    });
  }});

  entries.push_back({"shape.concat_slice", [](Rng& rng) {
    Param<double> a("a", rand_t(rng, {2, 3, 2})), b("b", rand_t(rng, {2, 3, 3}));
    Tensor<double> w = rand_t(rng, {2, 3, 3});
    return check_leaves({&a, &b}, [&](DGraph& g) {
      DVar cat = concat_last(g, {g.param(a), g.param(b)});
      return sum_all(g, mul(g, slice_last(g, cat, 1, 4), g.input(w)));
    });
  }});

  entries.push_back({"shape.stack_first", [](Rng& rng) {
    Param<double> a("a", rand_t(rng, {3, 4})), b("b", rand_t(rng, {3, 4}));
    Tensor<double> w = rand_t(rng, {2, 3, 4});
    return check_leaves({&a, &b}, [&](DGraph& g) {
      return sum_all(g, mul(g, stack_first(g, {g.param(a), g.param(b)}), g.input(w)));
    });
  }});

  entries.push_back({"shape.patchify", [](Rng& rng) {
    Param<double> x("x", rand_t(rng, {6, 4, 2}));
    Tensor<double> w1 = rand_t(rng, {4, 6, 2});
    Tensor<double> w2 = rand_t(rng, {6, 4, 2});
    return check_leaves({&x}, [&](DGraph& g) {
      DVar p = patchify(g, g.param(x), 2);
      DVar s1 = sum_all(g, mul(g, p, g.input(w1)));
      DVar s2 = sum_all(g, mul(g, unpatchify(g, p, 6, 4, 2), g.input(w2)));
      return add(g, s1, s2);
    });
  }});

  entries.push_back({"matmul", [](Rng& rng) {
    Param<double> a("a", rand_t(rng, {2, 3, 4})), b("b", rand_t(rng, {4, 5}));
    Param<double> a2("a2", rand_t(rng, {3, 4})), b2("b2", rand_t(rng, {4, 2}));
    Tensor<double> w1 = rand_t(rng, {2, 3, 5}), w2 = rand_t(rng, {3, 2});
    return check_leaves({&a, &b, &a2, &b2}, [&](DGraph& g) {
      DVar s1 = sum_all(g, mul(g, matmul(g, g.param(a), g.param(b)), g.input(w1)));
      DVar s2 = sum_all(g, mul(g, matmul(g, g.param(a2), g.param(b2)), g.input(w2)));
      return add(g, s1, s2);
    });
  }});

  entries.push_back({"softmax", [](Rng& rng) {
    Param<double> x("x", rand_t(rng, {3, 6}, -2.0, 2.0));
    Param<double> y("y", rand_t(rng, {4, 3, 2}, -2.0, 2.0));
    Tensor<double> w1 = rand_t(rng, {3, 6}), w2 = rand_t(rng, {4, 3, 2});
    return check_leaves({&x, &y}, [&](DGraph& g) {
      DVar s1 = sum_all(g, mul(g, softmax(g, g.param(x), 1), g.input(w1)));
      DVar s2 = sum_all(g, mul(g, softmax(g, g.param(y), 0), g.input(w2)));
      return add(g, s1, s2);
    });
  }});

  entries.push_back({"layer_norm", [](Rng& rng) {
    Param<double> x("x", rand_t(rng, {4, 6})), gn("g", rand_t(rng, {6}));
    Param<double> bs("b", rand_t(rng, {6}));
    Tensor<double> w = rand_t(rng, {4, 6});
    return check_leaves({&x, &gn, &bs}, [&](DGraph& g) {
      return sum_all(g, mul(g, layer_norm(g, g.param(x), g.param(gn), g.param(bs)), g.input(w)));
    });
  }});

  entries.push_back({"conv2d", [](Rng& rng) {
    Param<double> x("x", rand_t(rng, {6, 7, 3}));
    Param<double> k1("k1", rand_t(rng, {3, 3, 3, 4})), k2("k2", rand_t(rng, {2, 2, 3, 2}));
    Tensor<double> w1 = rand_t(rng, {3, 4, 4}), w2 = rand_t(rng, {5, 6, 2});
    return check_leaves({&x, &k1, &k2}, [&](DGraph& g) {
      DVar s1 = sum_all(g, mul(g, conv2d(g, g.param(x), g.param(k1), 2, 1), g.input(w1)));
      DVar s2 = sum_all(g, mul(g, conv2d(g, g.param(x), g.param(k2), 1, 0), g.input(w2)));
      return add(g, s1, s2);
    });
  }});

  entries.push_back({"conv_transpose2d", [](Rng& rng) {
    Param<double> x("x", rand_t(rng, {3, 4, 4}));
    Param<double> k1("k1", rand_t(rng, {4, 4, 2, 4})), k2("k2", rand_t(rng, {3, 3, 2, 4}));
    Tensor<double> w1 = rand_t(rng, {6, 8, 2}), w2 = rand_t(rng, {3, 4, 2});
    return check_leaves({&x, &k1, &k2}, [&](DGraph& g) {
      DVar s1 = sum_all(g, mul(g, conv_transpose2d(g, g.param(x), g.param(k1), 2, 1), g.input(w1)));
      DVar s2 = sum_all(g, mul(g, conv_transpose2d(g, g.param(x), g.param(k2), 1, 1), g.input(w2)));
      return add(g, s1, s2);
    });
  }});

  entries.push_back({"bilinear_sample", [](Rng& rng) {
    Param<double> feat("f", rand_t(rng, {5, 6, 3}));
    Tensor<double> pv(Shape{7, 2});
    for (std::size_t i = 0; i < 5; ++i) {
      pv.data[i * 2 + 0] = off_lattice_coord(rng, 6);
      pv.data[i * 2 + 1] = off_lattice_coord(rng, 5);
    }
    // clamped positions: gradients w.r.t. position are zero out there
    pv.data[10] = -1.5;
    pv.data[11] = 2.3;
    pv.data[12] = 7.5;
    pv.data[13] = 6.2;
    Param<double> pos("p", pv);
    Tensor<double> w = rand_t(rng, {7, 3});
    return check_leaves({&feat, &pos}, [&](DGraph& g) {
      return sum_all(g, mul(g, bilinear_sample(g, g.param(feat), g.param(pos)), g.input(w)));
    });
  }});

  entries.push_back({"read", [](Rng& rng) {
    Model<double> m(tiny_model_config(false, 0), 1);
    auto leaves = randomize_params(m, rng, {"blk.0.read.ws", "blk.0.read.wv"});
    Param<double> x("x", rand_t(rng, {8, 8, 8}));
    leaves.push_back(&x);
    Tensor<double> w = rand_t(rng, {4, 8});
    return check_leaves(leaves, [&](DGraph& g) {
      DVar p = patchify(g, g.param(x), m.cfg.grid);
      return sum_all(g, mul(g, m.read_op(g, p, "blk.0.read."), g.input(w)));
    });
  }});

  entries.push_back({"write", [](Rng& rng) {
    Model<double> m(tiny_model_config(false, 0), 1);
    auto leaves = randomize_params(m, rng, {"blk.0.write.ws", "blk.0.write.wv"});
    Param<double> x("x", rand_t(rng, {8, 8, 8}));
    Param<double> tok("tok", rand_t(rng, {4, 8}));
    leaves.push_back(&x);
    leaves.push_back(&tok);
    Tensor<double> w = rand_t(rng, {4, 16, 8});
    return check_leaves(leaves, [&](DGraph& g) {
      DVar p = patchify(g, g.param(x), m.cfg.grid);
      return sum_all(g, mul(g, m.write_op(g, p, g.param(tok), "blk.0.write."), g.input(w)));
    });
  }});

  entries.push_back({"token_attention", [](Rng& rng) {
    Model<double> m(tiny_model_config(false, 0), 1);
    auto leaves =
        randomize_params(m, rng, {"blk.0.attn.wq", "blk.0.attn.wk", "blk.0.attn.wv"});
    Param<double> q("q", rand_t(rng, {4, 8}));
    Param<double> e1("e1", rand_t(rng, {4, 8})), e2("e2", rand_t(rng, {4, 8}));
    leaves.push_back(&q);
    leaves.push_back(&e1);
    leaves.push_back(&e2);
    Tensor<double> w = rand_t(rng, {4, 8});
    return check_leaves(leaves, [&](DGraph& g) {
      DVar at = m.token_attention(g, g.param(q), {g.param(e1), g.param(e2)}, "blk.0.attn.");
      return sum_all(g, mul(g, at, g.input(w)));
    });
  }});

  entries.push_back({"deformable_write", [](Rng& rng) {
    Model<double> m(tiny_model_config(false, 1), 1);
    auto leaves = randomize_params(m, rng, {"blk.1.deform."});
    Param<double> t("t", rand_t(rng, {8, 8, 8}));
    Param<double> k1("k1", rand_t(rng, {8, 8, 8})), k2("k2", rand_t(rng, {8, 8, 8}));
    leaves.push_back(&t);
    leaves.push_back(&k1);
    leaves.push_back(&k2);
    std::vector<Tensor<double>> flows, fbs;
    for (int i = 0; i < 2; ++i) {
      Tensor<double> fl(Shape{8, 8, 2});
      for (auto& v : fl.data) {
        double mag = 0.25 + 0.5 * rng.uniform();
        v = rng.uniform() < 0.5 ? -mag : mag;
      }
      flows.push_back(std::move(fl));
      fbs.push_back(rand_t(rng, {8, 8, 1}, 0.0, 1.0));
    }
    Tensor<double> w = rand_t(rng, {8, 8, 8});
    return check_leaves(leaves, [&](DGraph& g) {
      DVar out = m.deformable_write(g, g.param(t), {g.param(k1), g.param(k2)}, flows, fbs,
                                    "blk.1.deform.");
      return sum_all(g, mul(g, out, g.input(w)));
    });
  }});

  entries.push_back({"local_resblock", [](Rng& rng) {
    Model<double> m(tiny_model_config(false, 0), 1);
    auto leaves = randomize_params(m, rng, {"blk.0.local."});
    Param<double> x("x", rand_t(rng, {8, 8, 8}));
    leaves.push_back(&x);
    Tensor<double> w = rand_t(rng, {8, 8, 8});
    return check_leaves(leaves, [&](DGraph& g) {
      return sum_all(g, mul(g, m.local_resblock(g, g.param(x), "blk.0.local.", 8, 8), g.input(w)));
    });
  }});

  entries.push_back({"ffc_resblock", [](Rng& rng) {
    Model<double> m(tiny_model_config(true, 0), 1);
    auto leaves = randomize_params(m, rng, {"blk.0.local."});
    Param<double> x("x", rand_t(rng, {8, 8, 8}));
    leaves.push_back(&x);
    Tensor<double> w = rand_t(rng, {8, 8, 8});
    return check_leaves(leaves, [&](DGraph& g) {
      return sum_all(g, mul(g, m.local_resblock(g, g.param(x), "blk.0.local.", 8, 8), g.input(w)));
    });
  }});

  entries.push_back({"intra_block", [](Rng& rng) {
    Model<double> m(tiny_model_config(true, 0), 1);
    auto leaves = randomize_params(m, rng, {"blk.0."});
    Param<double> x("x", rand_t(rng, {8, 8, 8}));
    Param<double> tok("tok", rand_t(rng, {4, 8}));
    leaves.push_back(&x);
    leaves.push_back(&tok);
    Tensor<double> w1 = rand_t(rng, {8, 8, 8}), w2 = rand_t(rng, {4, 8});
    return check_leaves(leaves, [&](DGraph& g) {
      StreamState<double> s{g.param(x), g.param(tok)};
      s = m.intra_block(g, s, "blk.0.", 8, 8);
      DVar s1 = sum_all(g, mul(g, s.local, g.input(w1)));
      DVar s2 = sum_all(g, mul(g, s.tokens, g.input(w2)));
      return add(g, s1, s2);
    });
  }});

  std::vector<GradCheckReport> reports;
  std::uint64_t tag = 0;
  for (auto& e : entries) {
    ++tag;
    if (!filter.empty() && e.name.find(filter) == std::string::npos) continue;
    Rng rng = Rng(seed).split(tag);
    auto t0 = std::chrono::steady_clock::now();
    GradCheckReport r;
    r.name = e.name;
    r.rel_err = e.run(rng);
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    r.pass = r.rel_err < tol;
    if (log) {
      char buf[160];
      std::snprintf(buf, sizeof(buf), "gradcheck %-26s rel_err=%.3e  %.2fs  %s", r.name.c_str(),
                    r.rel_err, r.seconds, r.pass ? "ok" : "FAIL");
      (*log) << buf << "\n";
    }
    reports.push_back(std::move(r));
  }
  return reports;
}

inline bool gradcheck_all_passed(const std::vector<GradCheckReport>& reports) {
  if (reports.empty()) return false;
  for (const auto& r : reports) {
    if (!r.pass) return false;
  }
  return true;
}

}  // namespace kfprop
