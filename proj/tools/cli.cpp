#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "kfprop/checkpoint.hpp"
#include "kfprop/gradcheck.hpp"
#include "kfprop/kvconfig.hpp"
#include "kfprop/metrics.hpp"
#include "kfprop/ppm.hpp"
#include "kfprop/spectral.hpp"
#include "kfprop/synthdata.hpp"
#include "kfprop/train.hpp"
#include "kfprop/video.hpp"

namespace kfprop {
namespace {

std::vector<std::size_t> parse_index_list(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    std::size_t pos = 0;
    unsigned long long v = std::stoull(tok, &pos);
    if (pos != tok.size()) throw std::invalid_argument("bad list entry '" + tok + "'");
    out.push_back(static_cast<std::size_t>(v));
  }
  if (out.empty()) throw std::invalid_argument("empty index list");
  return out;
}

KvConfig load_config(const std::string& path) {
  if (path.empty()) return KvConfig();
  return KvConfig::load(path);
}

ModelConfig model_config_from(const KvConfig& kv) {
  ModelConfig mc;
  mc.stride = kv.get_u64_or("stride", mc.stride);
  mc.local_channels = kv.get_u64_or("local_channels", mc.local_channels);
  mc.token_dim = kv.get_u64_or("token_dim", mc.token_dim);
  mc.key_dim = kv.get_u64_or("key_dim", mc.key_dim);
  mc.grid = kv.get_u64_or("grid", mc.grid);
  mc.heads = kv.get_u64_or("heads", mc.heads);
  mc.intra_blocks = kv.get_u64_or("intra_blocks", mc.intra_blocks);
  mc.cross_blocks = kv.get_u64_or("cross_blocks", mc.cross_blocks);
  mc.use_ffc = kv.get_u64_or("use_ffc", mc.use_ffc ? 1 : 0) != 0;
  mc.tokens_only = kv.get_u64_or("tokens_only", 0) != 0;
  mc.layout = kv.get_or("layout", "");
  return mc;
}

// dtype of the stored parameters decides which instantiation handles a
// checkpoint; mixing precisions is refused by the archive layer
int checkpoint_dtype(const std::string& path) {
  Archive a = Archive::load(path);
  for (const auto& e : a.entries())
    if (e.name.rfind("param.", 0) == 0) return e.dtype;
  throw std::runtime_error("checkpoint has no parameters: " + path);
}

template <typename T>
AdamState<T> adam_from_checkpoint(const Checkpoint<T>& ck) {
  AdamState<T> opt;
  for (const auto& [name, t] : ck.opt) {
    if (name.size() > 2 && name.compare(name.size() - 2, 2, ".m") == 0)
      opt.m.emplace(name.substr(0, name.size() - 2), t);
    else if (name.size() > 2 && name.compare(name.size() - 2, 2, ".v") == 0)
      opt.v.emplace(name.substr(0, name.size() - 2), t);
  }
  return opt;
}

struct GenDataArgs {
  std::string out, config;
  std::size_t num = 16, size = 64, keyframes = 2;
  std::uint64_t seed = 1;
};

int cmd_gen_data(const GenDataArgs& a) {
  KvConfig kv = load_config(a.config);
  std::string kind = kv.get_or("kind", "images");
  if (kind == "video") {
    VideoParams vp;
    vp.height = vp.width = a.size;
    vp.frames = a.num;
    vp.motion = kv.get_f64_or("motion", vp.motion);
    write_video_dataset(a.out, a.seed, vp);
    std::cout << "wrote " << vp.frames << " video frames to " << a.out << "\n";
  } else if (kind == "images") {
    SampleParams sp;
    sp.height = sp.width = a.size;
    sp.keyframes = a.keyframes;
    sp.amplitude_px = kv.get_f64_or("amplitude", sp.amplitude_px);
    sp.smoothness_px = kv.get_f64_or("smoothness", sp.smoothness_px);
    write_dataset(a.out, a.num, a.seed, sp);
    std::cout << "wrote " << a.num << " samples to " << a.out << "\n";
  } else {
    throw std::invalid_argument("unknown dataset kind '" + kind + "'");
  }
  return 0;
}

struct TrainArgs {
  std::string data, out = "ckpts", ckpt, config;
  std::size_t steps = 2000, keyframes = 0;
  double lr = 3.2e-4;
  bool lr_set = false;
  std::uint64_t seed = 0;
};

template <typename T>
int train_with(const TrainArgs& a, const KvConfig& kv) {
  TrainConfig tc;
  tc.data_dir = a.data;
  tc.steps = a.steps;
  tc.lr = a.lr;
  tc.seed = a.seed;
  tc.keyframes = a.keyframes;
  tc.batch = kv.get_u64_or("batch", tc.batch);
  tc.hole_weight = kv.get_f64_or("hole_weight", tc.hole_weight);
  tc.log_every = kv.get_u64_or("log_every", tc.log_every);
  tc.ckpt_every = kv.get_u64_or("ckpt_every", tc.ckpt_every);
  tc.batch_parallel = kv.get_u64_or("batch_parallel", 0) != 0;

  std::uint64_t start = 0;
  Model<T> model(model_config_from(kv), a.seed);
  AdamState<T> opt;
  if (!a.ckpt.empty()) {
    Checkpoint<T> ck = checkpoint_load<T>(a.ckpt);
    model = model_from_checkpoint<T>(ck);
    opt = adam_from_checkpoint(ck);
    start = ck.step;
    // the batch stream and loss shape must continue unchanged, so those
    // hyperparameters come from the checkpoint; steps and lr stay overridable
    if (ck.extra.count("seed")) tc.seed = static_cast<std::uint64_t>(ck.extra.at("seed"));
    if (ck.extra.count("batch")) tc.batch = static_cast<std::size_t>(ck.extra.at("batch"));
    if (ck.extra.count("hole_weight")) tc.hole_weight = ck.extra.at("hole_weight");
    if (ck.extra.count("keyframes"))
      tc.keyframes = static_cast<std::size_t>(ck.extra.at("keyframes"));
    if (!a.lr_set && ck.extra.count("lr")) tc.lr = ck.extra.at("lr");
    if (start >= tc.steps)
      throw std::invalid_argument("checkpoint is already at step " + std::to_string(start));
  }

  if (!a.out.empty()) std::filesystem::create_directories(a.out);
  train_loop<T>(model, opt, tc, start, &std::cout, a.out);
  std::cout << "done, final checkpoint in " << (a.out.empty() ? std::string(".") : a.out) << "\n";
  return 0;
}

int cmd_train(const TrainArgs& a) {
  KvConfig kv = load_config(a.config);
  bool f64 = kv.get_or("precision", "f32") == "f64";
  if (!a.ckpt.empty()) f64 = checkpoint_dtype(a.ckpt) == 1;
  return f64 ? train_with<double>(a, kv) : train_with<float>(a, kv);
}

struct EvalArgs {
  std::string data, ckpt;
  std::size_t keyframes = 0, num = 0;
};

template <typename T>
int eval_with(const EvalArgs& a) {
  Checkpoint<T> ck = checkpoint_load<T>(a.ckpt);
  Model<T> model = model_from_checkpoint<T>(ck);
  MetricsReport rep = evaluate_dataset<T>(model, a.data, a.keyframes, a.num);
  print_metrics(std::cout, rep);
  return 0;
}

int cmd_eval(const EvalArgs& a) {
  return checkpoint_dtype(a.ckpt) == 1 ? eval_with<double>(a) : eval_with<float>(a);
}

struct InferArgs {
  std::string data, ckpt, out, keyframes;
  std::size_t num = 0;  // sample index
};

template <typename T>
int infer_with(const InferArgs& a) {
  Checkpoint<T> ck = checkpoint_load<T>(a.ckpt);
  Model<T> model = model_from_checkpoint<T>(ck);
  FrameSample s = load_dataset_sample(a.data, a.num);

  std::vector<std::size_t> order;
  if (a.keyframes.empty())
    for (std::size_t k = 0; k < s.keys_in.size(); ++k) order.push_back(k);
  else
    order = parse_index_list(a.keyframes);
  for (std::size_t k : order)
    if (k >= s.keys_in.size())
      throw std::invalid_argument("keyframe index " + std::to_string(k) + " out of range");

  std::vector<Tensor<T>> keys;
  std::vector<FlowField<T>> ffwd, fbwd;
  for (std::size_t k : order) {
    keys.push_back(cast_tensor<T>(s.keys_in[k]));
    ffwd.emplace_back(cast_tensor<T>(s.flows_fwd[k].offsets));
    fbwd.emplace_back(cast_tensor<T>(s.flows_bwd[k].offsets));
  }
  Graph<T> g;
  auto fw = model.forward(g, cast_tensor<T>(s.target_in), keys, ffwd, fbwd);
  Tensor<double> out = cast_tensor<double>(g.val(fw.output));

  SampleMetrics m = image_metrics(out, s.gt, s.mask);
  std::cout << "sample=" << a.num << "\n";
  std::cout << "hole_l1=" << m.hole_l1 << "\n";
  std::cout << "full_l1=" << m.full_l1 << "\n";
  std::cout << "psnr=" << m.psnr << "\n";
  std::cout << "hf_err=" << m.hf_err << "\n";

  if (!a.out.empty()) {
    std::size_t H = s.gt.shape[0], W = s.gt.shape[1];
    Tensor<double> in_rgb(Shape{H, W, 3});
    for (std::size_t i = 0; i < H * W; ++i)
      for (std::size_t ch = 0; ch < 3; ++ch)
        in_rgb.data[i * 3 + ch] = s.target_in.data[i * 4 + ch];
    write_ppm(a.out + ".output.ppm", out);
    write_ppm(a.out + ".input.ppm", in_rgb);
    write_ppm(a.out + ".gt.ppm", s.gt);
    std::cout << "wrote " << a.out << ".{output,input,gt}.ppm\n";
  }
  return 0;
}

int cmd_infer(const InferArgs& a) {
  return checkpoint_dtype(a.ckpt) == 1 ? infer_with<double>(a) : infer_with<float>(a);
}

struct PropagateArgs {
  std::string data, ckpt, out, offsets = "10,20,40";
  std::size_t chunk = 20;
  bool prealign = false;
};

template <typename T>
int propagate_with(const PropagateArgs& a) {
  Checkpoint<T> ck = checkpoint_load<T>(a.ckpt);
  Model<T> model = model_from_checkpoint<T>(ck);
  PropagateOptions opt;
  opt.chunk = a.chunk;
  opt.offsets = parse_index_list(a.offsets);
  opt.prealign = a.prealign;
  PropagateResult res = propagate_video<T>(model, a.data, opt, &std::cout);

  std::cout << "keyframes=";
  for (std::size_t i = 0; i < res.keyframes.size(); ++i)
    std::cout << (i ? "," : "") << res.keyframes[i];
  std::cout << "\n";
  std::cout << "inferences=" << res.inferences << "\n";
  std::cout << "hole_mae=" << res.hole_mae << "\n";

  if (!a.out.empty()) {
    std::filesystem::create_directories(a.out);
    for (std::size_t f = 0; f < res.frames.size(); ++f) {
      char name[32];
      std::snprintf(name, sizeof(name), "frame_%04zu.ppm", f);
      write_ppm(a.out + "/" + name, res.frames[f]);
    }
    std::cout << "wrote " << res.frames.size() << " frames to " << a.out << "\n";
  }
  return 0;
}

int cmd_propagate(const PropagateArgs& a) {
  return checkpoint_dtype(a.ckpt) == 1 ? propagate_with<double>(a) : propagate_with<float>(a);
}

// ---- bench ------------------------------------------------------------

Tensor<float> bench_rand(Rng& rng, const Shape& shape) {
  Tensor<float> t(shape);
  for (auto& v : t.data) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  return t;
}

template <typename F>
double median_ns(std::size_t reps, F&& fn) {
  fn();
  fn();
  std::vector<double> ts(reps);
  for (auto& t : ts) {
    auto t0 = std::chrono::steady_clock::now();
    fn();
    auto t1 = std::chrono::steady_clock::now();
    t = std::chrono::duration<double, std::nano>(t1 - t0).count();
  }
  std::sort(ts.begin(), ts.end());
  return ts[ts.size() / 2];
}

struct BenchArgs {
  std::string op;
  std::size_t reps = 30;
};

int cmd_bench(const BenchArgs& a) {
  std::size_t reps = std::max<std::size_t>(a.reps, 20);
  struct Row {
    std::string op, size;
    double ns = 0.0;
    std::size_t elems = 0;
  };
  std::vector<Row> rows;
  auto wanted = [&](const std::string& name) {
    return a.op.empty() || name.find(a.op) != std::string::npos;
  };

  Rng rng(123);
  if (wanted("conv2d")) {
    for (auto [hw, c] : {std::pair<std::size_t, std::size_t>{32, 8}, {64, 16}, {64, 32}}) {
      Tensor<float> x = bench_rand(rng, {hw, hw, c});
      Tensor<float> k = bench_rand(rng, {3, 3, c, c});
      double ns = median_ns(reps, [&] {
        Graph<float> g;
        conv2d(g, g.input(x), g.input(k), 1, 1);
      });
      rows.push_back({"conv2d", std::to_string(hw) + "x" + std::to_string(hw) + "x" +
                      std::to_string(c), ns, hw * hw * c});
    }
  }

  double fft64_ns = 0.0, naive64_ns = 0.0;
  if (wanted("fft2")) {
    for (std::size_t hw : {32, 64, 128}) {
      Tensor<float> x = bench_rand(rng, {hw, hw, 1});
      double ns = median_ns(reps, [&] { fft2(x); });
      if (hw == 64) fft64_ns = ns;
      rows.push_back({"fft2", std::to_string(hw) + "x" + std::to_string(hw), ns, hw * hw});
    }
    Tensor<float> x = bench_rand(rng, {64, 64, 1});
    naive64_ns = median_ns(reps, [&] { naive_dft2(x); });
    rows.push_back({"naive_dft2", "64x64", naive64_ns, 64 * 64});
  }

  if (wanted("token_attention")) {
    for (std::size_t grid : {4, 8}) {
      ModelConfig mc;
      mc.grid = grid;
      mc.intra_blocks = 1;
      mc.cross_blocks = 0;
      mc.use_ffc = false;
      Model<float> m(mc, 1);
      std::size_t M = mc.tokens(), d = mc.token_dim;
      Tensor<float> q = bench_rand(rng, {M, d}), e = bench_rand(rng, {M, d});
      double ns = median_ns(reps, [&] {
        Graph<float> g;
        m.token_attention(g, g.input(q), {g.input(e)}, "blk.0.attn.");
      });
      rows.push_back({"token_attention", "M=" + std::to_string(M) + ",d=" + std::to_string(d), ns,
                      M * d});
    }
  }

  if (wanted("deformable_write")) {
    for (std::size_t hw : {8, 16}) {
      ModelConfig mc;
      mc.intra_blocks = 0;
      mc.cross_blocks = 1;
      mc.use_ffc = false;
      Model<float> m(mc, 1);
      std::size_t c = mc.local_channels;
      Tensor<float> t = bench_rand(rng, {hw, hw, c});
      Tensor<float> k1 = bench_rand(rng, {hw, hw, c}), k2 = bench_rand(rng, {hw, hw, c});
      std::vector<Tensor<float>> flows, fbs;
      for (int i = 0; i < 2; ++i) {
        flows.push_back(bench_rand(rng, {hw, hw, 2}));
        fbs.push_back(bench_rand(rng, {hw, hw, 1}));
      }
      double ns = median_ns(reps, [&] {
        Graph<float> g;
        m.deformable_write(g, g.input(t), {g.input(k1), g.input(k2)}, flows, fbs, "blk.0.deform.");
      });
      rows.push_back({"deformable_write", std::to_string(hw) + "x" + std::to_string(hw) + "x" +
                      std::to_string(c) + ",T=2", ns, hw * hw * c});
    }
  }

  if (rows.empty()) throw std::invalid_argument("no benchmark matches '" + a.op + "'");

  std::cout << "op                size            median_us    ns_per_element\n";
  for (const auto& r : rows) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-16s  %-14s  %11.2f  %14.2f", r.op.c_str(), r.size.c_str(),
                  r.ns / 1e3, r.ns / static_cast<double>(r.elems));
    std::cout << buf << "\n";
  }

  if (fft64_ns > 0.0 && naive64_ns > 0.0) {
    double speedup = naive64_ns / fft64_ns;
    char buf[96];
    std::snprintf(buf, sizeof(buf), "fft2 64x64 speedup over naive dft: %.1fx", speedup);
    std::cout << buf << "\n";
    if (speedup < 10.0) {
      std::cout << "FAIL: expected at least 10x\n";
      return 1;
    }
  }
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"keyframe propagation toolkit"};
  app.require_subcommand(1);

  GenDataArgs gd;
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  gen->add_option("--out", gd.out, "output directory")->required();
  gen->add_option("--num", gd.num, "sample count (frames for video datasets)");
  gen->add_option("--seed", gd.seed, "generation seed");
  gen->add_option("--size", gd.size, "image side length");
  gen->add_option("--keyframes", gd.keyframes, "keyframes per sample");
  gen->add_option("--config", gd.config, "key=value file: kind, motion, amplitude, smoothness");

  struct {
    std::string op;
    double tol = 1e-4;
    std::uint64_t seed = 0;
  } gc;
  auto* grad = app.add_subcommand("gradcheck", "finite-difference checks of all graph ops");
  grad->add_option("--op", gc.op, "only run ops whose name contains this");
  grad->add_option("--tol", gc.tol, "relative error tolerance");
  grad->add_option("--seed", gc.seed, "randomization seed");

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "train a model");
  train->add_option("--data", tr.data, "dataset directory")->required();
  train->add_option("--out", tr.out, "checkpoint output directory");
  train->add_option("--ckpt", tr.ckpt, "checkpoint to resume from");
  train->add_option("--steps", tr.steps, "total Adam steps to reach");
  auto* lropt = train->add_option("--lr", tr.lr, "learning rate");
  train->add_option("--seed", tr.seed, "training seed");
  train->add_option("--keyframes", tr.keyframes, "keyframes used per sample, 0 = all");
  train->add_option("--config", tr.config, "key=value file with model/training settings");

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  eval->add_option("--data", ev.data, "dataset directory")->required();
  eval->add_option("--ckpt", ev.ckpt, "checkpoint path")->required();
  eval->add_option("--keyframes", ev.keyframes, "keyframes used per sample, 0 = all");
  eval->add_option("--num", ev.num, "evaluate only the first N samples, 0 = all");

  InferArgs inf;
  auto* infer = app.add_subcommand("infer", "run one sample and dump images");
  infer->add_option("--data", inf.data, "dataset directory")->required();
  infer->add_option("--ckpt", inf.ckpt, "checkpoint path")->required();
  infer->add_option("--num", inf.num, "sample index");
  infer->add_option("--keyframes", inf.keyframes, "comma list of keyframe indices, in order");
  infer->add_option("--out", inf.out, "prefix for PPM dumps");

  PropagateArgs pr;
  auto* prop = app.add_subcommand("propagate", "complete a masked video");
  prop->add_option("--data", pr.data, "video dataset directory")->required();
  prop->add_option("--ckpt", pr.ckpt, "checkpoint path")->required();
  prop->add_option("--out", pr.out, "directory for completed PPM frames");
  prop->add_option("--chunk", pr.chunk, "chunk length in frames");
  prop->add_option("--offsets", pr.offsets, "comma list of context offsets");
  prop->add_flag("--prealign", pr.prealign, "copy flow-consistent context pixels before inference");

  BenchArgs be;
  auto* bench = app.add_subcommand("bench", "time the heavy kernels");
  bench->add_option("--op", be.op, "only run benchmarks whose name contains this");
  bench->add_option("--num", be.reps, "repetitions per measurement");

  std::vector<const char*> argv;
  argv.push_back("kfprop");
  for (const auto& s : args) argv.push_back(s.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n" << app.help();
    return 1;
  }
  tr.lr_set = lropt->count() > 0;

  try {
    if (gen->parsed()) return cmd_gen_data(gd);
    if (grad->parsed()) {
      auto reports = run_gradcheck(gc.op, gc.tol, gc.seed, &std::cout);
      if (reports.empty()) {
        std::cerr << "error: no op matches '" << gc.op << "'\n";
        return 1;
      }
      return gradcheck_all_passed(reports) ? 0 : 1;
    }
    if (train->parsed()) return cmd_train(tr);
    if (eval->parsed()) return cmd_eval(ev);
    if (infer->parsed()) return cmd_infer(inf);
    if (prop->parsed()) return cmd_propagate(pr);
    if (bench->parsed()) return cmd_bench(be);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace kfprop
