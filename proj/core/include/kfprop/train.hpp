#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "kfprop/checkpoint.hpp"
#include "kfprop/model.hpp"
#include "kfprop/synthdata.hpp"

namespace kfprop {

struct TrainConfig {
  double lr = 3.2e-4;
  std::size_t batch = 8;
  std::size_t steps = 2000;      // target total step count (resume continues toward it)
  double hole_weight = 2.0;      // extra weight on the masked region
  std::uint64_t seed = 0;
  std::string data_dir;
  std::size_t log_every = 50;
  std::size_t ckpt_every = 500;
  std::size_t keyframes = 0;     // 0 = all stored keyframes
  // Splits each batch across threads and sums gradients afterwards. The
  // merge order differs from single-worker accumulation, so results are not
  // bit-reproducible against it.
  bool batch_parallel = false;

  void validate() const {
    if (!(lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
    if (batch == 0) throw std::invalid_argument("batch size must be positive");
    if (steps == 0) throw std::invalid_argument("step count must be positive");
    if (hole_weight < 0.0) throw std::invalid_argument("hole weight must be non-negative");
    if (data_dir.empty()) throw std::invalid_argument("training needs a dataset directory");
  }
};

template <typename T>
struct AdamState {
  std::map<std::string, Tensor<T>> m, v;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  void ensure(const ParamStore<T>& store) {
    for (const auto& [name, p] : store.params) {
      if (!m.count(name)) m.emplace(name, Tensor<T>(p.value.shape));
      if (!v.count(name)) v.emplace(name, Tensor<T>(p.value.shape));
    }
  }

  // step is 1-based for the bias correction
  void update(ParamStore<T>& store, double lr, std::uint64_t step) {
    double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    for (auto& [name, p] : store.params) {
      Tensor<T>& mm = m.at(name);
      Tensor<T>& vv = v.at(name);
      for (std::size_t i = 0; i < p.value.numel(); ++i) {
        double g = static_cast<double>(p.grad.data[i]);
        double mi = beta1 * static_cast<double>(mm.data[i]) + (1.0 - beta1) * g;
        double vi = beta2 * static_cast<double>(vv.data[i]) + (1.0 - beta2) * g * g;
        mm.data[i] = static_cast<T>(mi);
        vv.data[i] = static_cast<T>(vi);
        double upd = lr * (mi / bc1) / (std::sqrt(vi / bc2) + eps);
        p.value.data[i] = static_cast<T>(static_cast<double>(p.value.data[i]) - upd);
      }
    }
  }
};

namespace traindetail {

// Builds the per-sample loss graph and runs backward; gradients accumulate
// into the model's parameters. Returns the loss value.
template <typename T>
double sample_loss_backward(Model<T>& model, const FrameSample& s, std::size_t keyframes_used,
                            double hole_weight) {
  std::size_t Tn = s.keys_in.size();
  if (keyframes_used && keyframes_used < Tn) Tn = keyframes_used;
  Tensor<T> target = cast_tensor<T>(s.target_in);
  std::vector<Tensor<T>> keys;
  std::vector<FlowField<T>> ffwd, fbwd;
  for (std::size_t k = 0; k < Tn; ++k) {
    keys.push_back(cast_tensor<T>(s.keys_in[k]));
    ffwd.emplace_back(cast_tensor<T>(s.flows_fwd[k].offsets));
    fbwd.emplace_back(cast_tensor<T>(s.flows_bwd[k].offsets));
  }

  Graph<T> g;
  auto fw = model.forward(g, target, keys, ffwd, fbwd);
  GVar<T> diff = absval(g, sub(g, fw.output, g.input(cast_tensor<T>(s.gt))));
  GVar<T> loss = mean_all(g, diff);

  std::size_t H = s.mask.shape[0], W = s.mask.shape[1];
  std::size_t hole_px = 0;
  Tensor<T> mask3(Shape{H, W, 3});
  for (std::size_t i = 0; i < H * W; ++i) {
    bool hole = s.mask.data[i] > 0.5;
    if (hole) ++hole_px;
    for (std::size_t ch = 0; ch < 3; ++ch)
      mask3.data[i * 3 + ch] = hole ? T(1) : T(0);
  }
  if (hole_px > 0 && hole_weight > 0.0) {
    GVar<T> hole_sum = sum_all(g, mul(g, diff, g.input(std::move(mask3))));
    GVar<T> hole_mean = scale(g, hole_sum, 1.0 / static_cast<double>(hole_px * 3));
    loss = add(g, loss, scale(g, hole_mean, hole_weight));
  }
  double lv = static_cast<double>(g.val(loss).data[0]);
  g.backward(loss);
  return lv;
}

}  // namespace traindetail

struct StepInfo {
  std::uint64_t step = 0;
  double loss = 0.0;
};

// Runs Adam steps until cfg.steps are completed, starting from start_step
// (pass a checkpoint's step to resume). Returns per-logged-step info.
template <typename T>
std::vector<StepInfo> train_loop(Model<T>& model, AdamState<T>& opt, const TrainConfig& cfg,
                                 std::uint64_t start_step, std::ostream* log,
                                 const std::string& ckpt_dir = "",
                                 std::vector<double>* losses_out = nullptr) {
  cfg.validate();
  DatasetInfo info = read_manifest(cfg.data_dir);
  if (info.kind != "images") throw std::runtime_error("training expects an image dataset");
  if (info.count == 0) throw std::runtime_error("training dataset is empty");
  opt.ensure(model.store);
  Rng batch_rng(cfg.seed);

  auto save_ckpt = [&](std::uint64_t step) {
    if (ckpt_dir.empty()) return;
    Checkpoint<T> ck = snapshot_model(model, step);
    for (const auto& [name, t] : opt.m) ck.opt.emplace(name + ".m", t);
    for (const auto& [name, t] : opt.v) ck.opt.emplace(name + ".v", t);
    ck.extra["lr"] = cfg.lr;
    ck.extra["batch"] = static_cast<double>(cfg.batch);
    ck.extra["hole_weight"] = cfg.hole_weight;
    ck.extra["seed"] = static_cast<double>(cfg.seed);
    ck.extra["keyframes"] = static_cast<double>(cfg.keyframes);
    checkpoint_save(ckpt_dir + "/ckpt_" + std::to_string(step) + ".kpt", ck);
  };

  std::vector<StepInfo> logged;
  for (std::uint64_t step = start_step; step < cfg.steps; ++step) {
    Rng srng = batch_rng.split(step + 1);
    std::vector<std::size_t> idx(cfg.batch);
    for (auto& ix : idx) ix = static_cast<std::size_t>(srng.uniform_int(info.count));

    model.store.zero_grad();
    double loss_sum = 0.0;

    std::size_t workers =
        cfg.batch_parallel ? std::min<std::size_t>(cfg.batch, std::thread::hardware_concurrency())
                           : 1;
    if (workers <= 1) {
      for (std::size_t b = 0; b < cfg.batch; ++b) {
        FrameSample s = load_dataset_sample(cfg.data_dir, idx[b]);
        loss_sum += traindetail::sample_loss_backward(model, s, cfg.keyframes, cfg.hole_weight);
      }
    } else {
      // per-worker model copies keep backward races away from the shared
      // parameters; gradients are merged in worker order afterwards
      std::vector<Model<T>> copies(workers, model);
      std::vector<double> partial(workers, 0.0);
      std::vector<std::thread> threads;
      std::exception_ptr err;
      std::mutex err_mu;
      for (std::size_t w = 0; w < workers; ++w) {
        threads.emplace_back([&, w]() {
          try {
            for (std::size_t b = w; b < cfg.batch; b += workers) {
              FrameSample s = load_dataset_sample(cfg.data_dir, idx[b]);
              partial[w] +=
                  traindetail::sample_loss_backward(copies[w], s, cfg.keyframes, cfg.hole_weight);
            }
          } catch (...) {
            std::lock_guard<std::mutex> lk(err_mu);
            if (!err) err = std::current_exception();
          }
        });
      }
      for (auto& t : threads) t.join();
      if (err) std::rethrow_exception(err);
      for (std::size_t w = 0; w < workers; ++w) {
        loss_sum += partial[w];
        for (auto& [name, p] : model.store.params) {
          const Tensor<T>& src = copies[w].store.at(name).grad;
          for (std::size_t i = 0; i < src.numel(); ++i) p.grad.data[i] += src.data[i];
        }
      }
    }

    double mean_loss = loss_sum / static_cast<double>(cfg.batch);
    if (!std::isfinite(mean_loss)) {
      std::ostringstream msg;
      msg << "non-finite loss at step " << step << " (batch indices";
      for (auto ix : idx) msg << " " << ix;
      msg << ", batch stream seed " << cfg.seed << "/" << (step + 1) << ")";
      throw std::runtime_error(msg.str());
    }
    T inv_b = static_cast<T>(1.0 / static_cast<double>(cfg.batch));
    for (auto& [name, p] : model.store.params)
      for (auto& gv : p.grad.data) gv *= inv_b;

    std::uint64_t done = step + 1;
    opt.update(model.store, cfg.lr, done);
    if (losses_out) losses_out->push_back(mean_loss);

    if (done % cfg.log_every == 0 || done == cfg.steps) {
      logged.push_back(StepInfo{done, mean_loss});
      if (log) {
        char buf[96];
        std::snprintf(buf, sizeof(buf), "step=%llu loss=%.6f",
                      static_cast<unsigned long long>(done), mean_loss);
        (*log) << buf << std::endl;  // flush so redirected logs show progress
      }
    }
    if (done % cfg.ckpt_every == 0 || done == cfg.steps) save_ckpt(done);
  }
  return logged;
}

}  // namespace kfprop
