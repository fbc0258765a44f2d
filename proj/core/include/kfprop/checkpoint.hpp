#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "kfprop/archive.hpp"
#include "kfprop/model.hpp"

namespace kfprop {

template <typename T>
struct Checkpoint {
  ModelConfig cfg;
  std::map<std::string, Tensor<T>> params;
  std::map<std::string, Tensor<T>> opt;  // optimizer moments, "<param>.m" / "<param>.v"
  std::uint64_t step = 0;
  std::map<std::string, double> extra;   // training hyperparameters etc.
};

namespace ckptdetail {

template <typename T>
Tensor<T> scalar(double v) {
  Tensor<T> t(Shape{1});
  t.data[0] = static_cast<T>(v);
  return t;
}

}  // namespace ckptdetail

template <typename T>
void checkpoint_save(const std::string& path, const Checkpoint<T>& ck) {
  Archive a;
  const ModelConfig& c = ck.cfg;
  a.put("config.stride", ckptdetail::scalar<T>(static_cast<double>(c.stride)));
  a.put("config.local_channels", ckptdetail::scalar<T>(static_cast<double>(c.local_channels)));
  a.put("config.token_dim", ckptdetail::scalar<T>(static_cast<double>(c.token_dim)));
  a.put("config.key_dim", ckptdetail::scalar<T>(static_cast<double>(c.key_dim)));
  a.put("config.grid", ckptdetail::scalar<T>(static_cast<double>(c.grid)));
  a.put("config.heads", ckptdetail::scalar<T>(static_cast<double>(c.heads)));
  a.put("config.intra_blocks", ckptdetail::scalar<T>(static_cast<double>(c.intra_blocks)));
  a.put("config.cross_blocks", ckptdetail::scalar<T>(static_cast<double>(c.cross_blocks)));
  a.put("config.use_ffc", ckptdetail::scalar<T>(c.use_ffc ? 1 : 0));
  a.put("config.tokens_only", ckptdetail::scalar<T>(c.tokens_only ? 1 : 0));
  a.put("config.input_channels", ckptdetail::scalar<T>(static_cast<double>(c.input_channels)));
  std::string layout = c.block_layout();
  Tensor<T> lt(Shape{layout.size()});
  for (std::size_t i = 0; i < layout.size(); ++i) lt.data[i] = layout[i] == 'C' ? T(1) : T(0);
  a.put("config.layout", lt);
  a.put("step", ckptdetail::scalar<T>(static_cast<double>(ck.step)));
  for (const auto& [k, v] : ck.extra) a.put("train." + k, ckptdetail::scalar<T>(v));
  for (const auto& [k, v] : ck.params) a.put("param." + k, v);
  for (const auto& [k, v] : ck.opt) a.put("opt." + k, v);
  a.save(path);
}

template <typename T>
Checkpoint<T> checkpoint_load(const std::string& path) {
  Archive a = Archive::load(path);
  auto scal = [&a, &path](const std::string& n) {
    Tensor<T> t = a.get<T>(n);
    if (t.numel() != 1) throw std::runtime_error("checkpoint '" + path + "': '" + n + "' not scalar");
    return static_cast<double>(t.data[0]);
  };
  Checkpoint<T> ck;
  ModelConfig& c = ck.cfg;
  c.stride = static_cast<std::size_t>(scal("config.stride"));
  c.local_channels = static_cast<std::size_t>(scal("config.local_channels"));
  c.token_dim = static_cast<std::size_t>(scal("config.token_dim"));
  c.key_dim = static_cast<std::size_t>(scal("config.key_dim"));
  c.grid = static_cast<std::size_t>(scal("config.grid"));
  c.heads = static_cast<std::size_t>(scal("config.heads"));
  c.intra_blocks = static_cast<std::size_t>(scal("config.intra_blocks"));
  c.cross_blocks = static_cast<std::size_t>(scal("config.cross_blocks"));
  c.use_ffc = scal("config.use_ffc") != 0;
  c.tokens_only = scal("config.tokens_only") != 0;
  c.input_channels = static_cast<std::size_t>(scal("config.input_channels"));
  Tensor<T> lt = a.get<T>("config.layout");
  c.layout.clear();
  for (std::size_t i = 0; i < lt.numel(); ++i) c.layout += lt.data[i] > T(0.5) ? 'C' : 'I';
  ck.step = static_cast<std::uint64_t>(scal("step"));

  for (const auto& e : a.entries()) {
    if (e.name.rfind("param.", 0) == 0)
      ck.params.emplace(e.name.substr(6), a.get<T>(e.name));
    else if (e.name.rfind("opt.", 0) == 0)
      ck.opt.emplace(e.name.substr(4), a.get<T>(e.name));
    else if (e.name.rfind("train.", 0) == 0)
      ck.extra.emplace(e.name.substr(6), scal(e.name));
  }
  c.validate();
  return ck;
}

// Copies checkpoint parameters into an existing model. The checkpoint must
// describe exactly the same architecture.
template <typename T>
void apply_checkpoint(Model<T>& model, const Checkpoint<T>& ck) {
  const ModelConfig& a = model.cfg;
  const ModelConfig& b = ck.cfg;
  bool same = a.stride == b.stride && a.local_channels == b.local_channels &&
              a.token_dim == b.token_dim && a.key_dim == b.key_dim && a.grid == b.grid &&
              a.heads == b.heads && a.use_ffc == b.use_ffc && a.tokens_only == b.tokens_only &&
              a.input_channels == b.input_channels && a.block_layout() == b.block_layout();
  if (!same) throw std::runtime_error("checkpoint architecture does not match the model config");
  for (auto& [name, p] : model.store.params) {
    auto it = ck.params.find(name);
    if (it == ck.params.end())
      throw std::runtime_error("checkpoint is missing parameter '" + name + "'");
    if (!(it->second.shape == p.value.shape))
      throw std::runtime_error("checkpoint parameter '" + name + "' has shape " +
                               shape_str(it->second.shape) + ", expected " +
                               shape_str(p.value.shape));
    p.value = it->second;
  }
  for (const auto& [name, t] : ck.params)
    if (!model.store.params.count(name))
      throw std::runtime_error("checkpoint has unexpected parameter '" + name + "'");
}

template <typename T>
Model<T> model_from_checkpoint(const Checkpoint<T>& ck) {
  Model<T> m(ck.cfg, 0);
  apply_checkpoint(m, ck);
  return m;
}

template <typename T>
Checkpoint<T> snapshot_model(const Model<T>& model, std::uint64_t step) {
  Checkpoint<T> ck;
  ck.cfg = model.cfg;
  ck.cfg.layout = model.cfg.block_layout();
  ck.step = step;
  for (const auto& [name, p] : model.store.params) ck.params.emplace(name, p.value);
  return ck;
}

}  // namespace kfprop
