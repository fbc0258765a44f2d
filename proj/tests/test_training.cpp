#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "kfprop/checkpoint.hpp"
#include "kfprop/train.hpp"

using namespace kfprop;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

ModelConfig micro_config() {
  ModelConfig c;
  c.stride = 4;
  c.local_channels = 8;
  c.token_dim = 8;
  c.key_dim = 8;
  c.grid = 2;
  c.heads = 2;
  c.intra_blocks = 1;
  c.cross_blocks = 1;
  return c;
}

AdamState<double> adam_from(const Checkpoint<double>& ck) {
  AdamState<double> opt;
  for (const auto& [name, t] : ck.opt) {
    if (name.size() > 2 && name.compare(name.size() - 2, 2, ".m") == 0)
      opt.m.emplace(name.substr(0, name.size() - 2), t);
    else if (name.size() > 2 && name.compare(name.size() - 2, 2, ".v") == 0)
      opt.v.emplace(name.substr(0, name.size() - 2), t);
  }
  return opt;
}

class TrainingData : public ::testing::Test {
 protected:
  static std::string dir;
  static void SetUpTestSuite() {
    fs::path d = fs::temp_directory_path() / "kfprop_train_ds";
    fs::remove_all(d);
    SampleParams p;
    p.height = 32;
    p.width = 32;
    p.keyframes = 2;
    write_dataset(d.string(), 4, 17, p);
    dir = d.string();
  }
  static void TearDownTestSuite() { fs::remove_all(dir); }
};

std::string TrainingData::dir;

}  // namespace

TEST_F(TrainingData, SmokeRunUpdatesParamsAndLogs) {
  Model<float> m(micro_config(), 2);
  Tensor<float> tokens_before = m.store.at("tokens").value;
  AdamState<float> opt;
  TrainConfig cfg;
  cfg.data_dir = dir;
  cfg.steps = 4;
  cfg.batch = 2;
  cfg.lr = 1e-3;
  cfg.seed = 5;
  cfg.log_every = 2;
  cfg.ckpt_every = 3;

  fs::path ck_dir = fs::temp_directory_path() / "kfprop_train_smoke";
  fs::remove_all(ck_dir);
  fs::create_directories(ck_dir);
  std::ostringstream log;
  std::vector<double> losses;
  auto logged = train_loop<float>(m, opt, cfg, 0, &log, ck_dir.string(), &losses);

  ASSERT_EQ(logged.size(), 2u);
  EXPECT_EQ(logged[0].step, 2u);
  EXPECT_EQ(logged[1].step, 4u);
  ASSERT_EQ(losses.size(), 4u);
  for (double l : losses) EXPECT_TRUE(std::isfinite(l));
  EXPECT_NE(log.str().find("step=2 loss="), std::string::npos);
  EXPECT_NE(log.str().find("step=4 loss="), std::string::npos);
  EXPECT_NE(m.store.at("tokens").value.data, tokens_before.data);
  EXPECT_TRUE(fs::exists(ck_dir / "ckpt_3.kpt"));
  EXPECT_TRUE(fs::exists(ck_dir / "ckpt_4.kpt"));
  fs::remove_all(ck_dir);
}

TEST_F(TrainingData, ZeroHoleWeightIsPlainL1) {
  Model<double> m(micro_config(), 3);
  Model<double> replica = m;
  AdamState<double> opt;
  TrainConfig cfg;
  cfg.data_dir = dir;
  cfg.steps = 1;
  cfg.batch = 1;
  cfg.lr = 1e-3;
  cfg.seed = 9;
  cfg.hole_weight = 0.0;
  std::vector<double> losses;
  train_loop<double>(m, opt, cfg, 0, nullptr, "", &losses);
  ASSERT_EQ(losses.size(), 1u);

  // replay the single batch sample by hand on the untouched replica
  std::size_t count = read_manifest(dir).count;
  Rng srng = Rng(cfg.seed).split(1);
  std::size_t idx = static_cast<std::size_t>(srng.uniform_int(count));
  FrameSample s = load_dataset_sample(dir, idx);
  std::vector<FlowField<double>> ffwd = s.flows_fwd, fbwd = s.flows_bwd;
  Graph<double> g;
  auto fw = replica.forward(g, s.target_in, s.keys_in, ffwd, fbwd);
  const Tensor<double>& out = g.val(fw.output);
  double manual = 0.0;
  for (std::size_t i = 0; i < out.numel(); ++i) manual += std::abs(out.data[i] - s.gt.data[i]);
  manual /= static_cast<double>(out.numel());
  EXPECT_NEAR(losses[0], manual, 1e-13);

  // with holes present the weighted loss must exceed the plain one
  Model<double> m2 = replica;
  AdamState<double> opt2;
  TrainConfig cfg2 = cfg;
  cfg2.hole_weight = 2.0;
  std::vector<double> weighted;
  train_loop<double>(m2, opt2, cfg2, 0, nullptr, "", &weighted);
  EXPECT_GT(weighted[0], losses[0]);
}

TEST_F(TrainingData, ResumeReproducesUninterruptedRunBitwise) {
  fs::path dir_a = fs::temp_directory_path() / "kfprop_resume_a";
  fs::path dir_b = fs::temp_directory_path() / "kfprop_resume_b";
  fs::remove_all(dir_a);
  fs::remove_all(dir_b);
  fs::create_directories(dir_a);
  fs::create_directories(dir_b);

  TrainConfig cfg;
  cfg.data_dir = dir;
  cfg.steps = 4;
  cfg.batch = 2;
  cfg.lr = 1e-3;
  cfg.seed = 13;
  cfg.log_every = 1;
  cfg.ckpt_every = 2;

  Model<double> full(micro_config(), 21);
  AdamState<double> opt_full;
  std::vector<double> losses_full;
  train_loop<double>(full, opt_full, cfg, 0, nullptr, dir_a.string(), &losses_full);

  Checkpoint<double> mid = checkpoint_load<double>((dir_a / "ckpt_2.kpt").string());
  ASSERT_EQ(mid.step, 2u);
  Model<double> resumed = model_from_checkpoint(mid);
  AdamState<double> opt_resumed = adam_from(mid);
  std::vector<double> losses_resumed;
  train_loop<double>(resumed, opt_resumed, cfg, mid.step, nullptr, dir_b.string(),
                     &losses_resumed);

  ASSERT_EQ(losses_resumed.size(), 2u);
  EXPECT_EQ(losses_resumed[0], losses_full[2]);
  EXPECT_EQ(losses_resumed[1], losses_full[3]);
  for (const auto& [name, p] : full.store.params)
    EXPECT_EQ(resumed.store.at(name).value.data, p.value.data) << name;
  EXPECT_EQ(slurp(dir_a / "ckpt_4.kpt"), slurp(dir_b / "ckpt_4.kpt"));
  fs::remove_all(dir_a);
  fs::remove_all(dir_b);
}

TEST_F(TrainingData, NonFiniteLossAbortsWithDiagnostic) {
  Model<double> m(micro_config(), 4);
  m.store.at("tokens").value.fill(std::numeric_limits<double>::quiet_NaN());
  AdamState<double> opt;
  TrainConfig cfg;
  cfg.data_dir = dir;
  cfg.steps = 1;
  cfg.batch = 1;
  cfg.seed = 1;
  try {
    train_loop<double>(m, opt, cfg, 0, nullptr);
    FAIL() << "expected non-finite loss abort";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("non-finite loss at step 0"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("batch stream seed 1/1"), std::string::npos);
  }
}

TEST_F(TrainingData, BatchParallelStaysFinite) {
  Model<float> m(micro_config(), 6);
  AdamState<float> opt;
  TrainConfig cfg;
  cfg.data_dir = dir;
  cfg.steps = 2;
  cfg.batch = 4;
  cfg.lr = 1e-3;
  cfg.seed = 3;
  cfg.batch_parallel = true;
  std::vector<double> losses;
  train_loop<float>(m, opt, cfg, 0, nullptr, "", &losses);
  ASSERT_EQ(losses.size(), 2u);
  for (double l : losses) EXPECT_TRUE(std::isfinite(l));
}
