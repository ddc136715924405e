// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>

#include "tensor/errors.hpp"
#include "test_util.hpp"
#include "train/checkpoint.hpp"
#include "train/evaluate.hpp"
#include "train/optim.hpp"
#include "train/trainer.hpp"

using namespace semcc;
using semcc::testing::bitwise_equal;
using semcc::testing::small_config;
using semcc::testing::TempDir;

namespace {

RunConfig tiny_run(const std::string& mode = "3-stage") {
  RunConfig cfg = small_config();
  cfg.train.stage_mode = mode;
  cfg.train.epochs = 2;
  cfg.train.warmup_steps = 4;
  cfg.train.lr = 1e-3;
  cfg.train.eval_every = 0;
  cfg.cc_decoder.embed_warmup_epochs = 1;
  return cfg;
}

const Dataset& tiny_data() {
  static const Dataset ds = generate_dataset(3, SplitSizes{6, 6, 4, 3, 3}, 32);
  return ds;
}

bool in_groups(const std::string& name, std::initializer_list<ParamGroup> groups) {
  const ParamGroup g = param_group(name);
  for (auto x : groups) {
    if (x == g) return true;
  }
  return false;
}

}  // namespace

// ------------------------------------------------------------- schedule

TEST(LrSchedule, WarmupThenCosine) {
  TrainConfig t;
  t.lr = 1e-4;
  t.warmup_steps = 10;
  EXPECT_EQ(lr_at(0, 110, t), 0.0);
  EXPECT_DOUBLE_EQ(lr_at(5, 110, t), 0.5e-4);
  EXPECT_DOUBLE_EQ(lr_at(10, 110, t), 1e-4);
  EXPECT_NEAR(lr_at(60, 110, t), 0.5e-4, 1e-15);
  EXPECT_NEAR(lr_at(110, 110, t), 0.0, 1e-20);
  // Oracle for an arbitrary point of the cosine phase.
  const double progress = (37.0 - 10.0) / 100.0;
  EXPECT_NEAR(lr_at(37, 110, t), 1e-4 * 0.5 * (1 + std::cos(std::numbers::pi * progress)), 1e-18);
  for (long s = 10; s < 110; ++s) EXPECT_GE(lr_at(s, 110, t), lr_at(s + 1, 110, t));
  EXPECT_THROW(lr_at(-1, 110, t), ContractError);
}

TEST(TotalLoss, WeightedSumAndNonFiniteRejected) {
  EXPECT_DOUBLE_EQ(total_loss(1.0, 2.0, 0.5), 2.0);
  EXPECT_DOUBLE_EQ(total_loss(1.5, 3.0, 0.0), 1.5);
  EXPECT_THROW(total_loss(std::nan(""), 1.0, 0.5), NumericError);
  EXPECT_THROW(total_loss(1.0, std::numeric_limits<double>::infinity(), 0.5), NumericError);
}

TEST(StageSchedule, ModesAndSplits) {
  TrainConfig t;
  auto s = stage_schedule(t);
  ASSERT_EQ(s.size(), 3u);
  EXPECT_EQ(s[0].split, "cd");
  EXPECT_EQ(s[1].split, "cc");
  EXPECT_EQ(s[2].split, "cd_cc");
  EXPECT_EQ(s[2].groups, std::vector<ParamGroup>{ParamGroup::kNeck});
  t.stage_mode = "2-stage";
  EXPECT_EQ(stage_schedule(t).size(), 2u);
  t.stage_mode = "1-stage";
  s = stage_schedule(t);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s[0].loss, StageLoss::kJoint);
  t.stage_mode = "4-stage";
  EXPECT_THROW(stage_schedule(t), ConfigError);
}

TEST(StageSchedule, EmbeddingsFrozenAfterWarmup) {
  SemanticCc<float> m(tiny_run());
  const auto stage2 = stage_schedule(m.config().train)[1];
  const auto e0 = stage_trainable(m, stage2, 0);
  const auto e1 = stage_trainable(m, stage2, 1);
  EXPECT_TRUE(e0.count("cc_decoder/lm/token_embed"));
  EXPECT_FALSE(e1.count("cc_decoder/lm/token_embed"));
  for (const auto& n : e1) EXPECT_NE(param_group(n), ParamGroup::kCcEmbedding) << n;
  for (const auto& n : e0) EXPECT_FALSE(m.params.find(n)->frozen) << n;
}

// ------------------------------------------------------------- optimizer

TEST(AdamW, ZeroGradZeroDecayLeavesParameter) {
  ParameterStore<float> ps;
  Tensor<float> w = ps.create("w", {3}, Init::kNormal, 1.0);
  const auto before = w.clone();
  ps.set_trainable([](const std::string&) { return true; });
  w.grad_buffer();
  TrainConfig t;
  t.weight_decay = 0;
  AdamState st;
  adamw_step(ps, st, 1e-2, t);
  EXPECT_TRUE(bitwise_equal(w, before));
}

TEST(AdamW, FirstStepMovesAgainstGradientSign) {
  ParameterStore<float> ps;
  Tensor<float> w = ps.create("w", {4}, Init::kZeros);
  ps.set_trainable([](const std::string&) { return true; });
  const float g[4] = {0.3f, -2.0f, 1e-3f, -1e-3f};
  auto buf = w.grad_buffer();
  std::copy(g, g + 4, buf.begin());
  TrainConfig t;
  AdamState st;
  adamw_step(ps, st, 1e-2, t);
  // Bias-corrected first step: m_hat / sqrt(v_hat) = sign(g).
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(w[i], -1e-2 * (g[i] > 0 ? 1 : -1), 1e-6) << i;
}

TEST(AdamW, FrozenParameterUntouched) {
  ParameterStore<float> ps;
  Tensor<float> w = ps.create("w", {2}, Init::kNormal, 1.0, /*frozen=*/true);
  const auto before = w.clone();
  ps.set_trainable([](const std::string&) { return true; });
  w.set_requires_grad(true);
  auto buf = w.grad_buffer();
  buf[0] = 1.0f;
  AdamState st;
  adamw_step(ps, st, 1e-2, TrainConfig{});
  EXPECT_TRUE(bitwise_equal(w, before));
}

TEST(AdamW, NonFiniteGradientNamesParameter) {
  ParameterStore<float> ps;
  Tensor<float> w = ps.create("encoder/x", {2}, Init::kZeros);
  ps.set_trainable([](const std::string&) { return true; });
  w.grad_buffer()[1] = std::numeric_limits<float>::quiet_NaN();
  AdamState st;
  try {
    adamw_step(ps, st, 1e-2, TrainConfig{});
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("encoder/x"), std::string::npos) << e.what();
  }
}

TEST(AdamW, DecoupledDecay) {
  ParameterStore<float> ps;
  Tensor<float> w = ps.create("w", {2, 2}, Init::kOnes);
  ps.set_trainable([](const std::string&) { return true; });
  w.grad_buffer();
  TrainConfig t;
  t.weight_decay = 0.1;
  AdamState st;
  adamw_step(ps, st, 0.5, t);
  // Zero gradient: only the decay term acts, w <- w - lr * wd * w.
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(w[i], 1.0 - 0.5 * 0.1, 1e-7);
}

TEST(ClipGradNorm, ScalesToMaxNorm) {
  ParameterStore<float> ps;
  Tensor<float> w = ps.create("w", {2}, Init::kZeros);
  ps.set_trainable([](const std::string&) { return true; });
  auto g = w.grad_buffer();
  g[0] = 3;
  g[1] = 4;
  EXPECT_NEAR(clip_grad_norm(ps, 1.0), 5.0, 1e-6);
  EXPECT_NEAR(w.grad()[0], 0.6, 1e-6);
  EXPECT_NEAR(w.grad()[1], 0.8, 1e-6);
  EXPECT_NEAR(clip_grad_norm(ps, 0.0), 1.0, 1e-6);
}

// ------------------------------------------------------------- trainer

TEST(Trainer, FreezeLedgerMatchesStageSets) {
  SemanticCc<float> m(tiny_run());
  Trainer tr(m, tiny_data());
  for (int epoch = 0; epoch < 2; ++epoch) {
    std::vector<std::vector<float>> before;
    for (const auto& p : m.params.all()) before.emplace_back(p.value.data().begin(), p.value.data().end());
    const EpochStats es = tr.run_epoch(epoch);
    ASSERT_EQ(es.stages.size(), 3u);
    for (const auto& st : es.stages) {
      EXPECT_TRUE(st.changed_frozen.empty()) << st.name;
      EXPECT_GT(st.n_changed, 0) << st.name;
    }
    // Across the whole epoch only the union of the stage sets may move, and
    // the frozen backbone never does.
    const auto& all = m.params.all();
    for (std::size_t k = 0; k < all.size(); ++k) {
      const bool changed = !std::equal(before[k].begin(), before[k].end(), all[k].value.data().begin());
      if (all[k].frozen) EXPECT_FALSE(changed) << all[k].name;
      if (param_group(all[k].name) == ParamGroup::kCcEmbedding && epoch >= 1) EXPECT_FALSE(changed) << all[k].name;
    }
  }
}

TEST(Trainer, StageTwoLeavesEncoderBitwiseUnchanged) {
  RunConfig cfg = tiny_run("2-stage");
  SemanticCc<float> m(cfg);
  const auto stages = stage_schedule(cfg.train);
  const auto s2 = stage_trainable(m, stages[1], 0);
  for (const auto& n : s2) {
    EXPECT_FALSE(in_groups(n, {ParamGroup::kEncoderBase, ParamGroup::kEncoderAdapter, ParamGroup::kBcsf,
                               ParamGroup::kCdReduce, ParamGroup::kCdDecoder}))
        << n;
  }
  const auto s3 = stage_trainable(m, stage_schedule(tiny_run().train)[2], 0);
  for (const auto& n : s3) EXPECT_EQ(param_group(n), ParamGroup::kNeck) << n;
  EXPECT_FALSE(s3.empty());
}

TEST(Trainer, MissingSplitIsConfigError) {
  Dataset ds = tiny_data();
  ds.splits.cd_cc.clear();
  SemanticCc<float> m(tiny_run());
  EXPECT_THROW(Trainer(m, ds), ConfigError);
  SemanticCc<float> m2(tiny_run("2-stage"));
  EXPECT_NO_THROW(Trainer(m2, ds));
}

TEST(Trainer, WarmupMustBeBelowTotalSteps) {
  RunConfig cfg = tiny_run();
  cfg.train.warmup_steps = 1000;
  SemanticCc<float> m(cfg);
  EXPECT_THROW(Trainer(m, tiny_data()), ConfigError);
}

TEST(Trainer, SameSeedSameLossLog) {
  std::vector<nlohmann::json> logs[2];
  for (int r = 0; r < 2; ++r) {
    SemanticCc<float> m(tiny_run());
    Trainer tr(m, tiny_data());
    tr.train();
    logs[r] = tr.loss_log();
  }
  ASSERT_EQ(logs[0].size(), logs[1].size());
  for (std::size_t i = 0; i < logs[0].size(); ++i) EXPECT_EQ(logs[0][i].dump(), logs[1][i].dump()) << i;
  // One line per optimizer step plus one summary line per epoch.
  const auto steps = std::count_if(logs[0].begin(), logs[0].end(), [](const auto& j) { return j.contains("step"); });
  EXPECT_EQ(steps, 2 * (6 + 6 + 4));
  EXPECT_EQ(logs[0].size(), static_cast<std::size_t>(steps + 2));
}

TEST(Trainer, WritesLogsCurvesAndCheckpoints) {
  TempDir dir("trainer_out");
  std::filesystem::create_directories(dir.path);
  SemanticCc<float> m(tiny_run());
  TrainerOptions o;
  o.out_dir = dir.str();
  o.dataset_digest = "abc";
  Trainer tr(m, tiny_data(), o);
  tr.train();
  for (const char* f : {"loss_log.jsonl", "loss_curves.csv", "val_metrics.csv", "freeze_ledger.jsonl"}) {
    EXPECT_TRUE(std::filesystem::exists(dir.path / f)) << f;
  }
  EXPECT_TRUE(std::filesystem::exists(dir.path / "final" / "manifest.json"));
  std::ifstream log(dir.path / "loss_log.jsonl");
  int lines = 0;
  for (std::string line; std::getline(log, line);) {
    const auto j = nlohmann::json::parse(line);
    if (j.value("type", "") == "epoch") {
      EXPECT_TRUE(j.contains("stage1") && j.contains("stage3"));
    } else {
      EXPECT_TRUE(j.contains("loss") && j.contains("lr") && j.contains("stage"));
    }
    ++lines;
  }
  EXPECT_EQ(lines, static_cast<int>(tr.loss_log().size()));
}

// ------------------------------------------------------------- checkpoints

TEST(Checkpoint, RoundTripGivesBitwiseEqualReport) {
  TempDir dir("ckpt");
  SemanticCc<float> m(tiny_run());
  Trainer tr(m, tiny_data());
  tr.run_epoch(0);
  save_checkpoint(m, dir.str(), {{"epoch", 1}});
  const auto loaded = load_checkpoint(dir.str(), m.config().hash());
  ASSERT_EQ(loaded.model->params.all().size(), m.params.all().size());
  for (std::size_t k = 0; k < m.params.all().size(); ++k) {
    EXPECT_TRUE(bitwise_equal(m.params.all()[k].value, loaded.model->params.all()[k].value))
        << m.params.all()[k].name;
  }
  const auto& ids = tiny_data().splits.test;
  const auto a = eval_report(evaluate(m, tiny_data(), ids), m.config().hash(), "d");
  const auto b = eval_report(evaluate(*loaded.model, tiny_data(), ids), loaded.model->config().hash(), "d");
  auto strip = [](nlohmann::json j) {
    j.erase("git_describe");
    return j;
  };
  EXPECT_EQ(strip(a).dump(), strip(b).dump());
  EXPECT_EQ(loaded.manifest["epoch"], 1);
}

TEST(Checkpoint, HashMismatchNamesBothHashes) {
  TempDir dir("ckpt_hash");
  SemanticCc<float> m(tiny_run());
  save_checkpoint(m, dir.str(), {});
  const std::string want = "0123456789abcdef";
  try {
    load_checkpoint(dir.str(), want);
    FAIL();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find(want), std::string::npos) << msg;
    EXPECT_NE(msg.find(m.config().hash()), std::string::npos) << msg;
  }
}

TEST(Checkpoint, EditedConfigRefused) {
  TempDir dir("ckpt_edit");
  SemanticCc<float> m(tiny_run());
  save_checkpoint(m, dir.str(), {});
  RunConfig other = m.config();
  other.train.lambda_cd = 0.25;
  std::ofstream(dir.path / "config.json") << other.to_json().dump(2);
  EXPECT_THROW(load_checkpoint(dir.str()), ConfigError);
}

// ------------------------------------------------------------- config

TEST(Config, RoundTripAndStableHash) {
  const RunConfig cfg;
  const RunConfig back = RunConfig::from_json(cfg.to_json());
  EXPECT_EQ(back.hash(), cfg.hash());
  EXPECT_EQ(cfg.hash().size(), 16u);
  RunConfig other = cfg;
  other.encoder.lora_rank = 8;
  EXPECT_NE(other.hash(), cfg.hash());
  other = cfg;
  other.data_path = "/elsewhere";
  EXPECT_EQ(other.hash(), cfg.hash());
}

TEST(Config, UnknownKeysRejected) {
  nlohmann::json j = RunConfig{}.to_json();
  j["encoder"]["lora_rnk"] = 4;
  try {
    RunConfig::from_json(j);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("lora_rnk"), std::string::npos) << e.what();
  }
  EXPECT_THROW(RunConfig::from_json({{"bogus", 1}}), ConfigError);
}

TEST(Config, CrossFieldValidation) {
  auto bad = [](auto edit) {
    RunConfig c;
    edit(c);
    EXPECT_THROW(c.validate(), ConfigError);
  };
  bad([](RunConfig& c) { c.train.lambda_cd = -0.1; });
  bad([](RunConfig& c) { c.encoder.image_size = 60; });
  bad([](RunConfig& c) { c.encoder.window_size = 3; });
  bad([](RunConfig& c) { c.encoder.cd_channels = 64; });
  bad([](RunConfig& c) { c.neck.heads = 3; });
  bad([](RunConfig& c) { c.neck.inter_task = "bilinear"; });
  bad([](RunConfig& c) { c.cc_decoder.enhancer_position = "middle"; });
  bad([](RunConfig& c) { c.encoder.pos_embed = "learned"; });
  bad([](RunConfig& c) {
    c.encoder.embed_dim = 18;
    c.encoder.heads = 2;
  });
  EXPECT_NO_THROW(RunConfig{}.validate());
  EXPECT_NO_THROW(small_config().validate());
}

TEST(Config, DefaultsMatchDocumentedValues) {
  const RunConfig c;
  EXPECT_EQ(c.train.lambda_cd, 0.5);
  EXPECT_EQ(c.train.lr, 1e-4);
  EXPECT_EQ(c.train.epochs, 40);
  EXPECT_EQ(c.train.batch_size, 1);
  EXPECT_EQ(c.neck.units, 3);
  EXPECT_EQ(c.cc_decoder.n_queries, 8);
  EXPECT_EQ(c.cc_decoder.max_len, 32);
  EXPECT_EQ(c.encoder.global_layers, (std::vector<int>{2, 4, 6, 8}));
}
