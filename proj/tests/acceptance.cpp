// SPDX-License-Identifier: Apache-2.0
// Acceptance suite: one PASS/FAIL line per criterion. Exit status is nonzero
// when any selected criterion fails. Pass criterion numbers as arguments to
// run a subset (default: all ten).
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "data/dataset.hpp"
#include "gradcheck/gradcheck.hpp"
#include "metrics/metrics.hpp"
#include "model/model.hpp"
#include "train/checkpoint.hpp"
#include "train/evaluate.hpp"
#include "train/trainer.hpp"

using namespace semcc;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

template <typename T>
bool bitwise_equal(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) return false;
  const auto x = a.data();
  const auto y = b.data();
  return std::memcmp(x.data(), y.data(), x.size() * sizeof(T)) == 0;
}

void progress(const std::string& s) { std::cerr << "[acceptance] " << s << std::endl; }

// ------------------------------------------------------------------- 1

Verdict gradient_suite() {
  const auto t0 = Clock::now();
  int checks = 0, failures = 0, min_instances = 1 << 30;
  double worst32 = 0.0, worst64 = 0.0;
  GradcheckOptions o;
  o.instances = 20;
  o.seed = 0;
  for (const auto& r : run_gradcheck<float>(o)) {
    ++checks;
    failures += r.failures;
    min_instances = std::min(min_instances, r.instances);
    worst32 = std::max(worst32, r.worst);
  }
  for (const auto& r : run_gradcheck<double>(o)) {
    ++checks;
    failures += r.failures;
    min_instances = std::min(min_instances, r.instances);
    worst64 = std::max(worst64, r.worst);
  }
  const double secs = seconds_since(t0);
  const bool pass = failures == 0 && min_instances >= 20 && secs < 120.0 && worst32 < GradcheckTolerance<float>::tol &&
                    worst64 < GradcheckTolerance<double>::tol;
  return {pass, std::to_string(checks) + " checks, " + std::to_string(failures) + " failing instances, worst f32 " +
                    fmt(worst32, 8) + " (< 1e-3), worst f64 " + fmt(worst64, 10) + " (< 1e-6), >= " +
                    std::to_string(min_instances) + " instances each, " + fmt(secs, 1) + " s (< 120 s)"};
}

// ------------------------------------------------------------------- 2

Verdict identity_at_init() {
  const RunConfig cfg;
  SemanticCc<float> m(cfg);
  const int size = cfg.encoder.image_size;
  const Dataset ds = generate_dataset(7, SplitSizes{1, 1, 1, 1, 4}, size);
  int pairs = 0, equal = 0;
  for (const auto& id : ds.splits.test) {
    const SampleRecord& r = ds.at(id);
    const Tensor<float> a = image_tensor<float>(r.img_a, size), b = image_tensor<float>(r.img_b, size);
    ForwardCtx full, plain;
    plain.plain = true;
    const auto f = m.features(a, b, full);
    const auto g = m.features(a, b, plain);
    bool same = bitwise_equal(f.f1_cc, g.f1_cc) && bitwise_equal(f.f2_cc, g.f2_cc) &&
                bitwise_equal(f.f1_cd, g.f1_cd) && bitwise_equal(f.f2_cd, g.f2_cd);
    same = same && bitwise_equal(m.cd_logits(f), m.cd_logits(g));
    const auto cf = m.cc_decoder.generate(f.f1_cc, f.f2_cc, full);
    const auto cg = m.cc_decoder.generate(g.f1_cc, g.f2_cc, plain);
    same = same && cf.tokens == cg.tokens && cf.mean_logprob == cg.mean_logprob;
    const std::vector<int> target = m.vocab().encode("the scene is the same as before");
    const auto lf = m.cc_decoder.loss(f.f1_cc, f.f2_cc, m.cc_decoder.templates()[0], target, full);
    const auto lg = m.cc_decoder.loss(g.f1_cc, g.f2_cc, m.cc_decoder.templates()[0], target, plain);
    same = same && bitwise_equal(lf.loss, lg.loss);
    ++pairs;
    equal += same ? 1 : 0;
  }
  return {equal == pairs, std::to_string(equal) + "/" + std::to_string(pairs) +
                              " pairs bitwise equal (encoder+neck features, CD logits, caption loss, greedy caption)"};
}

// ------------------------------------------------------------------- 3

Verdict metric_oracles() {
  constexpr double kTol = 1e-6;
  std::vector<std::pair<std::string, bool>> checks;
  auto near = [&](const std::string& name, double got, double want) {
    checks.emplace_back(name, std::fabs(got - want) <= kTol);
  };
  // BLEU: brevity penalty on "a b c" vs "a b c d"; clipped counts.
  near("bleu1 brevity", bleu({{"0", "a b c", {"a b c d"}}}, 1), std::exp(1.0 - 4.0 / 3.0));
  near("bleu1 clipped", bleu({{"0", "the the the", {"the cat"}}}, 1), 1.0 / 3.0);
  near("bleu4 identity", bleu({{"0", "one new tree appears", {"one new tree appears"}}}, 4), 1.0);
  // ROUGE_L: LCS 2, P = 1, R = 2/3, beta 1.2.
  {
    const double p = 1.0, r = 2.0 / 3.0, b2 = 1.44;
    near("rouge_l", rouge_l({{"0", "a c", {"a b c"}}}), (1 + b2) * p * r / (r + b2 * p));
  }
  // CIDEr toy corpus: the unigram and bigram of every caption are unique to
  // their own item except "a" and "d", so only n = 1, 2 terms survive.
  near("cider toy", cider({{"0", "a b", {"a b"}}, {"1", "c d", {"c d"}}, {"2", "a d", {"a d"}}}).score,
       10.0 * (1 + 1 + 0 + 0) / 4.0);
  near("cider disjoint", cider({{"0", "x y", {"a b"}}, {"1", "z w", {"c d"}}}).score, 0.0);
  // METEOR exact: identity of 3 tokens is one chunk; reversal is 3 chunks.
  near("meteor identity", meteor_exact({{"0", "a b c", {"a b c"}}}), 1.0 - 0.5 * std::pow(1.0 / 3.0, 3));
  near("meteor reversed", meteor_exact({{"0", "c b a", {"a b c"}}}), 1.0 - 0.5);
  {
    // "a b x" vs "a b c d": 2 matches, 1 chunk.
    const double p = 2.0 / 3.0, r = 0.5, f = p * r / (0.9 * p + 0.1 * r), pen = 0.5 * std::pow(1.0 / 2.0, 3);
    near("meteor partial", meteor_exact({{"0", "a b x", {"a b c d"}}}), f * (1 - pen));
  }
  // cd_metrics: all-change prediction against a half-change mask.
  {
    const CdMetrics c = cd_metrics(std::vector<std::uint8_t>{1, 1, 1, 1}, std::vector<std::uint8_t>{1, 1, 0, 0});
    near("cd p", c.p, 0.5);
    near("cd r", c.r, 1.0);
    near("cd f1", c.f1, 2.0 / 3.0);
    near("cd iou", c.iou, 0.5);
    near("cd oa", c.oa, 0.5);
  }
  // F1 = 2 IoU / (1 + IoU) on 1000 random masks.
  std::mt19937 gen(0);
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const int n = 16 + static_cast<int>(gen() % 1024);
    const double dp = std::uniform_real_distribution<double>(0.0, 1.0)(gen);
    const double dg = std::uniform_real_distribution<double>(0.0, 1.0)(gen);
    std::vector<std::uint8_t> pred(n), gt(n);
    for (int i = 0; i < n; ++i) {
      pred[i] = std::uniform_real_distribution<double>(0.0, 1.0)(gen) < dp;
      gt[i] = std::uniform_real_distribution<double>(0.0, 1.0)(gen) < dg;
    }
    gt[gen() % n] = 1;  // keep TP + FP + FN > 0
    const CdMetrics c = cd_metrics(pred, gt);
    worst = std::max(worst, std::fabs(c.f1 - 2.0 * c.iou / (1.0 + c.iou)));
  }
  checks.emplace_back("f1/iou identity", worst <= 1e-9);
  int ok = 0;
  std::string failed;
  for (const auto& [name, pass] : checks) {
    ok += pass ? 1 : 0;
    if (!pass) failed += " " + name;
  }
  return {ok == static_cast<int>(checks.size()),
          std::to_string(ok) + "/" + std::to_string(checks.size()) + " oracle checks within 1e-6, F1/IoU worst " +
              fmt(worst, 15) + " over 1000 masks" + (failed.empty() ? "" : "; failed:" + failed)};
}

// ------------------------------------------------------------------- 4

Verdict end_to_end() {
  const auto t0 = Clock::now();
  RunConfig cfg;  // defaults, seed 0
  const Dataset ds = generate_dataset(0, SplitSizes{}, cfg.encoder.image_size);
  SemanticCc<float> m(cfg);
  TrainerOptions o;
  o.progress = &std::cerr;
  Trainer tr(m, ds, o);
  tr.train();
  const EvalOutput ev = evaluate(m, ds, ds.splits.test);
  const double secs = seconds_since(t0);
  const double f1 = ev.cd.f1, b4 = ev.cc.bleu[3];
  const bool pass = f1 >= 0.80 && b4 >= 0.85 && secs <= 45 * 60.0;
  return {pass, "CD F1 " + fmt(f1) + " (>= 0.80), BLEU-4 " + fmt(b4) + " (>= 0.85), " + fmt(secs / 60.0, 1) +
                    " min (<= 45) on " + std::to_string(worker_threads()) + " worker thread(s)"};
}

// -------------------------------------------------------------- ablations

// Reduced budget shared by criteria 5, 6, 7 and 9, three seeds per variant:
// the default split ratios at 60% size, a quarter of the default epochs, and
// the default optimizer settings.
struct AblationProfile {
  SplitSizes sizes{900, 900, 300, 0, 100};
  int epochs = 10;
  int warmup_steps = RunConfig{}.train.warmup_steps;
  double lr = RunConfig{}.train.lr;
};

struct Variant {
  std::string mode = "3-stage";
  bool act = true, sub = true;
  std::string key() const { return mode + (act ? "+act" : "") + (sub ? "+sub" : ""); }
};

struct RunResult {
  double bleu4 = 0.0, rouge_l = 0.0, delta_nc = 0.0, delta_c = 0.0;
};

class Ablations {
 public:
  static constexpr int kSeeds = 3;

  const RunResult& get(const Variant& v, int seed) {
    const std::string k = v.key() + "#" + std::to_string(seed);
    auto it = cache_.find(k);
    if (it != cache_.end()) return it->second;
    const auto t0 = Clock::now();
    RunConfig cfg;
    cfg.train.stage_mode = v.mode;
    cfg.train.seed = static_cast<std::uint64_t>(seed);
    cfg.train.epochs = profile_.epochs;
    cfg.train.warmup_steps = profile_.warmup_steps;
    cfg.train.lr = profile_.lr;
    cfg.train.eval_every = 0;
    cfg.cc_decoder.enhancer_act = v.act;
    cfg.cc_decoder.enhancer_sub = v.sub;
    SemanticCc<float> m(cfg);
    Trainer tr(m, data());
    tr.train();
    const EvalOutput ev = evaluate(m, data(), data().splits.test);
    RunResult r{ev.cc.bleu[3], ev.cc.rouge_l, ev.delta_no_change, ev.delta_change};
    progress(k + ": BLEU-4 " + fmt(r.bleu4) + " ROUGE_L " + fmt(r.rouge_l) + " |dF| nc " + fmt(r.delta_nc) + " c " +
             fmt(r.delta_c) + " (" + fmt(seconds_since(t0), 0) + " s)");
    return cache_.emplace(k, r).first->second;
  }

  RunResult mean(const Variant& v) {
    RunResult out;
    for (int s = 0; s < kSeeds; ++s) {
      const RunResult& r = get(v, s);
      out.bleu4 += r.bleu4 / kSeeds;
      out.rouge_l += r.rouge_l / kSeeds;
      out.delta_nc += r.delta_nc / kSeeds;
      out.delta_c += r.delta_c / kSeeds;
    }
    return out;
  }

 private:
  const Dataset& data() {
    if (!data_) data_ = std::make_unique<Dataset>(generate_dataset(1000, profile_.sizes, RunConfig{}.encoder.image_size));
    return *data_;
  }

  AblationProfile profile_;
  std::unique_ptr<Dataset> data_;
  std::map<std::string, RunResult> cache_;
};

Verdict multitask_guidance(Ablations& ab) {
  const RunResult full = ab.mean({"3-stage"}), cc = ab.mean({"cc-only"});
  const double dr = full.rouge_l - cc.rouge_l, db = full.bleu4 - cc.bleu4;
  return {dr >= 0.02 && db >= 0.02, "3-stage vs cc-only over 3 seeds: ROUGE_L " + fmt(full.rouge_l) + " vs " +
                                        fmt(cc.rouge_l) + " (diff " + fmt(dr) + ", >= 0.02), BLEU-4 " +
                                        fmt(full.bleu4) + " vs " + fmt(cc.bleu4) + " (diff " + fmt(db) + ", >= 0.02)"};
}

Verdict training_strategy(Ablations& ab) {
  const double b3 = ab.mean({"3-stage"}).bleu4, b2 = ab.mean({"2-stage"}).bleu4, b1 = ab.mean({"1-stage"}).bleu4;
  return {b3 >= b2 && b2 >= b1 && b3 - b1 >= 0.02, "mean BLEU-4 over 3 seeds: 3-stage " + fmt(b3) + " >= 2-stage " +
                                                       fmt(b2) + " >= 1-stage " + fmt(b1) + ", 3-stage - 1-stage " +
                                                       fmt(b3 - b1) + " (>= 0.02)"};
}

// Enhancer variants are compared on captioning alone (no CD guidance), so the
// enhancer is the only difference between runs.
Verdict enhancer_structure(Ablations& ab) {
  const double both = ab.mean({"cc-only", true, true}).bleu4;
  const double act = ab.mean({"cc-only", true, false}).bleu4;
  const double sub = ab.mean({"cc-only", false, true}).bleu4;
  return {both >= act && both >= sub, "cc-only mean BLEU-4 over 3 seeds: act+sub " + fmt(both) + " vs act " + fmt(act) +
                                          ", sub " + fmt(sub) + " (act+sub >= each)"};
}

Verdict no_change_behaviour(Ablations& ab) {
  const RunResult r = ab.mean({"3-stage"});
  const double ratio = r.delta_c > 0 ? r.delta_nc / r.delta_c : INFINITY;
  return {ratio <= 0.5, "mean |dF_cc| no-change " + fmt(r.delta_nc) + " vs changed " + fmt(r.delta_c) +
                            " over 3 seeds, ratio " + fmt(ratio) + " (<= 0.5)"};
}

// ------------------------------------------------------------------- 8

// A small model and dataset for the ledger and determinism checks.
RunConfig compact_config(const std::string& mode) {
  RunConfig c;
  c.encoder.image_size = 32;
  c.encoder.patch_size = 2;
  c.encoder.embed_dim = 16;
  c.encoder.depth = 4;
  c.encoder.heads = 2;
  c.encoder.window_size = 2;
  c.encoder.global_layers = {2, 4};
  c.encoder.cd_channels = 8;
  c.encoder.lora_rank = 4;
  c.encoder.lora_alpha = 8.0;
  c.neck.units = 2;
  c.neck.heads = 2;
  c.cd_decoder.pyramid_channels = 8;
  c.cd_decoder.refine_channels = 4;
  c.cc_decoder.n_queries = 3;
  c.cc_decoder.qformer_blocks = 1;
  c.cc_decoder.qformer_heads = 2;
  c.cc_decoder.d_lm = 16;
  c.cc_decoder.lm_layers = 2;
  c.cc_decoder.lm_heads = 2;
  c.cc_decoder.max_len = 12;
  c.cc_decoder.lora_rank = 4;
  c.cc_decoder.lora_alpha = 8.0;
  c.cc_decoder.embed_warmup_epochs = 1;
  c.train.stage_mode = mode;
  c.train.epochs = 2;
  c.train.warmup_steps = 4;
  c.train.lr = 1e-3;
  c.train.eval_every = 0;
  return c;
}

const Dataset& compact_data() {
  static const Dataset ds = generate_dataset(3, SplitSizes{8, 8, 4, 3, 6}, 32);
  return ds;
}

// Documented trainable groups per stage, written out independently of the
// trainer's schedule.
std::set<ParamGroup> documented_groups(const std::string& mode, const std::string& stage) {
  using G = ParamGroup;
  if (mode == "cc-only") return {G::kCcDecoder, G::kCcEmbedding};
  if (mode == "1-stage")
    return {G::kEncoderAdapter, G::kBcsf, G::kCdReduce, G::kNeck, G::kCdDecoder, G::kCcDecoder, G::kCcEmbedding};
  if (stage == "stage1") return {G::kEncoderAdapter, G::kBcsf, G::kCdReduce, G::kNeck, G::kCdDecoder};
  if (stage == "stage2") return {G::kNeck, G::kCcDecoder, G::kCcEmbedding};
  return {G::kNeck};
}

// The last neck unit's cross-task attentions write into one stream only, so
// a stage whose loss ignores that stream cannot move them.
std::set<std::string> unreachable(const RunConfig& cfg, const std::string& stage, const SemanticCc<float>& m) {
  std::string prefix;
  if (stage == "stage1") prefix = "neck/unit" + std::to_string(cfg.neck.units - 1) + "/cd_to_cc/";
  if (stage == "stage2") prefix = "neck/unit" + std::to_string(cfg.neck.units - 1) + "/cc_to_cd/";
  std::set<std::string> out;
  if (prefix.empty()) return out;
  for (const auto& p : m.params.all())
    if (p.name.rfind(prefix, 0) == 0) out.insert(p.name);
  return out;
}

Verdict freeze_ledger() {
  int stages = 0, violations = 0;
  std::string first;
  auto violate = [&](const std::string& what) {
    ++violations;
    progress("ledger violation: " + what);
    if (first.empty()) first = what;
  };
  for (const std::string mode : {"3-stage", "2-stage", "1-stage", "cc-only"}) {
    const RunConfig cfg = compact_config(mode);
    SemanticCc<float> m(cfg);
    Trainer tr(m, compact_data());
    const auto schedule = stage_schedule(cfg.train);
    for (int epoch = 0; epoch < cfg.train.epochs; ++epoch) {
      std::vector<std::vector<float>> before;
      for (const auto& p : m.params.all()) before.emplace_back(p.value.data().begin(), p.value.data().end());
      EpochStats es;
      try {
        es = tr.run_epoch(epoch);
      } catch (const ContractError& e) {
        violate(mode + ": " + e.what());
        break;
      }
      // The trainer's per-stage diff: nothing outside the set moved and
      // everything inside it did.
      std::set<std::string> expected;
      for (std::size_t s = 0; s < es.stages.size(); ++s) {
        const StageStats& st = es.stages[s];
        ++stages;
        if (!st.changed_frozen.empty()) violate(mode + "/" + st.name + ": " + st.changed_frozen.front() + " moved");
        const std::set<std::string> still(st.unchanged_trainable.begin(), st.unchanged_trainable.end());
        const std::set<std::string> exempt = unreachable(cfg, st.name, m);
        for (const auto& n : still)
          if (!exempt.count(n)) violate(mode + "/" + st.name + ": " + n + " did not move");
        for (const auto& n : exempt)
          if (!still.count(n)) violate(mode + "/" + st.name + ": " + n + " moved without a path to the loss");
        const auto doc = documented_groups(mode, st.name);
        std::set<ParamGroup> sched(schedule[s].groups.begin(), schedule[s].groups.end());
        if (doc != sched) violate(mode + "/" + st.name + ": schedule differs from the documented groups");
        for (const auto& p : m.params.all()) {
          const ParamGroup g = param_group(p.name);
          if (p.frozen || !doc.count(g)) continue;
          if (g == ParamGroup::kCcEmbedding && epoch >= cfg.cc_decoder.embed_warmup_epochs) continue;
          expected.insert(p.name);
        }
      }
      // Independent epoch-level diff against the documented union.
      const auto& all = m.params.all();
      for (std::size_t k = 0; k < all.size(); ++k) {
        const auto d = all[k].value.data();
        const bool changed = !std::equal(before[k].begin(), before[k].end(), d.begin());
        if (changed != (expected.count(all[k].name) != 0))
          violate(mode + " epoch " + std::to_string(epoch) + ": " + all[k].name + (changed ? " moved" : " did not move"));
      }
    }
  }
  return {violations == 0, std::to_string(stages) + " stage ledgers over 4 modes x 2 epochs, " +
                               std::to_string(violations) + " violations" + (first.empty() ? "" : "; first: " + first)};
}

// ------------------------------------------------------------------ 10

Verdict determinism_and_persistence() {
  const RunConfig cfg = compact_config("3-stage");
  auto run = [&](SemanticCc<float>& m) {
    Trainer tr(m, compact_data());
    tr.train();
    std::string log;
    for (const auto& j : tr.loss_log()) log += j.dump() + "\n";
    return log;
  };
  SemanticCc<float> m1(cfg), m2(cfg);
  const std::string log1 = run(m1), log2 = run(m2);
  const bool same_log = !log1.empty() && log1 == log2;

  const fs::path dir = fs::temp_directory_path() / ("semcc_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  save_checkpoint(m1, dir.string(), {});
  const LoadedCheckpoint ck = load_checkpoint(dir.string(), cfg.hash());
  const auto& ds = compact_data();
  const std::string r1 = eval_report(evaluate(m1, ds, ds.splits.test), cfg.hash(), "d").dump();
  const std::string r2 = eval_report(evaluate(*ck.model, ds, ds.splits.test), ck.model->config().hash(), "d").dump();
  fs::remove_all(dir);
  const bool same_report = r1 == r2;
  const std::size_t lines = static_cast<std::size_t>(std::count(log1.begin(), log1.end(), '\n'));
  return {same_log && same_report, std::string("same-seed loss logs ") + (same_log ? "identical" : "differ") + " (" +
                                       std::to_string(lines) + " lines), checkpoint round-trip eval report " +
                                       (same_report ? "bitwise equal" : "differs") + " (" +
                                       std::to_string(r1.size()) + " bytes)"};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  if (selected.empty())
    for (int i = 1; i <= 10; ++i) selected.insert(i);

  Ablations ab;
  const std::map<int, std::pair<std::string, std::function<Verdict()>>> criteria = {
      {1, {"gradient suite", gradient_suite}},
      {2, {"identity at init", identity_at_init}},
      {3, {"metric oracles", metric_oracles}},
      {4, {"end-to-end default run", end_to_end}},
      {5, {"multi-task guidance", [&] { return multitask_guidance(ab); }}},
      {6, {"training strategy", [&] { return training_strategy(ab); }}},
      {7, {"enhancer structure", [&] { return enhancer_structure(ab); }}},
      {8, {"freeze ledger", freeze_ledger}},
      {9, {"no-change behaviour", [&] { return no_change_behaviour(ab); }}},
      {10, {"determinism and persistence", determinism_and_persistence}},
  };
  // Also kept next to the binary's working directory for later reading.
  std::ofstream report("acceptance_report.txt");
  int failed = 0;
  for (const auto& [n, c] : criteria) {
    if (!selected.count(n)) continue;
    const auto t0 = Clock::now();
    Verdict v;
    try {
      v = c.second();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    failed += v.pass ? 0 : 1;
    std::ostringstream line;
    line << "criterion " << n << " [" << c.first << "]: " << (v.pass ? "PASS" : "FAIL") << " - " << v.detail << " ("
         << fmt(seconds_since(t0), 1) << " s)";
    std::cout << line.str() << std::endl;
    report << line.str() << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
