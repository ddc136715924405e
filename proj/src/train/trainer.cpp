// SPDX-License-Identifier: Apache-2.0
#include "train/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>

#include "tensor/rng.hpp"
#include "train/checkpoint.hpp"
#include "train/evaluate.hpp"

namespace semcc {

namespace fs = std::filesystem;

std::vector<StageSpec> stage_schedule(const TrainConfig& cfg) {
  using G = ParamGroup;
  std::vector<G> s1 = {G::kCdReduce, G::kNeck, G::kCdDecoder};
  if (cfg.stage1_adapters) s1.insert(s1.begin(), {G::kEncoderAdapter, G::kBcsf});
  const StageSpec stage1{"stage1", "cd", StageLoss::kCd, s1};
  const StageSpec stage2{"stage2", "cc", StageLoss::kCc, {G::kNeck, G::kCcDecoder, G::kCcEmbedding}};
  const StageSpec stage3{"stage3", "cd_cc", StageLoss::kJoint, {G::kNeck}};
  if (cfg.stage_mode == "3-stage") return {stage1, stage2, stage3};
  if (cfg.stage_mode == "2-stage") return {stage1, stage2};
  if (cfg.stage_mode == "1-stage") {
    return {{"joint",
             "cd_cc",
             StageLoss::kJoint,
             {G::kEncoderAdapter, G::kBcsf, G::kCdReduce, G::kNeck, G::kCdDecoder, G::kCcDecoder, G::kCcEmbedding}}};
  }
  if (cfg.stage_mode == "cc-only") return {{"cc", "cc", StageLoss::kCc, {G::kCcDecoder, G::kCcEmbedding}}};
  throw ConfigError("unknown stage mode '" + cfg.stage_mode + "'");
}

std::set<std::string> stage_trainable(const SemanticCc<float>& model, const StageSpec& stage, int epoch) {
  std::set<std::string> out;
  const int warm = model.config().cc_decoder.embed_warmup_epochs;
  for (const auto& p : model.params.all()) {
    if (p.frozen) continue;
    const ParamGroup g = param_group(p.name);
    if (std::find(stage.groups.begin(), stage.groups.end(), g) == stage.groups.end()) continue;
    if (g == ParamGroup::kCcEmbedding && epoch >= warm) continue;
    out.insert(p.name);
  }
  return out;
}

namespace {

const std::vector<std::string>& split_ids(const Dataset& d, const std::string& split) {
  if (split == "cd") return d.splits.cd;
  if (split == "cc") return d.splits.cc;
  if (split == "cd_cc") return d.splits.cd_cc;
  if (split == "val") return d.splits.val;
  return d.splits.test;
}

int split_cap(const TrainConfig& t, const std::string& split) {
  if (split == "cd") return t.max_cd_samples;
  if (split == "cc") return t.max_cc_samples;
  return t.max_joint_samples;
}

std::string fmt(double v, int prec) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", prec, v);
  return buf;
}

}  // namespace

Trainer::Trainer(SemanticCc<float>& model, const Dataset& data, TrainerOptions opts)
    : model_(model), data_(data), opts_(std::move(opts)) {
  const TrainConfig& t = model_.config().train;
  if (data_.size != model_.config().encoder.image_size) {
    throw ConfigError("dataset image size " + std::to_string(data_.size) + " differs from encoder image_size " +
                      std::to_string(model_.config().encoder.image_size));
  }
  stages_ = stage_schedule(t);
  long per_epoch = 0;
  for (const auto& s : stages_) {
    const auto& ids = split_ids(data_, s.split);
    if (ids.empty()) throw ConfigError("stage " + s.name + " needs a non-empty '" + s.split + "' split");
    for (const auto& id : ids) {
      const SampleRecord& r = data_.at(id);
      if ((s.loss != StageLoss::kCc && !r.mask) || (s.loss != StageLoss::kCd && !r.captions)) {
        throw ConfigError("sample '" + id + "' in split '" + s.split + "' lacks the labels stage " + s.name + " needs");
      }
    }
    int n = static_cast<int>(ids.size());
    const int cap = split_cap(t, s.split);
    if (cap > 0) n = std::min(n, cap);
    per_epoch += (n + t.batch_size - 1) / t.batch_size;
  }
  total_steps_ = per_epoch * t.epochs;
  if (t.warmup_steps >= total_steps_) {
    throw ConfigError("warmup_steps (" + std::to_string(t.warmup_steps) + ") must be below the total step count (" +
                      std::to_string(total_steps_) + ")");
  }
  if (!opts_.out_dir.empty()) {
    fs::create_directories(opts_.out_dir);
    log_file_ = std::make_unique<std::ofstream>(fs::path(opts_.out_dir) / "loss_log.jsonl");
    if (!*log_file_) throw DataError("cannot write loss log in " + opts_.out_dir);
  }
}

std::vector<std::string> Trainer::stage_ids(const StageSpec& stage, int epoch) const {
  std::vector<std::string> ids = split_ids(data_, stage.split);
  CounterRng rng(model_.config().train.seed ^ fnv1a(stage.name), static_cast<std::uint64_t>(epoch) << 32);
  rng.shuffle(ids);
  const int cap = split_cap(model_.config().train, stage.split);
  if (cap > 0 && static_cast<int>(ids.size()) > cap) ids.resize(cap);
  return ids;
}

double Trainer::sample_loss(const StageSpec& stage, const SampleRecord& r, int epoch, ForwardCtx& ctx) {
  const auto& cfg = model_.config();
  const int B = cfg.train.batch_size;
  const Tensor<float> i1 = image_tensor<float>(r.img_a, r.size), i2 = image_tensor<float>(r.img_b, r.size);
  const FeaturePair<float> f = model_.features(i1, i2, ctx);
  Tensor<float> l_cd, l_cc;
  if (stage.loss != StageLoss::kCc) l_cd = cd_loss(model_.cd_logits(f), mask_tensor<float>(*r.mask, r.size));
  if (stage.loss != StageLoss::kCd) {
    CounterRng pick(cfg.train.seed ^ fnv1a(r.id), static_cast<std::uint64_t>(epoch) << 8);
    const auto& caps = *r.captions;
    const std::string& caption = caps[pick.randint(0, static_cast<int>(caps.size()) - 1)];
    const auto& templates = model_.cc_decoder.templates();
    const PromptTemplate& tmpl = templates[pick.randint(0, static_cast<int>(templates.size()) - 1)];
    std::vector<int> target = model_.vocab().encode(caption);
    if (static_cast<int>(target.size()) >= cfg.cc_decoder.max_len) target.resize(cfg.cc_decoder.max_len - 1);
    l_cc = model_.cc_decoder.loss(f.f1_cc, f.f2_cc, tmpl, target, ctx).loss;
  }
  Tensor<float> loss;
  double value = 0.0;
  switch (stage.loss) {
    case StageLoss::kCd:
      loss = l_cd;
      value = l_cd.item();
      break;
    case StageLoss::kCc:
      loss = l_cc;
      value = l_cc.item();
      break;
    case StageLoss::kJoint:
      value = total_loss(l_cc.item(), l_cd.item(), cfg.train.lambda_cd);
      loss = add(l_cc, scale(l_cd, static_cast<float>(cfg.train.lambda_cd)));
      break;
  }
  if (!std::isfinite(value)) throw NumericError("non-finite loss");
  if (B > 1) loss = scale(loss, 1.0f / static_cast<float>(B));
  backward(loss);
  return value;
}

void Trainer::write_log_line(const nlohmann::json& j) {
  log_.push_back(j);
  if (log_file_) *log_file_ << j.dump() << "\n";
}

EpochStats Trainer::run_epoch(int epoch) {
  const TrainConfig& t = model_.config().train;
  EpochStats stats;
  stats.epoch = epoch;
  for (const auto& stage : stages_) {
    const auto clock0 = std::chrono::steady_clock::now();
    const std::set<std::string> trainable = stage_trainable(model_, stage, epoch);
    model_.params.set_trainable([&](const std::string& n) { return trainable.count(n) != 0; });
    std::vector<std::vector<float>> before;
    for (const auto& p : model_.params.all()) before.emplace_back(p.value.data().begin(), p.value.data().end());

    const std::vector<std::string> ids = stage_ids(stage, epoch);
    StageStats st;
    st.name = stage.name;
    double loss_sum = 0.0;
    for (std::size_t b0 = 0; b0 < ids.size(); b0 += t.batch_size) {
      const std::size_t b1 = std::min(ids.size(), b0 + t.batch_size);
      double batch_loss = 0.0;
      for (std::size_t i = b0; i < b1; ++i) {
        Tape<float> tape;
        TapeScope<float> scope(tape);
        ForwardCtx ctx;
        ctx.training = true;
        ctx.seed = mix64(t.seed ^ mix64(static_cast<std::uint64_t>(step_))) + i;
        try {
          batch_loss += sample_loss(stage, data_.at(ids[i]), epoch, ctx);
        } catch (const NumericError& e) {
          throw NumericError(std::string(e.what()) + " at epoch " + std::to_string(epoch) + ", " + stage.name +
                             ", step " + std::to_string(step_) + ", sample '" + ids[i] + "'");
        }
      }
      batch_loss /= static_cast<double>(b1 - b0);
      const double lr = lr_at(step_, total_steps_, t);
      const double gnorm = clip_grad_norm(model_.params, t.grad_clip);
      try {
        adamw_step(model_.params, adam_, lr, t);
      } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " at epoch " + std::to_string(epoch) + ", " + stage.name +
                           ", step " + std::to_string(step_));
      }
      model_.params.zero_grad();
      write_log_line({{"epoch", epoch},
                      {"stage", stage.name},
                      {"step", step_},
                      {"id", ids[b0]},
                      {"loss", batch_loss},
                      {"lr", lr},
                      {"grad_norm", gnorm}});
      loss_sum += batch_loss;
      ++st.steps;
      ++step_;
    }
    st.samples = static_cast<int>(ids.size());
    st.mean_loss = st.steps > 0 ? loss_sum / st.steps : 0.0;

    // Freeze ledger: compare every tensor against its pre-stage copy.
    st.n_trainable = static_cast<int>(trainable.size());
    const auto& all = model_.params.all();
    for (std::size_t k = 0; k < all.size(); ++k) {
      const bool changed = !std::equal(before[k].begin(), before[k].end(), all[k].value.data().begin());
      const bool allowed = trainable.count(all[k].name) != 0;
      if (changed) ++st.n_changed;
      if (changed && !allowed) st.changed_frozen.push_back(all[k].name);
      if (!changed && allowed) st.unchanged_trainable.push_back(all[k].name);
    }
    model_.params.set_trainable([](const std::string&) { return false; });
    if (!st.changed_frozen.empty()) {
      throw ContractError("freeze ledger violation in " + stage.name + ": '" + st.changed_frozen.front() +
                          "' changed while frozen");
    }
    if (opts_.progress) {
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - clock0).count();
      *opts_.progress << "epoch " << epoch + 1 << "/" << t.epochs << " " << stage.name << ": " << st.samples
                      << " samples, loss " << fmt(st.mean_loss, 4) << " (" << fmt(secs, 1) << "s)" << std::endl;
    }
    stats.stages.push_back(std::move(st));
  }
  return stats;
}

std::vector<EpochStats> Trainer::train() {
  const RunConfig& cfg = model_.config();
  const TrainConfig& t = cfg.train;
  std::vector<EpochStats> history;
  std::unique_ptr<std::ofstream> curves, metrics_csv, ledger;
  const bool on_disk = !opts_.out_dir.empty();
  const fs::path out(opts_.out_dir);
  if (on_disk) {
    curves = std::make_unique<std::ofstream>(out / "loss_curves.csv");
    *curves << "epoch,stage,steps,mean_loss\n";
    metrics_csv = std::make_unique<std::ofstream>(out / "val_metrics.csv");
    *metrics_csv << "epoch,bleu_1,bleu_4,meteor,rouge_l,cider,p,r,f1,iou,oa\n";
    ledger = std::make_unique<std::ofstream>(out / "freeze_ledger.jsonl");
    std::ofstream(out / "config.json") << cfg.to_json().dump(2) << "\n";
  }
  std::vector<fs::path> kept;
  for (int epoch = 0; epoch < t.epochs; ++epoch) {
    EpochStats es = run_epoch(epoch);
    const bool last = epoch + 1 == t.epochs;
    if (!data_.splits.val.empty() && t.eval_every > 0 && ((epoch + 1) % t.eval_every == 0 || last)) {
      const EvalOutput ev = evaluate(model_, data_, data_.splits.val, t.val_samples);
      es.val = metrics_json(ev.cc, ev.cd);
      if (opts_.progress) {
        *opts_.progress << "epoch " << epoch + 1 << " val: BLEU-4 " << fmt(ev.cc.bleu[3], 4) << " ROUGE_L "
                        << fmt(ev.cc.rouge_l, 4) << " CIDEr " << fmt(ev.cc.cider, 4) << " F1 "
                        << fmt(100 * ev.cd.f1, 1) << std::endl;
      }
      if (metrics_csv) {
        *metrics_csv << epoch + 1 << "," << ev.cc.bleu[0] << "," << ev.cc.bleu[3] << "," << ev.cc.meteor << ","
                     << ev.cc.rouge_l << "," << ev.cc.cider << "," << ev.cd.p << "," << ev.cd.r << "," << ev.cd.f1
                     << "," << ev.cd.iou << "," << ev.cd.oa << "\n";
      }
    }
    nlohmann::json summary = {{"type", "epoch"}, {"epoch", epoch}};
    for (const auto& s : es.stages) {
      summary[s.name] = s.mean_loss;
      if (curves) *curves << epoch + 1 << "," << s.name << "," << s.steps << "," << s.mean_loss << "\n";
      if (ledger) {
        *ledger << nlohmann::json{{"epoch", epoch},
                                  {"stage", s.name},
                                  {"trainable", s.n_trainable},
                                  {"changed", s.n_changed},
                                  {"changed_frozen", s.changed_frozen},
                                  {"unchanged_trainable", s.unchanged_trainable}}
                       .dump()
                << "\n";
      }
    }
    write_log_line(summary);
    if (on_disk) {
      const fs::path dir = out / "checkpoints" / ("epoch_" + std::to_string(epoch + 1));
      nlohmann::json info = {{"epoch", epoch + 1},
                             {"step", step_},
                             {"dataset_digest", opts_.dataset_digest},
                             {"metrics", es.val.is_null() ? nlohmann::json::object() : es.val}};
      save_checkpoint(model_, dir.string(), info);
      kept.push_back(dir);
      while (static_cast<int>(kept.size()) > t.keep_checkpoints) {
        fs::remove_all(kept.front());
        kept.erase(kept.begin());
      }
      if (last) save_checkpoint(model_, (out / "final").string(), info);
      curves->flush();
      metrics_csv->flush();
      ledger->flush();
      log_file_->flush();
    }
    history.push_back(std::move(es));
  }
  return history;
}

}  // namespace semcc
