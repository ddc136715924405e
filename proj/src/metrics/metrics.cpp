// SPDX-License-Identifier: Apache-2.0
#include "metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

#include "model/cc_decoder.hpp"
#include "tensor/errors.hpp"

namespace semcc {

namespace {

using Ngram = std::vector<std::string>;
using Counts = std::map<Ngram, int>;

Counts ngram_counts(const std::vector<std::string>& toks, int n) {
  Counts c;
  for (std::size_t i = 0; i + n <= toks.size(); ++i) ++c[Ngram(toks.begin() + i, toks.begin() + i + n)];
  return c;
}

void require_nonempty(const CaptionEvalSet& set, const char* metric) {
  if (set.empty()) throw ContractError(std::string(metric) + " on an empty corpus");
  for (const auto& item : set) {
    if (item.references.empty()) throw ContractError(std::string(metric) + ": item '" + item.id + "' has no references");
  }
}

std::size_t lcs(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace

std::vector<std::string> metric_tokens(const std::string& s) { return tokenize(s); }

double bleu(const CaptionEvalSet& set, int n) {
  if (n < 1 || n > 4) throw ContractError("BLEU order must be in 1..4");
  require_nonempty(set, "BLEU");
  std::vector<double> matched(n, 0.0), total(n, 0.0);
  double hyp_len = 0, ref_len = 0;
  for (const auto& item : set) {
    const auto hyp = metric_tokens(item.hypothesis);
    std::vector<std::vector<std::string>> refs;
    for (const auto& r : item.references) refs.push_back(metric_tokens(r));
    hyp_len += static_cast<double>(hyp.size());
    // Closest reference length, shorter wins ties.
    std::size_t best = refs[0].size();
    for (const auto& r : refs) {
      const auto d = [&](std::size_t l) { return l > hyp.size() ? l - hyp.size() : hyp.size() - l; };
      if (d(r.size()) < d(best) || (d(r.size()) == d(best) && r.size() < best)) best = r.size();
    }
    ref_len += static_cast<double>(best);
    for (int k = 1; k <= n; ++k) {
      const Counts hc = ngram_counts(hyp, k);
      Counts max_ref;
      for (const auto& r : refs) {
        for (const auto& [g, c] : ngram_counts(r, k)) max_ref[g] = std::max(max_ref[g], c);
      }
      for (const auto& [g, c] : hc) {
        auto it = max_ref.find(g);
        matched[k - 1] += std::min(c, it == max_ref.end() ? 0 : it->second);
        total[k - 1] += c;
      }
    }
  }
  double log_sum = 0.0;
  for (int k = 0; k < n; ++k) {
    const double p = matched[k] > 0 ? matched[k] / total[k] : 1e-9;
    log_sum += std::log(p);
  }
  const double bp = hyp_len == 0 ? 0.0 : (hyp_len >= ref_len ? 1.0 : std::exp(1.0 - ref_len / hyp_len));
  return bp * std::exp(log_sum / n);
}

double rouge_l(const CaptionEvalSet& set) {
  require_nonempty(set, "ROUGE_L");
  constexpr double beta2 = 1.2 * 1.2;
  double sum = 0.0;
  for (const auto& item : set) {
    const auto hyp = metric_tokens(item.hypothesis);
    double best = 0.0;
    for (const auto& r : item.references) {
      const auto ref = metric_tokens(r);
      const double l = static_cast<double>(lcs(hyp, ref));
      if (l == 0) continue;
      const double p = l / hyp.size(), rc = l / ref.size();
      best = std::max(best, (1 + beta2) * p * rc / (rc + beta2 * p));
    }
    sum += best;
  }
  return sum / static_cast<double>(set.size());
}

CiderResult cider(const CaptionEvalSet& set) {
  require_nonempty(set, "CIDEr");
  CiderResult out;
  const double n_docs = static_cast<double>(set.size());
  out.degenerate = set.size() < 2;
  const double log_n = std::log(n_docs);
  double total = 0.0;
  std::vector<std::vector<std::vector<std::string>>> refs(set.size());
  std::vector<std::vector<std::string>> hyps(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) {
    hyps[i] = metric_tokens(set[i].hypothesis);
    for (const auto& r : set[i].references) refs[i].push_back(metric_tokens(r));
  }
  std::vector<double> per_item(set.size(), 0.0);
  for (int n = 1; n <= 4; ++n) {
    std::map<Ngram, double> df;
    for (const auto& item_refs : refs) {
      std::set<Ngram> seen;
      for (const auto& r : item_refs) {
        for (const auto& [g, c] : ngram_counts(r, n)) seen.insert(g);
      }
      for (const auto& g : seen) df[g] += 1.0;
    }
    auto vec = [&](const std::vector<std::string>& toks, double& norm) {
      std::map<Ngram, double> v;
      for (const auto& [g, c] : ngram_counts(toks, n)) {
        auto it = df.find(g);
        const double d = it == df.end() ? 0.0 : it->second;
        v[g] = c * (log_n - std::log(std::max(1.0, d)));
      }
      norm = 0.0;
      for (const auto& [g, w] : v) norm += w * w;
      norm = std::sqrt(norm);
      return v;
    };
    for (std::size_t i = 0; i < set.size(); ++i) {
      double hn = 0.0;
      const auto hv = vec(hyps[i], hn);
      double acc = 0.0;
      for (const auto& r : refs[i]) {
        double rn = 0.0;
        const auto rv = vec(r, rn);
        if (hn == 0.0 || rn == 0.0) continue;
        double dot = 0.0;
        for (const auto& [g, w] : hv) {
          auto it = rv.find(g);
          if (it != rv.end()) dot += w * it->second;
        }
        acc += dot / (hn * rn);
      }
      per_item[i] += acc / static_cast<double>(refs[i].size());
    }
  }
  for (double s : per_item) total += s / 4.0 * 10.0;
  out.score = total / n_docs;
  return out;
}

MeteorStats meteor_pair(const std::vector<std::string>& hyp, const std::vector<std::string>& ref) {
  MeteorStats st;
  st.hyp_len = static_cast<int>(hyp.size());
  st.ref_len = static_cast<int>(ref.size());
  std::vector<bool> used(ref.size(), false);
  std::vector<int> align(hyp.size(), -1);
  // Greedy exact alignment: extend the previous match's chunk when possible,
  // otherwise take the earliest unused occurrence.
  for (std::size_t i = 0; i < hyp.size(); ++i) {
    int pick = -1;
    if (i > 0 && align[i - 1] >= 0) {
      const std::size_t next = static_cast<std::size_t>(align[i - 1]) + 1;
      if (next < ref.size() && !used[next] && ref[next] == hyp[i]) pick = static_cast<int>(next);
    }
    if (pick < 0) {
      for (std::size_t j = 0; j < ref.size(); ++j) {
        if (!used[j] && ref[j] == hyp[i]) {
          pick = static_cast<int>(j);
          break;
        }
      }
    }
    if (pick >= 0) {
      used[pick] = true;
      align[i] = pick;
      ++st.matches;
    }
  }
  if (st.matches == 0) return st;
  int prev = -2;
  for (int a : align) {
    if (a < 0) {
      prev = -2;
      continue;
    }
    if (a != prev + 1) ++st.chunks;
    prev = a;
  }
  const double m = st.matches;
  const double p = m / st.hyp_len, r = m / st.ref_len;
  const double fmean = p * r / (0.9 * p + 0.1 * r);
  const double penalty = 0.5 * std::pow(st.chunks / m, 3.0);
  st.score = fmean * (1.0 - penalty);
  return st;
}

double meteor_exact(const CaptionEvalSet& set) {
  require_nonempty(set, "METEOR");
  double sum = 0.0;
  for (const auto& item : set) {
    const auto hyp = metric_tokens(item.hypothesis);
    double best = 0.0;
    for (const auto& r : item.references) best = std::max(best, meteor_pair(hyp, metric_tokens(r)).score);
    sum += best;
  }
  return sum / static_cast<double>(set.size());
}

ConfusionCounts& ConfusionCounts::operator+=(const ConfusionCounts& o) {
  tp += o.tp;
  fp += o.fp;
  fn += o.fn;
  tn += o.tn;
  return *this;
}

ConfusionCounts confusion(const std::vector<std::uint8_t>& pred, const std::vector<std::uint8_t>& gt) {
  if (pred.size() != gt.size()) {
    throw DimensionError("prediction has " + std::to_string(pred.size()) + " pixels, ground truth " +
                         std::to_string(gt.size()));
  }
  ConfusionCounts c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] > 1 || gt[i] > 1) throw DataError("change masks must be binary");
    if (pred[i]) {
      ++(gt[i] ? c.tp : c.fp);
    } else {
      ++(gt[i] ? c.fn : c.tn);
    }
  }
  return c;
}

CdMetrics cd_metrics(const ConfusionCounts& c) {
  CdMetrics m;
  auto ratio = [&](double num, double den) {
    if (den == 0) {
      m.degenerate = true;
      return 0.0;
    }
    return num / den;
  };
  const double tp = static_cast<double>(c.tp), fp = static_cast<double>(c.fp), fn = static_cast<double>(c.fn);
  m.p = ratio(tp, tp + fp);
  m.r = ratio(tp, tp + fn);
  m.f1 = ratio(2 * m.p * m.r, m.p + m.r);
  m.iou = ratio(tp, tp + fp + fn);
  m.oa = ratio(tp + static_cast<double>(c.tn), static_cast<double>(c.total()));
  return m;
}

CdMetrics cd_metrics(const std::vector<std::uint8_t>& pred, const std::vector<std::uint8_t>& gt) {
  return cd_metrics(confusion(pred, gt));
}

CaptionScores caption_scores(const CaptionEvalSet& set) {
  CaptionScores s;
  for (int n = 1; n <= 4; ++n) s.bleu[n - 1] = bleu(set, n);
  s.meteor = meteor_exact(set);
  s.rouge_l = rouge_l(set);
  const CiderResult c = cider(set);
  s.cider = c.score;
  s.cider_degenerate = c.degenerate;
  return s;
}

nlohmann::json metrics_json(const CaptionScores& cc, const CdMetrics& cd) {
  nlohmann::json j;
  for (int n = 1; n <= 4; ++n) j["bleu_" + std::to_string(n)] = cc.bleu[n - 1];
  j["metor"] = cc.meteor;
  j["meteor"] = cc.meteor;
  j["meteor_variant"] = "exact-match only (no stem/synonym modules)";
  j["rouge_l"] = cc.rouge_l;
  j["cider"] = cc.cider;
  j["cider_degenerate"] = cc.cider_degenerate;
  j["p"] = cd.p;
  j["r"] = cd.r;
  j["f1"] = cd.f1;
  j["iou"] = cd.iou;
  j["oa"] = cd.oa;
  j["cd_degenerate"] = cd.degenerate;
  return j;
}

std::string metrics_table(const CaptionScores& cc, const CdMetrics& cd) {
  char buf[512];
  std::string out;
  std::snprintf(buf, sizeof(buf), "%-8s %-8s %-8s %-8s %-8s %-8s %-8s\n", "BLEU-1", "BLEU-2", "BLEU-3", "BLEU-4",
                "METEOR", "ROUGE_L", "CIDEr");
  out += buf;
  std::snprintf(buf, sizeof(buf), "%-8.4f %-8.4f %-8.4f %-8.4f %-8.4f %-8.4f %-8.4f\n", cc.bleu[0], cc.bleu[1],
                cc.bleu[2], cc.bleu[3], cc.meteor, cc.rouge_l, cc.cider);
  out += buf;
  std::snprintf(buf, sizeof(buf), "%-6s %-6s %-6s %-6s %-6s\n", "P", "R", "F1", "IoU", "OA");
  out += buf;
  std::snprintf(buf, sizeof(buf), "%-6.1f %-6.1f %-6.1f %-6.1f %-6.1f\n", 100 * cd.p, 100 * cd.r, 100 * cd.f1,
                100 * cd.iou, 100 * cd.oa);
  out += buf;
  return out;
}

}  // namespace semcc
