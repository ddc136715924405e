// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace semcc {

struct CaptionItem {
  std::string id;
  std::string hypothesis;
  std::vector<std::string> references;
};
using CaptionEvalSet = std::vector<CaptionItem>;

/// Lowercase, whitespace split. Punctuation is split off like the model tokenizer.
std::vector<std::string> metric_tokens(const std::string& s);

/// Corpus-level BLEU-n with brevity penalty; zero precisions replaced by 1e-9.
double bleu(const CaptionEvalSet& set, int n);
/// LCS F-measure with beta 1.2, max over references, mean over the corpus.
double rouge_l(const CaptionEvalSet& set);

struct CiderResult {
  double score = 0.0;
  bool degenerate = false;  // fewer than two items: every IDF weight is zero
};
/// TF-IDF n-gram cosine for n = 1..4, averaged over n and references, x10.
CiderResult cider(const CaptionEvalSet& set);

/// Exact-match unigram alignment, alpha 0.9, beta 3, gamma 0.5. Max over references.
double meteor_exact(const CaptionEvalSet& set);
/// Single pair score and the alignment statistics behind it.
struct MeteorStats {
  int matches = 0, chunks = 0, hyp_len = 0, ref_len = 0;
  double score = 0.0;
};
MeteorStats meteor_pair(const std::vector<std::string>& hyp, const std::vector<std::string>& ref);

struct ConfusionCounts {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
  std::uint64_t total() const { return tp + fp + fn + tn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o);
};

struct CdMetrics {
  double p = 0, r = 0, f1 = 0, iou = 0, oa = 0;
  bool degenerate = false;  // some ratio was 0/0 and reported as 0
};

/// Both masks hold {0, 1}; throws DimensionError on size mismatch, DataError on other values.
ConfusionCounts confusion(const std::vector<std::uint8_t>& pred, const std::vector<std::uint8_t>& gt);
CdMetrics cd_metrics(const ConfusionCounts& c);
CdMetrics cd_metrics(const std::vector<std::uint8_t>& pred, const std::vector<std::uint8_t>& gt);

struct CaptionScores {
  double bleu[4] = {0, 0, 0, 0};
  double meteor = 0, rouge_l = 0, cider = 0;
  bool cider_degenerate = false;
};
CaptionScores caption_scores(const CaptionEvalSet& set);

/// Report keys: bleu_1..4, metor (and meteor), rouge_l, cider, p, r, f1, iou, oa.
nlohmann::json metrics_json(const CaptionScores& cc, const CdMetrics& cd);
/// Fixed-width two-line tables: caption scores to four decimals, CD scores in percent to one decimal.
std::string metrics_table(const CaptionScores& cc, const CdMetrics& cd);

}  // namespace semcc
