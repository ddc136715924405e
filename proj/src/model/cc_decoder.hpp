// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <vector>

#include "model/config.hpp"
#include "model/nn.hpp"

namespace semcc {

/// Lowercases and splits on whitespace; . , ? ! ; : become separate tokens.
std::vector<std::string> tokenize(const std::string& text);

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kImg = 3;
  static constexpr const char* kImgToken = "<img>";

  /// Reserved tokens followed by `words` in sorted, de-duplicated order.
  explicit Vocabulary(const std::vector<std::string>& words = {});

  int size() const { return static_cast<int>(tokens_.size()); }
  bool contains(const std::string& tok) const { return ids_.count(tok) != 0; }
  /// Throws DataError for out-of-vocabulary tokens.
  int id(const std::string& tok) const;
  const std::string& token(int id) const;
  std::vector<int> encode(const std::string& text) const;
  /// Joins word tokens up to the first EOS; reserved tokens are skipped.
  std::string decode(const std::vector<int>& ids) const;

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, int> ids_;
};

/// Instruction text with exactly one image slot ("<img>").
struct PromptTemplate {
  std::string text;
  std::vector<int> before, after;  // token ids around the slot

  static PromptTemplate parse(const std::string& text, const Vocabulary& vocab);
};

/// The four instruction prompts, each preceded by the image slot.
const std::vector<std::string>& default_prompt_texts();

/// Mean of per-token log-probs over tokens up to and including the first EOS;
/// PAD entries are ignored.
double mean_token_logprob(const std::vector<int>& tokens, const std::vector<double>& logprobs);

struct CaptionCandidate {
  std::vector<int> tokens;  // generated ids, EOS excluded
  double mean_logprob = 0.0;
  int template_idx = 0;
};

/// Highest mean log-prob wins; ties go to the earliest candidate.
const CaptionCandidate& ensemble_select(const std::vector<CaptionCandidate>& candidates);

template <typename T>
class QFormer {
 public:
  QFormer() = default;
  QFormer(ParameterStore<T>& ps, const CcDecoderConfig& cfg, int c, int vocab);
  /// f: [n, c], prompt: token ids -> [n_q, c].
  Tensor<T> operator()(const Tensor<T>& f, const Tensor<T>& prompt_embed, ForwardCtx& ctx) const;
  Tensor<T> embed_prompt(const std::vector<int>& ids) const { return embedding(prompt_table, ids); }

  Tensor<T> queries;       // [n_q, c]
  Tensor<T> prompt_table;  // [V, c]
  std::vector<CrossBlock<T>> blocks;
};

template <typename T>
class Enhancer {
 public:
  Enhancer() = default;
  Enhancer(ParameterStore<T>& ps, const CcDecoderConfig& cfg, int c, int out);
  /// f1, f2: [m, c] -> delta [m, out].
  Tensor<T> operator()(const Tensor<T>& f1, const Tensor<T>& f2, ForwardCtx& ctx) const;
  /// Gated features (f1', f2') of the activation step.
  std::pair<Tensor<T>, Tensor<T>> activate(const Tensor<T>& f1, const Tensor<T>& f2, ForwardCtx& ctx) const;

  bool act = true, sub = true, tie_gates = false;
  Proj<T> gate1, gate2, proj;
};

/// Causal transformer language decoder over embedded sequences.
template <typename T>
class CaptionLm {
 public:
  CaptionLm() = default;
  CaptionLm(ParameterStore<T>& ps, const CcDecoderConfig& cfg, int vocab, int max_positions);

  /// seq: [L, d] input embeddings (positions added here) -> hidden [L, d].
  Tensor<T> hidden(const Tensor<T>& seq, ForwardCtx& ctx) const;
  Tensor<T> logits(const Tensor<T>& h, ForwardCtx& ctx) const { return head(final_ln(h), ctx); }
  Tensor<T> embed_tokens(const std::vector<int>& ids) const { return embedding(token_table, ids); }

  int max_positions = 0;
  Tensor<T> token_table;  // [V, d]
  Tensor<T> pos_embed;    // [max_positions, d]
  std::vector<SelfBlock<T>> layers;
  LayerNorm<T> final_ln;
  Proj<T> head;
};

template <typename T>
struct CaptionForward {
  Tensor<T> loss;
  Tensor<T> delta_f;  // [n_q, d_lm] or [n, ...] in the pre position
};

/// Q-Former + enhancer + prompter + language decoder.
template <typename T>
class CcDecoder {
 public:
  CcDecoder(ParameterStore<T>& ps, const CcDecoderConfig& cfg, int c, const Vocabulary& vocab);

  /// Differential features for one template.
  Tensor<T> delta_features(const Tensor<T>& f1, const Tensor<T>& f2, const PromptTemplate& tmpl,
                           ForwardCtx& ctx) const;
  /// [BOS] + template tokens before the slot + delta rows + tokens after.
  Tensor<T> prompter(const Tensor<T>& delta_f, const PromptTemplate& tmpl) const;

  /// Teacher-forced caption loss; `target` excludes BOS/EOS (EOS is appended).
  CaptionForward<T> loss(const Tensor<T>& f1, const Tensor<T>& f2, const PromptTemplate& tmpl,
                         const std::vector<int>& target, ForwardCtx& ctx) const;

  /// Greedy decoding from an embedded prefix (KV-cached).
  CaptionCandidate greedy(const Tensor<T>& prefix, ForwardCtx& ctx) const;
  /// Decodes once per template and keeps the best-scoring caption.
  CaptionCandidate generate(const Tensor<T>& f1, const Tensor<T>& f2, ForwardCtx& ctx) const;

  const std::vector<PromptTemplate>& templates() const { return templates_; }
  const CcDecoderConfig& config() const { return cfg_; }

  QFormer<T> qformer;
  Enhancer<T> enhancer;
  Proj<T> pre_to_lm;  // pre position only: c -> d_lm after the Q-Former
  CaptionLm<T> lm;

 private:
  CcDecoderConfig cfg_;
  std::vector<PromptTemplate> templates_;
};

/// Mean cross-entropy over non-PAD targets.
template <typename T>
Tensor<T> cc_loss(const Tensor<T>& logits, const std::vector<int>& targets) {
  return cross_entropy(logits, targets, Vocabulary::kPad);
}

}  // namespace semcc
