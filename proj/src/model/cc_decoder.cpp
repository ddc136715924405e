// SPDX-License-Identifier: Apache-2.0
#include "model/cc_decoder.hpp"

#include <algorithm>
#include <cctype>
#include <set>

namespace semcc {

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(cur);
    cur.clear();
  };
  for (char ch : text) {
    const unsigned char u = static_cast<unsigned char>(ch);
    if (std::isspace(u)) {
      flush();
    } else if (ch == '.' || ch == ',' || ch == '?' || ch == '!' || ch == ';' || ch == ':') {
      flush();
      out.emplace_back(1, ch);
    } else {
      cur.push_back(static_cast<char>(std::tolower(u)));
    }
  }
  flush();
  return out;
}

Vocabulary::Vocabulary(const std::vector<std::string>& words) {
  tokens_ = {"<pad>", "<bos>", "<eos>", kImgToken};
  std::set<std::string> sorted(words.begin(), words.end());
  for (const auto& t : tokens_) sorted.erase(t);
  tokens_.insert(tokens_.end(), sorted.begin(), sorted.end());
  for (int i = 0; i < static_cast<int>(tokens_.size()); ++i) ids_[tokens_[i]] = i;
}

int Vocabulary::id(const std::string& tok) const {
  auto it = ids_.find(tok);
  if (it == ids_.end()) throw DataError("token '" + tok + "' is not in the vocabulary");
  return it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) throw DataError("token id " + std::to_string(id) + " out of range");
  return tokens_[id];
}

std::vector<int> Vocabulary::encode(const std::string& text) const {
  std::vector<int> ids;
  for (const auto& t : tokenize(text)) ids.push_back(id(t));
  return ids;
}

std::string Vocabulary::decode(const std::vector<int>& ids) const {
  std::string out;
  for (int id : ids) {
    if (id == kEos) break;
    if (id == kPad || id == kBos || id == kImg) continue;
    if (!out.empty()) out += ' ';
    out += token(id);
  }
  return out;
}

PromptTemplate PromptTemplate::parse(const std::string& text, const Vocabulary& vocab) {
  PromptTemplate t;
  t.text = text;
  int slots = 0;
  for (const auto& tok : tokenize(text)) {
    if (tok == Vocabulary::kImgToken) {
      ++slots;
      continue;
    }
    (slots == 0 ? t.before : t.after).push_back(vocab.id(tok));
  }
  if (slots != 1) {
    throw ConfigError("prompt template must contain exactly one " + std::string(Vocabulary::kImgToken) + " slot: '" +
                      text + "'");
  }
  return t;
}

const std::vector<std::string>& default_prompt_texts() {
  static const std::vector<std::string> texts = {
      "<img> Describe the difference between the new remote sensing image and the old one in detail.",
      "<img> What is the main change between the two remote sensing scenes? Describe it in detail.",
      "<img> Please provide a detailed description of the difference between these two remote sensing pictures.",
      "<img> Can you describe what has been changed between these two remote sensing pictures for me?",
  };
  return texts;
}

double mean_token_logprob(const std::vector<int>& tokens, const std::vector<double>& logprobs) {
  if (tokens.size() != logprobs.size()) throw ContractError("token / log-prob length mismatch");
  double sum = 0;
  int count = 0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] == Vocabulary::kPad) continue;
    sum += logprobs[i];
    ++count;
    if (tokens[i] == Vocabulary::kEos) break;
  }
  return count == 0 ? 0.0 : sum / count;
}

const CaptionCandidate& ensemble_select(const std::vector<CaptionCandidate>& candidates) {
  if (candidates.empty()) throw ContractError("ensemble_select needs at least one candidate");
  std::size_t best = 0;
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    if (candidates[i].mean_logprob > candidates[best].mean_logprob) best = i;
  }
  return candidates[best];
}

// ---------------------------------------------------------------------------

template <typename T>
QFormer<T>::QFormer(ParameterStore<T>& ps, const CcDecoderConfig& cfg, int c, int vocab) {
  queries = ps.create("cc_decoder/qformer/queries", {cfg.n_queries, c}, Init::kNormal, 0.5);
  prompt_table = ps.create("cc_decoder/qformer/prompt_embed", {vocab, c}, Init::kNormal, 0.5);
  BlockOptions bo;
  bo.heads = cfg.qformer_heads;
  bo.mlp_hidden = 2 * c;
  for (int b = 0; b < cfg.qformer_blocks; ++b) {
    blocks.emplace_back(ps, "cc_decoder/qformer/block" + std::to_string(b), c, bo);
  }
}

template <typename T>
Tensor<T> QFormer<T>::operator()(const Tensor<T>& f, const Tensor<T>& prompt_embed, ForwardCtx& ctx) const {
  Tensor<T> context = concat<T>({f, prompt_embed}, 0);
  Tensor<T> x = queries;
  for (const auto& b : blocks) x = b(x, context, ctx);
  return x;
}

template <typename T>
Enhancer<T>::Enhancer(ParameterStore<T>& ps, const CcDecoderConfig& cfg, int c, int out)
    : act(cfg.enhancer_act), sub(cfg.enhancer_sub), tie_gates(cfg.tie_gates) {
  if (act) {
    gate1 = Proj<T>(ps, "cc_decoder/enhancer/gate1", 2 * c, 1);
    if (!tie_gates) gate2 = Proj<T>(ps, "cc_decoder/enhancer/gate2", 2 * c, 1);
  }
  const int in = act && sub ? 3 * c : act ? 2 * c : c;
  proj = Proj<T>(ps, "cc_decoder/enhancer/proj", in, out);
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> Enhancer<T>::activate(const Tensor<T>& f1, const Tensor<T>& f2,
                                                      ForwardCtx& ctx) const {
  const Proj<T>& g2 = tie_gates ? gate1 : gate2;
  Tensor<T> a = scale_rows(f1, sigmoid(gate1(concat<T>({f1, f2}, 1), ctx)));
  Tensor<T> b = scale_rows(f2, sigmoid(g2(concat<T>({f2, f1}, 1), ctx)));
  return {a, b};
}

template <typename T>
Tensor<T> Enhancer<T>::operator()(const Tensor<T>& f1, const Tensor<T>& f2, ForwardCtx& ctx) const {
  if (f1.shape() != f2.shape()) throw DimensionError("enhancer: " + shape_str(f1.shape()) + " vs " + shape_str(f2.shape()));
  if (!act) return proj(semcc::sub(f1, f2), ctx);
  auto [a, b] = activate(f1, f2, ctx);
  if (!sub) return proj(concat<T>({a, b}, 1), ctx);
  return proj(concat<T>({a, b, semcc::sub(a, b)}, 1), ctx);
}

template <typename T>
CaptionLm<T>::CaptionLm(ParameterStore<T>& ps, const CcDecoderConfig& cfg, int vocab, int max_pos)
    : max_positions(max_pos) {
  const int d = cfg.d_lm;
  token_table = ps.create("cc_decoder/lm/token_embed", {vocab, d}, Init::kNormal, 0.5);
  pos_embed = ps.create("cc_decoder/lm/pos_embed", {max_pos, d}, Init::kNormal, 0.1);
  BlockOptions bo;
  bo.heads = cfg.lm_heads;
  bo.mlp_hidden = cfg.lm_mlp_ratio * d;
  bo.lora_rank = cfg.lora_rank;
  bo.lora_alpha = cfg.lora_alpha;
  bo.lora_dropout = cfg.lora_dropout;
  bo.dropout = cfg.dropout;
  for (int l = 0; l < cfg.lm_layers; ++l) layers.emplace_back(ps, "cc_decoder/lm/layer" + std::to_string(l), d, bo);
  final_ln = LayerNorm<T>(ps, "cc_decoder/lm/final_ln", d);
  head = Proj<T>(ps, "cc_decoder/lm/head", d, vocab);
}

template <typename T>
Tensor<T> CaptionLm<T>::hidden(const Tensor<T>& seq, ForwardCtx& ctx) const {
  const int L = seq.dim(0);
  if (L > max_positions) {
    throw ConfigError("sequence of " + std::to_string(L) + " positions exceeds " + std::to_string(max_positions));
  }
  Tensor<T> x = add(seq, slice(pos_embed, 0, 0, L));
  for (const auto& layer : layers) x = layer(x, AttentionMask::causal(), ctx);
  return x;
}

namespace {

int max_template_tokens(const std::vector<PromptTemplate>& ts) {
  std::size_t m = 0;
  for (const auto& t : ts) m = std::max(m, t.before.size() + t.after.size());
  return static_cast<int>(m);
}

}  // namespace

template <typename T>
CcDecoder<T>::CcDecoder(ParameterStore<T>& ps, const CcDecoderConfig& cfg, int c, const Vocabulary& vocab)
    : cfg_(cfg) {
  for (const auto& text : default_prompt_texts()) templates_.push_back(PromptTemplate::parse(text, vocab));
  qformer = QFormer<T>(ps, cfg, c, vocab.size());
  if (cfg.enhancer_position == "post") {
    enhancer = Enhancer<T>(ps, cfg, c, cfg.d_lm);
  } else {
    enhancer = Enhancer<T>(ps, cfg, c, c);
    pre_to_lm = Proj<T>(ps, "cc_decoder/pre_to_lm", c, cfg.d_lm);
  }
  const int max_pos = 1 + max_template_tokens(templates_) + cfg.n_queries + cfg.max_len + 1;
  lm = CaptionLm<T>(ps, cfg, vocab.size(), max_pos);
}

template <typename T>
Tensor<T> CcDecoder<T>::delta_features(const Tensor<T>& f1, const Tensor<T>& f2, const PromptTemplate& tmpl,
                                       ForwardCtx& ctx) const {
  std::vector<int> ids = tmpl.before;
  ids.insert(ids.end(), tmpl.after.begin(), tmpl.after.end());
  Tensor<T> prompt = qformer.embed_prompt(ids);
  if (cfg_.enhancer_position == "pre") {
    return pre_to_lm(qformer(enhancer(f1, f2, ctx), prompt, ctx), ctx);
  }
  return enhancer(qformer(f1, prompt, ctx), qformer(f2, prompt, ctx), ctx);
}

template <typename T>
Tensor<T> CcDecoder<T>::prompter(const Tensor<T>& delta_f, const PromptTemplate& tmpl) const {
  std::vector<int> head = {Vocabulary::kBos};
  head.insert(head.end(), tmpl.before.begin(), tmpl.before.end());
  std::vector<Tensor<T>> parts = {lm.embed_tokens(head), delta_f};
  if (!tmpl.after.empty()) parts.push_back(lm.embed_tokens(tmpl.after));
  return concat(parts, 0);
}

template <typename T>
CaptionForward<T> CcDecoder<T>::loss(const Tensor<T>& f1, const Tensor<T>& f2, const PromptTemplate& tmpl,
                                     const std::vector<int>& target, ForwardCtx& ctx) const {
  CaptionForward<T> out;
  out.delta_f = delta_features(f1, f2, tmpl, ctx);
  Tensor<T> prefix = prompter(out.delta_f, tmpl);
  const int P = prefix.dim(0);
  std::vector<int> targets = target;
  targets.push_back(Vocabulary::kEos);
  Tensor<T> seq = target.empty() ? prefix : concat<T>({prefix, lm.embed_tokens(target)}, 0);
  Tensor<T> h = lm.hidden(seq, ctx);
  Tensor<T> logits = lm.logits(slice(h, 0, P - 1, seq.dim(0)), ctx);
  out.loss = cc_loss(logits, targets);
  return out;
}

template <typename T>
CaptionCandidate CcDecoder<T>::greedy(const Tensor<T>& prefix, ForwardCtx& ctx) const {
  NoGradScope<T> no_grad;
  const int L = static_cast<int>(lm.layers.size());
  std::vector<Tensor<T>> kc(L), vc(L);
  auto run = [&](Tensor<T> x, int pos) {
    x = add(x, slice(lm.pos_embed, 0, pos, pos + x.dim(0)));
    for (int l = 0; l < L; ++l) x = lm.layers[l].step(x, kc[l], vc[l], ctx);
    return lm.logits(slice(x, 0, x.dim(0) - 1, x.dim(0)), ctx);
  };
  if (prefix.dim(0) + cfg_.max_len > lm.max_positions) throw ConfigError("prompt prefix too long for the decoder");
  Tensor<T> logits = run(prefix, 0);
  int pos = prefix.dim(0);
  CaptionCandidate cand;
  std::vector<int> seq;
  std::vector<double> lps;
  for (int t = 0; t < cfg_.max_len; ++t) {
    const int V = logits.dim(1);
    int best = 0;
    for (int j = 1; j < V; ++j) {
      if (logits[j] > logits[best]) best = j;
    }
    double mx = logits[best], s = 0;
    for (int j = 0; j < V; ++j) s += std::exp(static_cast<double>(logits[j]) - mx);
    seq.push_back(best);
    lps.push_back(-std::log(s));
    if (best == Vocabulary::kEos) break;
    cand.tokens.push_back(best);
    if (t + 1 == cfg_.max_len) break;
    logits = run(lm.embed_tokens({best}), pos++);
  }
  cand.mean_logprob = mean_token_logprob(seq, lps);
  return cand;
}

template <typename T>
CaptionCandidate CcDecoder<T>::generate(const Tensor<T>& f1, const Tensor<T>& f2, ForwardCtx& ctx) const {
  NoGradScope<T> no_grad;
  std::vector<CaptionCandidate> cands;
  for (std::size_t i = 0; i < templates_.size(); ++i) {
    Tensor<T> prefix = prompter(delta_features(f1, f2, templates_[i], ctx), templates_[i]);
    cands.push_back(greedy(prefix, ctx));
    cands.back().template_idx = static_cast<int>(i);
  }
  return ensemble_select(cands);
}

template class QFormer<float>;
template class QFormer<double>;
template class Enhancer<float>;
template class Enhancer<double>;
template class CaptionLm<float>;
template class CaptionLm<double>;
template class CcDecoder<float>;
template class CcDecoder<double>;

}  // namespace semcc
