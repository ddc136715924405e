// SPDX-License-Identifier: Apache-2.0
#include "gradcheck/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "model/model.hpp"

namespace semcc {

template <typename T>
double gradient_error(const std::function<Tensor<T>()>& loss, std::vector<Tensor<T>> inputs, double eps,
                      int max_coords, CounterRng& rng) {
  for (auto& x : inputs) {
    x.set_requires_grad(true);
    x.zero_grad();
  }
  {
    Tape<T> tape;
    TapeScope<T> scope(tape);
    Tensor<T> l = loss();
    backward(l);
  }
  double max_diff = 0.0, max_mag = 0.0;
  NoGradScope<T> no_grad;
  for (auto& x : inputs) {
    std::vector<T> analytic(x.numel(), T(0));
    if (x.has_grad()) std::copy(x.grad().begin(), x.grad().end(), analytic.begin());
    std::vector<std::size_t> coords(x.numel());
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    if (max_coords > 0 && coords.size() > static_cast<std::size_t>(max_coords)) {
      rng.shuffle(coords);
      coords.resize(max_coords);
    }
    T* p = x.ptr();
    for (std::size_t i : coords) {
      const T orig = p[i];
      // Fourth-order central stencil on the step actually representable in T.
      auto at = [&](double k) {
        p[i] = static_cast<T>(orig + k * eps);
        const double v = loss().item();
        return std::pair<double, double>(v, static_cast<double>(p[i]) - static_cast<double>(orig));
      };
      const auto [f1p, h1p] = at(1.0);
      const auto [f1m, h1m] = at(-1.0);
      const auto [f2p, h2p] = at(2.0);
      const auto [f2m, h2m] = at(-2.0);
      p[i] = orig;
      const double d1 = (f1p - f1m) / (h1p - h1m), d2 = (f2p - f2m) / (h2p - h2m);
      const double numeric = (4.0 * d1 - d2) / 3.0;
      max_diff = std::max(max_diff, std::fabs(numeric - static_cast<double>(analytic[i])));
      max_mag = std::max({max_mag, std::fabs(numeric), std::fabs(static_cast<double>(analytic[i]))});
    }
  }
  for (auto& x : inputs) x.set_requires_grad(false);
  if (max_mag == 0.0) return 0.0;
  return max_diff / max_mag;
}

namespace {

template <typename T>
Tensor<T> rand_tensor(const Shape& shape, CounterRng& rng, double s = 1.0) {
  Tensor<T> t(shape);
  for (auto& v : t.data()) v = static_cast<T>(s * rng.uniform(-1.0, 1.0));
  return t;
}

/// One randomized instance: leaf inputs and the op applied to them.
template <typename T>
struct Instance {
  std::vector<Tensor<T>> inputs;
  std::function<Tensor<T>()> op;
};

template <typename T>
using Builder = std::function<Instance<T>(CounterRng&)>;

template <typename T>
std::vector<std::pair<std::string, Builder<T>>> op_cases() {
  std::vector<std::pair<std::string, Builder<T>>> c;
  auto dims = [](CounterRng& r) { return Shape{r.randint(1, 4), r.randint(1, 5)}; };
  auto binary = [&](const char* name, Tensor<T> (*fn)(const Tensor<T>&, const Tensor<T>&)) {
    c.push_back({name, [dims, fn](CounterRng& r) {
                   Shape s = dims(r);
                   Tensor<T> a = rand_tensor<T>(s, r), b = rand_tensor<T>(s, r);
                   return Instance<T>{{a, b}, [a, b, fn] { return fn(a, b); }};
                 }});
  };
  auto unary = [&](const char* name, std::function<Tensor<T>(const Tensor<T>&)> fn, double s = 1.0) {
    c.push_back({name, [dims, fn, s](CounterRng& r) {
                   Tensor<T> x = rand_tensor<T>(dims(r), r, s);
                   return Instance<T>{{x}, [x, fn] { return fn(x); }};
                 }});
  };
  binary("add", &add<T>);
  binary("sub", &sub<T>);
  binary("mul", &mul<T>);
  c.push_back({"scale", [dims](CounterRng& r) {
                 Tensor<T> x = rand_tensor<T>(dims(r), r);
                 const T s = static_cast<T>(r.uniform(-2.0, 2.0));
                 return Instance<T>{{x}, [x, s] { return scale(x, s); }};
               }});
  unary("sigmoid", [](const Tensor<T>& x) { return sigmoid(x); }, 3.0);
  unary("gelu", [](const Tensor<T>& x) { return gelu(x); }, 3.0);
  c.push_back({"dropout", [dims](CounterRng& r) {
                 Tensor<T> x = rand_tensor<T>(dims(r), r);
                 const DropoutKey key{r.next_u64(), r.next_u64()};
                 return Instance<T>{{x}, [x, key] { return dropout(x, 0.3, key); }};
               }});
  c.push_back({"layer_norm", [](CounterRng& r) {
                 const int n = r.randint(1, 4), d = r.randint(3, 6);  // d = 2 normalises to +-1 exactly
                 Tensor<T> x = rand_tensor<T>({n, d}, r, 2.0), g = rand_tensor<T>({d}, r), b = rand_tensor<T>({d}, r);
                 return Instance<T>{{x, g, b}, [x, g, b] { return layer_norm(x, g, b); }};
               }});
  unary("softmax", [](const Tensor<T>& x) { return softmax(x); }, 2.0);
  unary("log_softmax", [](const Tensor<T>& x) { return log_softmax(x); }, 2.0);
  unary("sum", [](const Tensor<T>& x) { return sum(x); });
  unary("mean", [](const Tensor<T>& x) { return mean(x); });
  c.push_back({"weighted_sum", [dims](CounterRng& r) {
                 Tensor<T> x = rand_tensor<T>(dims(r), r);
                 std::vector<double> w(x.numel());
                 for (auto& v : w) v = r.uniform(-1.0, 1.0);
                 return Instance<T>{{x}, [x, w] { return weighted_sum(x, w); }};
               }});
  c.push_back({"reshape", [](CounterRng& r) {
                 const int a = r.randint(1, 4), b = r.randint(1, 4), cc = r.randint(1, 3);
                 Tensor<T> x = rand_tensor<T>({a, b * cc}, r);
                 return Instance<T>{{x}, [x, a, b, cc] { return reshape(x, Shape{b, a, cc}); }};
               }});
  unary("transpose", [](const Tensor<T>& x) { return transpose(x); });
  c.push_back({"concat", [](CounterRng& r) {
                 const int axis = r.randint(0, 1);
                 Shape s1 = {r.randint(1, 3), r.randint(1, 3)}, s2 = s1;
                 s2[axis] = r.randint(1, 3);
                 Tensor<T> a = rand_tensor<T>(s1, r), b = rand_tensor<T>(s2, r);
                 return Instance<T>{{a, b}, [a, b, axis] { return concat<T>({a, b, a}, axis); }};
               }});
  c.push_back({"slice", [](CounterRng& r) {
                 const int axis = r.randint(0, 2);
                 Shape s = {r.randint(2, 4), r.randint(2, 4), r.randint(2, 4)};
                 const int b = r.randint(0, s[axis] - 1), e = r.randint(b + 1, s[axis]);
                 Tensor<T> x = rand_tensor<T>(s, r);
                 return Instance<T>{{x}, [x, axis, b, e] { return slice(x, axis, b, e); }};
               }});
  c.push_back({"gather_rows", [](CounterRng& r) {
                 const int n = r.randint(1, 4);
                 Tensor<T> x = rand_tensor<T>({n, r.randint(1, 4)}, r);
                 std::vector<int> rows(r.randint(1, 6));
                 for (auto& i : rows) i = r.randint(0, n - 1);
                 return Instance<T>{{x}, [x, rows] { return gather_rows(x, rows); }};
               }});
  c.push_back({"gather", [](CounterRng& r) {
                 Tensor<T> x = rand_tensor<T>({r.randint(1, 4), r.randint(1, 4)}, r);
                 const int m = r.randint(1, 3), k = r.randint(1, 4);
                 auto idx = std::make_shared<std::vector<int>>(m * k);
                 for (auto& i : *idx) i = r.randint(0, static_cast<int>(x.numel()) - 1);
                 return Instance<T>{{x}, [x, idx, m, k] { return gather(x, idx, Shape{m, k}); }};
               }});
  c.push_back({"linear", [](CounterRng& r) {
                 const int n = r.randint(1, 4), in = r.randint(1, 5), out = r.randint(1, 5);
                 Tensor<T> x = rand_tensor<T>({n, in}, r), w = rand_tensor<T>({out, in}, r);
                 if (r.uniform() < 0.5) return Instance<T>{{x, w}, [x, w] { return linear(x, w, Tensor<T>()); }};
                 Tensor<T> b = rand_tensor<T>({out}, r);
                 return Instance<T>{{x, w, b}, [x, w, b] { return linear(x, w, b); }};
               }});
  c.push_back({"conv2d", [](CounterRng& r) {
                 const int C = r.randint(1, 3), O = r.randint(1, 3), H = r.randint(3, 6), W = r.randint(3, 6);
                 const int k = r.uniform() < 0.5 ? 1 : 3;
                 const int stride = r.randint(1, 2), pad = k == 3 ? r.randint(0, 1) : 0;
                 const Padding padding = r.uniform() < 0.5 ? Padding::kZero : Padding::kReplicate;
                 Tensor<T> x = rand_tensor<T>({C, H, W}, r), K = rand_tensor<T>({O, C, k, k}, r),
                           b = rand_tensor<T>({O}, r);
                 return Instance<T>{{x, K, b},
                                    [x, K, b, stride, pad, padding] { return conv2d(x, K, b, stride, pad, padding); }};
               }});
  c.push_back({"conv_transpose2x2", [](CounterRng& r) {
                 const int C = r.randint(1, 3), O = r.randint(1, 3), H = r.randint(1, 3), W = r.randint(1, 3);
                 Tensor<T> x = rand_tensor<T>({C, H, W}, r), K = rand_tensor<T>({C, O, 2, 2}, r),
                           b = rand_tensor<T>({O}, r);
                 return Instance<T>{{x, K, b}, [x, K, b] { return conv_transpose2x2(x, K, b); }};
               }});
  auto random_mask = [](CounterRng& r, int n, int m) {
    const int kind = r.randint(0, 2);
    if (kind == 0) return AttentionMask::none();
    if (kind == 1 && n <= m) return AttentionMask::causal();
    std::vector<int> kg(m), qg(n);
    for (auto& g : kg) g = r.randint(0, 1);
    for (auto& g : qg) g = kg[r.randint(0, m - 1)];
    return AttentionMask::groups(qg, kg);
  };
  c.push_back({"attention", [random_mask](CounterRng& r) {
                 const int n = r.randint(1, 4), m = r.randint(1, 4), d = r.randint(1, 4), dv = r.randint(1, 4);
                 Tensor<T> q = rand_tensor<T>({n, d}, r), k = rand_tensor<T>({m, d}, r), v = rand_tensor<T>({m, dv}, r);
                 const AttentionMask mask = random_mask(r, n, m);
                 return Instance<T>{{q, k, v}, [q, k, v, mask] { return attention(q, k, v, mask); }};
               }});
  c.push_back({"multi_head_attention", [random_mask](CounterRng& r) {
                 const int heads = r.randint(1, 3), n = r.randint(1, 4), m = r.randint(1, 4);
                 const int d = heads * r.randint(1, 2);
                 Tensor<T> q = rand_tensor<T>({n, d}, r), k = rand_tensor<T>({m, d}, r), v = rand_tensor<T>({m, d}, r);
                 const AttentionMask mask = random_mask(r, n, m);
                 return Instance<T>{{q, k, v},
                                    [q, k, v, heads, mask] { return multi_head_attention(q, k, v, heads, mask); }};
               }});
  c.push_back({"scale_rows", [dims](CounterRng& r) {
                 Shape s = dims(r);
                 Tensor<T> x = rand_tensor<T>(s, r), g = rand_tensor<T>({s[0], 1}, r);
                 return Instance<T>{{x, g}, [x, g] { return scale_rows(x, g); }};
               }});
  c.push_back({"scale_cols", [dims](CounterRng& r) {
                 Shape s = dims(r);
                 Tensor<T> x = rand_tensor<T>(s, r), g = rand_tensor<T>({s[1]}, r);
                 return Instance<T>{{x, g}, [x, g] { return scale_cols(x, g); }};
               }});
  binary("rowwise_dot", &rowwise_dot<T>);
  c.push_back({"resize_bilinear", [](CounterRng& r) {
                 Tensor<T> x = rand_tensor<T>({r.randint(1, 2), r.randint(1, 4), r.randint(1, 4)}, r);
                 const int oh = r.randint(1, 7), ow = r.randint(1, 7);
                 return Instance<T>{{x}, [x, oh, ow] { return resize_bilinear(x, oh, ow); }};
               }});
  c.push_back({"embedding", [](CounterRng& r) {
                 const int V = r.randint(1, 5);
                 Tensor<T> table = rand_tensor<T>({V, r.randint(1, 4)}, r);
                 std::vector<int> ids(r.randint(1, 5));
                 for (auto& i : ids) i = r.randint(0, V - 1);
                 return Instance<T>{{table}, [table, ids] { return embedding(table, ids); }};
               }});
  c.push_back({"bce_with_logits", [dims](CounterRng& r) {
                 Shape s = dims(r);
                 Tensor<T> x = rand_tensor<T>(s, r, 3.0), t(s);
                 for (auto& v : t.data()) v = r.uniform() < 0.5 ? T(0) : T(1);
                 return Instance<T>{{x}, [x, t] { return bce_with_logits(x, t); }};
               }});
  c.push_back({"cross_entropy", [](CounterRng& r) {
                 const int L = r.randint(1, 4), V = r.randint(2, 5);
                 Tensor<T> x = rand_tensor<T>({L, V}, r, 2.0);
                 std::vector<int> t(L);
                 for (auto& v : t) v = r.randint(0, V - 1);
                 t[r.randint(0, L - 1)] = r.randint(1, V - 1);  // at least one non-ignored target
                 return Instance<T>{{x}, [x, t] { return cross_entropy(x, t, 0); }};
               }});
  c.push_back({"lora_linear", [](CounterRng& r) {
                 const int n = r.randint(1, 3), in = r.randint(2, 5), out = r.randint(2, 5);
                 const int rank = r.randint(1, std::min(in, out));
                 Tensor<T> x = rand_tensor<T>({n, in}, r), w = rand_tensor<T>({out, in}, r), b = rand_tensor<T>({out}, r);
                 Tensor<T> a = rand_tensor<T>({rank, in}, r), bb = rand_tensor<T>({out, rank}, r);
                 const std::uint64_t seed = r.next_u64();
                 return Instance<T>{{x, w, b, a, bb}, [x, w, b, a, bb, rank, seed] {
                                      ForwardCtx ctx;
                                      ctx.training = true;
                                      ctx.seed = seed;
                                      return lora_linear(x, w, b, a, bb, 2.0 * rank, 0.2, ctx);
                                    }};
               }});
  c.push_back({"spatial_filter", [](CounterRng& r) {
                 const int n = r.randint(1, 4), d = r.randint(1, 4);
                 Tensor<T> x = rand_tensor<T>({n, d}, r), y = rand_tensor<T>({n, d}, r);
                 Tensor<T> w = rand_tensor<T>({1, 2 * d}, r), b = rand_tensor<T>({1}, r);
                 return Instance<T>{{x, y, w, b}, [x, y, w, b] { return spatial_filter(x, y, w, b); }};
               }});
  c.push_back({"channel_filter", [](CounterRng& r) {
                 const int n = r.randint(1, 4), d = r.randint(1, 4);
                 Tensor<T> x = rand_tensor<T>({n, d}, r), y = rand_tensor<T>({n, d}, r);
                 Tensor<T> w = rand_tensor<T>({1, 2 * n}, r), b = rand_tensor<T>({1}, r);
                 return Instance<T>{{x, y, w, b}, [x, y, w, b] { return channel_filter(x, y, w, b); }};
               }});
  return c;
}

RunConfig tiny_config(CounterRng& r) {
  RunConfig cfg;
  auto& e = cfg.encoder;
  e.image_size = 16;
  e.patch_size = 2;
  e.embed_dim = 8;
  e.depth = 2;
  e.heads = 2;
  e.window_size = 1;
  e.global_layers = {2};
  e.cd_channels = 4;
  e.lora_rank = 2;
  e.lora_alpha = 4;
  e.bcsf = true;
  cfg.neck.units = 1;
  cfg.neck.heads = 2;
  cfg.neck.inter_task = r.uniform() < 0.5 ? "similarity" : "cross_attention";
  cfg.cd_decoder.pyramid_channels = 4;
  cfg.cd_decoder.refine_channels = 2;
  auto& c = cfg.cc_decoder;
  c.n_queries = 2;
  c.qformer_blocks = 1;
  c.qformer_heads = 2;
  c.d_lm = 8;
  c.lm_layers = 1;
  c.lm_heads = 2;
  c.max_len = 6;
  c.lora_rank = 2;
  c.lora_alpha = 4;
  const int variant = r.randint(0, 3);
  c.enhancer_act = variant != 1;
  c.enhancer_sub = variant != 2;
  c.enhancer_position = variant == 3 ? "pre" : "post";
  c.tie_gates = r.uniform() < 0.3;
  cfg.train.seed = r.next_u64();
  return cfg;
}

template <typename T>
Instance<T> composite_instance(CounterRng& r, std::shared_ptr<SemanticCc<T>>& holder) {
  holder = std::make_shared<SemanticCc<T>>(tiny_config(r));
  SemanticCc<T>& m = *holder;
  // Move every parameter off its initialisation so zero-initialised paths
  // (LoRA B, gains, FFN outputs) carry gradient too.
  for (auto& p : m.params.all()) {
    for (auto& v : p.value.data()) v = static_cast<T>(v + 0.3 * r.uniform(-1.0, 1.0));
  }
  const int S = m.config().encoder.image_size;
  Tensor<T> i1 = rand_tensor<T>({3, S, S}, r, 0.5), i2 = rand_tensor<T>({3, S, S}, r, 0.5);
  for (auto* img : {&i1, &i2}) {
    for (auto& v : img->data()) v = static_cast<T>(v + 0.5);
  }
  Tensor<T> mask({1, S, S});
  for (auto& v : mask.data()) v = r.uniform() < 0.3 ? T(1) : T(0);
  std::vector<int> target(r.randint(1, 4));
  for (auto& t : target) t = r.randint(4, m.vocab().size() - 1);
  const int tmpl = r.randint(0, static_cast<int>(m.cc_decoder.templates().size()) - 1);
  const std::uint64_t seed = r.next_u64();
  std::vector<Tensor<T>> inputs = {i1, i2};
  for (auto& p : m.params.all()) inputs.push_back(p.value);
  SemanticCc<T>* mp = &m;
  return Instance<T>{inputs, [mp, i1, i2, mask, target, tmpl, seed] {
                       ForwardCtx ctx;
                       ctx.training = true;
                       ctx.seed = seed;
                       const FeaturePair<T> f = mp->features(i1, i2, ctx);
                       Tensor<T> l_cd = cd_loss(mp->cd_logits(f), mask);
                       Tensor<T> l_cc =
                           mp->cc_decoder.loss(f.f1_cc, f.f2_cc, mp->cc_decoder.templates()[tmpl], target, ctx).loss;
                       return add(l_cc, scale(l_cd, T(0.5)));
                     }};
}

}  // namespace

template <typename T>
std::vector<GradcheckResult> run_gradcheck(const GradcheckOptions& opts) {
  const double eps = GradcheckTolerance<T>::eps, tol = GradcheckTolerance<T>::tol;
  std::vector<GradcheckResult> results;
  auto report = [&](const GradcheckResult& res) {
    if (opts.out) {
      char buf[160];
      std::snprintf(buf, sizeof(buf), "%-4s %-22s %3d/%-3d worst %.3e (tol %.0e)\n", res.failures ? "FAIL" : "ok",
                    res.name.c_str(), res.instances - res.failures, res.instances, res.worst, tol);
      *opts.out << buf << std::flush;
    }
  };
  for (const auto& [name, build] : op_cases<T>()) {
    GradcheckResult res;
    res.name = name;
    CounterRng rng(opts.seed ^ fnv1a(name));
    for (int i = 0; i < opts.instances; ++i) {
      Instance<T> inst = build(rng);
      Tensor<T> probe;
      {
        NoGradScope<T> ng;
        probe = inst.op();
      }
      std::vector<double> w(probe.numel());
      for (auto& v : w) v = rng.uniform(-1.0, 1.0);
      auto op = inst.op;
      const double err =
          gradient_error<T>([op, w] { return weighted_sum(op(), w); }, inst.inputs, eps, 0, rng);
      res.worst = std::max(res.worst, err);
      ++res.instances;
      if (!(err < tol)) ++res.failures;
    }
    report(res);
    results.push_back(res);
  }
  if (opts.composite) {
    GradcheckResult res;
    res.name = "composite_pipeline";
    CounterRng rng(opts.seed ^ fnv1a(res.name));
    for (int i = 0; i < opts.instances; ++i) {
      std::shared_ptr<SemanticCc<T>> holder;
      Instance<T> inst = composite_instance<T>(rng, holder);
      const double err = gradient_error<T>(inst.op, inst.inputs, eps, 2, rng);
      res.worst = std::max(res.worst, err);
      ++res.instances;
      if (!(err < tol)) ++res.failures;
    }
    report(res);
    results.push_back(res);
  }
  return results;
}

template double gradient_error<float>(const std::function<Tensor<float>()>&, std::vector<Tensor<float>>, double, int,
                                      CounterRng&);
template double gradient_error<double>(const std::function<Tensor<double>()>&, std::vector<Tensor<double>>, double,
                                       int, CounterRng&);
template std::vector<GradcheckResult> run_gradcheck<float>(const GradcheckOptions&);
template std::vector<GradcheckResult> run_gradcheck<double>(const GradcheckOptions&);

}  // namespace semcc
