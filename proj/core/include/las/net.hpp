#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "las/checkpoint.hpp"
#include "las/graph.hpp"
#include "las/prng.hpp"
#include "las/tensor.hpp"

namespace las {

// Network code is written once against a context and runs either on the
// autodiff tape (training) or directly on tensors (decoding). Both paths
// call the same kernels, so forward values are bit-identical.

struct EvalCtx {
  using V = Tensor;
  const ParameterStore* store = nullptr;

  V param(const std::string& name) const { return store->get(name); }
  V constant(Tensor t) const { return t; }
  const Tensor& val(const V& v) const { return v; }

  V add(const V& a, const V& b) const { return las::add(a, b); }
  V sub(const V& a, const V& b) const { return las::sub(a, b); }
  V mul(const V& a, const V& b) const { return las::mul(a, b); }
  V scale(const V& a, double c) const { return las::scale(a, c); }
  V tanh(const V& a) const { return tanh_t(a); }
  V sigmoid(const V& a) const { return sigmoid_t(a); }
  V exp(const V& a) const { return exp_t(a); }
  V matvec(const V& w, const V& x) const { return las::matvec(w, x); }
  V matmul_nt(const V& a, const V& b) const { return las::matmul_nt(a, b); }
  V add_rowbcast(const V& m, const V& q) const { return las::add_rowbcast(m, q); }
  V matt_vec(const V& m, const V& w) const { return las::matt_vec(m, w); }
  V concat(const V& a, const V& b) const { return las::concat(a, b); }
  V slice(const V& a, std::int64_t begin, std::int64_t len) const { return las::slice(a, begin, len); }
  V stack_rows(const std::vector<V>& rows) const { return las::stack_rows(rows); }
  V embed_row(const V& m, std::int64_t r) const { return las::row(m, r); }
  V softmax(const V& v) const { return las::softmax(v); }
  V log_softmax(const V& v) const { return las::log_softmax(v); }
  V conv1d(const V& s, const V& f) const { return conv1d_same(s, f); }
  V dot(const V& a, const V& b) const { return Tensor::scalar(las::dot(a, b)); }
};

struct TapeCtx {
  using V = Graph::NodeId;
  Graph* g = nullptr;
  const ParameterStore* store = nullptr;

  V param(const std::string& name) const {
    if (g->has_param(name)) return g->param_id(name);
    return g->param(name, store->get(name));
  }
  V constant(Tensor t) const { return g->constant(std::move(t)); }
  const Tensor& val(V v) const { return g->value(v); }

  V add(V a, V b) const { return g->add(a, b); }
  V sub(V a, V b) const { return g->sub(a, b); }
  V mul(V a, V b) const { return g->mul(a, b); }
  V scale(V a, double c) const { return g->scale(a, c); }
  V tanh(V a) const { return g->tanh(a); }
  V sigmoid(V a) const { return g->sigmoid(a); }
  V exp(V a) const { return g->exp(a); }
  V matvec(V w, V x) const { return g->matvec(w, x); }
  V matmul_nt(V a, V b) const { return g->matmul_nt(a, b); }
  V add_rowbcast(V m, V q) const { return g->add_rowbcast(m, q); }
  V matt_vec(V m, V w) const { return g->matt_vec(m, w); }
  V concat(V a, V b) const { return g->concat(a, b); }
  V slice(V a, std::int64_t begin, std::int64_t len) const { return g->slice(a, begin, len); }
  V stack_rows(const std::vector<V>& rows) const { return g->stack_rows(rows); }
  V embed_row(V m, std::int64_t r) const { return g->embed_row(m, r); }
  V softmax(V v) const { return g->softmax(v); }
  V log_softmax(V v) const { return g->log_softmax(v); }
  V conv1d(V s, V f) const { return g->conv1d(s, f); }
  V dot(V a, V b) const { return g->dot(a, b); }
};

// Fused-gate LSTM cell: z = Wx x + Wh h + b, gate blocks [i f g o],
// c' = f*c + i*g, h' = o*tanh(c'). No peepholes, no projection.
template <class Ctx>
struct LstmWeights {
  typename Ctx::V wx, wh, b;
  std::int64_t hidden = 0;
};

template <class Ctx>
LstmWeights<Ctx> fetch_lstm(Ctx& ctx, const std::string& prefix) {
  LstmWeights<Ctx> w{ctx.param(prefix + ".Wx"), ctx.param(prefix + ".Wh"), ctx.param(prefix + ".b"), 0};
  w.hidden = ctx.val(w.wh).cols();
  return w;
}

template <class Ctx>
std::pair<typename Ctx::V, typename Ctx::V> lstm_step(Ctx& ctx, const LstmWeights<Ctx>& w,
                                                      const typename Ctx::V& x, const typename Ctx::V& h,
                                                      const typename Ctx::V& c) {
  auto z = ctx.add(ctx.add(ctx.matvec(w.wx, x), ctx.matvec(w.wh, h)), w.b);
  const std::int64_t hd = w.hidden;
  auto gi = ctx.sigmoid(ctx.slice(z, 0, hd));
  auto gf = ctx.sigmoid(ctx.slice(z, hd, hd));
  auto gg = ctx.tanh(ctx.slice(z, 2 * hd, hd));
  auto go = ctx.sigmoid(ctx.slice(z, 3 * hd, hd));
  auto cn = ctx.add(ctx.mul(gf, c), ctx.mul(gi, gg));
  auto hn = ctx.mul(go, ctx.tanh(cn));
  return {hn, cn};
}

// Uniform [-k, k] with k = 1/sqrt(fan_in); row-major draw order.
Tensor uniform_init(std::vector<std::int64_t> shape, std::int64_t fan_in, Prng& prng);

// Registers <prefix>.Wx [4H x in], <prefix>.Wh [4H x H], <prefix>.b [4H]
// (forget-gate block of b at 1.0, the rest 0).
void init_lstm_params(ParameterStore& store, const std::string& prefix, std::int64_t input_dim,
                      std::int64_t hidden, Prng& prng);

}  // namespace las
