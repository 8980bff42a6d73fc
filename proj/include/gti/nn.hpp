#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "gti/errors.hpp"
#include "gti/graph.hpp"
#include "gti/params.hpp"
#include "gti/rng.hpp"

namespace gti {

enum class Mode { kTrain, kEval };

// Inverted dropout. Eval mode returns the same node, a bit-exact
// identity. Masks are drawn fresh on every call.
inline Value apply_dropout(Graph& g, Value x, double rate, Mode mode,
                           std::mt19937_64& rng) {
  if (rate < 0.0 || rate >= 1.0)
    throw ArgumentError("dropout rate must lie in [0,1), got " + std::to_string(rate));
  if (mode == Mode::kEval) return x;
  double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(x.size());
  for (double& m : mask) m = (uniform01(rng) >= rate) ? keep_scale : 0.0;
  return g.mul(x, g.constant_vec(mask));
}

// ----- LSTM -----

struct LstmDir {
  Node* w_i;
  Node* w_f;
  Node* w_g;
  Node* w_o;
  Node* u_i;
  Node* u_f;
  Node* u_g;
  Node* u_o;
  Node* b_i;
  Node* b_f;
  Node* b_g;
  Node* b_o;
};

struct BiLstm {
  LstmDir fw;
  LstmDir bw;
  std::size_t d_in = 0;
  std::size_t d_h = 0;
};

inline LstmDir make_lstm_dir(ParamStore& ps, const std::string& prefix, std::size_t d_in,
                             std::size_t d_h) {
  LstmDir d;
  d.w_i = &ps.create_glorot(prefix + ".w_i", d_h, d_in);
  d.w_f = &ps.create_glorot(prefix + ".w_f", d_h, d_in);
  d.w_g = &ps.create_glorot(prefix + ".w_g", d_h, d_in);
  d.w_o = &ps.create_glorot(prefix + ".w_o", d_h, d_in);
  d.u_i = &ps.create_glorot(prefix + ".u_i", d_h, d_h);
  d.u_f = &ps.create_glorot(prefix + ".u_f", d_h, d_h);
  d.u_g = &ps.create_glorot(prefix + ".u_g", d_h, d_h);
  d.u_o = &ps.create_glorot(prefix + ".u_o", d_h, d_h);
  d.b_i = &ps.create(prefix + ".b_i", d_h, 1);
  // Forget gate starts open so early training does not wash out state.
  d.b_f = &ps.create(prefix + ".b_f", d_h, 1);
  d.b_f->value.fill(1.0);
  d.b_g = &ps.create(prefix + ".b_g", d_h, 1);
  d.b_o = &ps.create(prefix + ".b_o", d_h, 1);
  return d;
}

inline BiLstm make_bilstm(ParamStore& ps, const std::string& prefix, std::size_t d_in,
                          std::size_t d_h) {
  BiLstm b;
  b.fw = make_lstm_dir(ps, prefix + ".fw", d_in, d_h);
  b.bw = make_lstm_dir(ps, prefix + ".bw", d_in, d_h);
  b.d_in = d_in;
  b.d_h = d_h;
  return b;
}

inline std::vector<Value> lstm_dir_forward(Graph& g, const LstmDir& d, std::size_t d_h,
                                           const std::vector<Value>& xs, bool reverse) {
  Value h = g.zeros(d_h);
  Value c = g.zeros(d_h);
  std::vector<Value> out(xs.size());
  for (std::size_t step = 0; step < xs.size(); ++step) {
    std::size_t t = reverse ? xs.size() - 1 - step : step;
    Value x = xs[t];
    auto gate = [&](Node* w, Node* u, Node* b) {
      return g.add(g.add(g.matvec(g.param(*w), x), g.matvec(g.param(*u), h)),
                   g.param(*b));
    };
    Value i = g.sigmoid(gate(d.w_i, d.u_i, d.b_i));
    Value f = g.sigmoid(gate(d.w_f, d.u_f, d.b_f));
    Value cand = g.tanh_(gate(d.w_g, d.u_g, d.b_g));
    Value o = g.sigmoid(gate(d.w_o, d.u_o, d.b_o));
    c = g.add(g.mul(f, c), g.mul(i, cand));
    h = g.mul(o, g.tanh_(c));
    out[t] = h;
  }
  return out;
}

// Zero initial state both directions; output per position is
// [h_fwd; h_bwd], dimension 2*d_h.
inline std::vector<Value> bilstm_forward(Graph& g, const BiLstm& b,
                                         const std::vector<Value>& xs) {
  for (const Value& x : xs)
    if (x.size() != b.d_in)
      throw DimensionError("bilstm: input " + x.val().shape_str() + ", expected " +
                           std::to_string(b.d_in) + "x1");
  std::vector<Value> hf = lstm_dir_forward(g, b.fw, b.d_h, xs, false);
  std::vector<Value> hb = lstm_dir_forward(g, b.bw, b.d_h, xs, true);
  std::vector<Value> out;
  out.reserve(xs.size());
  for (std::size_t t = 0; t < xs.size(); ++t) out.push_back(g.concat({hf[t], hb[t]}));
  return out;
}

// ----- Character CNN -----

struct CharCnn {
  Node* table;    // |chars| x d_char
  Node* filters;  // n_filters x (width * d_char)
  Node* bias;     // n_filters
  std::size_t width = 0;
  std::size_t n_filters = 0;
  std::size_t d_char = 0;
};

inline CharCnn make_char_cnn(ParamStore& ps, const std::string& prefix,
                             std::size_t n_chars, std::size_t d_char,
                             std::size_t n_filters, std::size_t width) {
  CharCnn c;
  c.table = &ps.create_uniform(prefix + ".table", n_chars, d_char, -0.5, 0.5);
  c.filters = &ps.create_glorot(prefix + ".filters", n_filters, width * d_char);
  c.bias = &ps.create(prefix + ".bias", n_filters, 1);
  c.width = width;
  c.n_filters = n_filters;
  c.d_char = d_char;
  return c;
}

// tanh convolution over char embeddings, max pooled over time. Words
// shorter than the filter width are padded with the PAD char (id 0).
inline Value char_cnn_forward(Graph& g, const CharCnn& c,
                              const std::vector<int>& char_ids) {
  std::vector<std::size_t> ids;
  ids.reserve(char_ids.size());
  for (int id : char_ids) {
    if (id < 0) throw LookupError("char id " + std::to_string(id) + " is negative");
    ids.push_back(static_cast<std::size_t>(id));
  }
  while (ids.size() < c.width) ids.push_back(0);

  Value table = g.param(*c.table);
  std::vector<Value> rows;
  rows.reserve(ids.size());
  for (std::size_t id : ids) rows.push_back(g.row_lookup(table, id));

  std::vector<Value> windows;
  windows.reserve(ids.size() - c.width + 1);
  for (std::size_t j = 0; j + c.width <= ids.size(); ++j) {
    std::vector<Value> span(rows.begin() + j, rows.begin() + j + c.width);
    Value win = g.concat(span);
    windows.push_back(
        g.tanh_(g.add(g.matvec(g.param(*c.filters), win), g.param(*c.bias))));
  }
  return g.max_elements(windows);
}

// ----- Linear head -----

struct Linear {
  Node* w;
  Node* b;
};

inline Linear make_linear(ParamStore& ps, const std::string& prefix, std::size_t out_dim,
                          std::size_t in_dim) {
  Linear l;
  l.w = &ps.create_glorot(prefix + ".w", out_dim, in_dim);
  l.b = &ps.create(prefix + ".b", out_dim, 1);
  return l;
}

inline Value linear_forward(Graph& g, const Linear& l, Value x) {
  return g.add(g.matvec(g.param(*l.w), x), g.param(*l.b));
}

}  // namespace gti
