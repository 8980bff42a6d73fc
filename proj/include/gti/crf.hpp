#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "gti/errors.hpp"
#include "gti/graph.hpp"
#include "gti/params.hpp"

namespace gti {

// Linear-chain CRF with virtual START/STOP states. Transitions are
// (t+2)x(t+2) with START = t, STOP = t+1. Forbidden transitions are a
// -1e4 penalty wherever gradients flow and exact -inf in decode.
constexpr double kTransitionPenalty = -1e4;

struct CrfHead {
  std::size_t n_tags = 0;
  Node* transitions = nullptr;
  std::vector<std::uint8_t> allowed;  // (t+2)^2 row-major, empty = unconstrained

  std::size_t start() const { return n_tags; }
  std::size_t stop() const { return n_tags + 1; }
  std::size_t side() const { return n_tags + 2; }
  bool constrained() const { return !allowed.empty(); }
  bool is_allowed(std::size_t from, std::size_t to) const {
    return allowed.empty() || allowed[from * side() + to] != 0;
  }
};

inline CrfHead make_crf_head(ParamStore& ps, const std::string& prefix,
                             std::size_t n_tags) {
  CrfHead h;
  h.n_tags = n_tags;
  h.transitions = &ps.create(prefix + ".transitions", n_tags + 2, n_tags + 2);
  return h;
}

namespace detail {

inline void check_emissions(const CrfHead& head, const std::vector<Value>& emissions) {
  if (emissions.empty()) throw ArgumentError("crf: empty emission sequence");
  for (const Value& e : emissions)
    if (e.size() != head.n_tags)
      throw DimensionError("crf: emission " + e.val().shape_str() + ", expected " +
                           std::to_string(head.n_tags) + "x1");
}

inline void check_tags(const CrfHead& head, const std::vector<int>& tags,
                       std::size_t n) {
  if (tags.size() != n)
    throw DimensionError("crf: " + std::to_string(tags.size()) + " tags for " +
                         std::to_string(n) + " emissions");
  for (int t : tags)
    if (t < 0 || static_cast<std::size_t>(t) >= head.n_tags)
      throw LookupError("crf: tag id " + std::to_string(t) + " outside inventory of " +
                        std::to_string(head.n_tags));
}

// Transitions with the constraint penalty folded in (differentiable path).
inline Value effective_transitions(Graph& g, const CrfHead& head) {
  Value T = g.param(*head.transitions);
  if (!head.constrained()) return T;
  std::size_t side = head.side();
  Tensor pen(side, side);
  for (std::size_t a = 0; a < side; ++a)
    for (std::size_t b = 0; b < side; ++b)
      if (!head.is_allowed(a, b)) pen.at(a, b) = kTransitionPenalty;
  return g.add(T, g.constant(std::move(pen)));
}

}  // namespace detail

// Path score: T[START,y1] + sum_i em[i,y_i] + sum_i T[y_{i-1},y_i] + T[y_n,STOP].
inline Value crf_score_sequence(Graph& g, const CrfHead& head,
                                const std::vector<Value>& emissions,
                                const std::vector<int>& tags) {
  detail::check_emissions(head, emissions);
  detail::check_tags(head, tags, emissions.size());
  Value T = detail::effective_transitions(g, head);
  std::size_t side = head.side();
  auto trans_at = [&](std::size_t from, std::size_t to) {
    return g.pick(g.subrow(T, from, side), to);
  };
  Value score = trans_at(head.start(), static_cast<std::size_t>(tags[0]));
  score = g.add(score, g.pick(emissions[0], static_cast<std::size_t>(tags[0])));
  for (std::size_t i = 1; i < emissions.size(); ++i) {
    score = g.add(score, trans_at(static_cast<std::size_t>(tags[i - 1]),
                                  static_cast<std::size_t>(tags[i])));
    score = g.add(score, g.pick(emissions[i], static_cast<std::size_t>(tags[i])));
  }
  score = g.add(score, trans_at(static_cast<std::size_t>(tags.back()), head.stop()));
  return score;
}

// Forward recursion: alpha_i[y] = em[i,y] + logsumexp_y'(alpha_{i-1}[y'] + T[y',y]).
inline Value crf_log_partition(Graph& g, const CrfHead& head,
                               const std::vector<Value>& emissions) {
  detail::check_emissions(head, emissions);
  Value T = detail::effective_transitions(g, head);
  std::size_t t = head.n_tags;
  Value alpha = g.add(g.subrow(T, head.start(), t), emissions[0]);
  for (std::size_t i = 1; i < emissions.size(); ++i) {
    std::vector<Value> next;
    next.reserve(t);
    for (std::size_t y = 0; y < t; ++y)
      next.push_back(g.logsumexp(g.add(alpha, g.subcol(T, y, t))));
    alpha = g.add(g.stack(next), emissions[i]);
  }
  return g.logsumexp(g.add(alpha, g.subcol(T, head.stop(), t)));
}

inline Value crf_nll(Graph& g, const CrfHead& head, const std::vector<Value>& emissions,
                     const std::vector<int>& tags) {
  return g.sub(crf_log_partition(g, head, emissions),
               crf_score_sequence(g, head, emissions, tags));
}

struct ViterbiResult {
  std::vector<int> tags;
  double score = 0.0;
};

// Max-product decode on plain values; no gradients flow through this.
// Ties break toward the lower tag id. Constraints are exact -inf here.
inline ViterbiResult viterbi_decode(const CrfHead& head,
                                    const std::vector<std::vector<double>>& emissions) {
  if (emissions.empty()) throw ArgumentError("viterbi: empty emission sequence");
  std::size_t n = emissions.size();
  std::size_t t = head.n_tags;
  for (const auto& e : emissions)
    if (e.size() != t)
      throw DimensionError("viterbi: emission row of " + std::to_string(e.size()) +
                           ", expected " + std::to_string(t));
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  const Tensor& T = head.transitions->value;
  auto trans = [&](std::size_t from, std::size_t to) {
    return head.is_allowed(from, to) ? T.at(from, to) : kNegInf;
  };

  std::vector<std::vector<double>> delta(n, std::vector<double>(t, kNegInf));
  std::vector<std::vector<std::size_t>> back(n, std::vector<std::size_t>(t, 0));
  for (std::size_t y = 0; y < t; ++y)
    delta[0][y] = trans(head.start(), y) + emissions[0][y];
  for (std::size_t i = 1; i < n; ++i) {
    for (std::size_t y = 0; y < t; ++y) {
      double best = kNegInf;
      std::size_t arg = 0;
      for (std::size_t p = 0; p < t; ++p) {
        double cand = delta[i - 1][p] + trans(p, y);
        if (cand > best) {
          best = cand;
          arg = p;
        }
      }
      delta[i][y] = best + emissions[i][y];
      back[i][y] = arg;
    }
  }
  double best = kNegInf;
  std::size_t arg = 0;
  for (std::size_t y = 0; y < t; ++y) {
    double cand = delta[n - 1][y] + trans(y, head.stop());
    if (cand > best) {
      best = cand;
      arg = y;
    }
  }
  ViterbiResult r;
  r.score = best;
  r.tags.resize(n);
  r.tags[n - 1] = static_cast<int>(arg);
  for (std::size_t i = n - 1; i > 0; --i)
    r.tags[i - 1] = static_cast<int>(back[i][static_cast<std::size_t>(r.tags[i])]);
  return r;
}

inline ViterbiResult viterbi_decode(const CrfHead& head,
                                    const std::vector<Value>& emissions) {
  std::vector<std::vector<double>> em;
  em.reserve(emissions.size());
  for (const Value& e : emissions) em.push_back(e.val().data);
  return viterbi_decode(head, em);
}

// ----- IOBES transition constraints -----

namespace detail {

struct IobesTag {
  char prefix = 'O';  // one of O B I E S
  std::string type;
};

inline IobesTag parse_iobes_tag(const std::string& tag) {
  if (tag == "O") return {'O', ""};
  if (tag.size() >= 3 && tag[1] == '-' &&
      (tag[0] == 'B' || tag[0] == 'I' || tag[0] == 'E' || tag[0] == 'S'))
    return {tag[0], tag.substr(2)};
  throw ParseError("not an IOBES tag: '" + tag + "'");
}

}  // namespace detail

// Allowed-bigram mask over tag names plus START/STOP. Opens must be
// closed: B-X continues only as I-X/E-X; only O, E-*, S-* may end the
// sentence; START behaves like O for openers.
inline std::vector<std::uint8_t> build_iobes_mask(
    const std::vector<std::string>& tag_names) {
  std::size_t t = tag_names.size();
  std::size_t side = t + 2;
  std::size_t start = t, stop = t + 1;
  std::vector<detail::IobesTag> tags;
  tags.reserve(t);
  for (const std::string& name : tag_names) tags.push_back(detail::parse_iobes_tag(name));

  std::vector<std::uint8_t> allowed(side * side, 0);
  auto opener_or_outside = [&](std::size_t to) {
    return tags[to].prefix == 'O' || tags[to].prefix == 'B' || tags[to].prefix == 'S';
  };
  for (std::size_t a = 0; a < t; ++a) {
    bool closes = tags[a].prefix == 'O' || tags[a].prefix == 'E' || tags[a].prefix == 'S';
    for (std::size_t b = 0; b < t; ++b) {
      bool ok;
      if (tags[a].prefix == 'B' || tags[a].prefix == 'I') {
        ok = (tags[b].prefix == 'I' || tags[b].prefix == 'E') &&
             tags[b].type == tags[a].type;
      } else {
        ok = opener_or_outside(b);
      }
      allowed[a * side + b] = ok ? 1 : 0;
    }
    allowed[a * side + stop] = closes ? 1 : 0;
  }
  for (std::size_t b = 0; b < t; ++b)
    allowed[start * side + b] = opener_or_outside(b) ? 1 : 0;
  return allowed;
}

}  // namespace gti
