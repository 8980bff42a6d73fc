#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "gti/errors.hpp"
#include "gti/graph.hpp"
#include "gti/params.hpp"

namespace gti {

// Central-difference audit of the backward pass. The loss builder must
// be deterministic (eval-mode forward) so both probes of a coordinate
// see the same function.

struct ParamCheck {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
  double max_abs_analytic = 0.0;  // exact 0.0 marks a disconnected parameter
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::vector<ParamCheck> params;
  std::string corrupted_op;  // copied from the active test hook, if any

  bool pass(double tol) const { return max_rel_error < tol; }
  const ParamCheck* find(const std::string& name) const {
    for (const ParamCheck& p : params)
      if (p.name == name) return &p;
    return nullptr;
  }
};

inline double rel_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic));
}

// build_loss constructs a fresh forward pass on the given graph and
// returns its scalar loss. `only` restricts the sweep to named
// parameters; empty means every trainable parameter.
inline GradCheckReport check_gradients(ParamStore& ps,
                                       const std::function<Value(Graph&)>& build_loss,
                                       double h = 1e-5,
                                       const std::vector<std::string>& only = {}) {
  if (h <= 0.0) throw ArgumentError("gradcheck: step must be positive");

  ps.zero_grad();
  std::unordered_map<std::string, Tensor> analytic;
  {
    Graph g;
    Value loss = build_loss(g);
    g.backward(loss);
    for (const std::string& name : ps.names()) {
      Node& n = ps.at(name);
      if (n.requires_grad) analytic[name] = n.grad;
    }
  }

  auto loss_at = [&]() {
    Graph g;
    return build_loss(g).scalar();
  };

  std::vector<std::string> targets = only.empty() ? ps.names() : only;
  GradCheckReport report;
  for (const std::string& name : targets) {
    Node& n = ps.at(name);
    if (!n.requires_grad) continue;
    const Tensor& a = analytic.at(name);
    ParamCheck pc;
    pc.name = name;
    for (std::size_t i = 0; i < n.value.size(); ++i) {
      double saved = n.value.data[i];
      n.value.data[i] = saved + h;
      double up = loss_at();
      n.value.data[i] = saved - h;
      double down = loss_at();
      n.value.data[i] = saved;
      double numeric = (up - down) / (2.0 * h);
      double rel = rel_error(a.data[i], numeric);
      if (rel > pc.max_rel_error) {
        pc.max_rel_error = rel;
        pc.worst_index = i;
        pc.analytic_at_worst = a.data[i];
        pc.numeric_at_worst = numeric;
      }
      pc.max_abs_analytic = std::max(pc.max_abs_analytic, std::abs(a.data[i]));
    }
    if (pc.max_rel_error > report.max_rel_error) {
      report.max_rel_error = pc.max_rel_error;
      report.worst_param = name;
    }
    report.params.push_back(std::move(pc));
  }
  if (testing::corrupt_backward.active)
    report.corrupted_op = testing::corrupt_backward.op;
  return report;
}

}  // namespace gti
