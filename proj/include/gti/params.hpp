#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "gti/errors.hpp"
#include "gti/graph.hpp"
#include "gti/rng.hpp"
#include "gti/tensor.hpp"

namespace gti {

// Named parameter tensors with stable registration order. Init draws
// come from one seeded stream in registration order, so a seed plus a
// config pins every initial value bit-for-bit.
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t seed) : seed_(seed), rng_(seed) {}

  Node& create(const std::string& name, std::size_t rows, std::size_t cols,
               bool trainable = true) {
    return insert(name, Tensor(rows, cols), trainable);
  }

  Node& create_uniform(const std::string& name, std::size_t rows, std::size_t cols,
                       double lo, double hi, bool trainable = true) {
    Tensor t(rows, cols);
    for (double& v : t.data) v = uniform(rng_, lo, hi);
    return insert(name, std::move(t), trainable);
  }

  // Glorot limit sqrt(6/(fan_in+fan_out)) for y = Wx: fan_in = cols.
  Node& create_glorot(const std::string& name, std::size_t rows, std::size_t cols,
                      bool trainable = true) {
    double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    return create_uniform(name, rows, cols, -limit, limit, trainable);
  }

  Node& adopt(const std::string& name, Tensor t, bool trainable) {
    return insert(name, std::move(t), trainable);
  }

  Node& at(const std::string& name) {
    auto it = map_.find(name);
    if (it == map_.end()) throw LookupError("no parameter named '" + name + "'");
    return *it->second;
  }
  const Node& at(const std::string& name) const {
    auto it = map_.find(name);
    if (it == map_.end()) throw LookupError("no parameter named '" + name + "'");
    return *it->second;
  }

  bool contains(const std::string& name) const { return map_.count(name) > 0; }

  const std::vector<std::string>& names() const { return order_; }

  void zero_grad() {
    for (const std::string& n : order_) {
      Node& p = *map_[n];
      if (p.requires_grad) {
        p.ensure_grad();
        p.zero_grad();
      }
    }
  }

  std::size_t total_size() const {
    std::size_t s = 0;
    for (const std::string& n : order_) s += map_.at(n)->value.size();
    return s;
  }

  std::uint64_t seed() const { return seed_; }
  std::mt19937_64& rng() { return rng_; }

 private:
  Node& insert(const std::string& name, Tensor t, bool trainable) {
    if (map_.count(name)) throw ArgumentError("duplicate parameter name '" + name + "'");
    auto n = std::make_unique<Node>();
    n->value = std::move(t);
    n->requires_grad = trainable;
    n->op = "param";
    if (trainable) n->ensure_grad();
    Node& ref = *n;
    map_.emplace(name, std::move(n));
    order_.push_back(name);
    return ref;
  }

  std::uint64_t seed_;
  std::mt19937_64 rng_;
  std::vector<std::string> order_;
  std::unordered_map<std::string, std::unique_ptr<Node>> map_;
};

}  // namespace gti
