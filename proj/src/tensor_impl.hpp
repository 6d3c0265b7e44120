#pragma once

#include <atomic>
#include <cmath>
#include <stdexcept>

#include "duodiff/tensor.hpp"

namespace duodiff::detail {

inline std::atomic<uint64_t>& seq_counter() {
  static std::atomic<uint64_t> c{1};
  return c;
}

template <typename S>
void check_finite(const std::vector<S>& v, Op op) {
  for (const S x : v) {
    if (!std::isfinite(static_cast<double>(x))) {
      throw std::runtime_error(std::string("non-finite value produced by op ") +
                               op_name(op));
    }
  }
}

template <typename S>
std::shared_ptr<Node<S>> make_node(Op op, Shape shape,
                                   std::vector<S> value,
                                   std::vector<std::shared_ptr<Node<S>>> inputs) {
  auto n = std::make_shared<Node<S>>();
  n->op = op;
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->seq = seq_counter().fetch_add(1, std::memory_order_relaxed);
  check_finite(n->value, op);
  bool rg = false;
  for (const auto& in : inputs) rg = rg || in->requires_grad;
  if (grad_enabled() && rg) {
    n->requires_grad = true;
    n->inputs = std::move(inputs);
  }
  return n;
}

[[noreturn]] inline void shape_error(const std::string& msg) {
  throw std::invalid_argument(msg);
}

}  // namespace duodiff::detail
