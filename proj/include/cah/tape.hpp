#pragma once

#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "cah/tensor.hpp"

namespace cah {

class AutogradError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Records differentiable operations in execution order and replays their
/// backward rules in reverse. One tape per forward pass; not thread-safe.
template <typename T>
class BasicTape {
 public:
  using BackwardFn = std::function<void()>;

  /// True when at least one operand takes part in differentiation.
  static bool any_requires_grad(std::initializer_list<const BasicTensor<T>*> inputs) {
    for (const auto* t : inputs)
      if (t && t->defined() && t->requires_grad()) return true;
    return false;
  }

  /// Registers `output` as produced from `inputs`. The backward rule reads
  /// output's gradient and accumulates into the inputs that require it.
  void record(BasicTensor<T>& output, BackwardFn backward) {
    if (consumed_) throw AutogradError("tape already consumed by backward(); clear() before reuse");
    output.set_requires_grad(true);
    nodes_.push_back(Node{output, std::move(backward)});
  }

  void backward(const BasicTensor<T>& loss) {
    if (!loss.defined() || loss.numel() != 1) {
      throw AutogradError("backward() needs a scalar root, got shape " +
                          (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
    }
    if (consumed_) throw AutogradError("backward() called twice on the same tape without a new forward pass");
    std::size_t root = nodes_.size();
    for (std::size_t i = nodes_.size(); i-- > 0;) {
      if (nodes_[i].output.same_as(loss)) {
        root = i;
        break;
      }
    }
    if (root == nodes_.size()) throw AutogradError("backward() root was not produced on this tape (detached)");

    BasicTensor<T> seed = nodes_[root].output;
    seed.mutable_grad()[0] += T(1);
    for (std::size_t i = root + 1; i-- > 0;) {
      if (!nodes_[i].output.has_grad()) continue;
      nodes_[i].backward();
    }
    consumed_ = true;
  }

  void clear() {
    nodes_.clear();
    consumed_ = false;
  }

  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

 private:
  struct Node {
    BasicTensor<T> output;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
  bool consumed_ = false;
};

using Tape = BasicTape<double>;
using TapeF = BasicTape<float>;

}  // namespace cah
