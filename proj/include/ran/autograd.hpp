#pragma once

#include <functional>
#include <span>
#include <vector>

#include "ran/tensor.hpp"

namespace ran {

enum class OpTag {
  Leaf,
  Detach,
  Conv2d,
  PowerTransform,
  Relu,
  Sigmoid,
  Add,
  Sub,
  Mul,
  MaxPool2d,
  SoftmaxCrossEntropy,
  Sum,
};

const char* op_name(OpTag tag);

class Graph;

/// Handle to a value recorded in a Graph. Cheap to copy; valid while the graph lives.
class Var {
 public:
  Var() = default;
  Var(Graph* graph, Index id) : graph_(graph), id_(id) {}

  bool valid() const { return graph_ != nullptr; }
  Graph& graph() const;
  Index id() const { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape; }
  bool requires_grad() const { return value().requires_grad; }
  const ArrayXd& grad() const;

 private:
  Graph* graph_ = nullptr;
  Index id_ = -1;
};

/// View handed to a node's backward function.
class BackwardContext {
 public:
  BackwardContext(const Graph& graph, std::span<const Index> inputs, const Tensor& output, const ArrayXd& dout,
                  std::span<ArrayXd* const> dinputs)
      : graph_(graph), inputs_(inputs), output_(output), dout_(dout), dinputs_(dinputs) {}

  const Tensor& input(std::size_t i) const;
  const Tensor& output() const { return output_; }
  const ArrayXd& dout() const { return dout_; }
  // Null when input i does not require a gradient.
  ArrayXd* dinput(std::size_t i) const { return dinputs_[i]; }

 private:
  const Graph& graph_;
  std::span<const Index> inputs_;
  const Tensor& output_;
  const ArrayXd& dout_;
  std::span<ArrayXd* const> dinputs_;
};

using BackwardFn = std::function<void(const BackwardContext&)>;

struct TapeNode {
  OpTag op = OpTag::Leaf;
  std::vector<Index> inputs;
  Index output = -1;
  BackwardFn backward;
};

/// Reverse-mode tape. Node i produces value i, so insertion order is a
/// topological order and backward walks it in exact reverse.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Records a leaf; its requires_grad flag is taken from the tensor.
  Var leaf(Tensor value);
  Var constant(Tensor value);
  Var parameter(Tensor value);

  Var record(OpTag op, std::vector<Index> inputs, Tensor output, BackwardFn backward);

  const Tensor& value(Index id) const { return values_.at(static_cast<std::size_t>(id)); }
  const std::vector<TapeNode>& nodes() const { return nodes_; }
  std::size_t size() const { return nodes_.size(); }
  bool owns(const Var& v) const { return v.valid() && &v.graph() == this && v.id() >= 0 && v.id() < Index(size()); }

  /// Seeds d(loss)/d(loss) = 1 and propagates to every requires_grad value.
  /// Gradients from multiple uses accumulate by addition.
  void backward(const Var& loss);

 private:
  std::vector<Tensor> values_;
  std::vector<TapeNode> nodes_;
};

}  // namespace ran
