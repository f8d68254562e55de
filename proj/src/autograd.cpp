#include "ran/autograd.hpp"

namespace ran {

const char* op_name(OpTag tag) {
  switch (tag) {
    case OpTag::Leaf: return "leaf";
    case OpTag::Detach: return "detach";
    case OpTag::Conv2d: return "conv2d";
    case OpTag::PowerTransform: return "power_transform";
    case OpTag::Relu: return "relu";
    case OpTag::Sigmoid: return "sigmoid";
    case OpTag::Add: return "add";
    case OpTag::Sub: return "sub";
    case OpTag::Mul: return "mul";
    case OpTag::MaxPool2d: return "max_pool2d";
    case OpTag::SoftmaxCrossEntropy: return "softmax_cross_entropy";
    case OpTag::Sum: return "sum";
  }
  return "unknown";
}

Graph& Var::graph() const {
  if (!graph_) throw GraphError("use of an unbound variable");
  return *graph_;
}

const Tensor& Var::value() const { return graph().value(id_); }

const ArrayXd& Var::grad() const {
  const Tensor& t = value();
  if (!t.grad) throw GraphError("variable has no gradient; run backward first or mark it requires_grad");
  return *t.grad;
}

const Tensor& BackwardContext::input(std::size_t i) const { return graph_.value(inputs_[i]); }

Var Graph::leaf(Tensor value) {
  value.grad.reset();
  return record(OpTag::Leaf, {}, std::move(value), nullptr);
}

Var Graph::constant(Tensor value) {
  value.requires_grad = false;
  return leaf(std::move(value));
}

Var Graph::parameter(Tensor value) {
  value.requires_grad = true;
  return leaf(std::move(value));
}

Var Graph::record(OpTag op, std::vector<Index> inputs, Tensor output, BackwardFn backward) {
  const Index id = static_cast<Index>(nodes_.size());
  if (op != OpTag::Leaf) {
    bool needs_grad = false;
    for (Index in : inputs) {
      if (in < 0 || in >= id) throw GraphError("node input does not precede it on the tape");
      needs_grad = needs_grad || values_[static_cast<std::size_t>(in)].requires_grad;
    }
    output.requires_grad = needs_grad && op != OpTag::Detach;
  }
  values_.push_back(std::move(output));
  nodes_.push_back(TapeNode{op, std::move(inputs), id, std::move(backward)});
  return Var(this, id);
}

void Graph::backward(const Var& loss) {
  if (!owns(loss)) throw GraphError("backward: loss is not a value of this graph");
  Tensor& root = values_[static_cast<std::size_t>(loss.id())];
  if (root.size() != 1) throw GraphError("backward: loss must be a scalar");
  for (auto& v : values_) v.grad.reset();
  if (!root.requires_grad) return;
  root.grad = ArrayXd::Ones(1);

  std::vector<ArrayXd*> dinputs;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    const TapeNode& node = *it;
    Tensor& out = values_[static_cast<std::size_t>(node.output)];
    if (!node.backward || !out.grad) continue;
    dinputs.clear();
    for (Index in : node.inputs) {
      Tensor& t = values_[static_cast<std::size_t>(in)];
      if (t.requires_grad) {
        if (!t.grad) t.grad = ArrayXd::Zero(t.size());
        dinputs.push_back(&*t.grad);
      } else {
        dinputs.push_back(nullptr);
      }
    }
    node.backward(BackwardContext(*this, node.inputs, out, *out.grad, dinputs));
  }
}

}  // namespace ran
