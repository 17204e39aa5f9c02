#include "autodiff/tape.hpp"

#include <atomic>

#include "common/error.hpp"

namespace readtwice::ad {

namespace {
std::atomic<int> g_corrupted_op{-1};
}

namespace testing {
void corrupt_backward(Op op) { g_corrupted_op.store(static_cast<int>(op)); }
void clear_corrupted_backward() { g_corrupted_op.store(-1); }
}  // namespace testing

std::string_view op_name(Op op) {
  switch (op) {
    case Op::kConstant: return "constant";
    case Op::kParam: return "param";
    case Op::kMatmul: return "matmul";
    case Op::kMatmulNT: return "matmul_nt";
    case Op::kTranspose: return "transpose";
    case Op::kAdd: return "add";
    case Op::kAddBroadcast: return "add_broadcast";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kScale: return "scale";
    case Op::kGelu: return "gelu";
    case Op::kSoftmax: return "softmax";
    case Op::kLayerNorm: return "layer_norm";
    case Op::kConcatCols: return "concat_cols";
    case Op::kConcatRows: return "concat_rows";
    case Op::kSliceCols: return "slice_cols";
    case Op::kSliceRows: return "slice_rows";
    case Op::kGatherRows: return "gather_rows";
    case Op::kCrossEntropy: return "cross_entropy";
    case Op::kLogSumExp: return "logsumexp";
    case Op::kBceWithLogits: return "bce_with_logits";
    case Op::kSum: return "sum";
    case Op::kRowSum: return "row_sum";
    case Op::kDropout: return "dropout";
  }
  return "unknown";
}

const Tensor& Var::value() const { return tape->value(id); }

Var Tape::constant(Tensor value) {
  Node node;
  node.op = Op::kConstant;
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

Var Tape::param(Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var{this, it->second};
  Node node;
  node.op = Op::kParam;
  node.external = &p;
  node.param = &p;
  node.requires_grad = true;
  nodes_.push_back(std::move(node));
  param_nodes_.emplace(&p, nodes_.size() - 1);
  return Var{this, nodes_.size() - 1};
}

const Tensor& Tape::value(Var v) const { return value(v.id); }

const Tensor& Tape::value(std::size_t id) const {
  const Node& n = nodes_[id];
  return n.external ? n.external->value : n.value;
}

Var Tape::record(Op op, Tensor value, bool requires_grad, BackwardFn fn) {
  Node node;
  node.op = op;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  if (requires_grad) node.backward = std::move(fn);
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

std::vector<double>& Tape::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad.assign(value(id).size(), 0.0);
  return n.grad;
}

void Tape::backward(Var loss) {
  if (loss.tape != this) fail(ErrorKind::kContract, "backward() on a foreign tape");
  if (value(loss).size() != 1) {
    fail(ErrorKind::kDimension, "backward() needs a scalar, got " + value(loss).shape_string());
  }
  for (Node& n : nodes_) n.grad.clear();
  if (!nodes_[loss.id].requires_grad) return;
  grad_buffer(loss.id)[0] = 1.0;

  const int corrupted = g_corrupted_op.load();
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (n.grad.empty() || !n.backward) continue;
    if (static_cast<int>(n.op) == corrupted) {
      for (double& g : n.grad) g *= 1.5;
    }
    n.backward(*this, id);
  }
  for (Node& n : nodes_) {
    if (n.param && !n.grad.empty()) {
      auto& dst = n.param->grad;
      if (dst.size() != n.grad.size()) dst.assign(n.grad.size(), 0.0);
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += n.grad[i];
    }
  }
}

std::vector<Parameter*> Tape::bound_parameters() const {
  std::vector<Parameter*> out;
  for (const Node& n : nodes_) {
    if (n.param) out.push_back(n.param);
  }
  return out;
}

}  // namespace readtwice::ad
