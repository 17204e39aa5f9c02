#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "autodiff/parameter.hpp"
#include "autodiff/rng.hpp"
#include "autodiff/tensor.hpp"

namespace readtwice::ad {

enum class Op : int {
  kConstant,
  kParam,
  kMatmul,
  kMatmulNT,
  kTranspose,
  kAdd,
  kAddBroadcast,
  kSub,
  kMul,
  kScale,
  kGelu,
  kSoftmax,
  kLayerNorm,
  kConcatCols,
  kConcatRows,
  kSliceCols,
  kSliceRows,
  kGatherRows,
  kCrossEntropy,
  kLogSumExp,
  kBceWithLogits,
  kSum,
  kRowSum,
  kDropout,
};

std::string_view op_name(Op op);

class Tape;

// Handle to a node on a tape. Cheap to copy; only valid while its tape lives.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

// Linear record of executed operations. Nodes are appended in execution
// order, so the vector itself is a topological order and backward() simply
// walks it in reverse.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  // Leaf that reads the parameter in place. Binding the same parameter twice
  // returns the same node.
  Var param(Parameter& p);

  const Tensor& value(Var v) const;
  const Tensor& value(std::size_t id) const;
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  // Gradient of the last backward() w.r.t. this node; empty if none flowed.
  const std::vector<double>& grad(Var v) const { return nodes_[v.id].grad; }
  const std::vector<double>& grad(std::size_t id) const { return nodes_[id].grad; }

  // Seeds d(loss)/d(loss) = 1, propagates, and accumulates into the bound
  // parameters' grad buffers.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }
  std::vector<Parameter*> bound_parameters() const;

  // Op-author interface.
  Var record(Op op, Tensor value, bool requires_grad, BackwardFn fn);
  std::vector<double>& grad_buffer(std::size_t id);

  // Dropout and other stochastic ops draw from this generator; nullptr means
  // deterministic evaluation (dropout disabled).
  void set_rng(Rng* rng) { rng_ = rng; }
  Rng* rng() const { return rng_; }

 private:
  struct Node {
    Op op = Op::kConstant;
    Tensor value;
    const Parameter* external = nullptr;
    Parameter* param = nullptr;
    bool requires_grad = false;
    std::vector<double> grad;
    BackwardFn backward;
  };

  // deque: references to existing nodes stay valid as the tape grows.
  std::deque<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
  Rng* rng_ = nullptr;
};

namespace testing {
// Test hook: when set, the backward rule of `op` propagates a gradient scaled
// by 1.5, which gradient checks must detect.
void corrupt_backward(Op op);
void clear_corrupted_backward();
}  // namespace testing

}  // namespace readtwice::ad
