#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "autodiff/tensor.hpp"

namespace readtwice::ad {

struct Parameter {
  std::string path;
  Tensor value;
  std::vector<double> grad;  // same length as value; zeroed by ParamStore::zero_grad

  void zero_grad() { grad.assign(value.size(), 0.0); }
};

// Owns every learnable tensor of a model, keyed by a slash-separated path
// ("first/layer0/attn/query/w"). Iteration order is the lexicographic path
// order, which fixes checkpoint layout and optimizer traversal.
class ParamStore {
 public:
  Parameter& add(const std::string& path, Tensor init);
  Parameter& at(const std::string& path);
  const Parameter& at(const std::string& path) const;
  bool contains(const std::string& path) const { return params_.count(path) != 0; }

  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;

  void zero_grad();
  void for_each(const std::function<void(Parameter&)>& fn);
  void for_each(const std::function<void(const Parameter&)>& fn) const;
  std::vector<std::string> paths() const;

 private:
  std::map<std::string, Parameter> params_;
};

}  // namespace readtwice::ad
