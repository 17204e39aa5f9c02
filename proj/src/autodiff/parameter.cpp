#include "autodiff/parameter.hpp"

#include "common/error.hpp"

namespace readtwice::ad {

Parameter& ParamStore::add(const std::string& path, Tensor init) {
  auto [it, inserted] = params_.try_emplace(path);
  if (!inserted) fail(ErrorKind::kContract, "duplicate parameter path " + path);
  it->second.path = path;
  it->second.value = std::move(init);
  it->second.zero_grad();
  return it->second;
}

Parameter& ParamStore::at(const std::string& path) {
  auto it = params_.find(path);
  if (it == params_.end()) fail(ErrorKind::kInvalidArgument, "unknown parameter " + path);
  return it->second;
}

const Parameter& ParamStore::at(const std::string& path) const {
  auto it = params_.find(path);
  if (it == params_.end()) fail(ErrorKind::kInvalidArgument, "unknown parameter " + path);
  return it->second;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, p] : params_) n += p.value.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [_, p] : params_) p.zero_grad();
}

void ParamStore::for_each(const std::function<void(Parameter&)>& fn) {
  for (auto& [_, p] : params_) fn(p);
}

void ParamStore::for_each(const std::function<void(const Parameter&)>& fn) const {
  for (const auto& [_, p] : params_) fn(p);
}

std::vector<std::string> ParamStore::paths() const {
  std::vector<std::string> out;
  out.reserve(params_.size());
  for (const auto& [path, _] : params_) out.push_back(path);
  return out;
}

}  // namespace readtwice::ad
