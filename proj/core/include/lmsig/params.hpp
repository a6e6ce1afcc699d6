#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace lmsig {

/// A named view onto one parameter tensor of a model. Models expose their
/// parameters as an ordered list of these so optimizers, gradient checks and
/// checkpoints can walk them uniformly.
struct NamedTensor {
  std::string name;
  Eigen::MatrixXd* value;
};

struct ConstNamedTensor {
  std::string name;
  const Eigen::MatrixXd* value;
};

template <class Params>
Params zeros_like(const Params& p) {
  Params z = p;
  for (auto& t : z.tensors()) t.value->setZero();
  return z;
}

/// y += alpha * x, tensor by tensor.
template <class Params>
void axpy(double alpha, const Params& x, Params& y) {
  const auto xs = x.tensors();
  auto ys = y.tensors();
  for (std::size_t i = 0; i < xs.size(); ++i) *ys[i].value += alpha * *xs[i].value;
}

template <class Params>
void scale(double alpha, Params& y) {
  for (auto& t : y.tensors()) *t.value *= alpha;
}

template <class Params>
std::size_t parameter_count(const Params& p) {
  std::size_t n = 0;
  for (const auto& t : p.tensors()) n += static_cast<std::size_t>(t.value->size());
  return n;
}

}  // namespace lmsig
