#include "urbangen/nn.hpp"

#include <cmath>

namespace urbangen::nn {

int ParamSet::add(std::string name, int rows, int cols) {
  names_.push_back(std::move(name));
  values_.push_back(Matrix::Zero(rows, cols));
  grads_.push_back(Matrix::Zero(rows, cols));
  return size() - 1;
}

int ParamSet::find(std::string_view name) const {
  for (int i = 0; i < size(); ++i) {
    if (names_[static_cast<std::size_t>(i)] == name) return i;
  }
  return -1;
}

void ParamSet::zero_grad() {
  for (Matrix& g : grads_) g.setZero();
}

void ParamSet::scale_grad(double s) {
  for (Matrix& g : grads_) g *= s;
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const Matrix& v : values_) n += static_cast<std::size_t>(v.size());
  return n;
}

void Adam::step(ParamSet& params) {
  if (m_.size() != static_cast<std::size_t>(params.size())) {
    m_.clear();
    v_.clear();
    for (int i = 0; i < params.size(); ++i) {
      m_.push_back(Matrix::Zero(params.value(i).rows(), params.value(i).cols()));
      v_.push_back(Matrix::Zero(params.value(i).rows(), params.value(i).cols()));
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (int i = 0; i < params.size(); ++i) {
    Matrix& m = m_[static_cast<std::size_t>(i)];
    Matrix& v = v_[static_cast<std::size_t>(i)];
    const Matrix& g = params.grad(i);
    m = beta1_ * m + (1.0 - beta1_) * g;
    v = beta2_ * v + (1.0 - beta2_) * g.cwiseProduct(g);
    params.value(i).array() -= lr_ * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
  }
}

void glorot_init(Matrix& m, int fan_in, int fan_out, std::uint64_t key) {
  CounterRng rng(key);
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = (2.0 * rng.uniform() - 1.0) * limit;
}

}  // namespace urbangen::nn
