#include "tsc/mlp.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace tsc::agent {

Mlp::Mlp(std::vector<int> layer_sizes, std::uint64_t seed)
    : layer_sizes_(std::move(layer_sizes)) {
  if (layer_sizes_.size() < 2) throw std::invalid_argument("need at least two layers");
  std::mt19937_64 rng(seed);
  for (size_t l = 0; l + 1 < layer_sizes_.size(); ++l) {
    const int in = layer_sizes_[l];
    const int out = layer_sizes_[l + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> uni(-bound, bound);
    Eigen::MatrixXd w(out, in);
    for (int r = 0; r < out; ++r) {
      for (int c = 0; c < in; ++c) w(r, c) = uni(rng);
    }
    weights.push_back(std::move(w));
    biases.push_back(Eigen::VectorXd::Zero(out));
  }
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x, Cache* cache) const {
  if (x.rows() != input_width()) throw std::invalid_argument("input width mismatch");
  if (cache) {
    cache->input = x;
    cache->pre.clear();
    cache->post.clear();
  }
  Eigen::MatrixXd h = x;
  const size_t last = weights.size() - 1;
  for (size_t l = 0; l < weights.size(); ++l) {
    Eigen::MatrixXd z = (weights[l] * h).colwise() + biases[l];
    if (cache) cache->pre.push_back(z);
    h = (l == last) ? z : z.cwiseMax(0.0);
    if (cache) cache->post.push_back(h);
  }
  return h;
}

Mlp::Gradients Mlp::backward(const Cache& cache, const Eigen::MatrixXd& d_out) const {
  Gradients g = zero_gradients();
  Eigen::MatrixXd delta = d_out;
  for (int l = static_cast<int>(weights.size()) - 1; l >= 0; --l) {
    if (l < static_cast<int>(weights.size()) - 1) {
      // rectifier gate of layer l's activation
      delta = delta.cwiseProduct(
          (cache.pre[l].array() > 0.0).cast<double>().matrix());
    }
    const Eigen::MatrixXd& below = (l == 0) ? cache.input : cache.post[l - 1];
    g.dw[l] = delta * below.transpose();
    g.db[l] = delta.rowwise().sum();
    if (l > 0) delta = weights[l].transpose() * delta;
  }
  return g;
}

Mlp::Gradients Mlp::zero_gradients() const {
  Gradients g;
  for (size_t l = 0; l < weights.size(); ++l) {
    g.dw.push_back(Eigen::MatrixXd::Zero(weights[l].rows(), weights[l].cols()));
    g.db.push_back(Eigen::VectorXd::Zero(biases[l].size()));
  }
  return g;
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (size_t l = 0; l < weights.size(); ++l) {
    n += static_cast<std::size_t>(weights[l].size()) + biases[l].size();
  }
  return n;
}

std::vector<double> Mlp::parameters() const {
  std::vector<double> flat;
  flat.reserve(parameter_count());
  for (size_t l = 0; l < weights.size(); ++l) {
    for (int r = 0; r < weights[l].rows(); ++r) {
      for (int c = 0; c < weights[l].cols(); ++c) flat.push_back(weights[l](r, c));
    }
    for (int i = 0; i < biases[l].size(); ++i) flat.push_back(biases[l](i));
  }
  return flat;
}

void Mlp::set_parameters(const std::vector<double>& flat) {
  if (flat.size() != parameter_count()) throw std::invalid_argument("parameter count mismatch");
  size_t k = 0;
  for (size_t l = 0; l < weights.size(); ++l) {
    for (int r = 0; r < weights[l].rows(); ++r) {
      for (int c = 0; c < weights[l].cols(); ++c) weights[l](r, c) = flat[k++];
    }
    for (int i = 0; i < biases[l].size(); ++i) biases[l](i) = flat[k++];
  }
}

void SgdMomentum::apply(Mlp& net, const Mlp::Gradients& grads) {
  if (vw_.empty()) {
    for (size_t l = 0; l < net.weights.size(); ++l) {
      vw_.push_back(Eigen::MatrixXd::Zero(net.weights[l].rows(), net.weights[l].cols()));
      vb_.push_back(Eigen::VectorXd::Zero(net.biases[l].size()));
    }
  }
  for (size_t l = 0; l < net.weights.size(); ++l) {
    vw_[l] = momentum_ * vw_[l] - lr_ * grads.dw[l];
    vb_[l] = momentum_ * vb_[l] - lr_ * grads.db[l];
    net.weights[l] += vw_[l];
    net.biases[l] += vb_[l];
  }
}

}  // namespace tsc::agent
