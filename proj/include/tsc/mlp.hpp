#pragma once

// Small fully-connected network with rectifier hidden layers and a linear
// output, plus the SGD-with-momentum update used to train it.

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace tsc::agent {

class Mlp {
 public:
  struct Cache {
    Eigen::MatrixXd input;
    std::vector<Eigen::MatrixXd> pre;   // pre-activation per layer
    std::vector<Eigen::MatrixXd> post;  // post-activation per layer
  };

  struct Gradients {
    std::vector<Eigen::MatrixXd> dw;
    std::vector<Eigen::VectorXd> db;
  };

  // Uniform fan-in init: W ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), b = 0.
  Mlp(std::vector<int> layer_sizes, std::uint64_t seed);

  // x is (input_width x batch); returns (output_width x batch).
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, Cache* cache = nullptr) const;

  // d_out is the loss gradient w.r.t. the network output.
  Gradients backward(const Cache& cache, const Eigen::MatrixXd& d_out) const;

  Gradients zero_gradients() const;

  const std::vector<int>& layer_sizes() const { return layer_sizes_; }
  int input_width() const { return layer_sizes_.front(); }
  int output_width() const { return layer_sizes_.back(); }

  // Flat parameter view, layer-major (W row-major, then b), for checkpoints
  // and finite-difference checks.
  std::size_t parameter_count() const;
  std::vector<double> parameters() const;
  void set_parameters(const std::vector<double>& flat);

  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;

 private:
  std::vector<int> layer_sizes_;
};

class SgdMomentum {
 public:
  SgdMomentum(double learning_rate, double momentum)
      : lr_(learning_rate), momentum_(momentum) {}

  void apply(Mlp& net, const Mlp::Gradients& grads);

 private:
  double lr_;
  double momentum_;
  std::vector<Eigen::MatrixXd> vw_;
  std::vector<Eigen::VectorXd> vb_;
};

}  // namespace tsc::agent
