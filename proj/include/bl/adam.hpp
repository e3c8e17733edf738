#pragma once

#include <cmath>
#include <cstdint>

#include <Eigen/Dense>

namespace bl {

struct AdamParams {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias-corrected first and second moments.
class Adam {
 public:
  Adam(Eigen::Index n, AdamParams params)
      : params_(params), m_(Eigen::VectorXd::Zero(n)), v_(Eigen::VectorXd::Zero(n)) {}

  void step(Eigen::VectorXd& theta, const Eigen::VectorXd& grad) {
    ++t_;
    const double b1 = params_.beta1;
    const double b2 = params_.beta2;
    m_ = b1 * m_ + (1.0 - b1) * grad;
    v_ = b2 * v_ + (1.0 - b2) * grad.cwiseAbs2();
    const double corr1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double corr2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    theta.array() -= params_.learning_rate * (m_.array() / corr1) /
                     ((v_.array() / corr2).sqrt() + params_.epsilon);
  }

  std::uint64_t steps() const { return t_; }

 private:
  AdamParams params_;
  Eigen::VectorXd m_;
  Eigen::VectorXd v_;
  std::uint64_t t_ = 0;
};

}  // namespace bl
