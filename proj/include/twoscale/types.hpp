#pragma once

#include <Eigen/Dense>

namespace twoscale {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Which functional inequality a constant refers to.
enum class Inequality { PI, LSI };

inline const char* to_string(Inequality kind) {
  return kind == Inequality::PI ? "PI" : "LSI";
}

}  // namespace twoscale
