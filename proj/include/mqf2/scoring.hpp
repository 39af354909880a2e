#pragma once

// Sample estimate of the energy score, shared by the training loss and the
// evaluation metric so both compute the same number:
//
//   L = -1 / (2 |C| |C'|) sum_{w in C, w' in C'} ||w - w'||^beta
//       + 1 / |C''| sum_{w'' in C''} ||w'' - z||^beta

#include "mqf2/autodiff/graph.hpp"

#include <Eigen/Dense>

namespace mqf2 {

/// Graph form. Sets are n x |set| matrices (one sample per column), z is n x 1.
ad::Var energy_score(ad::Var c, ad::Var c_prime, ad::Var c_all, ad::Var z, double beta);

/// Evaluates the graph form on concrete sets. Throws ConfigError on an empty set.
double energy_score_loss(const Eigen::MatrixXd& c, const Eigen::MatrixXd& c_prime, const Eigen::MatrixXd& c_all,
                         const Eigen::VectorXd& z, double beta = 1.0);

}  // namespace mqf2
