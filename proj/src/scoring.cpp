#include "mqf2/scoring.hpp"

#include "mqf2/autodiff/evaluate.hpp"
#include "mqf2/errors.hpp"

namespace mqf2 {

using ad::Var;

Var energy_score(Var c, Var c_prime, Var c_all, Var z, double beta) {
  const Eigen::Index nc = c.cols(), np = c_prime.cols(), na = c_all.cols();
  if (nc == 0 || np == 0 || na == 0) throw ConfigError("energy score: sample sets must be non-empty");
  if (!(beta > 0.0 && beta < 2.0 + 1e-12)) throw ConfigError("energy score: beta must lie in (0, 2]");
  // All |C| x |C'| pairs: repeat gives c0 c0 .. c1 c1 .., tile gives c'0 c'1 .. c'0 c'1 ..
  Var pair_diff = ad::repeat_cols(c, np) - ad::tile_cols(c_prime, nc);
  Var spread = ad::sum(ad::pow(ad::col_sums(ad::hadamard(pair_diff, pair_diff)), 0.5 * beta));
  Var miss_diff = c_all - ad::broadcast_cols(z, na);
  Var miss = ad::sum(ad::pow(ad::col_sums(ad::hadamard(miss_diff, miss_diff)), 0.5 * beta));
  return (-0.5 / static_cast<double>(nc * np)) * spread + (1.0 / static_cast<double>(na)) * miss;
}

double energy_score_loss(const Eigen::MatrixXd& c, const Eigen::MatrixXd& c_prime, const Eigen::MatrixXd& c_all,
                         const Eigen::VectorXd& z, double beta) {
  const Eigen::Index n = z.size();
  if (c.cols() == 0 || c_prime.cols() == 0 || c_all.cols() == 0) {
    throw ConfigError("energy score: sample sets must be non-empty");
  }
  if (c.rows() != n || c_prime.rows() != n || c_all.rows() != n) throw ShapeError("energy score: dimension mismatch");
  ad::Graph g;
  Var vc = g.leaf("c", n, c.cols(), false), vp = g.leaf("c_prime", n, c_prime.cols(), false);
  Var va = g.leaf("c_all", n, c_all.cols(), false), vz = g.leaf("z", n, 1, false);
  Var root = energy_score(vc, vp, va, vz, beta);
  ad::Evaluator ev(g);
  ev.bind(vc, c);
  ev.bind(vp, c_prime);
  ev.bind(va, c_all);
  ev.bind(vz, z);
  ev.run({root});
  return ev.scalar(root);
}

}  // namespace mqf2
