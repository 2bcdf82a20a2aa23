#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "hapsnet/channel.hpp"
#include "hapsnet/scenario.hpp"

namespace hapsnet::association {

using channel::ChannelSet;
using scenario::Topology;
using scenario::TxKind;

struct UtilityMatrix {
  Eigen::MatrixXd u;  // transmitters x users, nonnegative
};

/// Binary assignment alpha plus the derived served sets U_i. Every user is
/// assigned to exactly one admissible transmitter; HAPS payload caps hold.
struct Association {
  Eigen::MatrixXi alpha;                 // transmitters x users, {0,1}
  std::vector<std::vector<int>> served;  // U_i, ascending user ids

  int tx_of(int user) const {
    for (int i = 0; i < alpha.rows(); ++i)
      if (alpha(i, user) == 1) return i;
    return -1;
  }
};

class GapInfeasible : public std::runtime_error {
 public:
  GapInfeasible(int witness, const std::string& what)
      : std::runtime_error(what), witness_user(witness) {}
  int witness_user;
};

/// Association utility U_ij = |h_ij^H w_ij|^2 / sigma^2 with the unit-norm
/// matched filter w = h/||h||, i.e. U_ij = ||h_ij||^2 / sigma^2. With
/// `literal_mrc` the verbatim w = h/||h||^2 normalisation is used instead,
/// which collapses every nonzero entry to 1/sigma^2.
inline UtilityMatrix utility_matrix(const ChannelSet& channels, double sigma2,
                                    bool literal_mrc = false) {
  if (sigma2 <= 0.0) throw std::invalid_argument("utility_matrix: sigma2 must be positive");
  UtilityMatrix util;
  util.u.resize(channels.tx_count(), channels.user_count());
  for (int i = 0; i < channels.tx_count(); ++i)
    for (int j = 0; j < channels.user_count(); ++j) {
      const double norm2 = channels.h(i, j).squaredNorm();
      if (literal_mrc)
        util.u(i, j) = norm2 > 0.0 ? 1.0 / sigma2 : 0.0;
      else
        util.u(i, j) = norm2 / sigma2;
    }
  return util;
}

/// Per-transmitter effective payload caps: K_i for HAPSs, the user count for
/// BSs (payload caps model HAPS hardware only).
inline std::vector<int> effective_caps(const Topology& topo) {
  std::vector<int> caps(topo.tx_count());
  for (int i = 0; i < topo.tx_count(); ++i)
    caps[i] = topo.transmitters[i].kind == TxKind::HAPS ? topo.transmitters[i].payload_cap
                                                        : topo.user_count();
  return caps;
}

inline std::vector<std::vector<int>> served_sets(const Eigen::MatrixXi& alpha,
                                                 const Eigen::MatrixXi& beta) {
  std::vector<std::vector<int>> served(alpha.rows());
  for (int j = 0; j < alpha.cols(); ++j)
    for (int i = 0; i < alpha.rows(); ++i)
      if (beta(i, j) * alpha(i, j) == 1) served[i].push_back(j);
  return served;
}

namespace detail {

// Depth-first branch and bound over users. Users are processed in
// descending-regret order (regret = best minus second-best admissible
// utility), candidates in descending-utility order; the bound is the sum of
// each remaining user's best utility over admissible transmitters that still
// have capacity. Equal-objective optima are resolved towards the
// lexicographically smallest assignment vector.
class GapBnB {
 public:
  GapBnB(const Eigen::MatrixXd& u, const Eigen::MatrixXi& beta, const std::vector<int>& caps)
      : u_(u), beta_(beta), caps_(caps), n_tx_(static_cast<int>(u.rows())),
        n_users_(static_cast<int>(u.cols())) {}

  Eigen::MatrixXi solve() {
    check_feasibility();
    order_users();

    assign_.assign(n_users_, -1);
    best_assign_.clear();
    best_obj_ = -std::numeric_limits<double>::infinity();
    remaining_ = caps_;
    nodes_ = 0;
    dfs(0);
    if (best_assign_.empty())
      throw GapInfeasible(-1, "solve_gap: no feasible assignment (capacity exhausted)");

    Eigen::MatrixXi alpha = Eigen::MatrixXi::Zero(n_tx_, n_users_);
    for (int j = 0; j < n_users_; ++j) alpha(best_assign_[j], j) = 1;
    return alpha;
  }

 private:
  void check_feasibility() {
    long long cap_total = 0;
    for (int c : caps_) cap_total += c;
    if (cap_total < n_users_)
      throw GapInfeasible(-1, "solve_gap: total capacity below user count");
    for (int j = 0; j < n_users_; ++j) {
      bool any = false;
      for (int i = 0; i < n_tx_; ++i)
        if (beta_(i, j) == 1 && caps_[i] > 0) { any = true; break; }
      if (!any)
        throw GapInfeasible(j, "solve_gap: user " + std::to_string(j) +
                                   " has no admissible transmitter");
    }
  }

  void order_users() {
    order_.resize(n_users_);
    std::iota(order_.begin(), order_.end(), 0);
    std::vector<double> regret(n_users_);
    for (int j = 0; j < n_users_; ++j) {
      double best = -1.0, second = -1.0;
      int options = 0;
      for (int i = 0; i < n_tx_; ++i) {
        if (beta_(i, j) != 1) continue;
        ++options;
        const double v = u_(i, j);
        if (v > best) { second = best; best = v; }
        else if (v > second) second = v;
      }
      regret[j] = options <= 1 ? std::numeric_limits<double>::infinity() : best - second;
    }
    std::stable_sort(order_.begin(), order_.end(), [&](int a, int b) {
      if (regret[a] != regret[b]) return regret[a] > regret[b];
      return a < b;
    });
    id_order_ = std::is_sorted(order_.begin(), order_.end());

    candidates_.resize(n_users_);
    for (int j = 0; j < n_users_; ++j) {
      for (int i = 0; i < n_tx_; ++i)
        if (beta_(i, j) == 1) candidates_[j].push_back(i);
      std::stable_sort(candidates_[j].begin(), candidates_[j].end(), [&](int a, int b) {
        if (u_(a, j) != u_(b, j)) return u_(a, j) > u_(b, j);
        return a < b;
      });
    }
  }

  double bound_from(int pos) const {
    double bound = 0.0;
    for (int p = pos; p < n_users_; ++p) {
      const int j = order_[p];
      double best = -std::numeric_limits<double>::infinity();
      for (int i : candidates_[j])
        if (remaining_[i] > 0) best = std::max(best, u_(i, j));
      if (best == -std::numeric_limits<double>::infinity())
        return -std::numeric_limits<double>::infinity();  // dead end
      bound += best;
    }
    return bound;
  }

  double canonical_objective(const std::vector<int>& assign) const {
    double obj = 0.0;
    for (int j = 0; j < n_users_; ++j) obj += u_(assign[j], j);
    return obj;
  }

  void dfs(int pos) {
    if (++nodes_ > kNodeBudget)
      throw std::runtime_error("solve_gap: node budget exceeded");
    if (pos == n_users_) {
      const double obj = canonical_objective(assign_);
      if (obj > best_obj_ ||
          (obj == best_obj_ && !best_assign_.empty() && assign_ < best_assign_)) {
        best_obj_ = obj;
        best_assign_ = assign_;
      }
      return;
    }
    const int j = order_[pos];
    double partial = 0.0;
    for (int p = 0; p < pos; ++p) partial += u_(assign_[order_[p]], order_[p]);
    for (int i : candidates_[j]) {
      if (remaining_[i] <= 0) continue;
      assign_[j] = i;
      remaining_[i] -= 1;
      const double bound = partial + u_(i, j) + bound_from(pos + 1);
      bool prune = bound < best_obj_;
      // With an incumbent of equal bound, only a lexicographically smaller
      // completion can win; that is prefix-decidable when users are explored
      // in id order.
      if (!prune && bound == best_obj_ && id_order_ && !best_assign_.empty()) {
        bool lex_le = true;
        for (int p = 0; p <= pos; ++p) {
          if (assign_[p] < best_assign_[p]) break;
          if (assign_[p] > best_assign_[p]) { lex_le = false; break; }
        }
        prune = !lex_le;
      }
      if (!prune) dfs(pos + 1);
      remaining_[i] += 1;
      assign_[j] = -1;
    }
  }

  static constexpr long long kNodeBudget = 50'000'000;

  const Eigen::MatrixXd& u_;
  const Eigen::MatrixXi& beta_;
  std::vector<int> caps_;
  int n_tx_, n_users_;

  std::vector<int> order_;
  bool id_order_ = false;
  std::vector<std::vector<int>> candidates_;
  std::vector<int> assign_, best_assign_, remaining_;
  double best_obj_ = 0.0;
  long long nodes_ = 0;
};

}  // namespace detail

/// Exact GAP solve: maximises sum of beta_ij alpha_ij U_ij subject to each
/// user taking exactly one admissible transmitter and HAPS payload caps.
inline Association solve_gap(const UtilityMatrix& util, const Eigen::MatrixXi& beta,
                             const std::vector<int>& caps) {
  if (util.u.rows() != beta.rows() || util.u.cols() != beta.cols())
    throw std::invalid_argument("solve_gap: utility/beta shape mismatch");
  if (static_cast<int>(caps.size()) != util.u.rows())
    throw std::invalid_argument("solve_gap: caps size mismatch");
  detail::GapBnB bnb(util.u, beta, caps);
  Association assoc;
  assoc.alpha = bnb.solve();
  assoc.served = served_sets(assoc.alpha, beta);
  return assoc;
}

inline Association solve_gap(const UtilityMatrix& util, const Topology& topo) {
  return solve_gap(util, topo.availability, effective_caps(topo));
}

inline double gap_objective(const UtilityMatrix& util, const Eigen::MatrixXi& beta,
                            const Eigen::MatrixXi& alpha) {
  double obj = 0.0;
  for (int j = 0; j < alpha.cols(); ++j)
    for (int i = 0; i < alpha.rows(); ++i)
      if (beta(i, j) * alpha(i, j) == 1) obj += util.u(i, j);
  return obj;
}

inline void write_association_csv(const Association& assoc, std::ostream& out) {
  out << "user_id,transmitter_id\n";
  for (int j = 0; j < assoc.alpha.cols(); ++j) out << j << ',' << assoc.tx_of(j) << '\n';
}

inline void write_association_csv(const Association& assoc, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_association_csv: cannot open " + path);
  write_association_csv(assoc, out);
}

}  // namespace hapsnet::association
