#include "bcot/transport.hpp"

#include <cmath>
#include <limits>

namespace bcot {

namespace {

struct Cell {
  int i;
  int j;
  double x;
};

class TransportSimplex {
 public:
  TransportSimplex(const Vec& p, const Vec& q, const Mat& c) : m_(p.size()), n_(q.size()), p_(p), q_(q), c_(c) {}

  int solve() {
    northwest_corner();
    const double scale = 1.0 + c_.cwiseAbs().maxCoeff();
    const double tol = 1e-12 * scale;
    const int max_pivots = 200 * (m_ + n_) * std::max(m_, n_) + 1000;
    int degenerate_streak = 0;
    for (int it = 0; it < max_pivots; ++it) {
      potentials();
      const bool bland = degenerate_streak > m_ + n_;
      int ei = -1, ej = -1;
      double best = -tol;
      for (int i = 0; i < m_ && !(bland && ei >= 0); ++i) {
        for (int j = 0; j < n_; ++j) {
          const double r = c_(i, j) - u_[i] - v_[j];
          if (r < best) {
            best = r;
            ei = i;
            ej = j;
            if (bland) break;
          }
        }
      }
      if (ei < 0) return it;
      const double theta = pivot(ei, ej);
      degenerate_streak = theta > 0.0 ? 0 : degenerate_streak + 1;
    }
    throw std::runtime_error("exact_discrete_ot: pivot limit reached");
  }

  const std::vector<Cell>& basis() const { return basis_; }

 private:
  void northwest_corner() {
    Vec s = p_, t = q_;
    int i = 0, j = 0;
    basis_.reserve(m_ + n_ - 1);
    while (true) {
      const double x = std::min(s(i), t(j));
      basis_.push_back({i, j, x});
      s(i) -= x;
      t(j) -= x;
      if (i == m_ - 1 && j == n_ - 1) break;
      if (i == m_ - 1) {
        ++j;
      } else if (j == n_ - 1) {
        ++i;
      } else if (s(i) <= t(j)) {
        ++i;
      } else {
        ++j;
      }
    }
  }

  // Adjacency of the basis tree; nodes are rows 0..m-1 and columns m..m+n-1,
  // edges are basis indices.
  void build_adjacency() {
    adj_.assign(m_ + n_, {});
    for (int e = 0; e < static_cast<int>(basis_.size()); ++e) {
      adj_[basis_[e].i].push_back(e);
      adj_[m_ + basis_[e].j].push_back(e);
    }
  }

  int other_end(int e, int node) const { return node < m_ ? m_ + basis_[e].j : basis_[e].i; }

  void potentials() {
    build_adjacency();
    u_.assign(m_, 0.0);
    v_.assign(n_, 0.0);
    std::vector<char> seen(m_ + n_, 0);
    std::vector<int> stack{0};
    seen[0] = 1;
    while (!stack.empty()) {
      const int node = stack.back();
      stack.pop_back();
      for (int e : adj_[node]) {
        const int nb = other_end(e, node);
        if (seen[nb]) continue;
        seen[nb] = 1;
        const Cell& c = basis_[e];
        if (nb >= m_) {
          v_[c.j] = c_(c.i, c.j) - u_[c.i];
        } else {
          u_[c.i] = c_(c.i, c.j) - v_[c.j];
        }
        stack.push_back(nb);
      }
    }
  }

  // Enters (ei, ej), returns the step length theta.
  double pivot(int ei, int ej) {
    // Tree path from row ei to column ej, recorded as parent edges.
    const int src = ei, dst = m_ + ej;
    std::vector<int> parent_edge(m_ + n_, -1);
    std::vector<char> seen(m_ + n_, 0);
    std::vector<int> stack{src};
    seen[src] = 1;
    while (!stack.empty() && !seen[dst]) {
      const int node = stack.back();
      stack.pop_back();
      for (int e : adj_[node]) {
        const int nb = other_end(e, node);
        if (seen[nb]) continue;
        seen[nb] = 1;
        parent_edge[nb] = e;
        stack.push_back(nb);
      }
    }
    // Walk back from the column: the first edge is a minus edge, signs alternate.
    std::vector<int> path;
    for (int node = dst; node != src;) {
      const int e = parent_edge[node];
      path.push_back(e);
      node = other_end(e, node);
    }
    double theta = std::numeric_limits<double>::infinity();
    int leave = -1;
    for (std::size_t k = 0; k < path.size(); k += 2) {
      const int e = path[k];
      if (basis_[e].x < theta || (basis_[e].x == theta && e < leave)) {
        theta = basis_[e].x;
        leave = e;
      }
    }
    for (std::size_t k = 0; k < path.size(); ++k) {
      Cell& c = basis_[path[k]];
      c.x += (k % 2 == 0) ? -theta : theta;
      if (c.x < 0.0) c.x = 0.0;
    }
    basis_[leave] = {ei, ej, theta};
    return theta;
  }

  int m_, n_;
  Vec p_, q_;
  Mat c_;
  std::vector<Cell> basis_;
  std::vector<std::vector<int>> adj_;
  std::vector<double> u_, v_;
};

}  // namespace

OtResult exact_discrete_ot(const Vec& p, const Vec& q, const Mat& cost) {
  if (cost.rows() != p.size() || cost.cols() != q.size()) throw ShapeError("exact_discrete_ot: shape mismatch");
  if (p.size() == 0 || q.size() == 0) throw ShapeError("exact_discrete_ot: empty marginal");
  if ((p.array() < 0.0).any() || (q.array() < 0.0).any() || !p.allFinite() || !q.allFinite()) {
    throw std::invalid_argument("exact_discrete_ot: marginals must be finite and nonnegative");
  }
  if (!cost.allFinite()) throw std::invalid_argument("exact_discrete_ot: non-finite cost");
  const double sp = p.sum(), sq = q.sum();
  if (std::abs(sp - sq) > 1e-9 * std::max(1.0, sp)) throw std::invalid_argument("exact_discrete_ot: unbalanced marginals");

  OtResult out;
  if (sp == 0.0) return out;

  std::vector<int> rows, cols;
  for (int i = 0; i < p.size(); ++i)
    if (p(i) > 0.0) rows.push_back(i);
  for (int j = 0; j < q.size(); ++j)
    if (q(j) > 0.0) cols.push_back(j);
  const int m = static_cast<int>(rows.size()), n = static_cast<int>(cols.size());
  Vec pp(m), qq(n);
  Mat cc(m, n);
  for (int a = 0; a < m; ++a) pp(a) = p(rows[a]);
  for (int b = 0; b < n; ++b) qq(b) = q(cols[b]) * (sp / sq);
  for (int a = 0; a < m; ++a)
    for (int b = 0; b < n; ++b) cc(a, b) = cost(rows[a], cols[b]);

  TransportSimplex solver(pp, qq, cc);
  out.pivots = solver.solve();
  for (const auto& c : solver.basis()) {
    if (c.x <= 0.0) continue;
    out.plan.push_back({rows[c.i], cols[c.j], c.x});
    out.value += c.x * cc(c.i, c.j);
  }
  return out;
}

Mat plan_to_dense(const std::vector<PlanEntry>& plan, int rows, int cols) {
  Mat m = Mat::Zero(rows, cols);
  for (const auto& e : plan) m(e.row, e.col) += e.mass;
  return m;
}

}  // namespace bcot
