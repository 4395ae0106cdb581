#include "dlpc/objective.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

namespace dlpc {

namespace {

void check_symmetric(const Mat& m, const std::string& name) {
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  require((m - m.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * scale, ErrorKind::kConfig, name + " is not symmetric");
}

}  // namespace

ObjectiveSpec ObjectiveSpec::defaults(const Topology& topo, double q_scale, double r_scale, int horizon, double beta) {
  ObjectiveSpec s;
  s.horizon = horizon;
  s.beta = beta;
  s.robots.resize(topo.size());
  for (int i = 0; i < topo.size(); ++i) {
    const int n = topo.neighborhood_dim(i);
    s.robots[i].q = q_scale * Mat::Identity(n, n);
    s.robots[i].r = r_scale * Mat2::Identity();
    s.robots[i].p = Mat4::Identity();
  }
  return s;
}

void ObjectiveSpec::validate(const Topology& topo) const {
  require(static_cast<int>(robots.size()) == topo.size(), ErrorKind::kConfig, "objective needs one entry per robot");
  require(horizon >= 1, ErrorKind::kConfig, "horizon must be at least 1");
  require(beta > 1.0, ErrorKind::kConfig, "beta must exceed 1");
  for (int i = 0; i < topo.size(); ++i) {
    const auto& o = robots[i];
    const int n = topo.neighborhood_dim(i);
    require(o.q.rows() == n && o.q.cols() == n, ErrorKind::kConfig, "Q_i has wrong shape");
    check_symmetric(o.q, "Q_i");
    check_symmetric(o.r, "R_i");
    check_symmetric(o.p, "P_i");
    require(lambda_min_sym(o.q) >= -1e-12, ErrorKind::kConfig, "Q_i must be positive semidefinite");
    require(lambda_min_sym(o.r) > 0.0, ErrorKind::kConfig, "R_i must be positive definite");
    require(lambda_min_sym(o.p) > 0.0, ErrorKind::kConfig, "P_i must be positive definite");
  }
}

double stage_cost(const Vec& e, const Vec2& u, const Mat& q, const Mat2& r) {
  return e.dot(q * e) + u.dot(r * u);
}

double horizon_cost(const std::vector<Vec>& e, const std::vector<Vec2>& u, const Vec4& e_terminal, const Mat& q,
                    const Mat2& r, const Mat4& p) {
  require(e.size() == u.size(), ErrorKind::kInvalidArgument, "horizon cost needs one control per state");
  double j = 0.0;
  for (std::size_t t = 0; t < e.size(); ++t) j += stage_cost(e[t], u[t], q, r);
  return j + e_terminal.dot(p * e_terminal);
}

Mat solve_dare(const Mat& a, const Mat& b, const Mat& q, const Mat& r, int max_iter, double tol) {
  const int n = static_cast<int>(a.rows());
  const Mat id = Mat::Identity(n, n);
  Mat ak = a;
  Mat gk = b * r.ldlt().solve(b.transpose());
  Mat hk = q;
  for (int it = 0; it < max_iter; ++it) {
    const Mat w = id + gk * hk;
    Eigen::PartialPivLU<Mat> lu(w);
    const Mat winv_a = lu.solve(ak);
    const Mat winv_g = lu.solve(gk);
    const Mat h_next = hk + ak.transpose() * hk * winv_a;
    const Mat g_next = gk + ak * winv_g * ak.transpose();
    const Mat a_next = ak * winv_a;
    const double delta = (h_next - hk).norm();
    ak = a_next;
    gk = 0.5 * (g_next + g_next.transpose());
    hk = 0.5 * (h_next + h_next.transpose());
    require(hk.allFinite(), ErrorKind::kNumerical, "Riccati iteration diverged (pair not stabilizable)");
    if (delta <= tol * std::max(1.0, hk.norm())) {
      const Mat bt_x = b.transpose() * hk;
      const Mat res = a.transpose() * hk * a - hk + q -
                      a.transpose() * hk * b * (r + bt_x * b).ldlt().solve(bt_x * a);
      require(res.norm() <= 1e-6 * std::max(1.0, hk.norm()), ErrorKind::kNumerical,
              "Riccati iteration converged to a non-stabilizing point");
      return hk;
    }
  }
  fail(ErrorKind::kNumerical, "Riccati iteration did not converge (pair not stabilizable)");
}

Mat solve_dlyap(const Mat& a, const Mat& q) {
  const int n = static_cast<int>(a.rows());
  const Mat at = a.transpose();
  Mat kron(n * n, n * n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) kron.block(i * n, j * n, n, n) = at(i, j) * at;
  }
  const Mat lhs = Mat::Identity(n * n, n * n) - kron;
  const Vec x = lhs.fullPivLu().solve(Eigen::Map<const Vec>(q.data(), n * n));
  Mat out = Eigen::Map<const Mat>(x.data(), n, n);
  return 0.5 * (out + out.transpose());
}

Mat closed_loop_global(const Topology& topo, const std::vector<Linearization>& lin, const std::vector<Mat>& k) {
  std::vector<Mat> rows(topo.size());
  for (int i = 0; i < topo.size(); ++i) rows[i] = lin[i].a + lin[i].b * k[i];
  return assemble_global(topo, rows);
}

StabilizingGains certify_gains(const Topology& topo, const std::vector<Linearization>& lin, std::vector<Mat> k) {
  StabilizingGains g;
  g.k = std::move(k);
  if (topo.size() > kStackedMaxRobots) {
    g.spectral_radius = std::numeric_limits<double>::quiet_NaN();
    return g;
  }
  g.spectral_radius = spectral_radius(closed_loop_global(topo, lin, g.k));
  require(g.spectral_radius < 1.0, ErrorKind::kNumerical,
          "gains do not stabilize the linearized team: spectral radius " + std::to_string(g.spectral_radius));
  return g;
}

StabilizingGains synthesize_gains(const Topology& topo, const std::vector<Linearization>& lin,
                                  const ObjectiveSpec& spec) {
  std::vector<Mat> k(topo.size());
  for (int i = 0; i < topo.size(); ++i) {
    Mat4 q_own = Mat4::Zero();
    for (int l : topo.reverse(i)) {
      const int a = topo.local_index(l, i);
      q_own += spec.robots[l].q.block<4, 4>(4 * a, 4 * a);
    }
    const int o = topo.own_index(i);
    const Mat a_ii = lin[i].a.block<4, 4>(0, 4 * o);
    const Mat& b = lin[i].b;
    const Mat2& r = spec.robots[i].r;
    const Mat x = solve_dare(a_ii, b, q_own, r);
    const Mat k_own = -(r + b.transpose() * x * b).ldlt().solve(b.transpose() * x * a_ii);
    k[i] = Mat::Zero(2, topo.neighborhood_dim(i));
    k[i].block(0, 4 * o, 2, 4) = k_own;
  }
  return certify_gains(topo, lin, std::move(k));
}

Mat closed_loop_weight(const Mat& q, const Mat2& r, const Mat& k) { return q + k.transpose() * r * k; }

TerminalMethod parse_terminal_method(const std::string& s) {
  if (s == "block_lmi") return TerminalMethod::kBlockLmi;
  if (s == "zero_gamma") return TerminalMethod::kZeroGamma;
  if (s == "own_block") return TerminalMethod::kOwnBlock;
  if (s == "local_lyap") return TerminalMethod::kLocalLyap;
  if (s == "state_weight") return TerminalMethod::kStateWeight;
  fail(ErrorKind::kConfig, "unknown terminal method '" + s + "'");
}

std::string to_string(TerminalMethod m) {
  switch (m) {
    case TerminalMethod::kBlockLmi:
      return "block_lmi";
    case TerminalMethod::kZeroGamma:
      return "zero_gamma";
    case TerminalMethod::kOwnBlock:
      return "own_block";
    case TerminalMethod::kLocalLyap:
      return "local_lyap";
    case TerminalMethod::kStateWeight:
      return "state_weight";
  }
  return "unknown";
}

Mat lyapunov_residual(const Mat& f, const Mat4& p, int own, const Mat& qbar, double beta, const Mat& gamma) {
  Mat res = f.transpose() * p * f + beta * qbar - gamma;
  res.block<4, 4>(4 * own, 4 * own) -= p;
  return res;
}

namespace {

Mat lifted_sum(const Topology& topo, const std::vector<Mat>& gamma) {
  const int m = topo.size();
  Mat g = Mat::Zero(4 * m, 4 * m);
  for (int i = 0; i < m; ++i) {
    const auto& l = topo.neighbors(i);
    for (std::size_t a = 0; a < l.size(); ++a) {
      for (std::size_t b = 0; b < l.size(); ++b) g.block<4, 4>(4 * l[a], 4 * l[b]) += gamma[i].block<4, 4>(4 * a, 4 * b);
    }
  }
  return g;
}

/// Projects a symmetric matrix onto {X : X >= floor * I}.
Mat4 project_floor(const Mat4& x, double floor) {
  Eigen::SelfAdjointEigenSolver<Mat4> es(0.5 * (x + x.transpose()));
  Vec4 ev = es.eigenvalues().cwiseMax(floor);
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

/// Minimizes a smoothed lambda_max(F^T P F - P + beta Qbar) over block-diagonal P >= floor * I
/// with Adam steps on each block.
std::vector<Mat4> block_lmi_search(const Topology& topo, const std::vector<Mat>& f, const std::vector<Mat>& qbar,
                                   double beta, const TerminalOptions& opt, int& iterations) {
  const int m = topo.size();
  const Mat fg = assemble_global(topo, f);
  Mat qg = Mat::Zero(4 * m, 4 * m);
  {
    std::vector<Mat> scaled(m);
    for (int i = 0; i < m; ++i) scaled[i] = beta * qbar[i];
    qg = lifted_sum(topo, scaled);
  }
  const double q_floor = std::max(lambda_min_sym(qg), 1e-9);
  const double target = -opt.margin * q_floor;
  std::vector<Mat4> p(m, 50.0 * opt.p_floor * Mat4::Identity());
  std::vector<Mat4> m1(m, Mat4::Zero());
  std::vector<Mat4> m2(m, Mat4::Zero());
  std::vector<Mat4> best = p;
  double best_val = 1e300;
  const double b1 = 0.9;
  const double b2 = 0.999;
  Mat pb = Mat::Zero(4 * m, 4 * m);
  int it = 0;
  for (it = 1; it <= opt.max_iter; ++it) {
    for (int i = 0; i < m; ++i) pb.block<4, 4>(4 * i, 4 * i) = p[i];
    const Mat g = fg.transpose() * pb * fg - pb + qg;
    Eigen::SelfAdjointEigenSolver<Mat> es(g);
    const Vec& w = es.eigenvalues();
    const double top = w(w.size() - 1);
    if (top < best_val) {
      best_val = top;
      best = p;
    }
    if (top <= target) break;
    const double temp = 1.0 / (0.02 * std::abs(top) + 1e-12);
    Vec wt = ((w.array() - top) * temp).exp();
    wt /= wt.sum();
    const Mat& v = es.eigenvectors();
    const Mat fv = fg * v;
    for (int i = 0; i < m; ++i) {
      const auto fvi = fv.middleRows(4 * i, 4);
      const auto vi = v.middleRows(4 * i, 4);
      const Mat4 grad = fvi * wt.asDiagonal() * fvi.transpose() - vi * wt.asDiagonal() * vi.transpose();
      m1[i] = b1 * m1[i] + (1 - b1) * grad;
      m2[i] = b2 * m2[i] + (1 - b2) * grad.cwiseProduct(grad);
      const Mat4 mh = m1[i] / (1 - std::pow(b1, it));
      const Mat4 vh = m2[i] / (1 - std::pow(b2, it));
      const Mat4 stepm = (mh.array() / (vh.array().sqrt() + 1e-8)).matrix();
      p[i] = project_floor(p[i] - opt.step * stepm, opt.p_floor);
    }
  }
  iterations = it;
  return best;
}

Vec lstsq_local_p(const Mat& f, int own, const Mat& qbar, double beta) {
  const int n = static_cast<int>(f.cols());
  // vec(F^T P F) = (F^T kron F^T) vec(P); the lifted term selects the own block.
  Mat lhs = Mat::Zero(n * n, 16);
  for (int a = 0; a < 4; ++a) {
    for (int b = 0; b < 4; ++b) {
      Mat4 basis = Mat4::Zero();
      basis(a, b) = 1.0;
      Mat img = f.transpose() * basis * f;
      img.block<4, 4>(4 * own, 4 * own) -= basis;
      lhs.col(b * 4 + a) = Eigen::Map<const Vec>(img.data(), n * n);
    }
  }
  const Mat rhs_m = -beta * qbar;
  const Vec rhs = Eigen::Map<const Vec>(rhs_m.data(), n * n);
  return lhs.colPivHouseholderQr().solve(rhs);
}

}  // namespace

TerminalPenalty terminal_penalty(const Topology& topo, const std::vector<Mat>& f, const std::vector<Mat>& qbar,
                                 double beta, const TerminalOptions& opt, const std::vector<Mat>* state_weights) {
  const int m = topo.size();
  require(static_cast<int>(f.size()) == m && static_cast<int>(qbar.size()) == m, ErrorKind::kInvalidArgument,
          "terminal penalty needs one F_i and Qbar_i per robot");
  require(beta > 1.0, ErrorKind::kConfig, "beta must exceed 1");
  TerminalPenalty out;
  // The stacked search needs dense eigendecompositions of size 4M, so large teams use the local solve.
  const TerminalMethod method =
      opt.method == TerminalMethod::kBlockLmi && m > kStackedMaxRobots ? TerminalMethod::kLocalLyap : opt.method;
  out.method = method;
  out.p.resize(m);
  out.gamma.resize(m);
  switch (method) {
    case TerminalMethod::kBlockLmi:
      out.p = block_lmi_search(topo, f, qbar, beta, opt, out.iterations);
      break;
    case TerminalMethod::kZeroGamma:
      for (int i = 0; i < m; ++i) {
        const Vec x = lstsq_local_p(f[i], topo.own_index(i), qbar[i], beta);
        Mat4 p = Eigen::Map<const Mat4>(x.data());
        out.p[i] = 0.5 * (p + p.transpose());
      }
      break;
    case TerminalMethod::kOwnBlock:
      for (int i = 0; i < m; ++i) {
        const int o = topo.own_index(i);
        out.p[i] = qbar[i].block<4, 4>(4 * o, 4 * o);
      }
      break;
    case TerminalMethod::kStateWeight:
      require(state_weights && static_cast<int>(state_weights->size()) == m, ErrorKind::kInvalidArgument,
              "the state_weight terminal method needs Q_i for every robot");
      for (int i = 0; i < m; ++i) {
        const int o = topo.own_index(i);
        out.p[i] = (*state_weights)[i].block<4, 4>(4 * o, 4 * o);
      }
      break;
    case TerminalMethod::kLocalLyap:
      for (int i = 0; i < m; ++i) {
        const int o = topo.own_index(i);
        const Mat f_own = f[i].block<4, 4>(0, 4 * o);
        out.p[i] = solve_dlyap(f_own, beta * qbar[i].block<4, 4>(4 * o, 4 * o));
      }
      break;
  }
  double res2 = 0.0;
  bool pd = true;
  for (int i = 0; i < m; ++i) {
    const int o = topo.own_index(i);
    const Mat zero = Mat::Zero(f[i].cols(), f[i].cols());
    if (method == TerminalMethod::kZeroGamma) {
      out.gamma[i] = zero;
    } else {
      out.gamma[i] = lyapunov_residual(f[i], out.p[i], o, qbar[i], beta, zero);
    }
    res2 += lyapunov_residual(f[i], out.p[i], o, qbar[i], beta, out.gamma[i]).squaredNorm();
    pd = pd && lambda_min_sym(out.p[i]) > 0.0;
  }
  out.residual = std::sqrt(res2);
  if (m > kStackedMaxRobots) {
    out.gamma_max_eig = std::numeric_limits<double>::quiet_NaN();
    out.certified = false;
    return out;
  }
  out.gamma_max_eig = lambda_max_sym(lifted_sum(topo, out.gamma));
  const double tol = 1e-9 * std::max(1.0, out.residual);
  out.certified = pd && out.gamma_max_eig <= tol && out.residual <= 1e-8;
  return out;
}

TerminalPenalty terminal_penalty(const Topology& topo, const std::vector<Linearization>& lin,
                                 const StabilizingGains& gains, const ObjectiveSpec& spec,
                                 const TerminalOptions& opt) {
  std::vector<Mat> f(topo.size());
  std::vector<Mat> qbar(topo.size());
  for (int i = 0; i < topo.size(); ++i) {
    f[i] = lin[i].a + lin[i].b * gains.k[i];
    qbar[i] = closed_loop_weight(spec.robots[i].q, spec.robots[i].r, gains.k[i]);
  }
  return terminal_penalty(topo, f, qbar, spec.beta, opt);
}

MarginReport nonlinearity_margin(const LocalModel& model, const Mat& k, const Mat4& p, const Mat& f,
                                 const Mat& qbar, double beta, double radius, double v_r, double omega_r, double dt,
                                 int samples, std::uint64_t seed) {
  MarginReport rep;
  const int n = 4 * model.size();
  double lip = 0.0;
  auto probe = [&](const Vec& e) {
    const double ne = e.norm();
    if (ne <= 0.0) return;
    const Vec2 u = k * e;
    const Vec4 phi = model.step(e, u, v_r, omega_r, dt) - f * e;
    lip = std::max(lip, phi.norm() / ne);
  };
  if (radius > 0.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int s = 0; s < samples; ++s) {
      Vec d(n);
      for (int a = 0; a < n; ++a) d(a) = gauss(rng);
      d.normalize();
      probe(d * radius * std::pow(unif(rng), 1.0 / n));
    }
    // Axis-aligned and pairwise-diagonal grid points, where the trigonometric terms peak.
    for (int a = 0; a < n; ++a) {
      for (double t : {-1.0, -0.5, 0.5, 1.0}) {
        Vec e = Vec::Zero(n);
        e(a) = t * radius;
        probe(e);
        for (int b = a + 1; b < n; ++b) {
          Vec e2 = e;
          e2(b) = t * radius;
          probe(e2 / std::sqrt(2.0));
          e2(b) = -t * radius;
          probe(e2 / std::sqrt(2.0));
        }
      }
    }
  }
  rep.lipschitz = lip;
  rep.lhs = spectral_norm(p) * lip * lip + 2.0 * spectral_norm(p * f) * lip;
  rep.rhs = (beta - 1.0) * lambda_min_sym(qbar);
  rep.margin = rep.rhs - rep.lhs;
  rep.pass = rep.lhs < rep.rhs;
  return rep;
}

double terminal_radius(const LocalModel& model, const Mat& k, const Mat4& p, const Mat& f, const Mat& qbar,
                       double beta, double r0, double v_r, double omega_r, double dt, int samples,
                       std::uint64_t seed) {
  double r = r0;
  for (int it = 0; it < 40; ++it) {
    if (nonlinearity_margin(model, k, p, f, qbar, beta, r, v_r, omega_r, dt, samples, seed).pass) return r;
    r *= 0.5;
  }
  return 0.0;
}

double terminal_descent(const Topology& topo, const std::vector<Mat>& k, const std::vector<Mat4>& p,
                        const std::vector<Mat>& qbar, double beta, const Field& e, double v_r, double omega_r,
                        double dt) {
  double total = 0.0;
  Vec en;
  for (int i = 0; i < topo.size(); ++i) {
    topo.gather(i, e, en);
    const LocalModel lm(topo, i);
    const Vec2 u = k[i] * en;
    const Vec4 ei = e.col(i);
    const Vec4 en_next = lm.step(en, u, v_r, omega_r, dt);
    total += en_next.dot(p[i] * en_next) - ei.dot(p[i] * ei) + beta * en.dot(qbar[i] * en);
  }
  return total;
}

}  // namespace dlpc
