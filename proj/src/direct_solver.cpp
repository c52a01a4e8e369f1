#include "mhf/direct_solver.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "mhf/choquet.hpp"

namespace mhf {

namespace {

using Vec = std::vector<double>;
using Row3 = std::array<double, 3>;

Vec prefix(const Vec& delta) {
    Vec g(delta.size() + 1, 0.0);
    for (std::size_t k = 0; k < delta.size(); ++k) g[k + 1] = g[k] + delta[k];
    return g;
}

// Objective, increment gradient and the nodal Hessian
//   H_g = diag(dg) + U S U^T,  U = [v, c, w]
// at one point. The Hessian in increments is L^T H_g L with L the prefix-sum map.
struct State {
    Vec delta, g, grad;
    double J = 0.0;
    double A = 0.0;
    Vec dg;
    std::vector<Row3> U;
    Eigen::Matrix3d S;
    Vec suf_dg;               // suf_dg[i] = sum_{l >= i} dg_l
    std::vector<Row3> suf_U;  // same for U
};

State evaluate(const Discretization& D, Vec delta) {
    State st;
    const int n = D.n;
    st.delta = std::move(delta);
    st.g = prefix(st.delta);
    const Vec& g = st.g;
    const double o = D.ol(g);
    const double c0 = 2.0 * D.sigma * D.integral(g) + D.base.theta_eff;

    Vec gg(n + 1);
    st.dg.resize(n + 1);
    st.U.resize(n + 1);
    double A = 0.0, C = 0.0, J = 0.0;
    for (int i = 0; i <= n; ++i) {
        const double x = o - g[i];
        const double a = D.mt[i] * D.u.deriv(x);
        const double c = D.mt[i] * D.u.second(x);
        A += a;
        C += c;
        J += D.mt[i] * D.u.value(x);
        st.U[i] = {D.w[i] * (c0 - 2.0 * D.sigma * (g[i] - D.q[i])), c, D.w[i]};
        gg[i] = -a;
    }
    st.A = A;
    st.J = J;
    for (int i = 0; i <= n; ++i) {
        gg[i] += A * st.U[i][0];
        st.dg[i] = st.U[i][1] - 2.0 * D.sigma * A * D.w[i];
    }
    st.grad.assign(n, 0.0);
    double acc = 0.0;
    for (int i = n; i >= 1; --i) {
        acc += gg[i];
        st.grad[i - 1] = acc;
    }
    st.S << C, -1.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, 2.0 * D.sigma * A;

    st.suf_dg.assign(n + 2, 0.0);
    st.suf_U.assign(n + 2, Row3{0.0, 0.0, 0.0});
    for (int i = n; i >= 0; --i) {
        st.suf_dg[i] = st.suf_dg[i + 1] + st.dg[i];
        for (int c = 0; c < 3; ++c) st.suf_U[i][c] = st.suf_U[i + 1][c] + st.U[i][c];
    }
    return st;
}

// H_delta s
Vec hess_times(const State& st, const Vec& s) {
    const int n = static_cast<int>(s.size());
    const Vec x = prefix(s);
    Eigen::Vector3d t = Eigen::Vector3d::Zero();
    for (int i = 0; i <= n; ++i)
        for (int c = 0; c < 3; ++c) t[c] += st.U[i][c] * x[i];
    const Eigen::Vector3d st3 = st.S * t;
    Vec out(n);
    double acc = 0.0;
    for (int i = n; i >= 1; --i) {
        acc += st.dg[i] * x[i] + st.U[i][0] * st3[0] + st.U[i][1] * st3[1] + st.U[i][2] * st3[2];
        out[i - 1] = acc;
    }
    return out;
}

Vec hess_diag(const State& st) {
    const int n = static_cast<int>(st.grad.size());
    Vec h(n);
    for (int k = 0; k < n; ++k) {
        const Row3& p = st.suf_U[k + 1];
        const Eigen::Vector3d pv(p[0], p[1], p[2]);
        h[k] = st.suf_dg[k + 1] + pv.dot(st.S * pv);
    }
    return h;
}

// Newton step on the free cells with all other increments held: solves
// H_FF x = -rhs_F in O(n). H_FF = T^T diag(Dt) T + P S P^T, where T is the
// upper-triangular ones matrix over the free cells; the low-rank part is
// handled by Woodbury without inverting S (S may be singular).
Vec newton_free(const State& st, const std::vector<char>& free, const Vec& rhs) {
    const int n = static_cast<int>(free.size());
    std::vector<int> ks;
    for (int k = 0; k < n; ++k)
        if (free[k]) ks.push_back(k);
    Vec out(n, 0.0);
    const int m = static_cast<int>(ks.size());
    if (m == 0) return out;

    Vec dt(m);
    for (int j = 0; j < m; ++j) {
        const int end = j + 1 < m ? ks[j + 1] : n;
        dt[j] = st.suf_dg[ks[j] + 1] - st.suf_dg[end + 1];
    }
    auto binv = [&](Eigen::Ref<Eigen::VectorXd> r) {
        for (int j = 0; j < m; ++j) r[j] = (r[j] - (j + 1 < m ? r[j + 1] : 0.0)) / dt[j];
        for (int j = m - 1; j >= 1; --j) r[j] -= r[j - 1];
    };

    Eigen::VectorXd r(m);
    Eigen::MatrixXd P(m, 3);
    for (int j = 0; j < m; ++j) {
        r[j] = -rhs[ks[j]];
        for (int c = 0; c < 3; ++c) P(j, c) = st.suf_U[ks[j] + 1][c];
    }
    Eigen::MatrixXd BP = P;
    binv(r);
    for (int c = 0; c < 3; ++c) binv(BP.col(c));
    const Eigen::Matrix3d M = Eigen::Matrix3d::Identity() + P.transpose() * BP * st.S;
    const Eigen::Vector3d y = M.fullPivLu().solve(P.transpose() * r);
    const Eigen::VectorXd x = r - BP * (st.S * y);
    for (int j = 0; j < m; ++j) out[ks[j]] = x[j];
    return out;
}

double stationarity(const State& st, const Vec& b) {
    double s = 0.0;
    for (std::size_t k = 0; k < b.size(); ++k) {
        const double gk = st.grad[k];
        if (st.delta[k] <= 0.0 && gk < 0.0) continue;
        if (st.delta[k] >= b[k] && gk > 0.0) continue;
        if (b[k] <= 0.0) continue;
        s = std::max(s, std::abs(gk));
    }
    return s / st.A;
}

Vec clip_step(const Vec& d, const Vec& s, double al, const Vec& b) {
    Vec out(d.size());
    for (std::size_t k = 0; k < d.size(); ++k) out[k] = std::clamp(d[k] + al * s[k], 0.0, b[k]);
    return out;
}

struct Step {
    Vec delta;
    double J;
    bool moved;
};

// Projected Newton with an epsilon-active set and diagonal scaling on the
// active part; Armijo along the projection arc. Slow but always ascends.
Step arc_step(const Discretization& D, const State& st) {
    const int n = D.n;
    const Vec& b = D.b;
    const Vec hd = hess_diag(st);
    Vec cc(n);
    double gap = 0.0, bmax = 0.0;
    for (int k = 0; k < n; ++k) {
        cc[k] = 1.0 / std::max(std::abs(hd[k]), std::numeric_limits<double>::min());
        gap = std::max(gap, std::abs(std::clamp(st.delta[k] + cc[k] * st.grad[k], 0.0, b[k]) - st.delta[k]));
        bmax = std::max(bmax, b[k]);
    }
    const double eps = std::min(1e-3 * bmax, gap);
    std::vector<char> free(n);
    Vec s(n, 0.0);
    for (int k = 0; k < n; ++k) {
        const bool act = (st.delta[k] <= eps && st.grad[k] < 0.0) ||
                         (st.delta[k] >= b[k] - eps && st.grad[k] > 0.0) || b[k] <= 0.0;
        free[k] = !act;
        if (act) s[k] = cc[k] * st.grad[k];
    }
    const Vec sf = newton_free(st, free, st.grad);
    for (int k = 0; k < n; ++k)
        if (free[k]) s[k] = sf[k];

    for (double al = 1.0; al >= 1e-14; al *= 0.5) {
        Vec dn = clip_step(st.delta, s, al, b);
        const double Jn = D.objective(prefix(dn));
        double pred = 0.0;
        for (int k = 0; k < n; ++k)
            pred += free[k] ? al * st.grad[k] * s[k] : st.grad[k] * (dn[k] - st.delta[k]);
        if (Jn - st.J >= 1e-4 * pred) return {std::move(dn), Jn, true};
    }
    return {st.delta, st.J, false};
}

// Armijo search along the projection of delta + al * s onto the boxes. Once the
// predicted gain drops below what J can resolve, concavity gives a value-free
// test instead: J(new) >= J(old) + grad(new) . (new - old).
Step projected_search(const Discretization& D, const State& st, const Vec& s, double al_min) {
    const Vec& b = D.b;
    const double noise = 1e-11 * std::max(1.0, std::abs(st.J));
    for (double al = 1.0; al >= al_min; al *= 0.5) {
        Vec dn = clip_step(st.delta, s, al, b);
        double pred = 0.0;
        for (std::size_t k = 0; k < b.size(); ++k) pred += st.grad[k] * (dn[k] - st.delta[k]);
        if (!(pred > 0.0)) {
            if (al == 1.0 && pred == 0.0) break;  // nothing can move
            continue;
        }
        const double Jn = D.objective(prefix(dn));
        if (Jn - st.J >= 1e-4 * pred) return {std::move(dn), Jn, true};
        if (pred < noise) {
            const State nx = evaluate(D, dn);
            double slope = 0.0;
            for (std::size_t k = 0; k < b.size(); ++k) slope += nx.grad[k] * (dn[k] - st.delta[k]);
            if (slope >= 0.0) return {std::move(dn), std::max(Jn, st.J), true};
        }
    }
    return {st.delta, st.J, false};
}

std::vector<char> face_of(const State& st, const Vec& b) {
    std::vector<char> free(b.size());
    for (std::size_t k = 0; k < b.size(); ++k)
        free[k] = !((st.delta[k] <= 0.0 && st.grad[k] <= 0.0) || (st.delta[k] >= b[k] && st.grad[k] >= 0.0));
    return free;
}

// Newton on the cells that are not held at a bound by their gradient. With
// `interior`, only a full step that stays inside every box is tried; otherwise
// the step is projected onto the boxes.
Step face_newton(const Discretization& D, const State& st, bool interior) {
    const int n = D.n;
    const Vec& b = D.b;
    const std::vector<char> free = face_of(st, b);
    if (std::none_of(free.begin(), free.end(), [](char f) { return f != 0; })) return {st.delta, st.J, false};
    const Vec s = newton_free(st, free, st.grad);
    if (interior) {
        for (int k = 0; k < n; ++k)
            if (free[k] && (st.delta[k] + s[k] < 0.0 || st.delta[k] + s[k] > b[k])) return {st.delta, st.J, false};
        return projected_search(D, st, s, 1.0);
    }
    return projected_search(D, st, s, 1e-6);
}

// The face Newton direction cut at the first box it leaves; that cell joins the active set.
Step truncated_newton(const Discretization& D, const State& st) {
    const int n = D.n;
    const Vec& b = D.b;
    const std::vector<char> free = face_of(st, b);
    const Vec s = newton_free(st, free, st.grad);
    double al = 1.0;
    int hit = -1;
    for (int k = 0; k < n; ++k) {
        if (!free[k] || s[k] == 0.0) continue;
        const double room = s[k] > 0.0 ? (b[k] - st.delta[k]) / s[k] : -st.delta[k] / s[k];
        if (room < al) {
            al = room;
            hit = k;
        }
    }
    if (hit < 0 || !(al > 0.0)) return {st.delta, st.J, false};
    Vec dn = clip_step(st.delta, s, al, b);
    dn[hit] = s[hit] > 0.0 ? b[hit] : 0.0;
    double pred = 0.0;
    for (int k = 0; k < n; ++k) pred += st.grad[k] * (dn[k] - st.delta[k]);
    if (!(pred > 0.0)) return {st.delta, st.J, false};
    const double Jn = D.objective(prefix(dn));
    if (Jn - st.J >= 1e-4 * pred) return {std::move(dn), Jn, true};
    return {st.delta, st.J, false};
}

// A full interior Newton step on the current face first. When that fails, two
// candidates compete: the Newton step cut at the first bound, and a diagonally
// scaled projected gradient step (in the spirit of More-Toraldo) followed by
// Newton on the face it lands on.
Step newton_iteration(const Discretization& D, const State& st) {
    const int n = D.n;
    const Step first = face_newton(D, st, true);
    if (first.moved) return first;

    const Step cut = truncated_newton(D, st);

    const Vec hd = hess_diag(st);
    Vec d(n);
    for (int k = 0; k < n; ++k) d[k] = st.grad[k] / std::max(std::abs(hd[k]), std::numeric_limits<double>::min());
    Step best = projected_search(D, st, d, 1e-10);
    if (best.moved) {
        const State mid = evaluate(D, best.delta);
        Step second = face_newton(D, mid, false);
        if (second.moved) best = std::move(second);
    }
    if (cut.moved && (!best.moved || cut.J > best.J)) return cut;
    return best.moved ? best : arc_step(D, st);
}

double curvature_estimate(const State& st) {
    const int n = static_cast<int>(st.grad.size());
    Vec x(n, 1.0 / std::sqrt(static_cast<double>(n)));
    double L = 0.0;
    for (int it = 0; it < 60; ++it) {
        Vec y = hess_times(st, x);
        double nrm = 0.0;
        for (double v : y) nrm += v * v;
        nrm = std::sqrt(nrm);
        if (!(nrm > 0.0)) break;
        L = nrm;
        for (int k = 0; k < n; ++k) x[k] = -y[k] / nrm;
    }
    return L;
}

Step gradient_iteration(const Discretization& D, const State& st, double step0) {
    const Vec& b = D.b;
    for (double al = step0; al > step0 * 1e-20; al *= 0.5) {
        Vec dn = clip_step(st.delta, st.grad, al, b);
        const double Jn = D.objective(prefix(dn));
        double pred = 0.0;
        for (std::size_t k = 0; k < b.size(); ++k) pred += st.grad[k] * (dn[k] - st.delta[k]);
        if (Jn - st.J >= 1e-4 * pred) return {std::move(dn), Jn, pred > 0.0};
    }
    return {st.delta, st.J, false};
}

}  // namespace

DirectResult solve_direct(const Bundle& bundle, const DirectConfig& cfg) {
    validate_bundle(bundle);
    const Discretization D(bundle);
    const int n = D.n;

    Vec delta(n);
    if (!cfg.start.empty()) {
        if (static_cast<int>(cfg.start.size()) != n + 1) throw ModelError("start retention does not match grid");
        for (int k = 0; k < n; ++k) delta[k] = std::clamp(cfg.start[k + 1] - cfg.start[k], 0.0, D.b[k]);
    } else {
        for (int k = 0; k < n; ++k) delta[k] = 0.5 * D.b[k];
    }

    State st = evaluate(D, std::move(delta));
    if (cfg.on_iterate) cfg.on_iterate(0, st.g);

    double step0 = 0.0;
    if (cfg.method == DirectConfig::Method::ProjectedGradient) {
        const double L = curvature_estimate(st);
        step0 = L > 0.0 ? 1.0 / L : 1.0;
    }

    DirectResult res;
    double stat = stationarity(st, D.b);
    int stall = 0, it = 0;
    for (; it < cfg.max_iters; ++it) {
        if (stat < cfg.target) break;
        const Step step = cfg.method == DirectConfig::Method::ProjectedNewton ? newton_iteration(D, st)
                                                                               : gradient_iteration(D, st, step0);
        const double gain = step.J - st.J;
        stall = gain <= cfg.tol_obj * std::abs(st.J) ? stall + 1 : 0;
        if (step.moved) {
            st = evaluate(D, step.delta);
            stat = stationarity(st, D.b);
            if (cfg.on_iterate) cfg.on_iterate(it + 1, st.g);
        }
        if (!step.moved || stall >= cfg.stall_iters) {
            ++it;
            break;
        }
    }
    res.g = st.g;
    res.objective = st.J;
    res.stationarity = stat;
    res.iterations = it;
    res.converged = stat <= cfg.tol_grad;
    res.clamped = D.clamped(st.g);
    return res;
}

std::vector<double> cell_gap(const std::vector<double>& g, const Bundle& bundle) {
    const Discretization D(bundle);
    if (static_cast<int>(g.size()) != D.n + 1) throw ModelError("cell_gap: array does not match grid");
    const double o = D.ol(g);
    const Vec pp = D.psi_prime(g);
    double A = 0.0;
    Vec a(D.n + 1);
    for (int i = 0; i <= D.n; ++i) {
        a[i] = D.mt[i] * D.u.deriv(o - g[i]);
        A += a[i];
    }
    Vec gap(D.n);
    double acc = 0.0;
    for (int i = D.n; i >= 1; --i) {
        acc += a[i] / A - D.w[i] * pp[i];
        gap[i - 1] = acc;
    }
    return gap;
}

KktReport kkt_residual(const std::vector<double>& g, const Bundle& bundle, double tol) {
    KktReport r;
    r.gap = cell_gap(g, bundle);
    const LossModel& loss = bundle.loss;
    const double dp = loss.grid.dp();
    const int n = loss.grid.n;
    r.violation.assign(n, 0.0);
    for (int k = 0; k < n; ++k) {
        const double slope = (g[k + 1] - g[k]) / dp;
        double v = 0.0;
        if (r.gap[k] > tol) v = std::max(0.0, slope);               // should be flat
        else if (r.gap[k] < -tol) v = std::max(0.0, loss.h[k] - slope);  // should follow the loss
        r.violation[k] = v;
        if (v > r.max_violation) {
            r.max_violation = v;
            r.worst_cell = k;
        }
    }
    return r;
}

}  // namespace mhf
