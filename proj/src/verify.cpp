#include "dflat/verify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace dflat {

Point Trajectory::point(const SystemModel& sys, int k) const {
    Point p;
    p.params = sys.params;
    const auto& xs = x_at(k);
    for (int i = 0; i < sys.n(); ++i) p.set(sys.states[i], xs[i]);
    if (k < K) {
        const auto& us = u_at(k);
        for (int j = 0; j < sys.m(); ++j) p.set(sys.inputs[j], us[j]);
    }
    return p;
}

Trajectory simulate(const SystemModel& sys, const std::vector<double>& x_start,
                    const std::vector<std::vector<double>>& u_sequence, int H, int K) {
    if (H < 0 || K < 0) throw SimulationError("negative horizon");
    if (static_cast<int>(x_start.size()) != sys.n()) throw SimulationError("start state has the wrong dimension");
    if (static_cast<int>(u_sequence.size()) != H + K)
        throw SimulationError("input sequence needs " + std::to_string(H + K) + " entries");
    Trajectory t;
    t.H = H;
    t.K = K;
    t.x.push_back(x_start);
    for (int k = -H; k < K; ++k) {
        const auto& u = u_sequence[k + H];
        if (static_cast<int>(u.size()) != sys.m()) throw SimulationError("input has the wrong dimension");
        t.u.push_back(u);
        Point p = t.point(sys, k);
        std::vector<double> next(sys.n());
        try {
            for (int i = 0; i < sys.n(); ++i) next[i] = evaluate(sys.f[i], p);
            if (sys.has_extension()) {
                std::vector<double> z(sys.m());
                for (int j = 0; j < sys.m(); ++j) z[j] = evaluate(sys.g[j], p);
                t.zeta.push_back(std::move(z));
            }
        } catch (const EvalError& e) {
            throw SimulationError("pole at k = " + std::to_string(k) + ": " + e.what());
        }
        t.x.push_back(std::move(next));
    }
    return t;
}

std::pair<int, int> y_shift_range(const std::vector<Expr>& F_x, const std::vector<Expr>& F_u) {
    int lo = 0;
    int hi = 0;
    for (const auto* group : {&F_x, &F_u})
        for (const auto& e : *group)
            for (const auto& v : free_variables(e)) {
                if (v.family != Family::y) throw SimulationError("parameterization depends on " + v.str());
                lo = std::min(lo, v.shift);
                hi = std::max(hi, v.shift);
            }
    return {lo, hi};
}

ResidualReport verify_parameterization(const SystemModel& sys, const std::vector<Expr>& phi,
                                       const std::vector<Expr>& F_x, const std::vector<Expr>& F_u,
                                       const Trajectory& traj, int k_lo, int k_hi, double tol) {
    if (static_cast<int>(F_x.size()) != sys.n() || static_cast<int>(F_u.size()) != sys.m())
        throw SimulationError("parameterization has the wrong number of components");
    auto [lo, hi] = y_shift_range(F_x, F_u);
    if (k_lo + lo < -traj.H || k_hi + hi > traj.K - 1)
        throw SimulationError("trajectory too short for the window [" + std::to_string(k_lo) + ", " +
                              std::to_string(k_hi) + "]");

    // y along the trajectory, for every time the window touches.
    std::vector<std::vector<double>> y;
    for (int k = k_lo + lo; k <= k_hi + hi; ++k) {
        Point p = traj.point(sys, k);
        std::vector<double> row;
        try {
            for (const auto& e : phi) row.push_back(evaluate(e, p));
        } catch (const EvalError& e) {
            throw SimulationError("output has a pole at k = " + std::to_string(k) + ": " + e.what());
        }
        y.push_back(std::move(row));
    }

    ResidualReport rep;
    rep.tolerance = tol;
    double worst = -1.0;
    for (int k = k_lo; k <= k_hi; ++k) {
        Point p;
        p.params = sys.params;
        for (int s = lo; s <= hi; ++s)
            for (std::size_t j = 0; j < phi.size(); ++j)
                p.set(yv(static_cast<int>(j) + 1, s), y[k + s - (k_lo + lo)][j]);
        auto check = [&](const std::vector<Expr>& F, const std::vector<double>& truth, const char* name,
                         double& max_res) {
            for (std::size_t i = 0; i < F.size(); ++i) {
                double r;
                try {
                    r = std::abs(evaluate(F[i], p) - truth[i]);
                } catch (const EvalError&) {
                    r = std::numeric_limits<double>::infinity();
                }
                if (std::isnan(r)) r = std::numeric_limits<double>::infinity();
                max_res = std::max(max_res, r);
                if (r > worst) {
                    worst = r;
                    rep.worst_k = k;
                    rep.worst_component = name + std::to_string(i + 1);
                }
            }
        };
        check(F_x, traj.x_at(k), "x", rep.max_residual_x);
        check(F_u, traj.u_at(k), "u", rep.max_residual_u);
        ++rep.checked;
    }
    rep.pass = rep.checked > 0 && rep.max_residual_x <= tol && rep.max_residual_u <= tol;
    return rep;
}

TrialsReport verify_trials(const SystemFile& file, const std::vector<Expr>& phi, const std::vector<Expr>& F_x,
                           const std::vector<Expr>& F_u, const TrialOptions& opt) {
    const auto& sys = file.model;
    auto [lo, hi] = y_shift_range(F_x, F_u);
    int H = -lo;
    int K = opt.steps;
    if (K - 1 - hi < 0) throw SimulationError("--steps must exceed the largest forward shift " + std::to_string(hi));
    Point eq = sys.equilibrium_point();
    std::vector<double> x_eq;
    std::vector<double> u_eq;
    for (const auto& x : sys.states) x_eq.push_back(eq.has(x) ? eq.at(x) : 0.0);
    for (const auto& u : sys.inputs) u_eq.push_back(eq.has(u) ? eq.at(u) : 0.0);

    TrialsReport out;
    out.worst.tolerance = opt.tol;
    auto absorb = [&](const ResidualReport& r, int trial) {
        double a = std::max(r.max_residual_x, r.max_residual_u);
        double b = std::max(out.worst.max_residual_x, out.worst.max_residual_u);
        if (out.worst_trial < 0 || a > b) {
            out.worst = r;
            out.worst_trial = trial;
        }
    };

    if (opt.trials == 0) {
        auto traj = simulate(sys, x_eq, std::vector<std::vector<double>>(H + K, u_eq), H, K);
        auto r = verify_parameterization(sys, phi, F_x, F_u, traj, 0, K - 1 - hi, opt.tol);
        absorb(r, 0);
        out.pass = r.pass;
        return out;
    }

    std::mt19937_64 rng(opt.seed);
    std::uniform_real_distribution<double> spread(-opt.state_radius, opt.state_radius);
    std::vector<std::uniform_real_distribution<double>> boxes;
    for (const auto& u : sys.inputs) {
        auto [a, b] = file.box(u);
        boxes.emplace_back(a, b);
    }
    bool all = true;
    for (int t = 0; t < opt.trials; ++t) {
        for (int attempt = 0;; ++attempt) {
            std::vector<double> x0 = x_eq;
            for (auto& v : x0) v += spread(rng);
            std::vector<std::vector<double>> us(H + K, std::vector<double>(sys.m()));
            for (auto& u : us)
                for (int j = 0; j < sys.m(); ++j) u[j] = boxes[j](rng);
            try {
                auto traj = simulate(sys, x0, us, H, K);
                auto r = verify_parameterization(sys, phi, F_x, F_u, traj, 0, K - 1 - hi, opt.tol);
                if (!std::isfinite(std::max(r.max_residual_x, r.max_residual_u)))
                    throw SimulationError("parameterization has a pole on the trajectory");
                absorb(r, t);
                all = all && r.pass;
                break;
            } catch (const SimulationError& e) {
                if (attempt + 1 > opt.max_resamples)
                    throw SimulationError("trial " + std::to_string(t) + ": no pole-free trajectory after " +
                                          std::to_string(opt.max_resamples) + " resamples (" + e.what() + ")");
                ++out.resamples;
            }
        }
        ++out.trials;
    }
    out.pass = all;
    return out;
}

}  // namespace dflat
