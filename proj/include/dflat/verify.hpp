#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "dflat/analysis.hpp"
#include "dflat/sysfile.hpp"

namespace dflat {

class SimulationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Solution sequences for k = -H..K. x has H+K+1 entries, u and zeta H+K (up to K-1), and
// the backward segment comes from the same forward recursion started at k = -H.
struct Trajectory {
    int H = 0;
    int K = 0;
    std::vector<std::vector<double>> x;
    std::vector<std::vector<double>> u;
    std::vector<std::vector<double>> zeta;

    const std::vector<double>& x_at(int k) const { return x.at(k + H); }
    const std::vector<double>& u_at(int k) const { return u.at(k + H); }
    // Binds states and inputs at time k (and the parameters of `sys`).
    Point point(const SystemModel& sys, int k) const;
};

Trajectory simulate(const SystemModel& sys, const std::vector<double>& x_start,
                    const std::vector<std::vector<double>>& u_sequence, int H, int K);

struct ResidualReport {
    double max_residual_x = 0.0;
    double max_residual_u = 0.0;
    int worst_k = 0;
    std::string worst_component;  // e.g. "x3" or "u1"
    double tolerance = 1e-8;
    int checked = 0;              // time steps checked
    bool pass = false;
};

// Smallest and largest y shift used by F.
std::pair<int, int> y_shift_range(const std::vector<Expr>& F_x, const std::vector<Expr>& F_u);

// Checks |x(k) - F_x(y-shifts)| and |u(k) - F_u(y-shifts)| for k in [k_lo, k_hi], with
// y(k') = phi(x(k'), u(k')) from the trajectory. Throws SimulationError when the window
// needs y outside the trajectory.
ResidualReport verify_parameterization(const SystemModel& sys, const std::vector<Expr>& phi,
                                       const std::vector<Expr>& F_x, const std::vector<Expr>& F_u,
                                       const Trajectory& traj, int k_lo, int k_hi, double tol = 1e-8);

struct TrialOptions {
    int steps = 30;
    int trials = 5;
    std::uint64_t seed = 1;
    double tol = 1e-8;
    double state_radius = 0.1;  // initial state spread around the equilibrium
    int max_resamples = 10;
};

struct TrialsReport {
    ResidualReport worst;
    int trials = 0;
    int resamples = 0;
    int worst_trial = -1;
    bool pass = false;
};

// Random trajectories with inputs drawn from the file's chart; trials = 0 checks the
// constant trajectory at the equilibrium. A trajectory that hits a pole is redrawn up to
// max_resamples times, after which SimulationError is thrown.
TrialsReport verify_trials(const SystemFile& file, const std::vector<Expr>& phi, const std::vector<Expr>& F_x,
                           const std::vector<Expr>& F_u, const TrialOptions& opt);

}  // namespace dflat
