#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "dflat/expr.hpp"

namespace dflat {

class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

enum class ExtensionSource { user_supplied, auto_selected };

// Per-model memo for the shift operators. Copies start empty so a copied and then
// edited model never sees stale entries.
class ShiftCache {
public:
    ShiftCache() = default;
    ShiftCache(const ShiftCache&) {}
    ShiftCache& operator=(const ShiftCache&) {
        std::lock_guard lock(mu_);
        forward_.clear();
        backward_.clear();
        return *this;
    }

    std::optional<Expr> find(bool forward, const Expr& e) const;
    void store(bool forward, const Expr& e, const Expr& image);

private:
    mutable std::mutex mu_;
    std::unordered_map<Expr, Expr, ExprHash> forward_;
    std::unordered_map<Expr, Expr, ExprHash> backward_;
};

// x+ = f(x,u) with extension map (f,g) and its inverse psi.
//
// The model is coordinate-generic so that extended systems (whose states include chain
// variables such as ubar1[1] or zetabar1[-2]) are models too. `inputs` are the input
// variables at their base shift; the shift space also contains every higher shift of
// them. `zeta` are the variables standing for g one step back; the shift space also
// contains every lower shift of them. psi is expressed over (states, zeta).
struct SystemModel {
    std::vector<Var> states;
    std::vector<Var> inputs;
    std::vector<Var> zeta;
    std::vector<Expr> f;
    std::vector<Expr> g;
    std::vector<Expr> psi_x;
    std::vector<Expr> psi_u;
    std::map<std::string, double> params;
    Point equilibrium;  // binds states and inputs
    ExtensionSource g_source = ExtensionSource::user_supplied;
    std::vector<std::string> selected_coordinates;
    int x_components = 0;  // highest x index usable in expressions

    // Plain coordinates x1..xn, u1..um, zeta1[-1]..zetam[-1].
    static SystemModel plain(int n, int m);

    int n() const { return static_cast<int>(states.size()); }
    int m() const { return static_cast<int>(inputs.size()); }
    bool has_extension() const { return !g.empty(); }
    bool has_inverse() const { return !psi_x.empty(); }
    bool is_plain() const;
    // The same system in plain coordinates; `to_original` receives the renaming back.
    SystemModel to_plain(Substitution* to_original = nullptr) const;
    Dimensions dims() const;

    // Forward shift rule: state -> f, input shift s -> s+1, zeta at its base -> g,
    // deeper zeta shift s -> s+1.
    Expr forward_shift(const Expr& e, int k = 1) const;
    // Backward shift rule: state -> psi_x, input at its base -> psi_u, higher input
    // shift s -> s-1, zeta shift s -> s-1.
    Expr backward_shift(const Expr& e, int k = 1) const;

    int state_index(const Var& v) const;
    int input_index(const Var& v) const;  // only the base shift
    int zeta_index(const Var& v) const;   // only the base shift

    // Equilibrium binding plus parameters, ready for evaluation.
    Point equilibrium_point() const;

    // Equilibrium plus `count` points perturbed uniformly within `radius`. Each point binds
    // states, inputs up to `depth` forward shifts and zeta down to `depth` backward
    // shifts, so that any expression in the shift space of bounded order evaluates.
    std::vector<Point> sample_points(int count, double radius = 1e-3, std::uint64_t seed = 1,
                                     int depth = -1) const;

    // Largest shift order any analysis may need.
    int shift_cap() const { return 2 * (n() + m()); }

private:
    Expr shift_once(const Expr& e, bool forward) const;
    mutable ShiftCache cache_;
};

struct RankCheck {
    int rank = 0;           // at the equilibrium, or generic when the equilibrium is a pole
    int required = 0;
    int perturbed_min = 0;  // over the perturbed points
    int perturbed_max = 0;
    bool equilibrium_pole = false;
    bool pass() const { return rank == required; }
};

struct ValidationReport {
    RankCheck inputs;     // rank d_u f = m
    RankCheck submersive; // rank d_(x,u) f = n
    RankCheck extension;  // rank d_(x,u) (f,g) = n+m
    double equilibrium_residual = 0.0;
    std::optional<double> inverse_residual;
    std::string inverse_check;  // "symbolic", "numeric" or empty
    bool pass = false;
    std::vector<std::string> messages;
};

// Checks that every leaf of f, g, psi lies in the allowed coordinates; throws DimensionError.
void check_dimensions(const SystemModel& sys);

ValidationReport validate(const SystemModel& sys, double tol_rank = 1e-8);

struct ExtensionChoice {
    ExtensionSource source = ExtensionSource::auto_selected;
    std::vector<Expr> g;
    std::vector<std::string> selected_coordinates;
};

// Greedy selection of m coordinates from (states, inputs) in that order, each raising
// the rank of the stacked Jacobian at the equilibrium; throws std::runtime_error if
// rank n+m is never reached.
ExtensionChoice choose_extension(const SystemModel& sys, double tol_rank = 1e-8);

struct InverseResult {
    std::vector<Expr> psi_x;
    std::vector<Expr> psi_u;
    std::string check;  // "symbolic" or "numeric"
    double residual = 0.0;
};

// Inverts (f,g) with the restricted solver and checks the composition; throws
// std::runtime_error on solver or verification failure.
InverseResult invert_extension(const SystemModel& sys);

// Max composition residual |psi(f(x,u), g(x,u)) - (x,u)| over the points that evaluate.
double inverse_residual(const SystemModel& sys, std::span<const Point> points);

}  // namespace dflat
