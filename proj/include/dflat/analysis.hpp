#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "dflat/system.hpp"

namespace dflat {

class AnalysisError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// All arrays are indexed by output component in the caller's order.
struct ShiftIndices {
    std::array<int, 2> rho{};
    std::array<int, 2> gamma{};
    std::array<int, 2> R1{};
    std::array<int, 2> R2{};
    int d = 0;
    int d1 = 0;
    int d2 = 0;

    int count() const { return R1[0] + R1[1] + R2[0] + R2[1]; }  // #R
};

// Checked index identities, stated for the ordering (A, B) used by the tower.
struct IndexIdentities {
    bool forward = false;   // r21 - rho1 = r22 - rho2
    bool backward = false;  // r11 - gamma1 = r12 - gamma2
    bool dimension = false; // n = r12 + r22 + gamma1 + rho1 - 1
    bool defect = false;    // d = d1 + d2 = #R - n
    bool all() const { return forward && backward && dimension && defect; }
};

// The system rewritten in the coordinates ubar (inputs) and zetabar (g-values):
//   ubar1 = delta^rho_A phi_A(x,u),  ubar2 = u_kU,
//   zetabar1[-1] = delta^-gamma_A phi_A(x,zeta[-1]),  zetabar2[-1] = zeta_kZ[-1].
struct TransformedSystem {
    int A = 0;
    int B = 1;
    int kU = 1;
    int kZ = 1;
    Expr ubar1_def;     // over (x, u)
    Expr zetabar1_def;  // over (x, zeta[-1])
    Expr gbar1;         // delta(zetabar1_def), over (x, u)
    Substitution Phi_u;     // u_j -> over (x, ubar)
    Substitution Phi_zeta;  // zeta_j[-1] -> over (x, zetabar[-1])
    SystemModel bar;        // states x, inputs ubar1, ubar2, zeta zetabar1[-1], zetabar2[-1]
};

struct Tower {
    ShiftIndices indices;
    IndexIdentities identities;
    TransformedSystem ts;
    // rows[j][s + R1[j]] = y_j[s] for s in [-R1[j], R2[j]], over `variables`.
    std::array<std::vector<Expr>, 2> rows;
    std::vector<Var> variables;  // zetabar1[-d1..-1], x, ubar1[0..d2], ubar2
    int rank = 0;                // generic rank of the tower Jacobian w.r.t. `variables`

    const Expr& at(int j, int s) const { return rows[j][s + indices.R1[j]]; }
    std::vector<Expr> equations() const;  // y_j[s] - row, stacked
    std::vector<Var> y_vars() const;
};

enum class ParameterizationSource { tower_inverted, user_supplied };

struct ParameterizationResult {
    std::vector<Expr> F_x;  // over y shifts
    std::vector<Expr> F_u;
    ParameterizationSource source = ParameterizationSource::tower_inverted;
    double residual = 0.0;  // max |(x,u) - F(y)| over the sample points
    std::optional<double> user_disagreement;
};

enum class FlatKind { linearizing, forward_flat, backward_flat, general };
const char* kind_name(FlatKind k);

struct Classification {
    FlatKind kind = FlatKind::general;
    int rank_Fu_at_R2 = 0;
    int rank_Fx_at_minusR1 = 0;
    int rank_g_of_F = 0;
    bool consistent = true;  // the rank assertion implied by `kind` holds
    std::string message;
};

struct NormalizedInputs {
    std::array<int, 2> rows{};      // f-components used as new inputs v = (f_rows[0], f_rows[1])
    bool identity = false;          // those components are already plain inputs
    Substitution Phi_v;             // u_j -> over (x, v), v written as ubar1, ubar2
    SystemModel system;             // f with u replaced by Phi_v
    std::vector<Expr> F_v;          // shift of F_x rows: structural form of v over y
    bool zero_block_structural = false;
    double zero_block_numeric = 0.0;  // max |d F_v / d y[-R1]| at the sample points
    double F_v_agreement = 0.0;       // max |F_v - f_rows(F_x, F_u)|
};

std::array<int, 2> relative_degrees(const SystemModel& sys, const std::vector<Expr>& phi);
std::array<int, 2> backward_depths(const SystemModel& sys, const std::vector<Expr>& phi);

// Builds the shift tower, trying component orderings (1,2) then (2,1).
Tower build_tower(const SystemModel& sys, const std::vector<Expr>& phi, std::vector<std::string>* diagnostics = nullptr);

// Sample points lifted into the tower's coordinates; they bind x, u, zeta, ubar, zetabar
// and y shifts consistently.
std::vector<Point> tower_points(const SystemModel& sys, const std::vector<Expr>& phi, const Tower& tower,
                                int count = 10, std::uint64_t seed = 1, double radius = 1e-3);

ParameterizationResult invert_tower(const SystemModel& sys, const std::vector<Expr>& phi, const Tower& tower,
                                    const std::vector<Expr>* user_F_x = nullptr,
                                    const std::vector<Expr>* user_F_u = nullptr);

Classification classify(const SystemModel& sys, const std::vector<Expr>& phi, const Tower& tower,
                        const ParameterizationResult& param, double tol_rank = 1e-8);

NormalizedInputs normalize_inputs(const SystemModel& sys, const std::vector<Expr>& phi = {}, const Tower* tower = nullptr,
                                  const ParameterizationResult* param = nullptr);

// Generic rank of d_u phi (the hypothesis of the prelongation construction).
int rank_du_phi(const SystemModel& sys, const std::vector<Expr>& phi);

// Shifts every y leaf by k.
Expr shift_y(const Expr& e, int k);

}  // namespace dflat
