#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "dflat/analysis.hpp"
#include "dflat/sysfile.hpp"

namespace dflat {

class ExtensionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class ExtensionKind { prolongation, prelongation, combined };
const char* extension_name(ExtensionKind k);

// Symbolic equilibrium values of the base states and inputs.
using EquilibriumMap = std::vector<std::pair<Var, Expr>>;

// The base system extended by a d1-fold chain zetabar1[-d1..-1] in front of x and a
// d2-fold chain ubar1[0..d2-1] behind it. `model` is a complete SystemModel (extension
// map and inverse included) so it can be shifted and re-analyzed like any other.
struct ExtendedSystem {
    ExtensionKind kind = ExtensionKind::combined;
    int d1 = 0;
    int d2 = 0;
    bool zeta_transform = false;   // zetabar coordinates in use
    bool input_transform = false;  // ubar coordinates in use
    TransformedSystem ts;
    SystemModel base;
    SystemModel model;
    std::vector<Expr> output;  // phi in the extended coordinates
    EquilibriumMap equilibrium;

    int n_base() const { return model.n() - d1 - d2; }
};

// Assembles the extension for explicit chain lengths; build_* below pick them from the
// tower and check the preconditions. Lengths shorter than the tower's are allowed (the
// result is still a valid system, but not linearizable).
ExtendedSystem assemble_extension(const SystemModel& sys, const std::vector<Expr>& phi, const Tower& tower, int d1,
                                  int d2, bool zeta_transform, bool input_transform,
                                  const EquilibriumMap& base_equilibrium = {});

ExtendedSystem build_prolongation(const SystemModel& sys, const std::vector<Expr>& phi, const Tower& tower,
                                  FlatKind kind, const EquilibriumMap& base_equilibrium = {});
ExtendedSystem build_prelongation(const SystemModel& sys, const std::vector<Expr>& phi, const Tower& tower,
                                  FlatKind kind, const EquilibriumMap& base_equilibrium = {});
ExtendedSystem build_combined(const SystemModel& sys, const std::vector<Expr>& phi, const Tower& tower,
                              const EquilibriumMap& base_equilibrium = {});

// The extension prescribed for a classification: prolongation for forward-flat,
// prelongation for backward-flat (combined when rank d_u phi < m), combined otherwise.
ExtendedSystem build_for(const SystemModel& sys, const std::vector<Expr>& phi, const Tower& tower, FlatKind kind,
                         const EquilibriumMap& base_equilibrium = {}, std::vector<std::string>* diagnostics = nullptr);

struct Certificate {
    bool square = false;
    int rank = 0;  // minimum over the perturbed points
    int required = 0;
    int points_checked = 0;     // perturbed points that evaluated
    int perturbed = 0;          // perturbed points drawn
    int equilibrium_rank = -1;  // at the evaluation point itself, -1 on a pole
    std::array<int, 2> R1{};
    std::array<int, 2> R2{};
    std::array<std::vector<Expr>, 2> rows;  // y_j[s] over the extended state and input, s in [-R1, R2]
    std::vector<Var> variables;             // extended states then inputs
    // Generic certificate: square, and full rank at every perturbed point.
    bool pass() const { return square && points_checked == perturbed && perturbed > 0 && rank == required; }
    bool regular_at_point() const { return equilibrium_rank == required; }
};

// Point of the extended system above a point of the base system: ubar1[k] is taken along
// the trajectory with the input held constant, zetabar1[-k] with zeta held at g(x,u). At
// an equilibrium this is the constant trajectory.
Point extended_point(const ExtendedSystem& ext, const Point& base);

// Re-derives the output tower on the extended coordinates and checks that it is square
// and of full rank at `perturbed` points around the evaluation point; the rank at the
// point itself is reported separately. The evaluation point defaults to the extended
// equilibrium; `base_point` (binding base states and inputs) moves it.
Certificate certify_linearizing(const ExtendedSystem& ext, const std::optional<Point>& base_point = std::nullopt,
                                double tol_rank = 1e-8, int perturbed = 10);

// Inverts a certified tower: extended states and inputs as functions of y shifts.
ParameterizationResult invert_certified(const ExtendedSystem& ext, const Certificate& cert);

// The extended system as a system file, with parameters and chart inherited from `base`.
SystemFile extended_file(const SystemFile& base, const ExtendedSystem& ext);

EquilibriumMap equilibrium_map(const SystemFile& file);

}  // namespace dflat
