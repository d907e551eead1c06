#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dflat/extension.hpp"
#include "dflat/verify.hpp"
#include "json.hpp"

namespace dflat {

struct Tolerances {
    double rank = 1e-8;
    double verify = 1e-8;
};

// A system file carried through validation, tower, parameterization and classification.
// Files whose coordinates include chain variables are analyzed in their plain form; the
// results (tower rows, F) are then in plain coordinates and `renamed` is set.
struct FileAnalysis {
    SystemFile file;  // with g and psi filled in
    SystemModel model;
    std::vector<Expr> phi;
    bool renamed = false;
    ValidationReport validation;
    Tower tower;
    ParameterizationResult param;
    Classification cls;
    std::optional<NormalizedInputs> normalized;
    std::vector<std::string> diagnostics;
};

// Fills in a missing extension map (auto-selection) and inverse. Throws on failure.
void prepare(SystemFile& file, double tol_rank = 1e-8);

// Throws AnalysisError when validation fails or no tower exists.
FileAnalysis analyze_file(SystemFile file, const Tolerances& tol = {});

struct ExtensionRun {
    ExtendedSystem ext;
    Certificate cert;
    SystemFile emitted;
    std::optional<Point> base_point;  // evaluation point, when not the equilibrium
};

ExtensionRun extend_file(const FileAnalysis& a, const std::optional<Point>& base_point, const Tolerances& tol = {});

nlohmann::ordered_json analysis_json(const FileAnalysis& a);
nlohmann::ordered_json certificate_json(const ExtensionRun& r);
nlohmann::ordered_json trials_json(const TrialsReport& r, const TrialOptions& opt);

std::string analysis_text(const FileAnalysis& a);
std::string certificate_text(const ExtensionRun& r);
std::string trials_text(const TrialsReport& r, const TrialOptions& opt);

}  // namespace dflat
