#include "dflat/report.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

namespace dflat {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

// The file rewritten in plain coordinates, equilibrium and chart included.
SystemFile plain_file(const SystemFile& file) {
    SystemFile out = file;
    Substitution back;
    out.model = file.model.to_plain(&back);
    out.explicit_coordinates = false;
    Substitution fwd;
    for (const auto& [p, orig] : back) fwd.emplace(orig.var(), var(p));
    auto rename = [&](const Var& v) {
        auto it = fwd.find(v);
        return it == fwd.end() ? v : it->second.var();
    };
    for (auto& e : out.output) e = substitute(e, fwd);
    for (auto& [v, e] : out.equilibrium) v = rename(v);
    for (auto& box : out.chart) box.input = rename(box.input);
    return out;
}

std::vector<std::string> strings(const std::vector<Expr>& es) {
    std::vector<std::string> out;
    for (const auto& e : es) out.push_back(e.str());
    return out;
}

json pair_json(const std::array<int, 2>& a) { return json::array({a[0], a[1]}); }

// JSON numbers cannot hold inf; poles are reported as null.
json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::string fmt(double v) {
    if (!std::isfinite(v)) return "inf";
    std::ostringstream os;
    os << std::setprecision(3) << std::scientific << v;
    return os.str();
}

std::string pair_str(const std::array<int, 2>& a) {
    return "(" + std::to_string(a[0]) + ", " + std::to_string(a[1]) + ")";
}

void row(std::ostringstream& os, const std::string& key, const std::string& value) {
    os << "  " << std::left << std::setw(22) << key << value << "\n";
}

}  // namespace

void prepare(SystemFile& file, double tol_rank) {
    if (!file.model.has_extension()) {
        auto choice = choose_extension(file.model, tol_rank);
        file.model.g = choice.g;
        file.model.g_source = choice.source;
        file.model.selected_coordinates = choice.selected_coordinates;
    }
    if (!file.model.has_inverse()) {
        auto inv = invert_extension(file.model);
        file.model.psi_x = inv.psi_x;
        file.model.psi_u = inv.psi_u;
    }
}

FileAnalysis analyze_file(SystemFile file, const Tolerances& tol) {
    FileAnalysis a;
    bool renamed = !file.model.is_plain();
    if (renamed) file = plain_file(file);
    prepare(file, tol.rank);
    a.renamed = renamed;
    a.validation = validate(file.model, tol.rank);
    if (!a.validation.pass) {
        // A pole at the declared equilibrium is tolerated when the generic checks hold.
        bool only_pole = a.validation.inputs.pass() && a.validation.submersive.pass() &&
                         (!file.model.has_extension() || a.validation.extension.pass()) &&
                         std::isinf(a.validation.equilibrium_residual) &&
                         (!a.validation.inverse_residual || *a.validation.inverse_residual <= 1e-9);
        std::string why;
        for (const auto& m : a.validation.messages) why += (why.empty() ? "" : "; ") + m;
        if (!only_pole) throw AnalysisError("validation failed: " + why);
        a.diagnostics.push_back("the equilibrium is a pole; generic ranks are used (" + why + ")");
    }
    a.model = file.model;
    a.phi = file.output;
    a.tower = build_tower(a.model, a.phi, &a.diagnostics);
    const auto* ux = file.has_parameterization() ? &file.F_x : nullptr;
    const auto* uu = file.has_parameterization() ? &file.F_u : nullptr;
    a.param = invert_tower(a.model, a.phi, a.tower, ux, uu);
    a.cls = classify(a.model, a.phi, a.tower, a.param, tol.rank);
    if (a.tower.indices.R1[0] + a.tower.indices.R1[1] > 0) {
        try {
            a.normalized = normalize_inputs(a.model, a.phi, &a.tower, &a.param);
        } catch (const std::exception& e) {
            a.diagnostics.push_back(std::string("input normalization skipped: ") + e.what());
        }
    }
    a.file = std::move(file);
    return a;
}

ExtensionRun extend_file(const FileAnalysis& a, const std::optional<Point>& base_point, const Tolerances& tol) {
    ExtensionRun r;
    std::vector<std::string> diag;
    r.ext = build_for(a.model, a.phi, a.tower, a.cls.kind, equilibrium_map(a.file), &diag);
    r.emitted = extended_file(a.file, r.ext);
    r.base_point = base_point;
    r.cert = certify_linearizing(r.ext, base_point, tol.rank);
    return r;
}

ordered_json analysis_json(const FileAnalysis& a) {
    const auto& ix = a.tower.indices;
    ordered_json j;
    j["schema"] = "1";
    j["command"] = "analyze";
    j["source"] = a.file.source;
    j["n"] = a.model.n();
    j["m"] = a.model.m();
    j["renamed_to_plain"] = a.renamed;
    j["extension_map"] = {{"g", strings(a.model.g)},
                          {"source", a.model.g_source == ExtensionSource::user_supplied ? "user" : "auto"}};
    j["validation"] = {{"pass", a.validation.pass},
                       {"rank_du_f", a.validation.inputs.rank},
                       {"rank_dxu_f", a.validation.submersive.rank},
                       {"rank_dxu_fg", a.validation.extension.rank},
                       {"inverse_check", a.validation.inverse_check},
                       {"messages", a.validation.messages}};
    j["indices"] = {{"rho", pair_json(ix.rho)}, {"gamma", pair_json(ix.gamma)}, {"R1", pair_json(ix.R1)},
                    {"R2", pair_json(ix.R2)},   {"count", ix.count()},          {"d", ix.d},
                    {"d1", ix.d1},              {"d2", ix.d2}};
    j["identities"] = {{"forward", a.tower.identities.forward},
                       {"backward", a.tower.identities.backward},
                       {"dimension", a.tower.identities.dimension},
                       {"defect", a.tower.identities.defect}};
    j["classification"] = {{"kind", kind_name(a.cls.kind)},
                           {"rank_Fu_at_R2", a.cls.rank_Fu_at_R2},
                           {"rank_Fx_at_minus_R1", a.cls.rank_Fx_at_minusR1},
                           {"rank_g_of_F", a.cls.rank_g_of_F},
                           {"consistent", a.cls.consistent},
                           {"message", a.cls.message}};
    const auto& ts = a.tower.ts;
    j["transform"] = {{"ordering", json::array({ts.A + 1, ts.B + 1})},
                      {"ubar1", ts.ubar1_def.str()},
                      {"ubar2", a.model.inputs[static_cast<std::size_t>(ts.kU)].str()},
                      {"zetabar1", ts.zetabar1_def.str()},
                      {"zetabar2", a.model.zeta[static_cast<std::size_t>(ts.kZ)].str()},
                      {"gbar1", ts.gbar1.str()}};
    j["tower"] = {{"rank", a.tower.rank},
                  {"y1", strings(a.tower.rows[0])},
                  {"y2", strings(a.tower.rows[1])}};
    ordered_json p;
    p["source"] = a.param.source == ParameterizationSource::user_supplied ? "user" : "derived";
    p["F_x"] = strings(a.param.F_x);
    p["F_u"] = strings(a.param.F_u);
    p["residual"] = number_or_null(a.param.residual);
    if (a.param.user_disagreement) p["user_disagreement"] = number_or_null(*a.param.user_disagreement);
    j["parameterization"] = p;
    if (a.normalized) {
        const auto& nz = *a.normalized;
        j["normalized_inputs"] = {{"rows", json::array({nz.rows[0] + 1, nz.rows[1] + 1})},
                                  {"identity", nz.identity},
                                  {"F_v", strings(nz.F_v)},
                                  {"zero_block_structural", nz.zero_block_structural},
                                  {"zero_block_numeric", number_or_null(nz.zero_block_numeric)},
                                  {"F_v_agreement", number_or_null(nz.F_v_agreement)}};
    }
    j["diagnostics"] = a.diagnostics;
    return j;
}

ordered_json certificate_json(const ExtensionRun& r) {
    const auto& c = r.cert;
    ordered_json j;
    j["schema"] = "1";
    j["command"] = "extend";
    j["extension"] = r.ext.d1 + r.ext.d2 == 0 ? "none" : extension_name(r.ext.kind);
    j["d1"] = r.ext.d1;
    j["d2"] = r.ext.d2;
    j["states"] = r.ext.model.n();
    j["state_names"] = json::array();
    for (const auto& v : r.ext.model.states) j["state_names"].push_back(v.str());
    j["input_names"] = json::array();
    for (const auto& v : r.ext.model.inputs) j["input_names"].push_back(v.str());
    j["evaluation_point"] = r.base_point ? "given" : "equilibrium";
    j["certificate"] = {{"pass", c.pass()},
                        {"square", c.square},
                        {"rank", c.rank},
                        {"required", c.required},
                        {"perturbed_points", c.perturbed},
                        {"points_evaluated", c.points_checked},
                        {"rank_at_point", c.equilibrium_rank < 0 ? json(nullptr) : json(c.equilibrium_rank)},
                        {"regular_at_point", c.regular_at_point()},
                        {"R1", pair_json(c.R1)},
                        {"R2", pair_json(c.R2)}};
    return j;
}

ordered_json trials_json(const TrialsReport& r, const TrialOptions& opt) {
    ordered_json j;
    j["schema"] = "1";
    j["command"] = "verify";
    j["steps"] = opt.steps;
    j["trials"] = opt.trials;
    j["seed"] = opt.seed;
    j["resamples"] = r.resamples;
    j["max_residual_x"] = number_or_null(r.worst.max_residual_x);
    j["max_residual_u"] = number_or_null(r.worst.max_residual_u);
    j["worst_k"] = r.worst.worst_k;
    j["worst_trial"] = r.worst_trial;
    j["worst_component"] = r.worst.worst_component;
    j["tolerance"] = r.worst.tolerance;
    j["pass"] = r.pass;
    return j;
}

std::string analysis_text(const FileAnalysis& a) {
    const auto& ix = a.tower.indices;
    std::ostringstream os;
    os << a.file.source << "\n";
    row(os, "states, inputs", std::to_string(a.model.n()) + ", " + std::to_string(a.model.m()));
    row(os, "classification", kind_name(a.cls.kind));
    row(os, "rho", pair_str(ix.rho));
    row(os, "gamma", pair_str(ix.gamma));
    row(os, "R1", pair_str(ix.R1));
    row(os, "R2", pair_str(ix.R2));
    row(os, "d (d1 + d2)", std::to_string(ix.d) + " (" + std::to_string(ix.d1) + " + " + std::to_string(ix.d2) + ")");
    row(os, "identities", a.tower.identities.all() ? "hold" : "FAIL");
    row(os, "tower rank", std::to_string(a.tower.rank) + " of " + std::to_string(a.tower.variables.size()));
    row(os, "rank dF_u/dy[R2]", std::to_string(a.cls.rank_Fu_at_R2));
    row(os, "rank dF_x/dy[-R1]", std::to_string(a.cls.rank_Fx_at_minusR1));
    row(os, "rank dg(F)/dy[-R1]", std::to_string(a.cls.rank_g_of_F));
    row(os, "ubar1", a.tower.ts.ubar1_def.str());
    row(os, "zetabar1", a.tower.ts.zetabar1_def.str());
    row(os, "gbar1", a.tower.ts.gbar1.str());
    for (int i = 0; i < a.model.n(); ++i) row(os, "F_x" + std::to_string(i + 1), a.param.F_x[i].str());
    for (int j = 0; j < a.model.m(); ++j) row(os, "F_u" + std::to_string(j + 1), a.param.F_u[j].str());
    row(os, "F residual", fmt(a.param.residual));
    if (a.normalized)
        row(os, "zero block dF_v", std::string(a.normalized->zero_block_structural ? "structural" : "NOT structural") +
                                       ", max " + fmt(a.normalized->zero_block_numeric));
    if (!a.cls.consistent) row(os, "assertion", a.cls.message);
    for (const auto& d : a.diagnostics) row(os, "note", d);
    return os.str();
}

std::string certificate_text(const ExtensionRun& r) {
    const auto& c = r.cert;
    std::ostringstream os;
    row(os, "extension", r.ext.d1 + r.ext.d2 == 0 ? "none" : extension_name(r.ext.kind));
    row(os, "chains (d1, d2)", "(" + std::to_string(r.ext.d1) + ", " + std::to_string(r.ext.d2) + ")");
    row(os, "states", std::to_string(r.ext.model.n()));
    row(os, "square", c.square ? "yes" : "no");
    row(os, "rank", std::to_string(c.rank) + "/" + std::to_string(c.required) + " at " +
                        std::to_string(c.points_checked) + " perturbed points");
    row(os, "rank at point", c.equilibrium_rank < 0 ? std::string("pole") : std::to_string(c.equilibrium_rank));
    row(os, "certificate", c.pass() ? "pass" : "FAIL");
    return os.str();
}

std::string trials_text(const TrialsReport& r, const TrialOptions& opt) {
    std::ostringstream os;
    row(os, "trials x steps", std::to_string(opt.trials) + " x " + std::to_string(opt.steps));
    row(os, "max residual x", fmt(r.worst.max_residual_x));
    row(os, "max residual u", fmt(r.worst.max_residual_u));
    row(os, "worst", r.worst.worst_component + " at k = " + std::to_string(r.worst.worst_k) +
                         (r.worst_trial >= 0 ? " (trial " + std::to_string(r.worst_trial) + ")" : ""));
    row(os, "resamples", std::to_string(r.resamples));
    row(os, "verification", r.pass ? "pass" : "FAIL");
    return os.str();
}

}  // namespace dflat
