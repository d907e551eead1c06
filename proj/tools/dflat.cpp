#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "dflat/report.hpp"

using namespace dflat;

namespace {

enum Exit { ok = 0, input_error = 1, classification_error = 2, certificate_error = 3, verification_error = 4 };

struct Options {
    std::string file;
    bool json = false;
    std::string out;
    Tolerances tol;
    TrialOptions trials;
    std::string expect;
    std::vector<std::string> at;
};

void emit(const Options& o, const std::string& text) {
    if (o.out.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream f(o.out);
    if (!f) throw std::runtime_error("cannot write " + o.out);
    f << text;
}

std::string render(const nlohmann::ordered_json& j) { return j.dump(2) + "\n"; }

int cmd_analyze(const Options& o) {
    auto a = analyze_file(load_system(o.file), o.tol);
    emit(o, o.json ? render(analysis_json(a)) : analysis_text(a));
    if (!a.cls.consistent) {
        std::cerr << "dflat: classification assertion failed: " << a.cls.message << "\n";
        return classification_error;
    }
    if (!o.expect.empty() && o.expect != kind_name(a.cls.kind)) {
        std::cerr << "dflat: expected " << o.expect << ", classified " << kind_name(a.cls.kind) << "\n";
        return classification_error;
    }
    return ok;
}

std::optional<Point> evaluation_point(const FileAnalysis& a, const std::vector<std::string>& bindings) {
    if (bindings.empty()) return std::nullopt;
    Point p = a.model.equilibrium_point();
    Dimensions d = a.model.dims();
    for (const auto& b : bindings) {
        auto eq = b.find('=');
        if (eq == std::string::npos) throw FileError("--at", 1, "expected var=expr, got '" + b + "'");
        Var v = parse_variable(b.substr(0, eq), d);
        if (a.model.state_index(v) < 0 && a.model.input_index(v) < 0)
            throw FileError("--at", 1, v.str() + " is neither a state nor an input");
        p.set(v, evaluate(parse(b.substr(eq + 1), d), p));
    }
    return p;
}

int cmd_extend(const Options& o) {
    auto a = analyze_file(load_system(o.file), o.tol);
    auto run = extend_file(a, evaluation_point(a, o.at), o.tol);
    std::string dsl = print_system(run.emitted);
    std::string report = o.json ? render(certificate_json(run)) : certificate_text(run);
    if (o.out.empty()) {
        std::cout << dsl;
        std::cerr << report;
    } else {
        emit(o, dsl);
        std::cout << report;
    }
    return run.cert.pass() ? ok : certificate_error;
}

int cmd_verify(const Options& o) {
    auto opt = o.trials;
    opt.tol = o.tol.verify;
    auto file = load_system(o.file);
    TrialsReport rep;
    if (file.has_parameterization() && file.model.is_plain()) {
        // A supplied parameterization is checked as written.
        rep = verify_trials(file, file.output, file.F_x, file.F_u, opt);
    } else {
        auto a = analyze_file(std::move(file), o.tol);
        rep = verify_trials(a.file, a.phi, a.param.F_x, a.param.F_u, opt);
    }
    emit(o, o.json ? render(trials_json(rep, opt)) : trials_text(rep, opt));
    return rep.pass ? ok : verification_error;
}

int cmd_print(const Options& o) {
    emit(o, print_system(load_system(o.file)));
    return ok;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Difference flatness analysis of discrete-time systems"};
    app.require_subcommand(1);
    Options o;

    auto common = [&](CLI::App* cmd) {
        cmd->add_option("file", o.file, "system file")->required()->check(CLI::ExistingFile);
        cmd->add_flag("--json", o.json, "JSON report");
        cmd->add_option("--out", o.out, "output path");
        cmd->add_option("--tol-rank", o.tol.rank, "relative singular-value threshold")->capture_default_str();
    };
    auto* analyze = app.add_subcommand("analyze", "indices, classification and parameterization");
    common(analyze);
    analyze->add_option("--expect", o.expect, "required classification")
        ->check(CLI::IsMember({"linearizing", "forward_flat", "backward_flat", "general"}));

    auto* extend = app.add_subcommand("extend", "linearizing extension and certificate");
    common(extend);
    extend->add_option("--at", o.at, "evaluation point binding, var=expr (repeatable)");

    auto* verify = app.add_subcommand("verify", "check the parameterization along random trajectories");
    common(verify);
    verify->add_option("--tol-verify", o.tol.verify, "absolute residual tolerance")->capture_default_str();
    verify->add_option("--steps", o.trials.steps, "trajectory length")->capture_default_str()->check(CLI::PositiveNumber);
    verify->add_option("--trials", o.trials.trials, "random trajectories; 0 checks the equilibrium")
        ->capture_default_str()
        ->check(CLI::NonNegativeNumber);
    verify->add_option("--seed", o.trials.seed, "random seed")->capture_default_str();

    auto* print = app.add_subcommand("print", "parse and print in canonical form");
    print->add_option("file", o.file, "system file")->required()->check(CLI::ExistingFile);
    print->add_option("--out", o.out, "output path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? ok : input_error;
    }

    try {
        if (*analyze) return cmd_analyze(o);
        if (*extend) return cmd_extend(o);
        if (*verify) return cmd_verify(o);
        if (*print) return cmd_print(o);
    } catch (const FileError& e) {
        std::cerr << "dflat: " << e.what() << "\n";
        return input_error;
    } catch (const ExtensionError& e) {
        std::cerr << "dflat: extension: " << e.what() << "\n";
        return certificate_error;
    } catch (const SimulationError& e) {
        std::cerr << "dflat: verification: " << e.what() << "\n";
        return verification_error;
    } catch (const std::exception& e) {
        std::cerr << "dflat: " << o.file << ": " << e.what() << "\n";
        return input_error;
    }
    return input_error;
}
