#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dflat/system.hpp"

namespace dflat {

// Error in a system file, annotated with the section and line.
class FileError : public std::runtime_error {
public:
    FileError(const std::string& source, int line, const std::string& msg);
    int line() const { return line_; }

private:
    int line_;
};

struct InputBox {
    Var input;
    Expr lo;
    Expr hi;
};

// In-memory form of a system file. Section order:
//   [params] [dims] [coordinates] [dynamics] [extension] [inverse] [output]
//   [parameterization] [equilibrium] [chart]
// with [coordinates], [extension], [inverse], [parameterization] and [chart] optional.
struct SystemFile {
    std::string source = "<input>";
    std::vector<std::pair<std::string, Expr>> param_values;
    bool explicit_coordinates = false;
    SystemModel model;
    std::vector<Expr> output;
    std::vector<Expr> F_x;  // empty unless supplied
    std::vector<Expr> F_u;
    std::vector<std::pair<Var, Expr>> equilibrium;
    std::vector<InputBox> chart;

    bool has_parameterization() const { return !F_x.empty(); }
    // Numeric input box for `input`, defaulting to the equilibrium +- 0.5.
    std::pair<double, double> box(const Var& input) const;
};

SystemFile parse_system(const std::string& text, const std::string& source = "<input>");
SystemFile load_system(const std::string& path);
std::string print_system(const SystemFile& file);

// Re-evaluates the numeric equilibrium of `file.model` from the symbolic bindings.
void bind_equilibrium(SystemFile& file);

}  // namespace dflat
