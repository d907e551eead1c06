#include "dflat/sysfile.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace dflat {

FileError::FileError(const std::string& source, int line, const std::string& msg)
    : std::runtime_error(source + ":" + std::to_string(line) + ": " + msg), line_(line) {}

std::pair<double, double> SystemFile::box(const Var& input) const {
    Point p = model.equilibrium_point();
    for (const auto& b : chart)
        if (b.input == input) return {evaluate(b.lo, p), evaluate(b.hi, p)};
    double c = p.has(input) ? p.at(input) : 0.0;
    return {c - 0.5, c + 0.5};
}

namespace {

const char* kSections[] = {"params", "dims", "coordinates", "dynamics", "extension",
                           "inverse", "output", "parameterization", "equilibrium", "chart"};
constexpr int kSectionCount = 10;

int section_rank(const std::string& name) {
    for (int i = 0; i < kSectionCount; ++i)
        if (name == kSections[i]) return i;
    return -1;
}

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

struct Line {
    int number;
    std::string lhs;
    std::string rhs;
    std::size_t rhs_offset;  // column of rhs start, for error positions
};

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

class FileParser {
public:
    FileParser(const std::string& text, const std::string& source) : source_(source) { split(text); }

    SystemFile run() {
        SystemFile file;
        file.source = source_;
        for (int i = 0; i < kSectionCount; ++i) {
            auto it = sections_.find(i);
            if (it == sections_.end()) continue;
            current_ = kSections[i];
            header_line_ = headers_.at(i);
            handle(i, it->second, file);
        }
        for (const char* required : {"dims", "dynamics", "output", "equilibrium"})
            if (!sections_.count(section_rank(required)))
                throw FileError(source_, 1, std::string("missing section [") + required + "]");
        bind_equilibrium(file);
        return file;
    }

private:
    [[noreturn]] void fail(int line, const std::string& msg) const {
        throw FileError(source_, line, "[" + current_ + "] " + msg);
    }

    void split(const std::string& text) {
        std::stringstream ss(text);
        std::string raw;
        int number = 0;
        int last_rank = -1;
        int section = -1;
        while (std::getline(ss, raw)) {
            ++number;
            if (auto hash = raw.find('#'); hash != std::string::npos) raw = raw.substr(0, hash);
            std::string line = trim(raw);
            if (line.empty()) continue;
            if (line.front() == '[' && line.back() == ']') {
                std::string name = trim(line.substr(1, line.size() - 2));
                int rank = section_rank(name);
                if (rank < 0) throw FileError(source_, number, "unknown section [" + name + "]");
                if (rank <= last_rank)
                    throw FileError(source_, number, "section [" + name + "] is out of order or repeated");
                last_rank = section = rank;
                sections_[rank];
                headers_[rank] = number;
                continue;
            }
            if (section < 0) throw FileError(source_, number, "content before the first section header");
            auto eq = raw.find('=');
            if (eq == std::string::npos) throw FileError(source_, number, "expected 'name = value'");
            Line l{number, trim(raw.substr(0, eq)), raw.substr(eq + 1), eq + 1};
            if (l.lhs.empty()) throw FileError(source_, number, "missing left-hand side");
            sections_[section].push_back(std::move(l));
        }
    }

    Expr expr(const Line& l, const Dimensions& d) {
        try {
            return parse(l.rhs, d, l.number);
        } catch (const ParseError& e) {
            throw FileError(source_, l.number,
                            "[" + current_ + "] column " + std::to_string(e.column() + l.rhs_offset) + ": " +
                                std::string(e.what()).substr(std::string(e.what()).find(": ") + 2));
        }
    }

    Var variable(const std::string& text, int line, const Dimensions& d) {
        try {
            return parse_variable(text, d, line);
        } catch (const ParseError& e) {
            fail(line, "bad variable '" + text + "'");
        }
    }

    Dimensions dims() const {
        Dimensions d{n_, m_, {}};
        for (const auto& [name, v] : param_names_) d.params.insert(name);
        return d;
    }

    void handle(int rank, const std::vector<Line>& lines, SystemFile& file) {
        SystemModel& sys = file.model;
        const std::string name = kSections[rank];
        if (name == "params") {
            for (const auto& l : lines) {
                Expr v = expr(l, dims());
                double value = 0.0;
                try {
                    Point p;
                    p.params = sys.params;
                    value = evaluate(v, p);
                } catch (const EvalError& e) {
                    fail(l.number, std::string("parameter value must be constant: ") + e.what());
                }
                if (l.lhs == "pi") fail(l.number, "'pi' is reserved");
                file.param_values.emplace_back(l.lhs, v);
                sys.params[l.lhs] = value;
                param_names_[l.lhs] = value;
            }
        } else if (name == "dims") {
            for (const auto& l : lines) {
                int v = 0;
                try {
                    v = std::stoi(trim(l.rhs));
                } catch (...) {
                    fail(l.number, "expected an integer");
                }
                if (v < 1) fail(l.number, "dimension must be positive");
                if (l.lhs == "n") n_ = v;
                else if (l.lhs == "m") m_ = v;
                else fail(l.number, "unknown dimension '" + l.lhs + "'");
            }
            if (n_ == 0 || m_ == 0) fail(header_line_, "both n and m are required");
            SystemModel fresh = SystemModel::plain(n_, m_);
            fresh.params = sys.params;
            sys = fresh;
        } else if (name == "coordinates") {
            file.explicit_coordinates = true;
            for (const auto& l : lines) {
                std::vector<Var> vs;
                for (const auto& item : split_list(l.rhs)) vs.push_back(variable(item, l.number, dims()));
                if (l.lhs == "states") {
                    if (static_cast<int>(vs.size()) != n_)
                        fail(l.number, "expected " + std::to_string(n_) + " states, got " + std::to_string(vs.size()));
                    sys.states = vs;
                } else if (l.lhs == "inputs") {
                    if (static_cast<int>(vs.size()) != m_)
                        fail(l.number, "expected " + std::to_string(m_) + " inputs, got " + std::to_string(vs.size()));
                    sys.inputs = vs;
                } else if (l.lhs == "zeta") {
                    if (static_cast<int>(vs.size()) != m_)
                        fail(l.number, "expected " + std::to_string(m_) + " zeta variables");
                    sys.zeta = vs;
                } else {
                    fail(l.number, "unknown coordinate list '" + l.lhs + "'");
                }
            }
            int xmax = 0;
            for (const auto& s : sys.states)
                if (s.family == Family::x) xmax = std::max(xmax, s.component);
            sys.x_components = xmax;
        } else if (name == "dynamics") {
            sys.f.assign(sys.n(), Expr());
            std::vector<bool> seen(sys.n(), false);
            for (const auto& l : lines) {
                if (l.lhs.back() != '+') fail(l.number, "expected '<state>+ = ...'");
                Var v = variable(trim(l.lhs.substr(0, l.lhs.size() - 1)), l.number, dims());
                int i = sys.state_index(v);
                if (i < 0) fail(l.number, v.str() + " is not a state");
                if (seen[i]) fail(l.number, "duplicate equation for " + v.str());
                seen[i] = true;
                sys.f[i] = expr(l, dims());
            }
            if (static_cast<int>(lines.size()) != sys.n())
                fail(header_line_, "expected " + std::to_string(sys.n()) + " equations, got " +
                                       std::to_string(lines.size()));
        } else if (name == "extension") {
            sys.g.assign(sys.m(), Expr());
            std::vector<bool> seen(sys.m(), false);
            for (const auto& l : lines) {
                int j = index_of(l, "g", sys.m());
                if (seen[j]) fail(l.number, "duplicate " + l.lhs);
                seen[j] = true;
                sys.g[j] = expr(l, dims());
            }
            if (static_cast<int>(lines.size()) != sys.m())
                fail(header_line_, "expected " + std::to_string(sys.m()) + " functions g1..g" + std::to_string(sys.m()));
            sys.g_source = ExtensionSource::user_supplied;
        } else if (name == "inverse") {
            sys.psi_x.assign(sys.n(), Expr());
            sys.psi_u.assign(sys.m(), Expr());
            for (const auto& l : lines) {
                Var v = variable(l.lhs, l.number, dims());
                if (int i = sys.state_index(v); i >= 0) sys.psi_x[i] = expr(l, dims());
                else if (int j = sys.input_index(v); j >= 0) sys.psi_u[j] = expr(l, dims());
                else fail(l.number, v.str() + " is neither a state nor an input");
            }
            if (static_cast<int>(lines.size()) != sys.n() + sys.m())
                fail(header_line_, "expected one equation per state and input");
        } else if (name == "output") {
            file.output.assign(sys.m(), Expr());
            for (const auto& l : lines) file.output[index_of(l, "y", sys.m())] = expr(l, dims());
            if (static_cast<int>(lines.size()) != sys.m())
                fail(header_line_, "expected " + std::to_string(sys.m()) + " outputs");
        } else if (name == "parameterization") {
            file.F_x.assign(sys.n(), Expr());
            file.F_u.assign(sys.m(), Expr());
            for (const auto& l : lines) {
                Var v = variable(l.lhs, l.number, dims());
                if (int i = sys.state_index(v); i >= 0) file.F_x[i] = expr(l, dims());
                else if (int j = sys.input_index(v); j >= 0) file.F_u[j] = expr(l, dims());
                else fail(l.number, v.str() + " is neither a state nor an input");
            }
            if (static_cast<int>(lines.size()) != sys.n() + sys.m())
                fail(header_line_, "expected one equation per state and input");
        } else if (name == "equilibrium") {
            for (const auto& l : lines) {
                Var v = variable(l.lhs, l.number, dims());
                if (sys.state_index(v) < 0 && sys.input_index(v) < 0)
                    fail(l.number, v.str() + " is neither a state nor an input");
                Expr e = expr(l, dims());
                if (!free_variables(e).empty()) fail(l.number, "equilibrium values must be constant");
                file.equilibrium.emplace_back(v, e);
            }
        } else if (name == "chart") {
            for (const auto& l : lines) {
                Var v = variable(l.lhs, l.number, dims());
                if (sys.input_index(v) < 0) fail(l.number, v.str() + " is not an input");
                std::string r = trim(l.rhs);
                if (r.size() < 2 || r.front() != '[' || r.back() != ']') fail(l.number, "expected '[lo, hi]'");
                auto parts = split_list(r.substr(1, r.size() - 2));
                if (parts.size() != 2) fail(l.number, "expected '[lo, hi]'");
                Line lo{l.number, l.lhs, parts[0], l.rhs_offset};
                Line hi{l.number, l.lhs, parts[1], l.rhs_offset};
                file.chart.push_back({v, expr(lo, dims()), expr(hi, dims())});
            }
        }
    }

    int index_of(const Line& l, const std::string& prefix, int limit) {
        if (l.lhs.size() <= prefix.size() || l.lhs.compare(0, prefix.size(), prefix) != 0)
            fail(l.number, "expected " + prefix + "<j> on the left-hand side");
        int j = 0;
        try {
            j = std::stoi(l.lhs.substr(prefix.size()));
        } catch (...) {
            fail(l.number, "expected " + prefix + "<j> on the left-hand side");
        }
        if (j < 1 || j > limit) fail(l.number, l.lhs + " is out of range");
        return j - 1;
    }

    std::string source_;
    std::string current_;
    int header_line_ = 1;
    std::map<int, std::vector<Line>> sections_;
    std::map<int, int> headers_;
    std::map<std::string, double> param_names_;
    int n_ = 0;
    int m_ = 0;
};

}  // namespace

void bind_equilibrium(SystemFile& file) {
    SystemModel& sys = file.model;
    sys.equilibrium = Point{};
    Point p;
    p.params = sys.params;
    for (const auto& s : sys.states) sys.equilibrium.set(s, 0.0);
    for (const auto& u : sys.inputs) sys.equilibrium.set(u, 0.0);
    for (const auto& [v, e] : file.equilibrium) sys.equilibrium.set(v, evaluate(e, p));
}

SystemFile parse_system(const std::string& text, const std::string& source) {
    return FileParser(text, source).run();
}

SystemFile load_system(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FileError(path, 0, "cannot open file");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_system(ss.str(), path);
}

std::string print_system(const SystemFile& file) {
    const SystemModel& sys = file.model;
    std::ostringstream out;
    auto join = [](const std::vector<Var>& vs) {
        std::string s;
        for (const auto& v : vs) s += (s.empty() ? "" : ", ") + v.str();
        return s;
    };
    if (!file.param_values.empty()) {
        out << "[params]\n";
        for (const auto& [name, v] : file.param_values) out << name << " = " << v.str() << "\n";
        out << "\n";
    }
    out << "[dims]\nn = " << sys.n() << "\nm = " << sys.m() << "\n\n";
    if (file.explicit_coordinates || !sys.is_plain()) {
        out << "[coordinates]\n";
        out << "states = " << join(sys.states) << "\n";
        out << "inputs = " << join(sys.inputs) << "\n";
        out << "zeta = " << join(sys.zeta) << "\n\n";
    }
    out << "[dynamics]\n";
    for (int i = 0; i < sys.n(); ++i) out << sys.states[i].str() << "+ = " << sys.f[i].str() << "\n";
    out << "\n";
    if (sys.has_extension()) {
        out << "[extension]\n";
        for (int j = 0; j < sys.m(); ++j) out << "g" << j + 1 << " = " << sys.g[j].str() << "\n";
        out << "\n";
    }
    if (sys.has_inverse()) {
        out << "[inverse]\n";
        for (int i = 0; i < sys.n(); ++i) out << sys.states[i].str() << " = " << sys.psi_x[i].str() << "\n";
        for (int j = 0; j < sys.m(); ++j) out << sys.inputs[j].str() << " = " << sys.psi_u[j].str() << "\n";
        out << "\n";
    }
    out << "[output]\n";
    for (std::size_t j = 0; j < file.output.size(); ++j) out << "y" << j + 1 << " = " << file.output[j].str() << "\n";
    out << "\n";
    if (file.has_parameterization()) {
        out << "[parameterization]\n";
        for (int i = 0; i < sys.n(); ++i) out << sys.states[i].str() << " = " << file.F_x[i].str() << "\n";
        for (int j = 0; j < sys.m(); ++j) out << sys.inputs[j].str() << " = " << file.F_u[j].str() << "\n";
        out << "\n";
    }
    out << "[equilibrium]\n";
    for (const auto& [v, e] : file.equilibrium) out << v.str() << " = " << e.str() << "\n";
    if (!file.chart.empty()) {
        out << "\n[chart]\n";
        for (const auto& b : file.chart) out << b.input.str() << " = [" << b.lo.str() << ", " << b.hi.str() << "]\n";
    }
    return out.str();
}

}  // namespace dflat
