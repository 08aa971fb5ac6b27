#pragma once

#include "l0control/problem.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace l0control {

/// Raised for malformed or semantically invalid configuration input.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

/// Recursive-descent evaluator for target/coefficient expressions.
/// Grammar: sum of products of signed powers; primitives: numbers, x, y, pi,
/// and the functions sin, cos, exp, sqrt, abs, atan.
class ExprParser {
public:
    ExprParser(const std::string& text, double x, double y) : s_(text), x_(x), y_(y) {}

    double parse() {
        double v = expression();
        skip_ws();
        if (pos_ != s_.size()) fail("trailing input");
        return v;
    }

private:
    double expression() {
        double v = term();
        for (;;) {
            skip_ws();
            if (take('+')) v += term();
            else if (take('-')) v -= term();
            else return v;
        }
    }

    double term() {
        double v = factor();
        for (;;) {
            skip_ws();
            if (take('*')) v *= factor();
            else if (take('/')) v /= factor();
            else return v;
        }
    }

    double factor() {
        skip_ws();
        if (take('-')) return -factor();
        if (take('+')) return factor();
        double v = primary();
        skip_ws();
        if (take('^')) return std::pow(v, factor());
        return v;
    }

    double primary() {
        skip_ws();
        if (take('(')) {
            double v = expression();
            expect(')');
            return v;
        }
        if (pos_ < s_.size() && (std::isdigit(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '.')) {
            std::size_t used = 0;
            double v = std::stod(s_.substr(pos_), &used);
            pos_ += used;
            return v;
        }
        std::string id = identifier();
        if (id.empty()) fail("expected number, name or '('");
        skip_ws();
        if (take('(')) {
            double a = expression();
            expect(')');
            if (id == "sin") return std::sin(a);
            if (id == "cos") return std::cos(a);
            if (id == "exp") return std::exp(a);
            if (id == "sqrt") return std::sqrt(a);
            if (id == "abs") return std::abs(a);
            if (id == "atan") return std::atan(a);
            fail("unknown function '" + id + "'");
        }
        if (id == "x") return x_;
        if (id == "y") return y_;
        if (id == "pi") return 3.14159265358979323846;
        fail("unknown name '" + id + "'");
        return 0.0;
    }

    std::string identifier() {
        std::string id;
        while (pos_ < s_.size() &&
               (std::isalpha(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_'))
            id += s_[pos_++];
        return id;
    }

    void skip_ws() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }
    bool take(char c) {
        if (pos_ < s_.size() && s_[pos_] == c) { ++pos_; return true; }
        return false;
    }
    void expect(char c) {
        if (!take(c)) fail(std::string("expected '") + c + "'");
    }
    [[noreturn]] void fail(const std::string& what) {
        throw ConfigError("expression '" + s_ + "': " + what);
    }

    std::string s_;
    std::size_t pos_ = 0;
    double x_, y_;
};

}  // namespace detail

inline double eval_expression(const std::string& expr, double x, double y = 0.0) {
    return detail::ExprParser(expr, x, y).parse();
}

/// Flat `key = value` configuration file with `#` comments.
class KeyValueConfig {
public:
    static KeyValueConfig parse_string(const std::string& text) {
        KeyValueConfig cfg;
        std::istringstream in(text);
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            std::size_t hash = line.find('#');
            if (hash != std::string::npos) line = line.substr(0, hash);
            line = detail::trim(line);
            if (line.empty()) continue;
            std::size_t eq = line.find('=');
            if (eq == std::string::npos)
                throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
            std::string key = detail::trim(line.substr(0, eq));
            std::string value = detail::trim(line.substr(eq + 1));
            if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
            cfg.values_[key] = value;
        }
        return cfg;
    }

    static KeyValueConfig parse_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file '" + path + "'");
        std::ostringstream ss;
        ss << in.rdbuf();
        return parse_string(ss.str());
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    std::string get(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) throw ConfigError("missing config key '" + key + "'");
        return it->second;
    }

    std::string get_or(const std::string& key, const std::string& def) const {
        auto it = values_.find(key);
        return it == values_.end() ? def : it->second;
    }

    double number(const std::string& key) const { return to_number(key, get(key)); }

    double number_or(const std::string& key, double def) const {
        return has(key) ? number(key) : def;
    }

    int integer(const std::string& key) const {
        double v = number(key);
        int i = static_cast<int>(v);
        if (static_cast<double>(i) != v)
            throw ConfigError("config key '" + key + "' must be an integer");
        return i;
    }

    int integer_or(const std::string& key, int def) const {
        return has(key) ? integer(key) : def;
    }

    const std::map<std::string, std::string>& entries() const { return values_; }

private:
    static double to_number(const std::string& key, const std::string& text) {
        if (text == "inf" || text == "+inf" || text == "infinity") return kInf;
        try {
            std::size_t used = 0;
            double v = std::stod(text, &used);
            if (used != text.size()) throw std::invalid_argument("");
            return v;
        } catch (const std::exception&) {
            throw ConfigError("config key '" + key + "' has non-numeric value '" + text + "'");
        }
    }

    std::map<std::string, std::string> values_;
};

// --- Field CSV: one row per node with header `index,x[,y],value`, '.' decimal. ---

inline void write_field_csv(const std::string& path, const GridField& f) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open '" + path + "' for writing");
    const Grid& g = f.grid();
    out << (g.dim() == 1 ? "index,x,value\n" : "index,x,y,value\n");
    char buf[64];
    for (Eigen::Index k = 0; k < f.size(); ++k) {
        out << k << ',';
        std::snprintf(buf, sizeof buf, "%.17g", g.coord(0, k));
        out << buf << ',';
        if (g.dim() == 2) {
            std::snprintf(buf, sizeof buf, "%.17g", g.coord(1, k));
            out << buf << ',';
        }
        std::snprintf(buf, sizeof buf, "%.17g", f[k]);
        out << buf << '\n';
    }
}

inline GridField read_field_csv(const std::string& path, const Grid& grid) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open field file '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw ConfigError("field file '" + path + "' is empty");
    Vector v = Vector::Zero(grid.size());
    Eigen::Index rows = 0;
    while (std::getline(in, line)) {
        line = detail::trim(line);
        if (line.empty()) continue;
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream ss(line);
        long idx = 0;
        double x = 0, y = 0, value = 0;
        if (grid.dim() == 1) ss >> idx >> x >> value;
        else ss >> idx >> x >> y >> value;
        if (!ss) throw ConfigError("field file '" + path + "': malformed row '" + line + "'");
        if (idx < 0 || idx >= grid.size())
            throw ConfigError("field file '" + path + "': node index out of range");
        v[idx] = value;
        ++rows;
    }
    if (rows != grid.size())
        throw ConfigError("field file '" + path + "': expected " + std::to_string(grid.size()) +
                          " rows, found " + std::to_string(rows));
    return GridField(grid, std::move(v));
}

namespace detail {

/// Resolve a field from `<key>` (constant), `<key>_expr` or `<key>_file`.
inline Vector field_from_config(const KeyValueConfig& cfg, const Grid& grid,
                                const std::string& key, double def,
                                bool has_default = true) {
    const std::string expr_key = key + "_expr";
    const std::string file_key = key + "_file";
    const int given = int(cfg.has(key)) + int(cfg.has(expr_key)) + int(cfg.has(file_key));
    if (given > 1)
        throw ConfigError("config: give only one of " + key + ", " + expr_key + ", " + file_key);
    if (cfg.has(file_key)) return read_field_csv(cfg.get(file_key), grid).values();
    if (cfg.has(expr_key)) {
        const std::string expr = cfg.get(expr_key);
        Vector v(grid.size());
        for (Eigen::Index k = 0; k < grid.size(); ++k)
            v[k] = eval_expression(expr, grid.coord(0, k), grid.dim() == 2 ? grid.coord(1, k) : 0.0);
        return v;
    }
    if (cfg.has(key)) return Vector::Constant(grid.size(), cfg.number(key));
    if (!has_default) throw ConfigError("missing config key '" + key + "'");
    return Vector::Constant(grid.size(), def);
}

}  // namespace detail

/// Build and validate a ProblemSpec from a parsed configuration.
///
/// Keys: dim, nx [, ny], lx [, ly], kappa|kappa_expr|kappa_file,
/// nonlinearity (linear|cubic|atan), c0..., c3..., target..., alpha, beta,
/// gamma (inf allowed).
inline ProblemSpec build_problem(const KeyValueConfig& cfg) {
    const int dim = cfg.integer_or("dim", 1);
    if (dim != 1 && dim != 2) throw ConfigError("config: dim must be 1 or 2");
    Grid grid = dim == 1 ? Grid::line(cfg.integer("nx"), cfg.number_or("lx", 1.0))
                         : Grid::box(cfg.integer("nx"), cfg.integer("ny"),
                                     cfg.number_or("lx", 1.0), cfg.number_or("ly", 1.0));

    Vector kappa = detail::field_from_config(cfg, grid, "kappa", 1.0);
    Vector c0 = detail::field_from_config(cfg, grid, "c0", 0.0);
    const std::string family = cfg.get_or("nonlinearity", "linear");
    Nonlinearity a = [&]() {
        if (family == "linear") return Nonlinearity::linear(std::move(c0));
        if (family == "cubic")
            return Nonlinearity::cubic(std::move(c0),
                                       detail::field_from_config(cfg, grid, "c3", 0.0));
        if (family == "atan") return Nonlinearity::arctan(std::move(c0));
        throw ConfigError("config: unknown nonlinearity '" + family +
                          "' (expected linear, cubic or atan)");
    }();
    Vector target = detail::field_from_config(cfg, grid, "target", 0.0);

    try {
        return ProblemSpec(grid, std::move(kappa), std::move(a), std::move(target),
                           cfg.number("alpha"), cfg.number("beta"), cfg.number("gamma"));
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
}

}  // namespace l0control
