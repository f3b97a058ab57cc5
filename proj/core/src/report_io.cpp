#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

#include "ma2/error.hpp"
#include "ma2/sweep.hpp"

namespace ma2::sweep {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string fmt(double v, const char* spec = "%.12g") {
    char buf[40];
    std::snprintf(buf, sizeof buf, spec, v);
    return buf;
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
json optional_number(const std::optional<double>& v) { return v ? number_or_null(*v) : json(nullptr); }

json parse_json(const std::string& text, const std::string& what) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(what + ": " + e.what());
    }
}

double as_number(const json& v, const std::string& name) {
    if (!v.is_number()) throw ConfigError(name + " must be a number");
    return v.get<double>();
}

const std::vector<std::string>& family_keys(solver::Family f) {
    static const std::vector<std::string> quadratic{"a", "b", "c"};
    static const std::vector<std::string> radial{"kappa"};
    static const std::vector<std::string> tilted{"a", "b", "c", "eps", "w1", "w2"};
    switch (f) {
        case solver::Family::kQuadratic: return quadratic;
        case solver::Family::kExponentialRadial: return radial;
        case solver::Family::kTilted: return tilted;
    }
    return quadratic;
}

double& param_slot(solver::ExactSolutionSpec& s, const std::string& key) {
    if (key == "a") return s.a;
    if (key == "b") return s.b;
    if (key == "c") return s.c;
    if (key == "kappa") return s.kappa;
    if (key == "eps") return s.eps;
    if (key == "w1") return s.w1;
    return s.w2;
}

solver::Family family_of(const json& j) {
    if (!j.contains("family") || !j.at("family").is_string()) throw ConfigError("family must be a string");
    try {
        return solver::parse_family(j.at("family").get<std::string>());
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
}

void check_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool known = false;
        for (const char* a : allowed) known = known || it.key() == a;
        if (!known) throw ConfigError("unknown key '" + it.key() + "' in " + where);
    }
}

std::vector<double> param_values(const json& v, const std::string& name) {
    if (v.is_number()) return {v.get<double>()};
    if (v.is_array()) {
        if (v.empty()) throw ConfigError(name + " has an empty list");
        std::vector<double> out;
        for (const auto& e : v) out.push_back(as_number(e, name));
        return out;
    }
    if (v.is_object()) {
        check_keys(v, {"from", "to", "steps"}, name);
        if (!v.contains("from") || !v.contains("to") || !v.contains("steps"))
            throw ConfigError(name + " range needs from, to and steps");
        const double from = as_number(v.at("from"), name + ".from");
        const double to = as_number(v.at("to"), name + ".to");
        if (!v.at("steps").is_number_integer() || v.at("steps").get<int>() < 1)
            throw ConfigError(name + ".steps must be a positive integer");
        const int steps = v.at("steps").get<int>();
        std::vector<double> out;
        for (int i = 0; i < steps; ++i)
            out.push_back(steps == 1 ? from : from + (to - from) * static_cast<double>(i) / (steps - 1));
        return out;
    }
    throw ConfigError(name + " must be a number, a list or a range");
}

int cells_for(double radius, double spacing) {
    const double n = radius / spacing;
    const double rounded = std::round(n);
    if (!(spacing > 0.0) || std::abs(n - rounded) > 1e-9 * n || rounded < 8)
        throw ConfigError("spacing " + fmt(spacing) + " does not divide R = " + fmt(radius) + " into N >= 8 cells");
    return static_cast<int>(rounded);
}

}  // namespace

// ---------------------------------------------------------------------------
// Sweep configuration

SweepConfig SweepConfig::from_json(const std::string& text, const fs::path& base_dir) {
    const json j = parse_json(text, "sweep config");
    if (!j.is_object()) throw ConfigError("sweep config must be a JSON object");
    check_keys(j, {"families", "radii", "resolutions", "cells", "output", "jobs", "tol"}, "sweep config");

    SweepConfig cfg;
    if (!j.contains("families") || !j.at("families").is_array() || j.at("families").empty())
        throw ConfigError("families must be a non-empty list");
    for (const auto& fam : j.at("families")) {
        if (!fam.is_object()) throw ConfigError("each family entry must be an object");
        check_keys(fam, {"family", "params"}, "family entry");
        solver::ExactSolutionSpec base;
        base.family = family_of(fam);
        const auto& keys = family_keys(base.family);

        std::vector<std::pair<std::string, std::vector<double>>> axes;
        if (fam.contains("params")) {
            const json& p = fam.at("params");
            if (!p.is_object()) throw ConfigError("params must be an object");
            for (auto it = p.begin(); it != p.end(); ++it) {
                if (std::find(keys.begin(), keys.end(), it.key()) == keys.end())
                    throw ConfigError("parameter '" + it.key() + "' does not apply to " + base.id());
                axes.emplace_back(it.key(), param_values(it.value(), it.key()));
            }
        }
        std::vector<solver::ExactSolutionSpec> expanded{base};
        for (const auto& [key, values] : axes) {
            std::vector<solver::ExactSolutionSpec> next;
            for (const auto& s : expanded)
                for (double v : values) {
                    auto t = s;
                    param_slot(t, key) = v;
                    next.push_back(t);
                }
            expanded = std::move(next);
        }
        cfg.families.insert(cfg.families.end(), expanded.begin(), expanded.end());
    }

    if (!j.contains("radii") || !j.at("radii").is_array() || j.at("radii").empty())
        throw ConfigError("radii must be a non-empty list");
    for (const auto& r : j.at("radii")) {
        const double v = as_number(r, "radius");
        if (!(v > 0.0)) throw ConfigError("radii must be positive");
        cfg.radii.push_back(v);
    }

    if (j.contains("resolutions") == j.contains("cells"))
        throw ConfigError("give exactly one of resolutions (h/R) or cells");
    if (j.contains("cells")) {
        const json& c = j.at("cells");
        if (!c.is_array() || c.empty()) throw ConfigError("cells must be a non-empty list");
        for (const auto& n : c) {
            if (!n.is_number_integer() || n.get<int>() < 8) throw ConfigError("cells entries must be integers >= 8");
            cfg.cells.push_back(n.get<int>());
        }
    } else {
        const json& c = j.at("resolutions");
        if (!c.is_array() || c.empty()) throw ConfigError("resolutions must be a non-empty list");
        for (const auto& h : c) cfg.cells.push_back(cells_for(1.0, as_number(h, "resolution")));
    }

    if (j.contains("output")) {
        const json& o = j.at("output");
        if (!o.is_object()) throw ConfigError("output must be an object");
        check_keys(o, {"csv", "json"}, "output");
        if (o.contains("csv")) cfg.csv_path = o.at("csv").get<std::string>();
        if (o.contains("json")) cfg.json_path = o.at("json").get<std::string>();
    }
    if (!base_dir.empty()) {
        if (cfg.csv_path.is_relative()) cfg.csv_path = base_dir / cfg.csv_path;
        if (cfg.json_path.is_relative()) cfg.json_path = base_dir / cfg.json_path;
    }
    if (j.contains("jobs")) {
        if (!j.at("jobs").is_number_integer() || j.at("jobs").get<int>() < 1)
            throw ConfigError("jobs must be a positive integer");
        cfg.jobs = j.at("jobs").get<int>();
    }
    if (j.contains("tol")) {
        const double t = as_number(j.at("tol"), "tol");
        if (!(t > 0.0)) throw ConfigError("tol must be positive");
        cfg.tol = t;
    }
    return cfg;
}

SweepConfig SweepConfig::load(const fs::path& file) {
    return from_json(read_file(file), file.parent_path());
}

// ---------------------------------------------------------------------------
// Records

const std::vector<std::string>& csv_columns() {
    static const std::vector<std::string> cols{
        "family", "params", "R", "h", "m", "M", "sup_du", "d2u0", "s_R", "s_r", "case", "eta_lambda_ratio",
        "c1_empirical", "error_class", "r", "eta_lambda1", "threshold", "case_a_margin", "log_c1_empirical",
        "sup_du_half", "osc_u", "iterations", "residual_norm", "convexity_margin", "error_vs_exact", "cp_residual"};
    return cols;
}

namespace {

std::string csv_cell(const SweepRecord& r, const std::string& col) {
    auto opt = [](const std::optional<double>& v) { return v ? fmt(*v) : std::string(); };
    if (col == "family") return r.family;
    if (col == "params") return r.params;
    if (col == "R") return fmt(r.R);
    if (col == "h") return fmt(r.h);
    if (col == "m") return fmt(r.m);
    if (col == "M") return fmt(r.M);
    if (col == "r") return fmt(r.r);
    if (col == "error_class") return r.error_class;
    if (!r.ok()) return {};
    if (col == "sup_du") return fmt(r.sup_du);
    if (col == "d2u0") return fmt(r.d2u0);
    if (col == "s_R") return fmt(r.s_R);
    if (col == "s_r") return fmt(r.s_r);
    if (col == "case") return std::string(1, r.case_label);
    if (col == "eta_lambda_ratio") return fmt(r.eta_lambda_ratio);
    if (col == "c1_empirical") return fmt(r.c1_empirical);
    if (col == "eta_lambda1") return fmt(r.eta_lambda1);
    if (col == "threshold") return fmt(r.threshold);
    if (col == "case_a_margin") return opt(r.case_a_margin);
    if (col == "log_c1_empirical") return fmt(r.log_c1_empirical);
    if (col == "sup_du_half") return fmt(r.sup_du_half);
    if (col == "osc_u") return fmt(r.osc_u);
    if (col == "iterations") return std::to_string(r.iterations);
    if (col == "residual_norm") return fmt(r.residual_norm);
    if (col == "convexity_margin") return fmt(r.convexity_margin);
    if (col == "error_vs_exact") return opt(r.error_vs_exact);
    return opt(r.cp_residual);
}

}  // namespace

std::string records_csv(std::span<const SweepRecord> records) {
    const auto& cols = csv_columns();
    std::string out;
    for (std::size_t i = 0; i < cols.size(); ++i) out += (i ? "," : "") + cols[i];
    out += '\n';
    for (const auto& r : records) {
        for (std::size_t i = 0; i < cols.size(); ++i) out += (i ? "," : "") + csv_cell(r, cols[i]);
        out += '\n';
    }
    return out;
}

namespace {

json record_json(const SweepRecord& r) {
    json j;
    j["family"] = r.family;
    j["params"] = r.params;
    j["R"] = r.R;
    j["r"] = r.r;
    j["h"] = r.h;
    j["m"] = r.m;
    j["M"] = r.M;
    if (!r.ok()) {
        j["error_class"] = r.error_class;
        j["error_message"] = r.error_message;
        return j;
    }
    j["error_class"] = nullptr;
    j["sup_du"] = r.sup_du;
    j["d2u0"] = r.d2u0;
    j["s_R"] = r.s_R;
    j["s_r"] = r.s_r;
    j["case"] = std::string(1, r.case_label);
    j["eta_lambda1"] = r.eta_lambda1;
    j["threshold"] = r.threshold;
    j["case_a_margin"] = optional_number(r.case_a_margin);
    j["eta_lambda_ratio"] = r.eta_lambda_ratio;
    j["c1_empirical"] = r.c1_empirical;
    j["log_c1_empirical"] = number_or_null(r.log_c1_empirical);
    j["sup_du_half"] = r.sup_du_half;
    j["osc_u"] = r.osc_u;
    j["iterations"] = r.iterations;
    j["residual_norm"] = r.residual_norm;
    j["convexity_margin"] = r.convexity_margin;
    j["error_vs_exact"] = optional_number(r.error_vs_exact);
    j["cp_residual"] = optional_number(r.cp_residual);
    j["certificate_invariants"] = r.certificate_invariants;
    j["boundary_band_ratio"] = r.boundary_band_ratio;
    j["degenerate_fraction"] = r.degenerate_fraction;
    return j;
}

}  // namespace

std::string summary_json(std::span<const SweepRecord> records, std::span<const ConstantFit> fits,
                         std::span<const InvariantResult> invariants) {
    json j;
    j["records"] = json::array();
    int failed = 0;
    for (const auto& r : records) {
        j["records"].push_back(record_json(r));
        failed += r.ok() ? 0 : 1;
    }
    j["record_count"] = records.size();
    j["failed_records"] = failed;
    j["fits"] = json::array();
    for (const auto& f : fits) {
        j["fits"].push_back({{"m", f.m},
                             {"M", f.M},
                             {"count", f.count},
                             {"C1", number_or_null(f.c1())},
                             {"log_C1", f.log_c1},
                             {"C2", f.c2},
                             {"C2_r", f.c2_r},
                             {"min_slack", f.min_slack},
                             {"proof_exponent", f.proof_exponent},
                             {"exponent_within_proof", f.exponent_within_proof}});
    }
    j["invariants"] = json::array();
    for (const auto& inv : invariants)
        j["invariants"].push_back({{"name", inv.name}, {"passed", inv.passed}, {"detail", inv.detail}});
    j["all_passed"] = all_passed(invariants);
    return j.dump(2) + "\n";
}

void emit_report(std::span<const SweepRecord> records, std::span<const ConstantFit> fits,
                 std::span<const InvariantResult> invariants, const fs::path& csv_path, const fs::path& json_path) {
    if (records.empty()) throw IoError("no records to write");
    write_file_atomic(csv_path, records_csv(records));
    write_file_atomic(json_path, summary_json(records, fits, invariants));
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

double to_double(const std::string& s, const std::string& column, int line) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("line " + std::to_string(line) + ": bad number '" + s + "' in column " + column);
    }
}

}  // namespace

std::vector<SweepRecord> read_records_csv(const fs::path& file) {
    std::istringstream in(read_file(file));
    std::string line;
    if (!std::getline(in, line)) throw ConfigError(file.string() + ": empty records file");
    if (split_csv_line(line) != csv_columns()) throw ConfigError(file.string() + ": unexpected header");

    std::vector<SweepRecord> out;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != csv_columns().size())
            throw ConfigError("line " + std::to_string(lineno) + ": expected " +
                              std::to_string(csv_columns().size()) + " cells");
        std::map<std::string, std::string> c;
        for (std::size_t i = 0; i < cells.size(); ++i) c[csv_columns()[i]] = cells[i];
        auto num = [&](const std::string& col) { return to_double(c.at(col), col, lineno); };
        auto opt = [&](const std::string& col) -> std::optional<double> {
            if (c.at(col).empty()) return std::nullopt;
            return num(col);
        };

        SweepRecord r;
        r.family = c.at("family");
        r.params = c.at("params");
        r.R = num("R");
        r.r = num("r");
        r.h = num("h");
        r.m = num("m");
        r.M = num("M");
        r.error_class = c.at("error_class");
        if (r.ok()) {
            r.sup_du = num("sup_du");
            r.d2u0 = num("d2u0");
            r.s_R = num("s_R");
            r.s_r = num("s_r");
            if (c.at("case").size() != 1) throw ConfigError("line " + std::to_string(lineno) + ": bad case label");
            r.case_label = c.at("case")[0];
            r.eta_lambda1 = num("eta_lambda1");
            r.threshold = num("threshold");
            r.case_a_margin = opt("case_a_margin");
            r.eta_lambda_ratio = num("eta_lambda_ratio");
            r.c1_empirical = num("c1_empirical");
            r.log_c1_empirical = num("log_c1_empirical");
            r.sup_du_half = num("sup_du_half");
            r.osc_u = num("osc_u");
            r.iterations = static_cast<int>(num("iterations"));
            r.residual_norm = num("residual_norm");
            r.convexity_margin = num("convexity_margin");
            r.error_vs_exact = opt("error_vs_exact");
            r.cp_residual = opt("cp_residual");
        }
        out.push_back(std::move(r));
    }
    return out;
}

void write_file_atomic(const fs::path& file, const std::string& content) {
    std::error_code ec;
    if (file.has_parent_path()) fs::create_directories(file.parent_path(), ec);
    const fs::path tmp = file.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
        out << content;
        out.flush();
        if (!out) throw IoError("write to " + tmp.string() + " failed");
    }
    fs::rename(tmp, file, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw IoError("cannot move " + tmp.string() + " to " + file.string());
    }
}

std::string read_file(const fs::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw IoError("cannot read " + file.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// ---------------------------------------------------------------------------
// Single runs

ProblemFile parse_problem(const std::string& json_text) {
    const json j = parse_json(json_text, "problem");
    if (!j.is_object()) throw ConfigError("problem must be a JSON object");
    check_keys(j, {"family", "params", "R", "h", "tol"}, "problem");
    ProblemFile p;
    p.family.family = family_of(j);
    const auto& keys = family_keys(p.family.family);
    if (j.contains("params")) {
        const json& params = j.at("params");
        if (!params.is_object()) throw ConfigError("params must be an object");
        for (auto it = params.begin(); it != params.end(); ++it) {
            if (std::find(keys.begin(), keys.end(), it.key()) == keys.end())
                throw ConfigError("parameter '" + it.key() + "' does not apply to " + p.family.id());
            param_slot(p.family, it.key()) = as_number(it.value(), it.key());
        }
    }
    if (j.contains("R")) p.R = as_number(j.at("R"), "R");
    if (!(p.R > 0.0)) throw ConfigError("R must be positive");
    if (j.contains("h")) p.h = as_number(j.at("h"), "h");
    cells_for(p.R, p.h);
    if (j.contains("tol")) {
        p.tol = as_number(j.at("tol"), "tol");
        if (!(*p.tol > 0.0)) throw ConfigError("tol must be positive");
    }
    return p;
}

std::string problem_json(const ProblemFile& p) {
    json j;
    j["family"] = p.family.id();
    json params = json::object();
    for (const auto& key : family_keys(p.family.family)) {
        auto copy = p.family;
        params[key] = param_slot(copy, key);
    }
    j["params"] = params;
    j["R"] = p.R;
    j["h"] = p.h;
    if (p.tol) j["tol"] = *p.tol;
    return j.dump(2) + "\n";
}

std::string run_result_json(const RunResult& r) {
    json j;
    j["residual_norm"] = r.residual_norm;
    j["convexity_margin"] = r.convexity_margin;
    j["error_vs_exact"] = optional_number(r.error_vs_exact);
    j["iterations"] = r.iterations;
    return j.dump(2) + "\n";
}

std::string field_csv(const solver::SolutionField& sol) {
    std::string out = "x1,x2,u,u1,u2,u11,u12,u22\n";
    for (int node = 0; node < sol.grid->node_count(); ++node) {
        const auto k = static_cast<std::size_t>(node);
        const solver::Vec2 x = sol.grid->position(node);
        const double vals[] = {x(0), x(1), sol.u[k], sol.du[k](0), sol.du[k](1),
                               sol.hess[k](0, 0), sol.hess[k](0, 1), sol.hess[k](1, 1)};
        for (std::size_t i = 0; i < std::size(vals); ++i) out += (i ? "," : "") + fmt(vals[i], "%.17g");
        out += '\n';
    }
    return out;
}

void write_run_dir(const fs::path& dir, const ProblemFile& problem, const solver::SolutionField& sol,
                   const RunResult& result) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string());
    write_file_atomic(dir / "problem.json", problem_json(problem));
    write_file_atomic(dir / "field.csv", field_csv(sol));
    write_file_atomic(dir / "result.json", run_result_json(result));
}

LoadedRun load_run_dir(const fs::path& dir) {
    ProblemFile problem = parse_problem(read_file(dir / "problem.json"));
    auto grid = solver::DiscGrid::from_spacing(problem.R, problem.h);
    solver::ProblemSpec spec = solver::manufacture(problem.family, grid);

    std::istringstream in(read_file(dir / "field.csv"));
    std::string line;
    std::getline(in, line);
    if (line != "x1,x2,u,u1,u2,u11,u12,u22") throw ConfigError("field.csv: unexpected header");
    std::vector<double> u;
    u.reserve(static_cast<std::size_t>(grid->node_count()));
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != 8) throw ConfigError("field.csv line " + std::to_string(lineno) + ": expected 8 cells");
        const int node = static_cast<int>(u.size());
        if (node >= grid->node_count()) throw ConfigError("field.csv has more rows than the grid has nodes");
        const solver::Vec2 x{to_double(cells[0], "x1", lineno), to_double(cells[1], "x2", lineno)};
        if ((x - grid->position(node)).norm() > 1e-12 * problem.R)
            throw ConfigError("field.csv line " + std::to_string(lineno) + ": position does not match the grid");
        u.push_back(to_double(cells[2], "u", lineno));
    }
    if (static_cast<int>(u.size()) != grid->node_count())
        throw ConfigError("field.csv has " + std::to_string(u.size()) + " rows, grid has " +
                          std::to_string(grid->node_count()) + " nodes");

    solver::SolutionField sol = solver::SolutionField::from_values(spec, std::move(u));
    try {
        const json r = json::parse(read_file(dir / "result.json"));
        if (r.contains("iterations") && r.at("iterations").is_number_integer())
            sol.iterations = r.at("iterations").get<int>();
    } catch (const IoError&) {
    } catch (const json::exception&) {
    }
    return LoadedRun{std::move(problem), std::move(spec), std::move(sol)};
}

std::string certificate_json(const aux::CertificateReport& rep) {
    json j;
    j["x0"] = {rep.x0(0), rep.x0(1)};
    j["x0_node"] = rep.x0_node;
    j["x0_interior"] = rep.x0_interior;
    j["x0_degenerate"] = rep.x0_degenerate;
    j["phi_max"] = optional_number(rep.phi_max);
    j["log_phi_max"] = rep.log_phi_max;
    j["eta_at_x0"] = rep.eta_at_x0;
    j["lambda1_at_x0"] = rep.lambda1_at_x0;
    j["case_label"] = std::string(1, rep.case_info.label);
    j["case"] = {{"eta_lambda1", rep.case_info.eta_lambda1},
                 {"threshold", rep.case_info.threshold},
                 {"stage_margin", optional_number(rep.case_info.stage_margin)},
                 {"direct_margin", optional_number(rep.case_info.direct_margin)}};

    json res;
    if (rep.cp_residual) {
        res["cp1"] = (*rep.cp_residual)[0];
        res["cp2"] = (*rep.cp_residual)[1];
    } else {
        res["cp1"] = nullptr;
        res["cp2"] = nullptr;
    }
    res["cp_status"] = rep.cp_status;
    if (rep.eta_checks) {
        res["tau_id"] = rep.eta_checks->tau_id;
        res["eta_d"] = rep.eta_checks->eta_d;
        res["phi_grad"] = rep.eta_checks->phi_grad;
        res["samples"] = rep.eta_checks->samples;
    } else {
        res["tau_id"] = nullptr;
        res["eta_d"] = nullptr;
        res["phi_grad"] = nullptr;
        res["samples"] = 0;
    }
    res["eta_status"] = rep.eta_status;
    j["residuals"] = res;

    j["margins"] = {{"eta_lambda_ratio", rep.margins.eta_lambda_ratio},
                    {"c1_empirical", rep.margins.c1_empirical},
                    {"log_c1_empirical", number_or_null(rep.margins.log_c1_empirical)},
                    {"d2u0", rep.margins.d2u0}};
    j["sups"] = {{"du", rep.sups.du}, {"grad_f", rep.sups.grad_f}};
    j["degenerate_fraction"] = rep.degenerate_fraction;
    j["degenerate_field"] = rep.degenerate_field;
    const auto& inv = rep.invariants;
    j["invariants"] = {{"eta_bounds", inv.eta_bounds},
                       {"enclosure", inv.enclosure},
                       {"sign_invariance", inv.sign_invariance},
                       {"rotation_defect", inv.rotation_defect},
                       {"rotation_invariance", inv.rotation_invariance},
                       {"phi_positive", inv.phi_positive},
                       {"boundary_band_ratio", inv.boundary_band_ratio},
                       {"all", inv.all()}};
    j["overrides"] = rep.overrides;
    return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------

std::string eigcheck_json(const EigCheckResult& r) {
    json j;
    j["n"] = r.n;
    j["draws"] = r.draws;
    j["max_rel_err_first"] = r.max_rel_err_first;
    j["max_rel_err_second"] = r.max_rel_err_second;
    j["failures"] = r.failures;
    j["passed"] = r.failures.empty();
    return j.dump(2) + "\n";
}

}  // namespace ma2::sweep
