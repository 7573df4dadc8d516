#pragma once

// CSV datasets, scenario config files and result writers.

#include <Eigen/Dense>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "rakecal/cohort.hpp"
#include "rakecal/design_bootstrap.hpp"
#include "rakecal/errors.hpp"
#include "rakecal/simulation.hpp"

namespace rakecal {

inline constexpr std::string_view kVersion = "1.0.0";

// ---------------------------------------------------------------- CSV ----

namespace detail {

inline std::string trim(std::string_view s) {
    std::size_t a = 0;
    std::size_t b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return std::string(s.substr(a, b - a));
}

inline std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

/// Reads one RFC 4180 record (quoted fields may span lines). Returns false
/// at end of input.
inline bool read_csv_record(std::istream& in, std::vector<std::string>& fields, std::size_t& line) {
    fields.clear();
    std::string field;
    bool quoted = false;
    bool any = false;
    char ch;
    while (in.get(ch)) {
        any = true;
        if (quoted) {
            if (ch == '"') {
                if (in.peek() == '"') {
                    in.get(ch);
                    field.push_back('"');
                } else {
                    quoted = false;
                }
            } else {
                if (ch == '\n') ++line;
                field.push_back(ch);
            }
            continue;
        }
        if (ch == '"') {
            quoted = true;
        } else if (ch == ',') {
            fields.push_back(std::move(field));
            field.clear();
        } else if (ch == '\n') {
            ++line;
            fields.push_back(std::move(field));
            return true;
        } else if (ch != '\r') {
            field.push_back(ch);
        }
    }
    if (quoted) fail(ErrorCode::ParseError, "line " + std::to_string(line) + ": unterminated quoted field");
    if (!any) return false;
    fields.push_back(std::move(field));
    return true;
}

inline bool is_missing(const std::string& cell) {
    const auto t = trim(cell);
    return t.empty() || t == "NA";
}

inline double parse_double(const std::string& text, bool* ok) {
    const auto t = trim(text);
    if (t.empty()) {
        *ok = false;
        return 0.0;
    }
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(t, &used);
    } catch (const std::exception&) {
        *ok = false;
        return 0.0;
    }
    *ok = used == t.size() && std::isfinite(v);
    return v;
}

inline std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

/// Shortest text that reads back to the same double.
inline std::string format_double(double v) {
    if (std::isnan(v)) return "";
    char buf[32];
    for (int precision = 15; precision <= 17; ++precision) {
        std::snprintf(buf, sizeof buf, "%.*g", precision, v);
        if (std::strtod(buf, nullptr) == v) break;
    }
    return buf;
}

inline std::string format_fixed(double v, int digits) {
    if (std::isnan(v)) return "";
    std::ostringstream os;
    os << std::fixed << std::setprecision(digits) << v;
    return os.str();
}

}  // namespace detail

/// A two-phase analysis file: error-prone data for everyone, validated
/// columns where randomized is true.
struct AnalysisDataset {
    std::vector<std::string> ids;
    std::vector<std::string> x_names;  // suffixes of x_star columns ("" for a lone x_star)
    std::vector<std::string> z_names;
    CohortData cohort;
    TwoPhaseDesign design;
    bool pi_inferred = false;  // no pi column: SRS probability m/n attached

    std::vector<std::string> term_names() const {
        std::vector<std::string> terms;
        for (const auto& s : x_names) terms.push_back(s.empty() ? "x" : "x_" + s);
        for (const auto& s : z_names) terms.push_back(s.empty() ? "z" : "z_" + s);
        return terms;
    }
};

namespace detail {

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> lines;  // source line of each row

    std::optional<std::size_t> column(const std::string& name) const {
        for (std::size_t j = 0; j < header.size(); ++j)
            if (header[j] == name) return j;
        return std::nullopt;
    }
};

inline CsvTable read_csv(std::istream& in) {
    CsvTable t;
    std::size_t line = 1;
    std::vector<std::string> fields;
    if (!read_csv_record(in, fields, line)) fail(ErrorCode::EmptyDataset, "file is empty");
    for (auto& f : fields) t.header.push_back(trim(f));
    if (!t.header.empty() && t.header[0].rfind("\xEF\xBB\xBF", 0) == 0) t.header[0].erase(0, 3);
    for (std::size_t i = 0; i < t.header.size(); ++i)
        for (std::size_t j = i + 1; j < t.header.size(); ++j)
            if (t.header[i] == t.header[j]) fail(ErrorCode::SchemaError, "duplicate column '" + t.header[i] + "'");
    while (true) {
        const std::size_t start = line;
        if (!read_csv_record(in, fields, line)) break;
        if (fields.size() == 1 && trim(fields[0]).empty()) continue;  // blank line
        if (fields.size() != t.header.size()) {
            fail(ErrorCode::ParseError, "line " + std::to_string(start) + ": expected " + std::to_string(t.header.size()) +
                                            " fields, found " + std::to_string(fields.size()));
        }
        t.rows.push_back(fields);
        t.lines.push_back(start);
    }
    if (t.rows.empty()) fail(ErrorCode::EmptyDataset, "no data rows");
    return t;
}

inline std::string cell_location(const CsvTable& t, std::size_t r, const std::string& col) {
    return "line " + std::to_string(t.lines[r]) + ", column '" + col + "'";
}

inline double require_number(const CsvTable& t, std::size_t r, std::size_t j) {
    const auto& cell = t.rows[r][j];
    if (is_missing(cell)) fail(ErrorCode::ParseError, cell_location(t, r, t.header[j]) + ": missing value");
    bool ok = false;
    const double v = parse_double(cell, &ok);
    if (!ok) fail(ErrorCode::ParseError, cell_location(t, r, t.header[j]) + ": '" + trim(cell) + "' is not a finite number");
    return v;
}

inline int require_indicator(const CsvTable& t, std::size_t r, std::size_t j) {
    const auto text = lower(trim(t.rows[r][j]));
    if (text == "1" || text == "true") return 1;
    if (text == "0" || text == "false") return 0;
    fail(ErrorCode::ParseError, cell_location(t, r, t.header[j]) + ": expected 0/1 or TRUE/FALSE, found '" +
                                    trim(t.rows[r][j]) + "'");
}

inline std::size_t require_column(const CsvTable& t, const std::string& name) {
    const auto j = t.column(name);
    if (!j) fail(ErrorCode::SchemaError, "required column '" + name + "' is missing");
    return *j;
}

/// Columns named `stem` or `stem_<suffix>`; returns the suffixes in header order.
inline std::vector<std::string> column_family(const CsvTable& t, const std::string& stem) {
    std::vector<std::string> out;
    for (const auto& h : t.header) {
        if (h == stem) out.emplace_back();
        else if (h.rfind(stem + "_", 0) == 0) out.push_back(h.substr(stem.size() + 1));
    }
    return out;
}

}  // namespace detail

/// Parses a dataset. Missing values (empty or NA) are accepted only in the
/// validated columns of rows with randomized = false.
inline AnalysisDataset parse_dataset(std::istream& in) {
    const auto t = detail::read_csv(in);
    AnalysisDataset ds;

    const auto col_time_star = detail::require_column(t, "time_star");
    const auto col_delta_star = detail::require_column(t, "delta_star");
    const auto col_r = detail::require_column(t, "randomized");
    const auto col_time = detail::require_column(t, "time");
    const auto col_delta = detail::require_column(t, "delta");
    const auto col_id = t.column("id");
    const auto col_pi = t.column("pi");
    const auto col_omega = t.column("total_y_err");

    ds.x_names = detail::column_family(t, "x_star");
    if (ds.x_names.empty()) fail(ErrorCode::SchemaError, "required column 'x_star' is missing");
    ds.z_names = detail::column_family(t, "z");
    std::vector<std::size_t> col_xs, col_x, col_z;
    for (const auto& s : ds.x_names) {
        col_xs.push_back(detail::require_column(t, s.empty() ? "x_star" : "x_star_" + s));
        col_x.push_back(detail::require_column(t, s.empty() ? "x" : "x_" + s));
    }
    for (const auto& s : ds.z_names) col_z.push_back(detail::require_column(t, s.empty() ? "z" : "z_" + s));

    const auto n = static_cast<Eigen::Index>(t.rows.size());
    const auto p = static_cast<Eigen::Index>(col_xs.size());
    const auto q = static_cast<Eigen::Index>(col_z.size());
    const double nan = std::numeric_limits<double>::quiet_NaN();
    auto& c = ds.cohort;
    c.time_star.resize(n);
    c.event_star.resize(n);
    c.x_star.resize(n, p);
    c.z.resize(n, q);
    c.time = Vector::Constant(n, nan);
    c.event = IntVector::Zero(n);
    c.x = Matrix::Constant(n, p, nan);
    c.has_truth.assign(static_cast<std::size_t>(n), 0);
    if (col_omega) c.omega = Vector::Constant(n, nan);
    ds.design.selected.assign(static_cast<std::size_t>(n), 0);
    ds.design.pi.resize(n);

    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto i = static_cast<Eigen::Index>(r);
        ds.ids.push_back(col_id ? detail::trim(t.rows[r][*col_id]) : std::to_string(r + 1));
        c.time_star(i) = detail::require_number(t, r, col_time_star);
        if (c.time_star(i) < 0.0) fail(ErrorCode::ParseError, detail::cell_location(t, r, "time_star") + ": negative time");
        c.event_star(i) = detail::require_indicator(t, r, col_delta_star);
        for (Eigen::Index j = 0; j < p; ++j) c.x_star(i, j) = detail::require_number(t, r, col_xs[static_cast<std::size_t>(j)]);
        for (Eigen::Index j = 0; j < q; ++j) c.z(i, j) = detail::require_number(t, r, col_z[static_cast<std::size_t>(j)]);
        const int validated = detail::require_indicator(t, r, col_r);
        ds.design.selected[r] = static_cast<unsigned char>(validated);
        c.has_truth[r] = static_cast<unsigned char>(validated);
        if (validated) {
            c.time(i) = detail::require_number(t, r, col_time);
            if (c.time(i) < 0.0) fail(ErrorCode::ParseError, detail::cell_location(t, r, "time") + ": negative time");
            c.event(i) = detail::require_indicator(t, r, col_delta);
            for (Eigen::Index j = 0; j < p; ++j) c.x(i, j) = detail::require_number(t, r, col_x[static_cast<std::size_t>(j)]);
            if (col_omega && !detail::is_missing(t.rows[r][*col_omega])) {
                (*c.omega)(i) = detail::require_number(t, r, *col_omega);
            }
        }
        if (col_pi) {
            const double pi = detail::require_number(t, r, *col_pi);
            if (!(pi > 0.0 && pi <= 1.0)) fail(ErrorCode::ParseError, detail::cell_location(t, r, "pi") + ": must lie in (0, 1]");
            ds.design.pi(i) = pi;
        }
    }
    if (c.omega) {
        // Rows lacking an explicit omega fall back to time_star - time.
        for (Eigen::Index i = 0; i < n; ++i)
            if (c.has_truth[static_cast<std::size_t>(i)] && std::isnan((*c.omega)(i))) (*c.omega)(i) = c.time_star(i) - c.time(i);
    }
    const Eigen::Index m = ds.design.n_selected();
    if (m == 0) fail(ErrorCode::SchemaError, "no rows have randomized = true");
    if (!col_pi) {
        ds.design.pi.setConstant(static_cast<double>(m) / static_cast<double>(n));
        ds.pi_inferred = true;
    }
    c.validate();
    ds.design.validate(c);
    return ds;
}

inline AnalysisDataset load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::SchemaError, "cannot open dataset '" + path + "'");
    try {
        return parse_dataset(in);
    } catch (const Error& e) {
        throw Error(e.code(), path + ": " + e.message());
    }
}

/// Writes a cohort in the dataset schema (validated columns NA elsewhere).
inline void write_dataset(std::ostream& out, const CohortData& c, const TwoPhaseDesign& design) {
    out << "id,time_star,delta_star";
    for (Eigen::Index j = 0; j < c.p(); ++j) out << (c.p() == 1 ? ",x_star" : ",x_star_" + std::to_string(j + 1));
    for (Eigen::Index j = 0; j < c.q(); ++j) out << (c.q() == 1 ? ",z" : ",z_" + std::to_string(j + 1));
    out << ",randomized,pi,time,delta";
    for (Eigen::Index j = 0; j < c.p(); ++j) out << (c.p() == 1 ? ",x" : ",x_" + std::to_string(j + 1));
    out << ",total_y_err\n";
    for (Eigen::Index i = 0; i < c.n(); ++i) {
        const bool v = design.selected[static_cast<std::size_t>(i)] != 0;
        out << i + 1 << ',' << detail::format_double(c.time_star(i)) << ',' << c.event_star(i);
        for (Eigen::Index j = 0; j < c.p(); ++j) out << ',' << detail::format_double(c.x_star(i, j));
        for (Eigen::Index j = 0; j < c.q(); ++j) out << ',' << detail::format_double(c.z(i, j));
        out << ',' << (v ? "TRUE" : "FALSE") << ',' << detail::format_double(design.pi(i));
        if (v) {
            out << ',' << detail::format_double(c.time(i)) << ',' << c.event(i);
            for (Eigen::Index j = 0; j < c.p(); ++j) out << ',' << detail::format_double(c.x(i, j));
            out << ',' << detail::format_double(c.omega_at(i)) << '\n';
        } else {
            out << ",NA,NA";
            for (Eigen::Index j = 0; j < c.p(); ++j) out << ",NA";
            out << ",NA\n";
        }
    }
}

// ------------------------------------------------------ scenario files ----

namespace detail {

/// Number, or log(number) for log hazard ratios.
inline double parse_config_number(const std::string& raw, const std::string& key) {
    const auto text = trim(raw);
    bool ok = false;
    if (text.rfind("log(", 0) == 0 && text.size() > 5 && text.back() == ')') {
        const double v = parse_double(text.substr(4, text.size() - 5), &ok);
        if (ok && v > 0.0) return std::log(v);
    } else {
        const double v = parse_double(text, &ok);
        if (ok) return v;
    }
    fail(ErrorCode::InvalidConfig, "key '" + key + "': '" + text + "' is not a number");
}

inline std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

inline long long parse_config_int(const std::string& raw, const std::string& key) {
    const double v = parse_config_number(raw, key);
    if (v != std::floor(v) || std::abs(v) > 9e15) fail(ErrorCode::InvalidConfig, "key '" + key + "' must be an integer");
    return static_cast<long long>(v);
}

inline EstimatorKind parse_estimator(const std::string& name) {
    const auto l = lower(name);
    if (l == "true") return EstimatorKind::True;
    if (l == "naive") return EstimatorKind::Naive;
    if (l == "complete" || l == "ht") return EstimatorKind::Complete;
    if (l == "rc") return EstimatorKind::RC;
    if (l == "rsrc") return EstimatorKind::RSRC;
    if (l == "grrc") return EstimatorKind::GRRC;
    if (l == "grn") return EstimatorKind::GRN;
    fail(ErrorCode::InvalidConfig, "unknown estimator '" + name + "'");
}

inline ErrorMode parse_mode(const std::string& name) {
    const auto l = lower(trim(name));
    if (l == "covariate") return ErrorMode::CovariateOnly;
    if (l == "outcome") return ErrorMode::OutcomeOnly;
    if (l == "both") return ErrorMode::Both;
    fail(ErrorCode::InvalidConfig, "error mode must be covariate, outcome or both");
}

inline std::string mode_name(ErrorMode m) {
    switch (m) {
        case ErrorMode::CovariateOnly: return "covariate";
        case ErrorMode::OutcomeOnly: return "outcome";
        case ErrorMode::Both: return "both";
    }
    return "?";
}

}  // namespace detail

/// Applies one `key = value` setting to a scenario.
inline void apply_setting(ScenarioConfig& c, const std::string& raw_key, const std::string& raw_value) {
    const auto key = detail::trim(raw_key);
    const auto value = detail::trim(raw_value);
    const auto num = [&] { return detail::parse_config_number(value, key); };
    const auto integer = [&] { return detail::parse_config_int(value, key); };
    const auto triple = [&](std::array<double, 3>& out, bool allow_auto_first) {
        const auto items = detail::split_list(value);
        if (items.size() != 3) fail(ErrorCode::InvalidConfig, "key '" + key + "' needs three comma-separated values");
        for (std::size_t j = 0; j < 3; ++j) {
            out[j] = allow_auto_first && j == 0 && detail::lower(items[j]) == "auto"
                         ? std::numeric_limits<double>::quiet_NaN()
                         : detail::parse_config_number(items[j], key);
        }
    };

    if (key == "name") c.name = value;
    else if (key == "n") c.n = integer();
    else if (key == "plan") {
        const auto l = detail::lower(value);
        if (l == "srs") c.validation.kind = SamplingPlan::Kind::SRS;
        else if (l == "bernoulli") c.validation.kind = SamplingPlan::Kind::Bernoulli;
        else if (l == "case_cohort") c.validation.kind = SamplingPlan::Kind::CaseCohort;
        else fail(ErrorCode::InvalidConfig, "plan must be srs, bernoulli or case_cohort");
    } else if (key == "m") c.validation.m = integer();
    else if (key == "fraction") c.validation.fraction = num();
    else if (key == "beta_x") c.beta_x = num();
    else if (key == "beta_z") c.beta_z = num();
    else if (key == "lambda0") c.lambda0 = num();
    else if (key == "rho_xz") c.rho_xz = num();
    else if (key == "censor_target") c.censor_target = num();
    else if (key == "censor_lower") {
        if (detail::lower(value) == "tune") c.censor_lower.reset();
        else if (detail::lower(value) == "inf") c.censor_lower = std::numeric_limits<double>::infinity();
        else c.censor_lower = num();
    } else if (key == "censor_length") c.censor_length = num();
    else if (key == "error_dist") {
        const auto l = detail::lower(value);
        if (l == "normal") c.error_dist = ErrorDistribution::Normal;
        else if (l == "gamma_mixture") c.error_dist = ErrorDistribution::GammaMixture;
        else fail(ErrorCode::InvalidConfig, "error_dist must be normal or gamma_mixture");
    } else if (key == "mix_p") c.mix_p = num();
    else if (key == "gamma_shape") c.gamma_shape = num();
    else if (key == "sigma2_eps") c.sigma2_eps = num();
    else if (key == "sigma2_nu") c.sigma2_nu = num();
    else if (key == "sigma_eps_nu") c.sigma_eps_nu = num();
    else if (key == "alpha") triple(c.alpha, false);
    else if (key == "gamma") triple(c.gamma, true);
    else if (key == "sensitivity" || key == "specificity") {
        if (detail::lower(value) == "none") {
            c.misclass.reset();
        } else {
            if (!c.misclass) c.misclass = Misclassification{1.0, 1.0};
            (key == "sensitivity" ? c.misclass->sensitivity : c.misclass->specificity) = num();
        }
    } else if (key == "analysis_mode") c.analysis_mode = detail::parse_mode(value);
    else if (key == "estimators") {
        c.estimators.clear();
        for (const auto& e : detail::split_list(value)) c.estimators.push_back(detail::parse_estimator(e));
    } else if (key == "rsrc_grid") {
        c.rsrc_grid.clear();
        for (const auto& g : detail::split_list(value)) c.rsrc_grid.push_back(detail::parse_config_number(g, key));
    } else if (key == "reps") c.reps = static_cast<int>(integer());
    else if (key == "seed") c.seed = static_cast<std::uint64_t>(integer());
    else if (key == "bootstrap") c.bootstrap = static_cast<int>(integer());
    else if (key == "rsrc_bootstrap") c.rsrc_bootstrap = static_cast<int>(integer());
    else if (key == "threads") c.threads = static_cast<unsigned>(integer());
    else fail(ErrorCode::InvalidConfig, "unknown key '" + key + "'");
}

inline ScenarioConfig parse_scenario(std::istream& in) {
    ScenarioConfig c;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        if (detail::trim(line).empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) fail(ErrorCode::InvalidConfig, "line " + std::to_string(number) + ": expected key = value");
        try {
            apply_setting(c, line.substr(0, eq), line.substr(eq + 1));
        } catch (const Error& e) {
            throw Error(e.code(), "line " + std::to_string(number) + ": " + e.message());
        }
    }
    return c;
}

inline ScenarioConfig load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::InvalidConfig, "cannot open scenario '" + path + "'");
    try {
        return parse_scenario(in);
    } catch (const Error& e) {
        throw Error(e.code(), path + ": " + e.message());
    }
}

/// Canonical `key = value` rendering; parse_scenario reads it back exactly.
inline std::string format_scenario(const ScenarioConfig& c) {
    std::ostringstream os;
    const auto num = [](double v) { return detail::format_double(v); };
    os << "name = " << c.name << '\n' << "n = " << c.n << '\n';
    switch (c.validation.kind) {
        case SamplingPlan::Kind::SRS: os << "plan = srs\nm = " << c.validation.m << '\n'; break;
        case SamplingPlan::Kind::Bernoulli: os << "plan = bernoulli\nfraction = " << num(c.validation.fraction) << '\n'; break;
        case SamplingPlan::Kind::CaseCohort: os << "plan = case_cohort\nfraction = " << num(c.validation.fraction) << '\n'; break;
    }
    os << "beta_x = " << num(c.beta_x) << "\nbeta_z = " << num(c.beta_z) << "\nlambda0 = " << num(c.lambda0)
       << "\nrho_xz = " << num(c.rho_xz) << "\ncensor_target = " << num(c.censor_target) << "\ncensor_lower = "
       << (c.censor_lower ? (std::isinf(*c.censor_lower) ? std::string("inf") : num(*c.censor_lower)) : std::string("tune"))
       << "\ncensor_length = " << num(c.censor_length) << "\nerror_dist = "
       << (c.error_dist == ErrorDistribution::Normal ? "normal" : "gamma_mixture") << "\nmix_p = " << num(c.mix_p)
       << "\ngamma_shape = " << num(c.gamma_shape) << "\nsigma2_eps = " << num(c.sigma2_eps)
       << "\nsigma2_nu = " << num(c.sigma2_nu) << "\nsigma_eps_nu = " << num(c.sigma_eps_nu) << "\nalpha = "
       << num(c.alpha[0]) << ", " << num(c.alpha[1]) << ", " << num(c.alpha[2]) << "\ngamma = "
       << (std::isnan(c.gamma[0]) ? std::string("auto") : num(c.gamma[0])) << ", " << num(c.gamma[1]) << ", "
       << num(c.gamma[2]) << '\n';
    if (c.misclass) {
        os << "sensitivity = " << num(c.misclass->sensitivity) << "\nspecificity = " << num(c.misclass->specificity) << '\n';
    }
    os << "analysis_mode = " << detail::mode_name(c.analysis_mode) << "\nestimators = ";
    for (std::size_t e = 0; e < c.estimators.size(); ++e) os << (e ? ", " : "") << to_string(c.estimators[e]);
    os << "\nrsrc_grid = ";
    for (std::size_t g = 0; g < c.rsrc_grid.size(); ++g) os << (g ? ", " : "") << num(c.rsrc_grid[g]);
    os << "\nreps = " << c.reps << "\nseed = " << c.seed << "\nbootstrap = " << c.bootstrap
       << "\nrsrc_bootstrap = " << c.rsrc_bootstrap << '\n';
    return os.str();
}

// ------------------------------------------------------------ results ----

/// 64-bit FNV-1a, rendered as 16 hex digits.
inline std::string fnv1a_hex(std::string_view text) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

/// Everything that determines a run's output, in a canonical order.
struct RunManifest {
    std::map<std::string, std::string> entries;

    void set(const std::string& key, const std::string& value) { entries[key] = value; }

    std::string text() const {
        std::string out;
        for (const auto& [k, v] : entries) out += k + " = " + v + "\n";
        return out;
    }
    std::string hash() const { return fnv1a_hex(text()); }
};

inline void write_header(std::ostream& out, const RunManifest& manifest, std::uint64_t seed) {
    out << "# rakecal " << kVersion << "\n# manifest " << manifest.hash() << "\n# seed " << seed << '\n';
}

inline void write_scenario_csv(std::ostream& out, const ScenarioResult& r, const RunManifest& manifest,
                               std::uint64_t seed) {
    write_header(out, manifest, seed);
    out << "scenario,method,coefficient,truth,mean,pct_bias,type1_error,power,ase,ese,mse,cp,reps_used,se_reps,failures\n";
    for (const auto& s : r.rows) {
        const bool null = s.truth == 0.0;
        out << detail::csv_escape(r.name) << ',' << to_string(s.kind) << ',' << (s.coef == 0 ? "beta_x" : "beta_z") << ','
            << detail::format_double(s.truth) << ',' << detail::format_double(s.mean) << ','
            << detail::format_double(s.pct_bias) << ',' << (null ? detail::format_double(s.rejection) : "") << ','
            << (null ? "" : detail::format_double(s.rejection)) << ',' << detail::format_double(s.ase) << ','
            << detail::format_double(s.ese) << ',' << detail::format_double(s.mse) << ','
            << detail::format_double(s.cp) << ',' << s.reps_used << ',' << s.se_reps << ',' << s.failures << '\n';
    }
}

/// Aligned table in the layout of the simulation tables; the type 1 error
/// column replaces %Bias when the true coefficient is zero.
inline void write_scenario_table(std::ostream& out, const ScenarioResult& r, const RunManifest& manifest,
                                 std::uint64_t seed) {
    write_header(out, manifest, seed);
    out << "# scenario " << r.name << ", " << r.reps << " replicates, censoring lower endpoint "
        << detail::format_fixed(r.censor_lower, 6) << "\n# CP uses normal-theory intervals\n";
    for (int coef = 0; coef < 2; ++coef) {
        const bool null = !r.rows.empty() && [&] {
            for (const auto& s : r.rows)
                if (s.coef == coef) return s.truth == 0.0;
            return false;
        }();
        out << '\n' << (coef == 0 ? "beta_x" : "beta_z") << '\n';
        out << std::left << std::setw(10) << "Method" << std::right << std::setw(10) << (null ? "Type1" : "%Bias")
            << std::setw(8) << "ASE" << std::setw(8) << "ESE" << std::setw(8) << "MSE" << std::setw(8) << "CP"
            << std::setw(8) << "Fail" << '\n';
        for (const auto& s : r.rows) {
            if (s.coef != coef) continue;
            out << std::left << std::setw(10) << to_string(s.kind) << std::right << std::setw(10)
                << detail::format_fixed(null ? s.rejection : s.pct_bias, 3) << std::setw(8) << detail::format_fixed(s.ase, 3)
                << std::setw(8) << detail::format_fixed(s.ese, 3) << std::setw(8) << detail::format_fixed(s.mse, 3)
                << std::setw(8) << detail::format_fixed(s.cp, 3) << std::setw(8) << s.failures << '\n';
        }
    }
}

/// One coefficient row of a fitted model.
struct CoefficientRow {
    std::string term;
    double estimate = 0.0;
    double se = std::numeric_limits<double>::quiet_NaN();
    double lower = std::numeric_limits<double>::quiet_NaN();  // percentile interval
    double upper = std::numeric_limits<double>::quiet_NaN();
    double normal_lower = std::numeric_limits<double>::quiet_NaN();
    double normal_upper = std::numeric_limits<double>::quiet_NaN();
};

struct FitReport {
    std::string estimator;
    std::string se_source;  // bootstrap, model or none
    std::vector<CoefficientRow> rows;
    int b_requested = 0;
    int b_effective = 0;
};

inline void write_fit_csv(std::ostream& out, const FitReport& f, const RunManifest& manifest, std::uint64_t seed) {
    write_header(out, manifest, seed);
    out << "estimator,term,estimate,hazard_ratio,se,se_source,ci_lower,ci_upper,hr_lower,hr_upper,normal_lower,normal_upper\n";
    const auto ex = [](double v) { return std::isnan(v) ? v : std::exp(v); };
    for (const auto& r : f.rows) {
        out << f.estimator << ',' << detail::csv_escape(r.term) << ',' << detail::format_double(r.estimate) << ','
            << detail::format_double(std::exp(r.estimate)) << ',' << detail::format_double(r.se) << ',' << f.se_source
            << ',' << detail::format_double(r.lower) << ',' << detail::format_double(r.upper) << ','
            << detail::format_double(ex(r.lower)) << ',' << detail::format_double(ex(r.upper)) << ','
            << detail::format_double(r.normal_lower) << ',' << detail::format_double(r.normal_upper) << '\n';
    }
}

inline void write_fit_table(std::ostream& out, const FitReport& f, const RunManifest& manifest, std::uint64_t seed) {
    write_header(out, manifest, seed);
    out << "# estimator " << f.estimator << ", standard errors: " << f.se_source;
    if (f.se_source == "bootstrap") out << " (" << f.b_effective << " of " << f.b_requested << " replicates)";
    out << "\n\n";
    out << std::left << std::setw(12) << "Term" << std::right << std::setw(12) << "Estimate" << std::setw(10) << "HR"
        << std::setw(10) << "SE" << std::setw(22) << "95% CI (HR)" << '\n';
    for (const auto& r : f.rows) {
        std::string ci;
        if (!std::isnan(r.lower)) {
            ci = "(" + detail::format_fixed(std::exp(r.lower), 3) + ", " + detail::format_fixed(std::exp(r.upper), 3) + ")";
        }
        out << std::left << std::setw(12) << r.term << std::right << std::setw(12) << detail::format_fixed(r.estimate, 5)
            << std::setw(10) << detail::format_fixed(std::exp(r.estimate), 4) << std::setw(10)
            << detail::format_fixed(r.se, 4) << std::setw(22) << ci << '\n';
    }
}

}  // namespace rakecal
