#include "sdefit/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace sdefit {

std::string variant_name(EstimatorVariant v) {
    switch (v) {
        case EstimatorVariant::Value: return "value";
        case EstimatorVariant::Time: return "time";
        case EstimatorVariant::ProjectedVector: return "projected_vector";
        case EstimatorVariant::Normalized: return "normalized";
    }
    return "unknown";
}

namespace {

struct TomlValue {
    enum class Kind { Boolean, Number, String, NumberArray, NestedArray };
    Kind kind = Kind::Number;
    bool boolean = false;
    double number = 0.0;
    std::string str;
    std::vector<double> numbers;
    std::vector<std::vector<double>> nested;
    int line = 0;
};

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::string strip_comment(const std::string& s) {
    bool quoted = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '"') quoted = !quoted;
        if (s[i] == '#' && !quoted) return s.substr(0, i);
    }
    return s;
}

double parse_number(const std::string& tok, int line) {
    char* end = nullptr;
    const double v = std::strtod(tok.c_str(), &end);
    if (end == tok.c_str() || *end != '\0') {
        std::ostringstream os;
        os << "line " << line << ": '" << tok << "' is not a number";
        throw ConfigError(os.str());
    }
    return v;
}

std::vector<std::string> split_top_level(const std::string& body, int line) {
    std::vector<std::string> parts;
    int depth = 0;
    std::string cur;
    for (char ch : body) {
        if (ch == '[') ++depth;
        if (ch == ']') --depth;
        if (depth < 0) throw ConfigError("line " + std::to_string(line) + ": unbalanced ']'");
        if (ch == ',' && depth == 0) {
            parts.push_back(trim(cur));
            cur.clear();
        } else {
            cur += ch;
        }
    }
    if (depth != 0) throw ConfigError("line " + std::to_string(line) + ": unbalanced '['");
    const std::string last = trim(cur);
    if (!last.empty()) parts.push_back(last);
    return parts;
}

TomlValue parse_value(const std::string& raw, int line) {
    TomlValue v;
    v.line = line;
    const std::string s = trim(raw);
    if (s.empty()) throw ConfigError("line " + std::to_string(line) + ": missing value");
    if (s.front() == '"') {
        if (s.size() < 2 || s.back() != '"')
            throw ConfigError("line " + std::to_string(line) + ": unterminated string");
        v.kind = TomlValue::Kind::String;
        v.str = s.substr(1, s.size() - 2);
        return v;
    }
    if (s == "true" || s == "false") {
        v.kind = TomlValue::Kind::Boolean;
        v.boolean = (s == "true");
        return v;
    }
    if (s.front() == '[') {
        if (s.back() != ']')
            throw ConfigError("line " + std::to_string(line) + ": unterminated array");
        const std::string body = s.substr(1, s.size() - 2);
        const auto parts = split_top_level(body, line);
        const bool nested = !parts.empty() && !parts.front().empty() && parts.front()[0] == '[';
        if (nested) {
            v.kind = TomlValue::Kind::NestedArray;
            for (const std::string& p : parts) {
                if (p.empty() || p.front() != '[' || p.back() != ']')
                    throw ConfigError("line " + std::to_string(line) +
                                      ": expected an array element");
                std::vector<double> inner;
                for (const std::string& q : split_top_level(p.substr(1, p.size() - 2), line))
                    inner.push_back(parse_number(q, line));
                v.nested.push_back(std::move(inner));
            }
        } else {
            v.kind = TomlValue::Kind::NumberArray;
            for (const std::string& p : parts) v.numbers.push_back(parse_number(p, line));
        }
        return v;
    }
    v.kind = TomlValue::Kind::Number;
    v.number = parse_number(s, line);
    return v;
}

using KeyMap = std::map<std::string, TomlValue>;

KeyMap parse_toml(const std::string& text) {
    KeyMap out;
    std::istringstream is(text);
    std::string line;
    std::string section;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        const std::string s = trim(strip_comment(line));
        if (s.empty()) continue;
        if (s.front() == '[') {
            if (s.back() != ']')
                throw ConfigError("line " + std::to_string(line_no) + ": malformed section");
            section = trim(s.substr(1, s.size() - 2));
            if (section.empty())
                throw ConfigError("line " + std::to_string(line_no) + ": empty section name");
            continue;
        }
        const auto eq = s.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
        const std::string key = trim(s.substr(0, eq));
        if (key.empty())
            throw ConfigError("line " + std::to_string(line_no) + ": empty key");
        const std::string full = section.empty() ? key : section + "." + key;
        if (out.count(full))
            throw ConfigError("line " + std::to_string(line_no) + ": duplicate key '" + full +
                              "'");
        out.emplace(full, parse_value(s.substr(eq + 1), line_no));
    }
    return out;
}

// Typed extraction that records which keys were consumed.
class Extractor {
  public:
    explicit Extractor(KeyMap map) : map_(std::move(map)) {}

    bool has(const std::string& key) const { return map_.count(key) > 0; }

    template <typename F>
    void with(const std::string& key, F&& f) {
        auto it = map_.find(key);
        if (it == map_.end()) return;
        consumed_.insert(key);
        f(it->second);
    }

    double number(const std::string& key, double fallback) {
        double out = fallback;
        with(key, [&](const TomlValue& v) {
            if (v.kind != TomlValue::Kind::Number)
                errors_.push_back(key + " must be a number");
            else
                out = v.number;
        });
        return out;
    }

    std::int64_t integer(const std::string& key, std::int64_t fallback) {
        const double v = number(key, static_cast<double>(fallback));
        if (v != std::floor(v)) errors_.push_back(key + " must be an integer");
        return static_cast<std::int64_t>(v);
    }

    bool boolean(const std::string& key, bool fallback) {
        bool out = fallback;
        with(key, [&](const TomlValue& v) {
            if (v.kind != TomlValue::Kind::Boolean)
                errors_.push_back(key + " must be true or false");
            else
                out = v.boolean;
        });
        return out;
    }

    std::string string(const std::string& key, std::string fallback) {
        std::string out = std::move(fallback);
        with(key, [&](const TomlValue& v) {
            if (v.kind != TomlValue::Kind::String)
                errors_.push_back(key + " must be a quoted string");
            else
                out = v.str;
        });
        return out;
    }

    std::vector<double> number_array(const std::string& key, std::vector<double> fallback) {
        std::vector<double> out = std::move(fallback);
        with(key, [&](const TomlValue& v) {
            if (v.kind != TomlValue::Kind::NumberArray)
                errors_.push_back(key + " must be an array of numbers");
            else
                out = v.numbers;
        });
        return out;
    }

    std::vector<std::string> string_array(const std::string& key,
                                          std::vector<std::string> fallback) {
        // Encoded as a number array of quoted strings is not supported by the
        // tokenizer, so string lists use comma-separated single strings.
        std::vector<std::string> out = std::move(fallback);
        with(key, [&](const TomlValue& v) {
            if (v.kind != TomlValue::Kind::String)
                errors_.push_back(key + " must be a comma-separated string");
            else {
                out.clear();
                std::istringstream is(v.str);
                std::string tok;
                while (std::getline(is, tok, ',')) {
                    const std::string t = trim(tok);
                    if (!t.empty()) out.push_back(t);
                }
            }
        });
        return out;
    }

    std::vector<std::pair<double, double>> pair_array(const std::string& key) {
        std::vector<std::pair<double, double>> out;
        with(key, [&](const TomlValue& v) {
            if (v.kind != TomlValue::Kind::NestedArray) {
                errors_.push_back(key + " must be an array of [lo, hi] pairs");
                return;
            }
            for (const auto& inner : v.nested) {
                if (inner.size() != 2) {
                    errors_.push_back(key + " entries must have exactly two numbers");
                    return;
                }
                out.emplace_back(inner[0], inner[1]);
            }
        });
        return out;
    }

    std::optional<double> optional_number(const std::string& key) {
        std::optional<double> out;
        with(key, [&](const TomlValue& v) {
            if (v.kind != TomlValue::Kind::Number)
                errors_.push_back(key + " must be a number");
            else
                out = v.number;
        });
        return out;
    }

    void finish() {
        for (const auto& [key, value] : map_) {
            if (!consumed_.count(key))
                errors_.push_back("unknown key '" + key + "' (line " +
                                  std::to_string(value.line) + ")");
        }
        if (!errors_.empty()) {
            std::ostringstream os;
            os << "configuration errors:";
            for (const std::string& e : errors_) os << "\n  - " << e;
            throw ConfigError(os.str());
        }
    }

    void error(const std::string& msg) { errors_.push_back(msg); }
    bool has_errors() const { return !errors_.empty(); }
    void raise_if_errors() {
        if (!errors_.empty()) {
            std::ostringstream os;
            os << "configuration errors:";
            for (const std::string& e : errors_) os << "\n  - " << e;
            throw ConfigError(os.str());
        }
    }

  private:
    KeyMap map_;
    std::set<std::string> consumed_;
    std::vector<std::string> errors_;
};

FamilyTag family_from_string(const std::string& s) {
    if (s == "brownian") return FamilyTag::BrownianMotion;
    if (s == "cev") return FamilyTag::CEV;
    if (s == "cir") return FamilyTag::CIR;
    throw ConfigError("model.family must be one of brownian, cev, cir (got '" + s + "')");
}

}  // namespace

ExperimentConfig ExperimentConfig::parse_string(const std::string& text) {
    Extractor ex(parse_toml(text));
    ExperimentConfig c;

    const std::string fam = ex.string("model.family", "cev");
    try {
        c.family = family_from_string(fam);
    } catch (const ConfigError& e) {
        ex.error(e.what());
    }
    c.gamma = ex.number("model.gamma", c.gamma);
    c.alpha = ex.number("model.alpha", c.alpha);
    c.link_lambda = ex.string("model.link_lambda", c.link_lambda);
    c.link_sigma = ex.string("model.link_sigma", c.link_sigma);
    c.state_space = ex.string("model.state_space", c.state_space);

    c.true_theta = ex.number_array("true_theta", {});

    c.grid_points = ex.number_array("grid.points", {});
    c.grid_radius = ex.optional_number("grid.radius");
    c.grid_neighborhoods = ex.pair_array("grid.neighborhoods");

    const std::string variant = ex.string("estimator.variant", "value");
    if (variant == "value") c.variant = EstimatorVariant::Value;
    else if (variant == "time") c.variant = EstimatorVariant::Time;
    else if (variant == "projected_vector") c.variant = EstimatorVariant::ProjectedVector;
    else if (variant == "normalized") c.variant = EstimatorVariant::Normalized;
    else ex.error("estimator.variant must be value, time, projected_vector, or normalized");
    c.estimate_coords = ex.string_array("estimator.estimate", {"lambda"});
    c.init = ex.number_array("estimator.init", {});
    c.gain = ex.string("estimator.gain", c.gain);
    c.gain_sign = ex.number("estimator.sign", c.gain_sign);
    c.k_matrix = ex.number_array("estimator.k_matrix", {});
    c.schedule = ex.string("estimator.schedule", c.schedule);
    c.schedule_a = ex.number("estimator.a", c.schedule_a);
    c.schedule_b = ex.number("estimator.b", c.schedule_b);
    c.schedule_power = ex.number("estimator.power", c.schedule_power);
    c.box = ex.pair_array("estimator.box");
    c.channels = ex.string("estimator.channels", c.channels);
    c.which = ex.string("estimator.which", c.which);
    c.alpha_source = ex.string("estimator.alpha_source", c.alpha_source);
    c.pilot_cycles = ex.integer("estimator.pilot_cycles", c.pilot_cycles);
    c.start_index = ex.integer("estimator.start_index", c.start_index);

    c.cycles = ex.integer("run.cycles", c.cycles);
    c.replications = ex.integer("run.replications", c.replications);
    c.seed = static_cast<std::uint64_t>(ex.integer("run.seed", static_cast<std::int64_t>(c.seed)));
    c.dt = ex.number("run.dt", c.dt);
    c.burn_in = ex.integer("run.burn_in", c.burn_in);
    c.x0 = ex.number("run.x0", c.x0);
    c.bridge_correction = ex.boolean("run.bridge_correction", c.bridge_correction);
    c.crossing = ex.string("run.crossing", c.crossing);
    c.max_path_time = ex.number("run.max_path_time", c.max_path_time);
    c.checkpoint = ex.integer("run.checkpoint", c.checkpoint);

    c.quad.rel_tol = ex.number("quadrature.rel_tol", c.quad.rel_tol);
    c.quad.abs_tol = ex.number("quadrature.abs_tol", c.quad.abs_tol);
    c.quad.max_subdivisions =
        static_cast<int>(ex.integer("quadrature.max_subdivisions", c.quad.max_subdivisions));
    c.quad.mesh_size = static_cast<int>(ex.integer("quadrature.mesh_size", c.quad.mesh_size));

    c.output_directory = ex.string("output.directory", c.output_directory);
    c.trajectory_stride = ex.integer("output.trajectory_stride", c.trajectory_stride);

    c.assert_median_error_below = ex.optional_number("assert.median_error_below");
    c.assert_gbar_norm_below = ex.optional_number("assert.gbar_norm_below");
    c.assert_variance_ratio_low = ex.optional_number("assert.variance_ratio_low");
    c.assert_variance_ratio_high = ex.optional_number("assert.variance_ratio_high");
    c.assert_quantile_tolerance = ex.optional_number("assert.quantile_tolerance");
    c.assert_occupancy_tolerance = ex.optional_number("assert.occupancy_tolerance");
    c.assert_sim_3sigma = ex.boolean("assert.sim_3sigma", c.assert_sim_3sigma);

    ex.finish();
    c.validate();
    return c;
}

ExperimentConfig ExperimentConfig::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open configuration file: " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return parse_string(os.str());
}

namespace {
std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}
std::string fmt_array(const std::vector<double>& v) {
    std::string out = "[";
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ", ";
        out += fmt(v[i]);
    }
    return out + "]";
}
std::string fmt_pairs(const std::vector<std::pair<double, double>>& v) {
    std::string out = "[";
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ", ";
        out += "[" + fmt(v[i].first) + ", " + fmt(v[i].second) + "]";
    }
    return out + "]";
}
std::string join(const std::vector<std::string>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ",";
        out += v[i];
    }
    return out;
}
}  // namespace

std::string ExperimentConfig::serialize() const {
    std::ostringstream os;
    os << "true_theta = " << fmt_array(true_theta) << "\n\n";
    os << "[model]\n";
    os << "family = \"" << family_name(family) << "\"\n";
    os << "gamma = " << fmt(gamma) << "\n";
    os << "alpha = " << fmt(alpha) << "\n";
    os << "link_lambda = \"" << link_lambda << "\"\n";
    os << "link_sigma = \"" << link_sigma << "\"\n";
    os << "state_space = \"" << state_space << "\"\n\n";
    os << "[grid]\n";
    os << "points = " << fmt_array(grid_points) << "\n";
    if (grid_radius) os << "radius = " << fmt(*grid_radius) << "\n";
    if (!grid_neighborhoods.empty())
        os << "neighborhoods = " << fmt_pairs(grid_neighborhoods) << "\n";
    os << "\n[estimator]\n";
    os << "variant = \"" << variant_name(variant) << "\"\n";
    os << "estimate = \"" << join(estimate_coords) << "\"\n";
    os << "init = " << fmt_array(init) << "\n";
    os << "gain = \"" << gain << "\"\n";
    os << "sign = " << fmt(gain_sign) << "\n";
    if (!k_matrix.empty()) os << "k_matrix = " << fmt_array(k_matrix) << "\n";
    os << "schedule = \"" << schedule << "\"\n";
    os << "a = " << fmt(schedule_a) << "\n";
    os << "b = " << fmt(schedule_b) << "\n";
    os << "power = " << fmt(schedule_power) << "\n";
    if (!box.empty()) os << "box = " << fmt_pairs(box) << "\n";
    os << "channels = \"" << channels << "\"\n";
    os << "which = \"" << which << "\"\n";
    os << "alpha_source = \"" << alpha_source << "\"\n";
    os << "pilot_cycles = " << pilot_cycles << "\n";
    os << "start_index = " << start_index << "\n";
    os << "\n[run]\n";
    os << "cycles = " << cycles << "\n";
    os << "replications = " << replications << "\n";
    os << "seed = " << seed << "\n";
    os << "dt = " << fmt(dt) << "\n";
    os << "burn_in = " << burn_in << "\n";
    os << "x0 = " << fmt(x0) << "\n";
    os << "bridge_correction = " << (bridge_correction ? "true" : "false") << "\n";
    os << "crossing = \"" << crossing << "\"\n";
    os << "max_path_time = " << fmt(max_path_time) << "\n";
    os << "checkpoint = " << checkpoint << "\n";
    os << "\n[quadrature]\n";
    os << "rel_tol = " << fmt(quad.rel_tol) << "\n";
    os << "abs_tol = " << fmt(quad.abs_tol) << "\n";
    os << "max_subdivisions = " << quad.max_subdivisions << "\n";
    os << "mesh_size = " << quad.mesh_size << "\n";
    os << "\n[output]\n";
    os << "directory = \"" << output_directory << "\"\n";
    os << "trajectory_stride = " << trajectory_stride << "\n";
    bool any_assert = assert_median_error_below || assert_gbar_norm_below ||
                      assert_variance_ratio_low || assert_variance_ratio_high ||
                      assert_quantile_tolerance || assert_occupancy_tolerance ||
                      assert_sim_3sigma;
    if (any_assert) {
        os << "\n[assert]\n";
        if (assert_median_error_below)
            os << "median_error_below = " << fmt(*assert_median_error_below) << "\n";
        if (assert_gbar_norm_below)
            os << "gbar_norm_below = " << fmt(*assert_gbar_norm_below) << "\n";
        if (assert_variance_ratio_low)
            os << "variance_ratio_low = " << fmt(*assert_variance_ratio_low) << "\n";
        if (assert_variance_ratio_high)
            os << "variance_ratio_high = " << fmt(*assert_variance_ratio_high) << "\n";
        if (assert_quantile_tolerance)
            os << "quantile_tolerance = " << fmt(*assert_quantile_tolerance) << "\n";
        if (assert_occupancy_tolerance)
            os << "occupancy_tolerance = " << fmt(*assert_occupancy_tolerance) << "\n";
        if (assert_sim_3sigma) os << "sim_3sigma = true\n";
    }
    return os.str();
}

std::size_t ExperimentConfig::coord_index(const std::string& name) const {
    if (family == FamilyTag::BrownianMotion) {
        if (name == "mu") return 0;
        if (name == "sigma2") return 1;
        throw ConfigError("brownian coordinates are mu and sigma2 (got '" + name + "')");
    }
    if (name == "lambda") return 0;
    if (name == "sigma") return 1;
    throw ConfigError("coordinates are lambda and sigma (got '" + name + "')");
}

std::vector<std::size_t> ExperimentConfig::free_indices() const {
    std::vector<std::size_t> out;
    for (const std::string& name : estimate_coords) out.push_back(coord_index(name));
    return out;
}

ParametricDiffusion ExperimentConfig::make_model() const {
    switch (family) {
        case FamilyTag::BrownianMotion: return ParametricDiffusion::brownian();
        case FamilyTag::CEV: return ParametricDiffusion::cev(gamma);
        case FamilyTag::CIR: return ParametricDiffusion::cir(alpha);
        case FamilyTag::Custom: break;
    }
    throw ConfigError("custom models are not configurable from files");
}

ObservationGrid ExperimentConfig::make_grid() const {
    if (!grid_neighborhoods.empty()) {
        ObservationGrid g;
        g.points = grid_points;
        g.neighborhoods = grid_neighborhoods;
        return g;
    }
    return ObservationGrid::with_radius(grid_points, grid_radius.value_or(0.0));
}

ParameterBinding ExperimentConfig::make_binding() const {
    return ParameterBinding(true_theta, free_indices());
}

ParameterSpace ExperimentConfig::make_space() const {
    if (box.empty()) return ParameterSpace::unconstrained(estimate_coords.size());
    return ParameterSpace::box(box);
}

StepSchedule ExperimentConfig::make_schedule() const {
    StepSchedule s;
    s.form = (schedule == "a_over_n_pow") ? StepSchedule::Form::AOverNPow
                                          : StepSchedule::Form::AOverNPlusB;
    s.a = schedule_a;
    s.b = schedule_b;
    s.power = schedule_power;
    return s;
}

PathConfig ExperimentConfig::make_path_config() const {
    PathConfig p;
    p.dt = dt;
    p.bridge_correction = bridge_correction;
    p.crossing_refinement = (crossing == "bisection_substep")
                                ? PathConfig::Crossing::BisectionSubstep
                                : PathConfig::Crossing::LinearInterpolation;
    p.max_path_time = max_path_time;
    return p;
}

Theta ExperimentConfig::true_theta_free() const {
    return make_binding().extract(true_theta);
}

void ExperimentConfig::validate() const {
    std::vector<std::string> errors;
    auto check = [&errors](bool ok, const std::string& msg) {
        if (!ok) errors.push_back(msg);
    };

    check(link_lambda == "exp", "model.link_lambda: only the exp link is implemented");
    check(link_sigma == "exp", "model.link_sigma: only the exp link is implemented");
    if (family == FamilyTag::CEV) check(gamma > 1.0, "model.gamma must exceed 1 for cev");
    if (family == FamilyTag::CIR) check(alpha > 0.0, "model.alpha must be positive for cir");
    if (state_space != "auto") {
        const bool positive = (state_space == "(0,inf)");
        const bool real = (state_space == "R" || state_space == "(-inf,inf)");
        check(positive || real, "model.state_space must be auto, (0,inf), or R");
        if (family == FamilyTag::BrownianMotion) check(real, "brownian lives on R");
        if (family == FamilyTag::CEV || family == FamilyTag::CIR)
            check(positive, family_name(family) + " lives on (0,inf)");
    }

    check(true_theta.size() == 2, "true_theta must have two coordinates for built-in families");
    check(!grid_points.empty(), "grid.points must not be empty");
    check(grid_radius.has_value() != !grid_neighborhoods.empty(),
          "grid: specify exactly one of radius or neighborhoods");
    if (!grid_neighborhoods.empty())
        check(grid_neighborhoods.size() == grid_points.size(),
              "grid.neighborhoods must match grid.points");
    if (grid_radius) check(*grid_radius > 0.0, "grid.radius must be positive");

    check(!estimate_coords.empty(), "estimator.estimate must name at least one coordinate");
    std::set<std::string> unique(estimate_coords.begin(), estimate_coords.end());
    check(unique.size() == estimate_coords.size(), "estimator.estimate has duplicates");
    for (const std::string& name : estimate_coords) {
        try {
            (void)coord_index(name);
        } catch (const ConfigError& e) {
            errors.push_back(e.what());
        }
    }
    check(init.size() == estimate_coords.size(),
          "estimator.init must match the number of estimated coordinates");
    check(gain == "constant_sign" || gain == "ratio_sign" || gain == "table_alpha" ||
              gain == "matrix_k",
          "estimator.gain must be constant_sign, ratio_sign, table_alpha, or matrix_k");
    check(schedule == "a_over_n_plus_b" || schedule == "a_over_n_pow",
          "estimator.schedule must be a_over_n_plus_b or a_over_n_pow");
    check(channels == "value" || channels == "time" || channels == "both",
          "estimator.channels must be value, time, or both");
    check(which == "value" || which == "time", "estimator.which must be value or time");
    check(alpha_source == "true_theta" || alpha_source == "pilot",
          "estimator.alpha_source must be true_theta or pilot");
    if (alpha_source == "pilot") check(pilot_cycles > 0, "estimator.pilot_cycles must be > 0");
    check(start_index >= 1, "estimator.start_index must be at least 1");
    if (variant != EstimatorVariant::Normalized)
        check(start_index == 1, "estimator.start_index only applies to the normalized variant");
    if (!box.empty()) {
        check(box.size() == estimate_coords.size(),
              "estimator.box must have one [lo, hi] pair per estimated coordinate");
        for (const auto& [lo, hi] : box)
            check(std::isfinite(lo) && std::isfinite(hi) && lo < hi,
                  "estimator.box entries must be finite with lo < hi");
    }
    if (variant == EstimatorVariant::Normalized)
        check(box.empty(), "the normalized recursion is unconstrained; remove estimator.box");
    if (variant == EstimatorVariant::ProjectedVector) {
        check(gain == "matrix_k", "projected_vector requires estimator.gain = matrix_k");
        check(k_matrix.size() == estimate_coords.size() * estimate_coords.size(),
              "estimator.k_matrix must be a row-major square matrix over the estimated "
              "coordinates");
    }
    if (variant == EstimatorVariant::Value || variant == EstimatorVariant::Time ||
        variant == EstimatorVariant::Normalized)
        check(estimate_coords.size() == 1,
              variant_name(variant) + " estimates a single coordinate");
    check(gain_sign == 1.0 || gain_sign == -1.0, "estimator.sign must be +1 or -1");

    check(cycles >= 1, "run.cycles must be at least 1");
    check(replications >= 1, "run.replications must be at least 1");
    check(dt > 0.0, "run.dt must be positive");
    check(burn_in >= 0 && burn_in < cycles, "run.burn_in must lie in [0, cycles)");
    check(max_path_time > dt, "run.max_path_time must exceed run.dt");
    check(checkpoint == 0 || (checkpoint > 0 && checkpoint <= cycles),
          "run.checkpoint must lie in (0, cycles] or be 0");
    check(crossing == "linear_interpolation" || crossing == "bisection_substep",
          "run.crossing must be linear_interpolation or bisection_substep");
    check(trajectory_stride >= 0, "output.trajectory_stride must be non-negative");

    try {
        quad.validate();
    } catch (const std::exception& e) {
        errors.push_back(std::string("quadrature: ") + e.what());
    }
    try {
        make_schedule().validate();
    } catch (const std::exception& e) {
        errors.push_back(std::string("estimator schedule: ") + e.what());
    }

    // Whole-experiment checks only when the pieces above are individually sane.
    if (errors.empty()) {
        const ParametricDiffusion model = make_model();
        const ObservationGrid grid = make_grid();
        for (const GridViolation& v : validate_grid(model, grid))
            errors.push_back("grid: " + v.message);
        if (family == FamilyTag::CIR) {
            for (std::size_t i = 0; i < grid.size(); ++i) {
                const auto [lo, hi] = grid.neighborhoods[i];
                if (lo <= alpha && alpha <= hi) {
                    std::ostringstream os;
                    os << "grid: neighborhood of " << grid.points[i]
                       << " straddles the reversion level alpha = " << alpha;
                    errors.push_back(os.str());
                }
            }
        }
        if (!model.state_space().contains(x0))
            errors.push_back("run.x0 lies outside the state space");
    }

    if (!errors.empty()) {
        std::ostringstream os;
        os << "configuration errors:";
        for (const std::string& e : errors) os << "\n  - " << e;
        throw ConfigError(os.str());
    }
}

}  // namespace sdefit
