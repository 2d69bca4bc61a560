#pragma once

// Command-line front end: configuration layering (defaults < preset < config
// file < flags), experiment commands and deterministic CSV/JSON emission.
//
// Exit codes: 0 success/pass, 1 check failure, 2 configuration error, 3 I/O error.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "analysis.hpp"
#include "core_model.hpp"
#include "oracles.hpp"
#include "parallel.hpp"
#include "quadrature.hpp"
#include "rng.hpp"
#include "schemes.hpp"

#ifndef CIRMIL_VERSION
#define CIRMIL_VERSION "0.1.0"
#endif

namespace cirmil::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitIo = 3;

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Locale-independent decimal with 17 significant digits.
inline std::string fmt17(double v)
{
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

enum class Format { csv, json };

struct RunConfig {
    std::string command;
    std::optional<double> a;
    std::optional<double> delta;
    double b = 1.0;
    double sigma = 2.0;
    double T = 1.0;
    double x0 = 0.05;
    std::vector<double> p{1.0, 2.0};
    unsigned level_lo = 4;
    unsigned level_hi = 12;
    std::size_t reps = 10000;
    std::uint64_t seed = 1;
    std::string preset;
    std::string out;
    Format format = Format::csv;
    std::string suite;
    Scheme scheme = Scheme::truncated_milstein;

    double resolved_a() const
    {
        if (a && delta)
            throw ConfigError("give either --a or --delta, not both");
        if (delta)
            return 0.25 * *delta * sigma * sigma;
        return a.value_or(0.5);
    }

    CirParams params() const
    {
        try {
            return CirParams(resolved_a(), b, sigma, T);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
    }
};

inline std::pair<unsigned, unsigned> parse_levels(const std::string& text)
{
    const auto dots = text.find("..");
    try {
        std::size_t used = 0;
        if (dots == std::string::npos) {
            const int v = std::stoi(text, &used);
            if (used != text.size() || v < 0)
                throw ConfigError("bad level '" + text + "'");
            return {static_cast<unsigned>(v), static_cast<unsigned>(v)};
        }
        const std::string lo_s = text.substr(0, dots);
        const std::string hi_s = text.substr(dots + 2);
        const int lo = std::stoi(lo_s, &used);
        if (used != lo_s.size())
            throw ConfigError("bad level range '" + text + "'");
        const int hi = std::stoi(hi_s, &used);
        if (used != hi_s.size())
            throw ConfigError("bad level range '" + text + "'");
        if (lo < 0 || hi < lo)
            throw ConfigError("bad level range '" + text + "'");
        return {static_cast<unsigned>(lo), static_cast<unsigned>(hi)};
    } catch (const std::logic_error&) {
        throw ConfigError("bad level range '" + text + "'");
    }
}

inline std::vector<double> parse_list(const std::string& text)
{
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size())
                throw ConfigError("bad number '" + item + "'");
        } catch (const std::logic_error&) {
            throw ConfigError("bad number '" + item + "'");
        }
    }
    if (out.empty())
        throw ConfigError("empty list '" + text + "'");
    return out;
}

/// Values a preset fixes, applied only where neither the config file nor a flag set them.
struct Preset {
    std::map<std::string, std::string> values;
};

inline Preset preset_values(const std::string& name)
{
    if (name.empty())
        return {};
    if (name == "fig2")
        return {{{"sigma", "2"}, {"a", "0.5"}, {"b", "1"}, {"T", "1"}, {"x0", "0.05"}, {"p", "1,2"}, {"levels", "4..12"}}};
    if (name == "bessel1")
        return {{{"sigma", "2"}, {"a", "1"}, {"b", "0"}, {"T", "1"}, {"x0", "0.05"}, {"p", "1"}, {"levels", "4..10"}}};
    throw ConfigError("unknown preset '" + name + "'");
}

struct ParseResult {
    std::optional<RunConfig> config;
    int exit_code = kExitOk;
    std::string message;
};

/// Parses argv. On help or error, `config` is empty and `exit_code`/`message` say why.
inline ParseResult parse_args(int argc, const char* const* argv)
{
    CLI::App app{"Truncated Milstein scheme for CIR processes: simulation and convergence experiments", "cirmil"};
    app.set_config("--config", "", "key = value configuration file");
    app.allow_config_extras(false);

    std::string command;
    std::string a_s, delta_s, b_s, sigma_s, T_s, x0_s, p_s, levels_s, reps_s, seed_s, preset, out, format_s, suite,
        scheme_s;
    app.add_option("command", command, "simulate | convergence | holder | check | oracle-compare")->required();
    auto* o_a = app.add_option("--a", a_s, "drift constant a > 0");
    auto* o_delta = app.add_option("--delta", delta_s, "dimension 4a/sigma^2 (alternative to --a)");
    auto* o_b = app.add_option("--b", b_s, "mean reversion b");
    auto* o_sigma = app.add_option("--sigma", sigma_s, "diffusion coefficient sigma > 0");
    auto* o_T = app.add_option("--T", T_s, "horizon T > 0");
    auto* o_x0 = app.add_option("--x0", x0_s, "initial value x0 >= 0");
    auto* o_p = app.add_option("--p", p_s, "comma-separated norm orders p >= 1");
    auto* o_levels = app.add_option("--levels", levels_s, "level range LO..HI (N = 2^level)");
    app.add_option("--reps", reps_s, "Monte Carlo replications");
    app.add_option("--seed", seed_s, "master seed");
    app.add_option("--preset", preset, "fig2 | bessel1");
    app.add_option("--out", out, "output path (default: stdout)");
    app.add_option("--format", format_s, "csv | json");
    app.add_option("--suite", suite, "a1 | a2 | a3 | lemma-initial | appendix | scaling");
    app.add_option("--scheme", scheme_s, "truncated-milstein | clipped-euler");

    ParseResult result;
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        result.message = app.help();
        return result;
    } catch (const CLI::ParseError& e) {
        result.exit_code = kExitConfig;
        result.message = e.what();
        return result;
    }

    try {
        const Preset pr = preset_values(preset);
        auto layer = [&](CLI::Option* opt, const char* key, std::string& value) {
            if (opt->count() == 0) {
                if (auto it = pr.values.find(key); it != pr.values.end())
                    value = it->second;
            }
        };
        if (o_a->count() == 0 && o_delta->count() == 0)
            layer(o_a, "a", a_s);
        layer(o_b, "b", b_s);
        layer(o_sigma, "sigma", sigma_s);
        layer(o_T, "T", T_s);
        layer(o_x0, "x0", x0_s);
        layer(o_p, "p", p_s);
        layer(o_levels, "levels", levels_s);

        auto number = [](const std::string& s, const char* what) {
            try {
                std::size_t used = 0;
                const double v = std::stod(s, &used);
                if (used != s.size() || !std::isfinite(v))
                    throw ConfigError(std::string("bad value for ") + what + ": '" + s + "'");
                return v;
            } catch (const std::logic_error&) {
                throw ConfigError(std::string("bad value for ") + what + ": '" + s + "'");
            }
        };
        auto integer = [](const std::string& s, const char* what) {
            try {
                std::size_t used = 0;
                const unsigned long long v = std::stoull(s, &used);
                if (used != s.size() || s.front() == '-')
                    throw ConfigError(std::string("bad value for ") + what + ": '" + s + "'");
                return v;
            } catch (const std::logic_error&) {
                throw ConfigError(std::string("bad value for ") + what + ": '" + s + "'");
            }
        };

        RunConfig cfg;
        cfg.command = command;
        if (!a_s.empty())
            cfg.a = number(a_s, "a");
        if (!delta_s.empty())
            cfg.delta = number(delta_s, "delta");
        if (!b_s.empty())
            cfg.b = number(b_s, "b");
        if (!sigma_s.empty())
            cfg.sigma = number(sigma_s, "sigma");
        if (!T_s.empty())
            cfg.T = number(T_s, "T");
        if (!x0_s.empty())
            cfg.x0 = number(x0_s, "x0");
        if (!p_s.empty())
            cfg.p = parse_list(p_s);
        if (!levels_s.empty())
            std::tie(cfg.level_lo, cfg.level_hi) = parse_levels(levels_s);
        if (!reps_s.empty())
            cfg.reps = integer(reps_s, "reps");
        if (!seed_s.empty())
            cfg.seed = integer(seed_s, "seed");
        cfg.preset = preset;
        cfg.out = out;
        if (format_s.empty() || format_s == "csv")
            cfg.format = Format::csv;
        else if (format_s == "json")
            cfg.format = Format::json;
        else
            throw ConfigError("unknown format '" + format_s + "'");
        cfg.suite = suite;
        if (!scheme_s.empty()) {
            try {
                cfg.scheme = parse_scheme(scheme_s);
            } catch (const std::invalid_argument& e) {
                throw ConfigError(e.what());
            }
        }

        static const std::vector<std::string> commands{"simulate", "convergence", "holder", "check", "oracle-compare"};
        if (std::find(commands.begin(), commands.end(), cfg.command) == commands.end())
            throw ConfigError("unknown command '" + cfg.command + "'");
        if (!(cfg.x0 >= 0.0))
            throw ConfigError("x0 must be nonnegative");
        for (double p : cfg.p)
            if (!(p >= 1.0))
                throw ConfigError("p must be >= 1");
        if (cfg.level_hi > 24)
            throw ConfigError("level must be <= 24");
        if (cfg.reps < 2)
            throw ConfigError("reps must be >= 2");
        (void)cfg.params();
        result.config = cfg;
    } catch (const ConfigError& e) {
        result.exit_code = kExitConfig;
        result.message = e.what();
    }
    return result;
}

// ---------------------------------------------------------------------------
// Output

/// Effective configuration echoed into every output. Thread count is
/// deliberately absent so files do not depend on it.
inline nlohmann::ordered_json metadata(const RunConfig& cfg)
{
    const CirParams p = cfg.params();
    nlohmann::ordered_json m;
    m["artifact"] = "cirmil";
    m["version"] = CIRMIL_VERSION;
    m["command"] = cfg.command;
    m["scheme"] = std::string(scheme_name(cfg.scheme));
    m["params"] = {{"a", p.a()}, {"b", p.b()}, {"sigma", p.sigma()}, {"T", p.horizon()}, {"delta", p.delta()}};
    m["x0"] = cfg.x0;
    m["p"] = cfg.p;
    m["levels"] = {cfg.level_lo, cfg.level_hi};
    m["reps"] = cfg.reps;
    m["seed"] = cfg.seed;
    m["preset"] = cfg.preset;
    m["eval_policy"] = std::string(kEvalPolicy);
    if (!cfg.suite.empty())
        m["suite"] = cfg.suite;
    return m;
}

inline std::string csv_header_comment(const RunConfig& cfg)
{
    const nlohmann::ordered_json meta = metadata(cfg);
    std::string out;
    for (const auto& [key, value] : meta.items())
        out += "# " + key + ": " + (value.is_string() ? value.get<std::string>() : value.dump()) + "\n";
    return out;
}

struct Outputs {
    std::string primary;
    std::optional<std::string> summary; // sidecar JSON for CSV outputs
    int exit_code = kExitOk;
};

namespace detail {

inline nlohmann::ordered_json fit_json(const ErrorCurve& c)
{
    nlohmann::ordered_json j;
    j["p"] = c.p;
    try {
        const RateFit fit = fit_rate(c);
        j["rate"] = fit.slope;
        j["intercept"] = fit.intercept;
        j["residual_max"] = fit.residual_max;
        j["levels_used"] = fit.levels_used;
    } catch (const std::invalid_argument& e) {
        j["rate"] = nullptr;
        j["reason"] = e.what();
    }
    return j;
}

inline Outputs curves_output(const RunConfig& cfg, const std::vector<ErrorCurve>& curves)
{
    nlohmann::ordered_json summary;
    summary["metadata"] = metadata(cfg);
    summary["criterion"] = curves.empty() ? "" : std::string(criterion_name(curves.front().criterion));
    summary["fits"] = nlohmann::ordered_json::array();
    for (const ErrorCurve& c : curves)
        summary["fits"].push_back(fit_json(c));

    Outputs out;
    if (cfg.format == Format::json) {
        summary["rows"] = nlohmann::ordered_json::array();
        for (const ErrorCurve& c : curves)
            for (const LevelError& l : c.levels)
                summary["rows"].push_back(
                    {{"p", c.p}, {"N", l.steps}, {"error", l.error}, {"stderr", l.std_error}, {"reps", c.replications}});
        out.primary = summary.dump(2) + "\n";
        return out;
    }
    std::string csv = csv_header_comment(cfg);
    csv += "p,N,error,stderr,reps\n";
    for (const ErrorCurve& c : curves)
        for (const LevelError& l : c.levels)
            csv += fmt17(c.p) + "," + std::to_string(l.steps) + "," + fmt17(l.error) + "," + fmt17(l.std_error) + "," +
                   std::to_string(c.replications) + "\n";
    out.primary = std::move(csv);
    out.summary = summary.dump(2) + "\n";
    return out;
}

inline double relative_deviation(double lhs, double rhs, double magnitude)
{
    const double denom = std::max({std::abs(lhs), std::abs(rhs), magnitude});
    return denom == 0.0 ? 0.0 : std::abs(lhs - rhs) / denom;
}

} // namespace detail

inline Outputs cmd_simulate(const RunConfig& cfg)
{
    const CirParams p = cfg.params();
    Stream stream(cfg.seed, 0, Lane::brownian);
    const BrownianGrid grid = brownian_grid(stream, p.horizon(), cfg.level_hi);
    const GridPath path = simulate(cfg.scheme, p, cfg.x0, grid);
    const std::size_t n = path.steps();
    Outputs out;
    if (cfg.format == Format::json) {
        nlohmann::ordered_json j;
        j["metadata"] = metadata(cfg);
        std::vector<double> ts;
        for (std::size_t k = 0; k <= n; ++k)
            ts.push_back(p.horizon() * static_cast<double>(k) / static_cast<double>(n));
        j["t"] = ts;
        j["y"] = path.values;
        out.primary = j.dump(2) + "\n";
        return out;
    }
    std::string csv = csv_header_comment(cfg);
    csv += "t,y\n";
    for (std::size_t k = 0; k <= n; ++k) {
        const double t = p.horizon() * static_cast<double>(k) / static_cast<double>(n);
        csv += fmt17(t) + "," + fmt17(path.values[k]) + "\n";
    }
    out.primary = std::move(csv);
    return out;
}

inline CurveRequest curve_request(const RunConfig& cfg)
{
    return CurveRequest{cfg.scheme, cfg.level_lo, cfg.level_hi, cfg.p, cfg.reps, cfg.seed};
}

inline Outputs cmd_convergence(const RunConfig& cfg, const Executor& exec)
{
    return detail::curves_output(cfg, consecutive_difference_curves(cfg.params(), cfg.x0, curve_request(cfg), exec));
}

inline Outputs cmd_oracle_compare(const RunConfig& cfg, const Executor& exec)
{
    const CirParams p = cfg.params();
    if (std::abs(p.delta() - 1.0) > 1e-12 || p.b() != 0.0)
        throw ConfigError("oracle-compare requires delta = 1 and b = 0 (try --preset bessel1)");
    return detail::curves_output(cfg, oracle_error_curves(p, cfg.x0, curve_request(cfg), exec));
}

/// Hoelder exponents of x -> X^x_1 - X^0_1 for delta = 1, b = 0; x = 2^-k for k in the level range.
inline Outputs cmd_holder(const RunConfig& cfg, const Executor& exec)
{
    const CirParams p = cfg.params();
    if (std::abs(p.delta() - 1.0) > 1e-12 || p.b() != 0.0)
        throw ConfigError("holder requires delta = 1 and b = 0");
    std::vector<double> xs;
    for (unsigned k = cfg.level_lo; k <= cfg.level_hi; ++k)
        xs.push_back(std::ldexp(1.0, -static_cast<int>(k)));
    nlohmann::ordered_json summary;
    summary["metadata"] = metadata(cfg);
    summary["fits"] = nlohmann::ordered_json::array();
    std::string csv = csv_header_comment(cfg) + "p,x,error,stderr,reps\n";
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (double pn : cfg.p) {
        const std::vector<HolderPoint> pts = holder_curve(pn, xs, cfg.reps, cfg.seed, exec);
        std::vector<double> ys;
        for (const HolderPoint& pt : pts) {
            ys.push_back(pt.distance.value);
            csv += fmt17(pn) + "," + fmt17(pt.x) + "," + fmt17(pt.distance.value) + "," + fmt17(pt.distance.std_error) +
                   "," + std::to_string(cfg.reps) + "\n";
            rows.push_back({{"p", pn},
                            {"x", pt.x},
                            {"error", pt.distance.value},
                            {"stderr", pt.distance.std_error},
                            {"reps", cfg.reps}});
        }
        nlohmann::ordered_json f{{"p", pn}, {"predicted", 0.5 * (1.0 + 1.0 / pn)}};
        try {
            const RateFit fit = fit_loglog(xs, ys);
            f["exponent"] = fit.slope;
            f["residual_max"] = fit.residual_max;
        } catch (const std::invalid_argument& e) {
            f["exponent"] = nullptr;
            f["reason"] = e.what();
        }
        summary["fits"].push_back(f);
    }
    Outputs out;
    if (cfg.format == Format::json) {
        summary["rows"] = rows;
        out.primary = summary.dump(2) + "\n";
    } else {
        out.primary = csv;
        out.summary = summary.dump(2) + "\n";
    }
    return out;
}

// ---------------------------------------------------------------------------
// Check suites. Thresholds are fixed here.

inline constexpr double kScalingTolerance = 1e-12;
inline constexpr double kAppendixTolerance = 1e-8;
inline constexpr double kDerivativeBoundSlack = 1e-12;
inline constexpr double kFiniteDifferenceTolerance = 1e-6;
inline constexpr double kLipschitzExcessTolerance = 1e-6;
inline constexpr double kLocalErrorRatioBound = 10.0;
inline constexpr double kLocalErrorTrendBound = 0.05;
inline constexpr double kMomentLevelSpread = 0.10;
inline constexpr double kMomentLevelSlope = 0.05;
inline constexpr double kInitialValueStdErrors = 4.0;

inline nlohmann::ordered_json suite_scaling(std::size_t samples, std::uint64_t seed)
{
    // Space identity: Theta^{(a,b,sigma)}(x,t,w) = sigma^2/4 Theta^{(delta,b,2)}(4x/sigma^2, t, w).
    // Time identity:  Theta^{(a,b,sigma)}(x,t,w) = Theta^{(Ta,Tb,sqrt(T) sigma)}(x, t/T, w/sqrt(T)).
    // Deviations are relative to the magnitude of the terms entering the step.
    Stream s(seed, 0, Lane::auxiliary);
    double space_max = 0.0;
    double time_max = 0.0;
    for (std::size_t i = 0; i < samples; ++i) {
        const double a = std::exp(4.0 * s.uniform() - 3.0);
        const double b = 6.0 * s.uniform() - 3.0;
        const double sigma = std::exp(3.0 * s.uniform() - 1.5);
        const double T = std::exp(4.0 * s.uniform() - 2.0);
        const double t = T * std::exp(-8.0 * s.uniform());
        const double x = s.uniform() < 0.2 ? 0.0 : std::exp(10.0 * s.uniform() - 7.0);
        const double w = std::sqrt(t) * 2.0 * s.gaussian();
        const CirParams p(a, b, sigma, T);
        const double q = 0.25 * sigma * sigma;
        const double magnitude =
            q * h_tilde(x / q, t, w) + std::abs(a - q - b * x) * t;
        const double direct = theta_mil(p, x, t, w);
        const double space = q * theta_mil(NormalizedParams(p.delta(), b), x / q, t, w);
        const CirParams unit = reduce_time(p).params;
        const double timed = theta_mil(CirParams(unit.a(), unit.b(), unit.sigma(), 1.0), x, t / T, w / std::sqrt(T));
        space_max = std::max(space_max, detail::relative_deviation(direct, space, magnitude));
        time_max = std::max(time_max, detail::relative_deviation(direct, timed, magnitude));
    }
    // Whole paths: simulate under the original parameters against the
    // normalized problem driven by rescaled increments. Near the clip at zero
    // the deviation is taken relative to one step's magnitude.
    double path_max = 0.0;
    const std::size_t paths = std::min<std::size_t>(samples, 50);
    for (std::size_t i = 0; i < paths; ++i) {
        const double sigma = std::exp(3.0 * s.uniform() - 1.5);
        const double a = 0.25 * sigma * sigma * std::exp(4.0 * s.uniform() - 2.5);
        const double b = 6.0 * s.uniform() - 3.0;
        const double T = std::exp(4.0 * s.uniform() - 2.0);
        const double x0 = s.uniform() < 0.2 ? 0.0 : std::exp(6.0 * s.uniform() - 4.0);
        const CirParams p(a, b, sigma, T);
        Stream gs(seed, i + 1, Lane::brownian);
        const BrownianGrid g = brownian_grid(gs, T, 8);
        BrownianGrid unit_grid{1.0, g.level, g.increments};
        for (double& dw : unit_grid.increments)
            dw /= std::sqrt(T);
        const double q = 0.25 * T * sigma * sigma;
        const GridPath direct = simulate(Scheme::truncated_milstein, p, x0, g);
        const GridPath unit = simulate(Scheme::truncated_milstein, CirParams(p.delta(), T * b, 2.0, 1.0), x0 / q,
                                       unit_grid);
        for (std::size_t k = 0; k < direct.values.size(); ++k)
            path_max = std::max(path_max, detail::relative_deviation(direct.values[k], q * unit.values[k],
                                                                     q / static_cast<double>(g.steps())));
    }

    nlohmann::ordered_json j;
    j["samples"] = samples;
    j["paths"] = paths;
    j["max_path_deviation"] = path_max;
    j["max_space_deviation"] = space_max;
    j["max_time_deviation"] = time_max;
    j["tolerance"] = kScalingTolerance;
    j["pass"] = space_max <= kScalingTolerance && time_max <= kScalingTolerance && path_max <= kScalingTolerance;
    return j;
}

inline nlohmann::ordered_json suite_appendix()
{
    double max_f_gap = 0.0;
    for (double x : {0.0, 0.5, 1.0, 2.0, 5.0, 10.0}) {
        const double kink = 1.0 - x;
        const double quad = gauss_expectation(
            [x](double z) {
                const double m = std::max(1.0, x + z);
                return m * m;
            },
            400, std::span<const double>(&kink, 1));
        max_f_gap = std::max(max_f_gap, std::abs(f_closed(x) - quad));
    }
    double max_g_prime = 0.0;
    double max_fd_gap = 0.0;
    for (int i = 0; i < 100; ++i) {
        const double x = std::pow(10.0, 4.0 * i / 99.0);
        max_g_prime = std::max(max_g_prime, g_prime(x));
        const double eps = 1e-5 * x;
        const double fd = (g_of(x + eps) - g_of(x - eps)) / (2.0 * eps);
        max_fd_gap = std::max(max_fd_gap, std::abs(fd - g_prime(x)));
    }
    nlohmann::ordered_json j;
    j["max_f_closed_vs_quadrature"] = max_f_gap;
    j["max_g_prime"] = max_g_prime;
    j["max_finite_difference_gap"] = max_fd_gap;
    j["pass"] = max_f_gap <= kAppendixTolerance && max_g_prime <= 1.0 + kDerivativeBoundSlack &&
                max_fd_gap <= kFiniteDifferenceTolerance;
    return j;
}

inline nlohmann::ordered_json suite_a1(const NormalizedParams& np, Scheme scheme)
{
    const std::vector<double> xs{0.0, 0.01, 0.1, 1.0, 10.0};
    std::vector<std::pair<double, double>> pairs;
    for (double x1 : xs)
        for (double x2 : xs)
            if (x1 < x2)
                pairs.emplace_back(x1, x2);
    std::vector<double> ts;
    for (int k = 0; k <= 10; ++k)
        ts.push_back(std::ldexp(1.0, -k));
    const A1Result r = std::visit([&](const auto& rule) { return check_a1_l1_lipschitz(rule, pairs, ts, 256); },
                                  make_rule(scheme, np));
    // With b <= 0 the sharp constant 1 applies; otherwise the (1 + K t) margin.
    const double excess = np.b() <= 0.0 ? r.max_excess_sharp : r.max_excess;
    nlohmann::ordered_json j;
    j["max_excess"] = r.max_excess;
    j["max_excess_sharp"] = r.max_excess_sharp;
    j["max_excess_h_tilde"] = r.max_excess_h_tilde;
    j["evaluations"] = r.evaluations;
    j["tolerance"] = kLipschitzExcessTolerance;
    j["pass"] = excess <= kLipschitzExcessTolerance && r.max_excess_h_tilde <= kLipschitzExcessTolerance;
    return j;
}

inline nlohmann::ordered_json suite_a2(const NormalizedParams& np, Scheme scheme, std::size_t reps, std::uint64_t seed,
                                       const Executor& exec)
{
    const std::vector<double> xs{0.0, 1.0 / 64.0, 0.25, 1.0, 4.0};
    std::vector<double> ts;
    for (int k = 4; k <= 12; ++k)
        ts.push_back(std::ldexp(1.0, -k));
    const A2Result r = std::visit([&](const auto& rule) { return check_a2_local_error(rule, xs, ts, reps, seed, exec); },
                                  make_rule(scheme, np));
    nlohmann::ordered_json j;
    j["exact_reference"] = r.exact_reference;
    j["max_ratio"] = r.max_ratio;
    j["max_trend"] = r.max_trend;
    j["ratio_bound"] = kLocalErrorRatioBound;
    j["trend_bound"] = kLocalErrorTrendBound;
    nlohmann::ordered_json cells = nlohmann::ordered_json::array();
    for (const A2Cell& c : r.cells)
        cells.push_back({{"x", c.x}, {"t", c.t}, {"error", c.local_error.value}, {"stderr", c.local_error.std_error},
                         {"ratio", c.ratio}});
    j["cells"] = cells;
    j["pass"] = std::isfinite(r.max_ratio) && r.max_ratio <= kLocalErrorRatioBound && r.max_trend <= kLocalErrorTrendBound;
    return j;
}

inline nlohmann::ordered_json suite_a3(const NormalizedParams& np, Scheme scheme, std::size_t reps, std::uint64_t seed,
                                       const Executor& exec)
{
    const std::vector<double> xs{0.0, 1.0, 10.0, 100.0};
    nlohmann::ordered_json j;
    bool pass = true;
    for (double q : {2.0, 4.0}) {
        const A3Result r = std::visit(
            [&](const auto& rule) { return check_a3_boundedness(rule, q, xs, 6, 12, reps, seed, exec); },
            make_rule(scheme, np));
        nlohmann::ordered_json e;
        e["q"] = q;
        e["max_normalized_moment"] = r.max_normalized_moment;
        e["max_level_spread"] = r.max_level_spread;
        e["max_level_slope"] = r.max_level_slope;
        e["max_cross_x_spread"] = r.max_cross_x_spread;
        pass = pass && std::isfinite(r.max_normalized_moment) && r.max_level_spread <= kMomentLevelSpread &&
               r.max_level_slope <= kMomentLevelSlope;
        j["moments"].push_back(e);
    }
    j["level_spread_bound"] = kMomentLevelSpread;
    j["level_slope_bound"] = kMomentLevelSlope;
    j["pass"] = pass;
    return j;
}

inline nlohmann::ordered_json suite_lemma_initial(std::size_t reps, std::uint64_t seed, const Executor& exec)
{
    const double x = 0.5;
    const double y = 0.25;
    const double t = 1.0;
    const Estimate e = lemma_initial_value_check(x, y, t, reps, seed, exec);
    nlohmann::ordered_json j;
    j["x"] = x;
    j["y"] = y;
    j["t"] = t;
    j["estimate"] = e.value;
    j["stderr"] = e.std_error;
    j["expected"] = std::abs(x - y);
    j["pass"] = std::abs(e.value - std::abs(x - y)) <= kInitialValueStdErrors * e.std_error;
    return j;
}

inline Outputs cmd_check(const RunConfig& cfg, const Executor& exec)
{
    const CirParams p = cfg.params();
    const NormalizedParams np(p.delta(), p.horizon() * p.b());
    nlohmann::ordered_json verdict;
    if (cfg.suite == "scaling")
        verdict = suite_scaling(cfg.reps, cfg.seed);
    else if (cfg.suite == "appendix")
        verdict = suite_appendix();
    else if (cfg.suite == "a1")
        verdict = suite_a1(np, cfg.scheme);
    else if (cfg.suite == "a2")
        verdict = suite_a2(np, cfg.scheme, cfg.reps, cfg.seed, exec);
    else if (cfg.suite == "a3")
        verdict = suite_a3(np, cfg.scheme, cfg.reps, cfg.seed, exec);
    else if (cfg.suite == "lemma-initial")
        verdict = suite_lemma_initial(cfg.reps, cfg.seed, exec);
    else
        throw ConfigError("unknown suite '" + cfg.suite + "'");

    nlohmann::ordered_json j;
    j["suite"] = cfg.suite;
    j["pass"] = verdict["pass"];
    j["statistics"] = verdict;
    j["metadata"] = metadata(cfg);
    Outputs out;
    out.primary = j.dump(2) + "\n";
    out.exit_code = verdict["pass"].get<bool>() ? kExitOk : kExitCheckFailed;
    return out;
}

/// Runs the configured command. Throws ConfigError on invalid combinations.
inline Outputs execute(const RunConfig& cfg, const Executor& exec = {})
{
    if (cfg.command == "simulate")
        return cmd_simulate(cfg);
    if (cfg.command == "convergence")
        return cmd_convergence(cfg, exec);
    if (cfg.command == "oracle-compare")
        return cmd_oracle_compare(cfg, exec);
    if (cfg.command == "holder")
        return cmd_holder(cfg, exec);
    if (cfg.command == "check")
        return cmd_check(cfg, exec);
    throw ConfigError("unknown command '" + cfg.command + "'");
}

inline std::string summary_path(const std::string& out)
{
    const auto slash = out.find_last_of('/');
    const auto dot = out.find_last_of('.');
    if (dot != std::string::npos && (slash == std::string::npos || dot > slash))
        return out.substr(0, dot) + ".summary.json";
    return out + ".summary.json";
}

inline void write_file(const std::string& path, const std::string& content)
{
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f)
        throw IoError("cannot open '" + path + "' for writing");
    f << content;
    f.flush();
    if (!f)
        throw IoError("failed writing '" + path + "'");
}

inline int main(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr)
{
    ParseResult parsed = parse_args(argc, argv);
    if (!parsed.config) {
        (parsed.exit_code == kExitOk ? out : err) << parsed.message << (parsed.message.ends_with('\n') ? "" : "\n");
        return parsed.exit_code;
    }
    const RunConfig& cfg = *parsed.config;
    try {
        const Outputs result = execute(cfg, Executor{});
        if (cfg.out.empty()) {
            out << result.primary;
            if (result.summary)
                err << *result.summary;
        } else {
            write_file(cfg.out, result.primary);
            if (result.summary)
                write_file(summary_path(cfg.out), *result.summary);
        }
        return result.exit_code;
    } catch (const ConfigError& e) {
        err << "configuration error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::invalid_argument& e) {
        err << "configuration error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const IoError& e) {
        err << "I/O error: " << e.what() << "\n";
        return kExitIo;
    }
}

} // namespace cirmil::cli
