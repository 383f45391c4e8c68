#pragma once

// Experiment files for the command-line tool. TOML with a fixed set of typed
// keys per section; every diagnostic names the file and line.

#include <toml.hpp>

#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "graphon_spde/graphon_spde.hpp"

namespace gspde::cli {

class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& source, std::size_t line, const std::string& msg)
        : std::runtime_error(source + (line ? ":" + std::to_string(line) : std::string()) + ": " + msg),
          line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

struct RunConfig {
    // [problem]
    std::string kernel = "band:r=0.25";
    std::string interaction = "kuramoto_sine";
    std::string drift = "zero";
    std::string initial = "logistic";
    double T = 1.0;

    // [noise]
    std::string noise = "periodic:s=2,M=4096";

    // [experiment]
    std::string mode = "vary_n";
    std::vector<std::size_t> n_list{16, 32, 64, 128, 256};
    std::size_t n_star = 2048;
    double dt = 1e-3;
    std::vector<double> dt_list{4e-3, 2e-3, 1e-3, 5e-4};
    double dt_star = 1e-5;
    std::size_t n = 256;
    std::size_t n_fine = 0;
    std::size_t trials = 100;
    std::uint64_t seed = 0;
    std::size_t checkpoints = 0;
    bool guard = true;
    std::size_t threads = 0;  // 0: unset, run on one thread

    // [simulate]
    std::size_t sim_n = 64;
    double sim_dt = 1e-3;
    std::size_t sim_n_fine = 0;  // 0: same as sim_n
    std::string record = "final";
    std::size_t stride = 1;
    std::string noise_dump;
    std::string noise_replay;

    // [check]
    std::size_t check_n = 64;
    double check_t = 1.0;
    std::size_t check_trials = 10000;
    std::size_t check_slices = 10000;
    double check_dt = 0.01;

    // [psi]
    std::vector<std::size_t> psi_n_list{16, 32, 64, 128, 256, 512, 1024, 2048, 4096};

    // [kernel_info]
    std::vector<std::size_t> kernel_n_list{16, 32, 64, 128, 256};
    std::size_t resolution_factor = 8;
    std::size_t matrix_n = 0;

    // [output]
    std::string out_dir = "results";
    std::vector<std::string> formats{"csv", "svg"};

    // Provenance for diagnostics.
    std::string source = "<defaults>";
    std::map<std::string, std::size_t> lines;  // "section.key" or "section" -> line

    std::size_t line_of(const std::string& key) const {
        auto it = lines.find(key);
        if (it != lines.end()) return it->second;
        const auto dot = key.find('.');
        if (dot != std::string::npos) {
            it = lines.find(key.substr(0, dot));
            if (it != lines.end()) return it->second;
        }
        return 0;
    }

    [[noreturn]] void fail(const std::string& key, const std::string& msg) const {
        throw ConfigError(source, line_of(key), key + ": " + msg);
    }

    bool wants(std::string_view format) const {
        for (const auto& f : formats)
            if (f == format) return true;
        return false;
    }

    /// The model, with every name resolved. Unknown names are config errors.
    Problem problem() const {
        Problem p;
        auto resolve = [&](const char* key, auto&& fn) {
            try {
                fn();
            } catch (const Error& e) {
                fail(key, e.what());
            }
        };
        resolve("problem.kernel", [&] { p.kernel = parse_graphon(kernel); });
        resolve("problem.interaction", [&] { p.interaction = parse_interaction(interaction); });
        resolve("problem.drift", [&] { p.drift = parse_drift(drift); });
        resolve("problem.initial", [&] { p.initial = parse_initial(initial); });
        resolve("noise.spec", [&] { p.noise = parse_noise(noise); });
        if (!(T > 0.0)) fail("problem.T", "time horizon must be positive");
        p.horizon = T;
        return p;
    }

    ExperimentConfig experiment(StudyMode m) const {
        ExperimentConfig cfg;
        cfg.problem = problem();
        cfg.mode = m;
        cfg.n_list = n_list;
        cfg.n_star = n_star;
        cfg.dt = dt;
        cfg.dt_list = dt_list;
        cfg.dt_star = dt_star;
        cfg.n = n;
        cfg.n_fine = n_fine;
        cfg.trials = trials;
        cfg.seed = seed;
        cfg.checkpoints = checkpoints;
        cfg.guard = guard;
        cfg.threads = effective_threads();
        try {
            cfg.validate();
            if (!cfg.problem.noise.modes().empty()) {
                // Synthesis preconditions, checked before any trial starts.
                IncrementSynthesizer probe(cfg.problem.noise, cfg.synthesis_n(), cfg.synthesis_dt());
            }
        } catch (const Error& e) {
            fail("experiment", e.what());
        }
        return cfg;
    }

    std::size_t effective_threads() const { return threads > 0 ? threads : 1; }
};

namespace detail {

inline std::size_t line_of(const toml::node& node) {
    return static_cast<std::size_t>(node.source().begin.line);
}

class Reader {
public:
    Reader(RunConfig& cfg, std::string key, const toml::node& node)
        : cfg_(cfg), key_(std::move(key)), node_(node) {}

    [[noreturn]] void bad(const std::string& msg) const {
        throw ConfigError(cfg_.source, line_of(node_), key_ + ": " + msg);
    }

    std::string string() const {
        if (auto v = node_.value_exact<std::string>()) return *v;
        bad("expected a string");
    }

    double real() const {
        if (auto v = node_.value_exact<double>()) return *v;
        if (auto v = node_.value_exact<std::int64_t>()) return static_cast<double>(*v);
        bad("expected a number");
    }

    bool boolean() const {
        if (auto v = node_.value_exact<bool>()) return *v;
        bad("expected true or false");
    }

    std::size_t count(std::size_t min = 0) const { return count_of(node_, min); }

    std::uint64_t u64() const {
        if (auto v = node_.value_exact<std::int64_t>()) {
            if (*v < 0) bad("expected a non-negative integer");
            return static_cast<std::uint64_t>(*v);
        }
        // Seeds above 2^63 do not fit a TOML integer; accept them quoted.
        if (auto v = node_.value_exact<std::string>()) {
            try {
                return parse_u64(*v);
            } catch (const Error&) {
            }
        }
        bad("expected a non-negative integer");
    }

    std::vector<std::size_t> counts(std::size_t min = 0) const {
        std::vector<std::size_t> out;
        for (const auto& item : array()) out.push_back(count_of(item, min));
        return out;
    }

    std::vector<double> reals() const {
        std::vector<double> out;
        for (const auto& item : array()) {
            if (auto v = item.value_exact<double>())
                out.push_back(*v);
            else if (auto w = item.value_exact<std::int64_t>())
                out.push_back(static_cast<double>(*w));
            else
                throw ConfigError(cfg_.source, line_of(item), key_ + ": expected a list of numbers");
        }
        return out;
    }

    std::vector<std::string> strings() const {
        std::vector<std::string> out;
        for (const auto& item : array()) {
            if (auto v = item.value_exact<std::string>())
                out.push_back(*v);
            else
                throw ConfigError(cfg_.source, line_of(item), key_ + ": expected a list of strings");
        }
        return out;
    }

private:
    const toml::array& array() const {
        if (const auto* a = node_.as_array()) return *a;
        bad("expected a list");
    }

    std::size_t count_of(const toml::node& node, std::size_t min) const {
        if (auto v = node.value_exact<std::int64_t>()) {
            if (*v < static_cast<std::int64_t>(min))
                throw ConfigError(cfg_.source, line_of(node),
                                  key_ + ": expected an integer >= " + std::to_string(min));
            return static_cast<std::size_t>(*v);
        }
        throw ConfigError(cfg_.source, line_of(node), key_ + ": expected an integer");
    }

    RunConfig& cfg_;
    std::string key_;
    const toml::node& node_;
};

using Setter = std::function<void(RunConfig&, const Reader&)>;

inline const std::map<std::string, std::map<std::string, Setter>>& registry() {
    static const std::map<std::string, std::map<std::string, Setter>> table = {
        {"problem",
         {
             {"kernel", [](RunConfig& c, const Reader& r) { c.kernel = r.string(); }},
             {"interaction", [](RunConfig& c, const Reader& r) { c.interaction = r.string(); }},
             {"drift", [](RunConfig& c, const Reader& r) { c.drift = r.string(); }},
             {"initial", [](RunConfig& c, const Reader& r) { c.initial = r.string(); }},
             {"T", [](RunConfig& c, const Reader& r) { c.T = r.real(); }},
         }},
        {"noise",
         {
             {"spec", [](RunConfig& c, const Reader& r) { c.noise = r.string(); }},
         }},
        {"experiment",
         {
             {"mode",
              [](RunConfig& c, const Reader& r) {
                  c.mode = r.string();
                  if (c.mode != "vary_n" && c.mode != "vary_dt") r.bad("expected \"vary_n\" or \"vary_dt\"");
              }},
             {"n_list", [](RunConfig& c, const Reader& r) { c.n_list = r.counts(1); }},
             {"n_star", [](RunConfig& c, const Reader& r) { c.n_star = r.count(1); }},
             {"dt", [](RunConfig& c, const Reader& r) { c.dt = r.real(); }},
             {"dt_list", [](RunConfig& c, const Reader& r) { c.dt_list = r.reals(); }},
             {"dt_star", [](RunConfig& c, const Reader& r) { c.dt_star = r.real(); }},
             {"n", [](RunConfig& c, const Reader& r) { c.n = r.count(1); }},
             {"n_fine", [](RunConfig& c, const Reader& r) { c.n_fine = r.count(); }},
             {"trials", [](RunConfig& c, const Reader& r) { c.trials = r.count(1); }},
             {"seed", [](RunConfig& c, const Reader& r) { c.seed = r.u64(); }},
             {"checkpoints", [](RunConfig& c, const Reader& r) { c.checkpoints = r.count(); }},
             {"guard", [](RunConfig& c, const Reader& r) { c.guard = r.boolean(); }},
             {"threads", [](RunConfig& c, const Reader& r) { c.threads = r.count(); }},
         }},
        {"simulate",
         {
             {"n", [](RunConfig& c, const Reader& r) { c.sim_n = r.count(1); }},
             {"dt", [](RunConfig& c, const Reader& r) { c.sim_dt = r.real(); }},
             {"n_fine", [](RunConfig& c, const Reader& r) { c.sim_n_fine = r.count(); }},
             {"record",
              [](RunConfig& c, const Reader& r) {
                  c.record = r.string();
                  if (c.record != "final" && c.record != "trajectory")
                      r.bad("expected \"final\" or \"trajectory\"");
              }},
             {"stride", [](RunConfig& c, const Reader& r) { c.stride = r.count(1); }},
             {"noise_dump", [](RunConfig& c, const Reader& r) { c.noise_dump = r.string(); }},
             {"noise_replay", [](RunConfig& c, const Reader& r) { c.noise_replay = r.string(); }},
         }},
        {"check",
         {
             {"n", [](RunConfig& c, const Reader& r) { c.check_n = r.count(1); }},
             {"t", [](RunConfig& c, const Reader& r) { c.check_t = r.real(); }},
             {"trials", [](RunConfig& c, const Reader& r) { c.check_trials = r.count(1000); }},
             {"slices", [](RunConfig& c, const Reader& r) { c.check_slices = r.count(2); }},
             {"dt", [](RunConfig& c, const Reader& r) { c.check_dt = r.real(); }},
         }},
        {"psi",
         {
             {"n_list", [](RunConfig& c, const Reader& r) { c.psi_n_list = r.counts(1); }},
         }},
        {"kernel_info",
         {
             {"n_list", [](RunConfig& c, const Reader& r) { c.kernel_n_list = r.counts(1); }},
             {"resolution_factor", [](RunConfig& c, const Reader& r) { c.resolution_factor = r.count(1); }},
             {"matrix_n", [](RunConfig& c, const Reader& r) { c.matrix_n = r.count(); }},
         }},
        {"output",
         {
             {"dir", [](RunConfig& c, const Reader& r) { c.out_dir = r.string(); }},
             {"formats",
              [](RunConfig& c, const Reader& r) {
                  c.formats = r.strings();
                  for (const auto& f : c.formats)
                      if (f != "csv" && f != "svg") r.bad("unknown format '" + f + "' (csv, svg)");
              }},
         }},
    };
    return table;
}

// [noise] also takes family / s / M instead of a spec string.
inline void read_noise_parts(RunConfig& cfg, const toml::table& sec) {
    const toml::node* family = sec.get("family");
    const toml::node* s = sec.get("s");
    const toml::node* M = sec.get("M");
    if (!family && !s && !M) return;
    if (sec.get("spec"))
        throw ConfigError(cfg.source, line_of(*sec.get("spec")),
                          "noise: give either spec or family/s/M, not both");
    if (!family) throw ConfigError(cfg.source, cfg.line_of("noise"), "noise: family is missing");
    const std::string fam = Reader(cfg, "noise.family", *family).string();
    cfg.lines["noise.spec"] = line_of(*family);
    if (fam == "zero" || fam == "none") {
        cfg.noise = "zero";
        return;
    }
    if (!s || !M)
        throw ConfigError(cfg.source, line_of(*family), "noise: family '" + fam + "' needs s and M");
    const double sv = Reader(cfg, "noise.s", *s).real();
    const std::size_t Mv = Reader(cfg, "noise.M", *M).count(1);
    cfg.noise = fam + ":s=" + format_double(sv) + ",M=" + std::to_string(Mv);
}

}  // namespace detail

inline RunConfig parse_config(std::string_view text, std::string source) {
    RunConfig cfg;
    cfg.source = std::move(source);
    toml::table root;
    try {
        root = toml::parse(text, cfg.source);
    } catch (const toml::parse_error& e) {
        throw ConfigError(cfg.source, static_cast<std::size_t>(e.source().begin.line),
                          std::string(e.description()));
    }
    const auto& reg = detail::registry();
    for (auto&& [name, node] : root) {
        const std::string section(name.str());
        const auto* sec = node.as_table();
        if (!sec)
            throw ConfigError(cfg.source, detail::line_of(node),
                              "'" + section + "' must be a [section]; top-level keys are not allowed");
        auto it = reg.find(section);
        if (it == reg.end())
            throw ConfigError(cfg.source, static_cast<std::size_t>(name.source().begin.line),
                              "unknown section [" + section + "]");
        cfg.lines[section] = static_cast<std::size_t>(name.source().begin.line);
        for (auto&& [kname, knode] : *sec) {
            const std::string key(kname.str());
            const std::string full = section + "." + key;
            if (section == "noise" && (key == "family" || key == "s" || key == "M")) continue;
            auto setter = it->second.find(key);
            if (setter == it->second.end())
                throw ConfigError(cfg.source, detail::line_of(knode),
                                  "unknown key '" + key + "' in [" + section + "]");
            cfg.lines[full] = detail::line_of(knode);
            setter->second(cfg, detail::Reader(cfg, full, knode));
        }
        if (section == "noise") detail::read_noise_parts(cfg, *sec);
    }
    cfg.problem();  // resolve names now so errors point at the file
    return cfg;
}

inline RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError(path.string(), 0, "cannot open config file");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path.string());
}

namespace detail {

inline std::string quoted(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"' || c == '\\') out += '\\';
        out += c;
    }
    return out + '"';
}

template <class T, class F>
std::string list(const std::vector<T>& v, F&& fmt) {
    std::string out = "[";
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + fmt(v[i]);
    return out + "]";
}

inline std::string real(double v) {
    // Keep integral values typed as floats where TOML would read an integer.
    std::string s = format_double(v);
    if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
    return s;
}

}  // namespace detail

/// Canonical TOML for the effective settings; parse_config reads it back to
/// the same values, which is what the output sidecars rely on.
inline std::string to_toml(const RunConfig& c) {
    using detail::list;
    using detail::quoted;
    using detail::real;
    auto count = [](std::size_t v) { return std::to_string(v); };
    std::ostringstream os;
    os << "[problem]\n"
       << "kernel = " << quoted(c.kernel) << '\n'
       << "interaction = " << quoted(c.interaction) << '\n'
       << "drift = " << quoted(c.drift) << '\n'
       << "initial = " << quoted(c.initial) << '\n'
       << "T = " << real(c.T) << "\n\n"
       << "[noise]\n"
       << "spec = " << quoted(c.noise) << "\n\n"
       << "[experiment]\n"
       << "mode = " << quoted(c.mode) << '\n'
       << "n_list = " << list(c.n_list, count) << '\n'
       << "n_star = " << c.n_star << '\n'
       << "dt = " << real(c.dt) << '\n'
       << "dt_list = " << list(c.dt_list, real) << '\n'
       << "dt_star = " << real(c.dt_star) << '\n'
       << "n = " << c.n << '\n'
       << "n_fine = " << c.n_fine << '\n'
       << "trials = " << c.trials << '\n'
       << "seed = " << (c.seed > static_cast<std::uint64_t>(INT64_MAX) ? quoted(std::to_string(c.seed))
                                                                       : std::to_string(c.seed))
       << '\n'
       << "checkpoints = " << c.checkpoints << '\n'
       << "guard = " << (c.guard ? "true" : "false") << '\n'
       << "threads = " << c.threads << "\n\n"
       << "[simulate]\n"
       << "n = " << c.sim_n << '\n'
       << "dt = " << real(c.sim_dt) << '\n'
       << "n_fine = " << c.sim_n_fine << '\n'
       << "record = " << quoted(c.record) << '\n'
       << "stride = " << c.stride << '\n'
       << "noise_dump = " << quoted(c.noise_dump) << '\n'
       << "noise_replay = " << quoted(c.noise_replay) << "\n\n"
       << "[check]\n"
       << "n = " << c.check_n << '\n'
       << "t = " << real(c.check_t) << '\n'
       << "trials = " << c.check_trials << '\n'
       << "slices = " << c.check_slices << '\n'
       << "dt = " << real(c.check_dt) << "\n\n"
       << "[psi]\n"
       << "n_list = " << list(c.psi_n_list, count) << "\n\n"
       << "[kernel_info]\n"
       << "n_list = " << list(c.kernel_n_list, count) << '\n'
       << "resolution_factor = " << c.resolution_factor << '\n'
       << "matrix_n = " << c.matrix_n << "\n\n"
       << "[output]\n"
       << "dir = " << quoted(c.out_dir) << '\n'
       << "formats = " << list(c.formats, quoted) << '\n';
    return os.str();
}

/// Command-line values that win over the file.
struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> trials;
    std::optional<std::string> out;
    std::optional<std::size_t> threads;
    bool max_error = false;
};

inline void apply(RunConfig& cfg, const Overrides& o) {
    if (o.seed) cfg.seed = *o.seed;
    if (o.trials) {
        cfg.trials = *o.trials;
        cfg.check_trials = std::max<std::size_t>(*o.trials, 1000);
    }
    if (o.out) cfg.out_dir = *o.out;
    // --threads, then the environment, then the file.
    if (o.threads)
        cfg.threads = *o.threads;
    else if (std::getenv("GRAPHON_SPDE_THREADS"))
        cfg.threads = default_thread_count();
    if (o.max_error && cfg.checkpoints == 0) cfg.checkpoints = 10;
}

}  // namespace gspde::cli
