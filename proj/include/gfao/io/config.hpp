#pragma once

// Run configuration: INI text (sections, key = value). Every key has a default, unknown
// sections or keys are rejected, `section.key=value` overrides apply on top, and to_ini()
// writes the fully resolved configuration back out in a fixed order.

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "gfao/control_loop.hpp"
#include "gfao/io/image.hpp"
#include "gfao/scenes.hpp"

namespace gfao::io {

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct AmbiguityConfig {
    std::string phase = "random";  // random | tilt
    double min_even_rms = 0.5;
};

struct SceneConfig {
    std::string source = "textured";  // textured | file
    std::string path;
    std::size_t size = 256;
};

struct RunConfig {
    // grid
    std::size_t n = 256;
    int pad_factor = kDefaultPadFactor;
    // aperture
    std::string aperture_shape = "triangle";
    double aperture_fraction = 0.4;
    std::string aperture_path;
    // zernike
    double disk_fraction = 0.9;
    int max_order = 6;
    std::string ordering = "radial_order";
    double aberration_rms = 1.0;
    int min_order = 2;
    // noise
    double noise_sigma = 0.0;
    // estimators
    BlindPsfOptions psf;
    PhaseRetrievalOptions retrieval;
    int fine_er_blind = 0;
    int fine_er_direct = 30;
    bool refine_blind = false;
    bool refine_direct = true;
    int refine_iterations = 150;
    double refine_accept_objective = 1e-4;
    // loop
    LoopConfig loop;
    // ambiguity demo, scene, run
    AmbiguityConfig ambiguity;
    SceneConfig scene;
    std::uint64_t seed = 0;
    std::string output_dir;
    int threads = 0;
};

namespace detail {

inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
    T v{};
    const char* end = text.data() + text.size();
    const auto res = std::from_chars(text.data(), end, v);
    if (res.ec != std::errc() || res.ptr != end) throw ConfigError("config: '" + key + "' expects a number, got '" + text + "'");
    return v;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
    if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
    if (text == "false" || text == "0" || text == "no" || text == "off") return false;
    throw ConfigError("config: '" + key + "' expects true/false, got '" + text + "'");
}

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

struct Field {
    std::string section;
    std::string key;
    std::function<std::string()> get;
    std::function<void(const std::string&)> set;
};

template <class T>
Field number_field(std::string section, std::string key, T& ref) {
    const std::string full = section + "." + key;
    if constexpr (std::is_floating_point_v<T>)
        return {section, key, [&ref] { return format_double(ref); },
                [&ref, full](const std::string& s) { ref = parse_number<T>(full, s); }};
    else
        return {section, key, [&ref] { return std::to_string(ref); },
                [&ref, full](const std::string& s) { ref = parse_number<T>(full, s); }};
}

inline Field bool_field(std::string section, std::string key, bool& ref) {
    const std::string full = section + "." + key;
    return {section, key, [&ref] { return std::string(ref ? "true" : "false"); },
            [&ref, full](const std::string& s) { ref = parse_bool(full, s); }};
}

inline Field string_field(std::string section, std::string key, std::string& ref, std::vector<std::string> allowed = {}) {
    const std::string full = section + "." + key;
    return {section, key, [&ref] { return ref; },
            [&ref, full, allowed](const std::string& s) {
                if (!allowed.empty() && std::find(allowed.begin(), allowed.end(), s) == allowed.end()) {
                    std::string list;
                    for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
                    throw ConfigError("config: '" + full + "' must be one of {" + list + "}, got '" + s + "'");
                }
                ref = s;
            }};
}

inline std::vector<Field> fields(RunConfig& c) {
    std::vector<Field> f;
    f.push_back(number_field("grid", "n", c.n));
    f.push_back(number_field("grid", "pad_factor", c.pad_factor));

    f.push_back(string_field("aperture", "shape", c.aperture_shape, {"disk", "rectangle", "triangle", "bitmap"}));
    f.push_back(number_field("aperture", "size_fraction", c.aperture_fraction));
    f.push_back(string_field("aperture", "bitmap_path", c.aperture_path));

    f.push_back(number_field("zernike", "disk_fraction", c.disk_fraction));
    f.push_back(number_field("zernike", "max_order", c.max_order));
    f.push_back(string_field("zernike", "ordering", c.ordering, {"radial_order", "first_modes"}));
    f.push_back(number_field("zernike", "aberration_rms", c.aberration_rms));
    f.push_back(number_field("zernike", "min_order", c.min_order));

    f.push_back(number_field("noise", "sigma", c.noise_sigma));

    auto& p = c.psf;
    f.push_back(number_field("psf_estimator", "kernel_size", p.kernel_size));
    f.push_back(number_field("psf_estimator", "lambda", p.lambda));
    f.push_back(number_field("psf_estimator", "lambda_decay", p.lambda_decay));
    f.push_back(number_field("psf_estimator", "scales", p.scales));
    f.push_back(number_field("psf_estimator", "iterations_per_scale", p.iterations_per_scale));
    f.push_back(number_field("psf_estimator", "splitting_stages", p.splitting_stages));
    f.push_back(number_field("psf_estimator", "splitting_growth", p.splitting_growth));
    f.push_back(number_field("psf_estimator", "kernel_regularization", p.kernel_regularization));
    f.push_back(number_field("psf_estimator", "kernel_threshold", p.kernel_threshold));
    f.push_back({"psf_estimator", "kernel_update",
                 [&p] { return std::string(p.kernel_update == KernelUpdate::ridge_clamp ? "ridge_clamp" : "projected_gradient"); },
                 [&p](const std::string& s) {
                     if (s == "ridge_clamp")
                         p.kernel_update = KernelUpdate::ridge_clamp;
                     else if (s == "projected_gradient")
                         p.kernel_update = KernelUpdate::projected_gradient;
                     else
                         throw ConfigError("config: 'psf_estimator.kernel_update' must be ridge_clamp or projected_gradient");
                 }});
    f.push_back(number_field("psf_estimator", "kernel_iterations", p.kernel_iterations));
    f.push_back(bool_field("psf_estimator", "kernel_warm_start_ls", p.kernel_warm_start_ls));
    f.push_back(number_field("psf_estimator", "initial_sigma", p.initial_sigma));
    f.push_back(number_field("psf_estimator", "tolerance", p.tolerance));
    f.push_back(number_field("psf_estimator", "accept_change", p.accept_change));

    auto& r = c.retrieval;
    f.push_back(number_field("phase_estimator", "starts", r.starts));
    f.push_back(number_field("phase_estimator", "er_warmup", r.er_warmup));
    f.push_back(number_field("phase_estimator", "hio_per_cycle", r.hio_per_cycle));
    f.push_back(number_field("phase_estimator", "er_per_cycle", r.er_per_cycle));
    f.push_back(number_field("phase_estimator", "cycles", r.cycles));
    f.push_back(number_field("phase_estimator", "beta", r.beta));
    f.push_back(number_field("phase_estimator", "window", r.window));
    f.push_back(number_field("phase_estimator", "start_rms", r.start_rms));
    f.push_back(number_field("phase_estimator", "misfit_threshold", r.misfit_threshold));
    f.push_back(number_field("phase_estimator", "fine_er_blind", c.fine_er_blind));
    f.push_back(number_field("phase_estimator", "fine_er_direct", c.fine_er_direct));
    f.push_back(bool_field("phase_estimator", "refine_blind", c.refine_blind));
    f.push_back(bool_field("phase_estimator", "refine_direct", c.refine_direct));
    f.push_back(number_field("phase_estimator", "refine_iterations", c.refine_iterations));
    f.push_back(number_field("phase_estimator", "refine_accept_objective", c.refine_accept_objective));

    auto& l = c.loop;
    f.push_back(number_field("loop", "loops", l.loops));
    f.push_back(number_field("loop", "gain", l.gain));
    f.push_back(number_field("loop", "quantization_levels", l.quantization_levels));
    f.push_back(number_field("loop", "early_stop_rms", l.early_stop_rms));
    f.push_back({"loop", "convolution",
                 [&l] { return std::string(l.convolution == ConvolutionMode::circular ? "circular" : "linear"); },
                 [&l](const std::string& s) {
                     if (s == "circular")
                         l.convolution = ConvolutionMode::circular;
                     else if (s == "linear")
                         l.convolution = ConvolutionMode::linear;
                     else
                         throw ConfigError("config: 'loop.convolution' must be circular or linear");
                 }});

    f.push_back(string_field("ambiguity", "phase", c.ambiguity.phase, {"random", "tilt"}));
    f.push_back(number_field("ambiguity", "min_even_rms", c.ambiguity.min_even_rms));

    f.push_back(string_field("scene", "source", c.scene.source, {"textured", "file"}));
    f.push_back(string_field("scene", "path", c.scene.path));
    f.push_back(number_field("scene", "size", c.scene.size));

    f.push_back(number_field("run", "seed", c.seed));
    f.push_back(string_field("run", "output_dir", c.output_dir));
    f.push_back(number_field("run", "threads", c.threads));
    return f;
}

inline Field& find_field(std::vector<Field>& fs, const std::string& section, const std::string& key) {
    for (auto& f : fs)
        if (f.section == section && f.key == key) return f;
    throw ConfigError("config: unknown key '" + section + "." + key + "'");
}

}  // namespace detail

/// Cross-field checks; throws ConfigError.
inline void validate(const RunConfig& c) {
    auto fail = [](const std::string& m) { throw ConfigError("config: " + m); };
    if (c.n < 8 || !is_power_of_two(c.n)) fail("grid.n must be a power of two >= 8");
    if (c.pad_factor < 1) fail("grid.pad_factor must be >= 1");
    if (c.aperture_shape == "bitmap" && c.aperture_path.empty()) fail("aperture.bitmap_path is required for bitmap apertures");
    if (!(c.aperture_fraction > 0.0 && c.aperture_fraction < 0.5)) fail("aperture.size_fraction must lie in (0, 0.5)");
    if (!(c.disk_fraction > 0.0 && c.disk_fraction <= 1.0)) fail("zernike.disk_fraction must lie in (0, 1]");
    if (c.max_order < 1) fail("zernike.max_order must be >= 1");
    if (c.min_order < 1 || c.min_order > c.max_order) fail("zernike.min_order must lie in [1, max_order]");
    if (!(c.aberration_rms >= 0.0)) fail("zernike.aberration_rms must be >= 0");
    if (!(c.noise_sigma >= 0.0)) fail("noise.sigma must be >= 0");
    if (c.psf.kernel_size < 3 || c.psf.kernel_size % 2 == 0) fail("psf_estimator.kernel_size must be odd and >= 3");
    if (c.retrieval.starts < 1) fail("phase_estimator.starts must be >= 1");
    if (c.fine_er_blind < 0 || c.fine_er_direct < 0) fail("phase_estimator.fine_er_* must be >= 0");
    if (c.scene.source == "file" && c.scene.path.empty()) fail("scene.path is required when scene.source = file");
    if (c.scene.size < 8) fail("scene.size must be >= 8");
    if (c.threads < 0) fail("run.threads must be >= 0");
    try {
        c.loop.validate();
    } catch (const ArgumentError& e) {
        fail(e.what());
    }
}

/// Applies one `section.key=value` assignment.
inline void apply_override(RunConfig& c, const std::string& assignment) {
    const auto eq = assignment.find('=');
    const auto dot = assignment.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq)
        throw ConfigError("config: override must look like section.key=value, got '" + assignment + "'");
    auto fs = detail::fields(c);
    detail::find_field(fs, detail::trim(assignment.substr(0, dot)), detail::trim(assignment.substr(dot + 1, eq - dot - 1)))
        .set(detail::trim(assignment.substr(eq + 1)));
}

/// Parses INI text on top of the defaults.
[[nodiscard]] inline RunConfig parse_config(const std::string& text) {
    namespace pt = boost::property_tree;
    pt::ptree tree;
    std::istringstream in(text);
    try {
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    RunConfig c;
    auto fs = detail::fields(c);
    for (const auto& [section, body] : tree) {
        if (body.empty() && !body.data().empty())
            throw ConfigError("config: key '" + section + "' must sit inside a [section]");
        for (const auto& [key, value] : body) detail::find_field(fs, section, key).set(detail::trim(value.data()));
    }
    return c;
}

[[nodiscard]] inline RunConfig load_config(const fs::path& path) {
    const auto bytes = read_bytes(path);
    return parse_config(std::string(bytes.begin(), bytes.end()));
}

/// Fully resolved configuration, one section per block in a fixed order.
[[nodiscard]] inline std::string to_ini(const RunConfig& config) {
    RunConfig copy = config;
    auto fs = detail::fields(copy);
    std::string out = "# gfao resolved configuration\n";
    std::string section;
    for (const auto& f : fs) {
        if (f.section != section) {
            section = f.section;
            out += "\n[" + section + "]\n";
        }
        out += f.key + " = " + f.get() + "\n";
    }
    return out;
}

/// Output directory: run.output_dir, else $GFAO_OUTPUT_ROOT, else ./gfao-out.
[[nodiscard]] inline fs::path output_root(const RunConfig& c) {
    if (!c.output_dir.empty()) return c.output_dir;
    if (const char* env = std::getenv("GFAO_OUTPUT_ROOT"); env && *env) return env;
    return "gfao-out";
}

// ---- objects built from a configuration

[[nodiscard]] inline Aperture build_aperture(const RunConfig& c) {
    if (c.aperture_shape == "bitmap") {
        Aperture a = load_bitmap_aperture(c.aperture_path);
        if (a.n() != c.n) throw ConfigError("config: bitmap aperture size does not match grid.n");
        return a;
    }
    return make_aperture(parse_aperture_shape(c.aperture_shape), c.n, c.aperture_fraction);
}

[[nodiscard]] inline ZernikeBasis build_basis(const RunConfig& c) {
    return gfao::build_basis(c.n, c.disk_fraction, c.max_order,
                             c.ordering == "first_modes" ? ZernikeOrdering::first_modes : ZernikeOrdering::radial_order);
}

/// Estimator options for blindly estimated kernels (`direct` = false) or measured PSFs.
[[nodiscard]] inline EstimatorOptions estimator_options(const RunConfig& c, bool direct) {
    EstimatorOptions o;
    o.psf = c.psf;
    o.retrieval = c.retrieval;
    o.retrieval.pad_factor = c.pad_factor;
    o.retrieval.fine_er = direct ? c.fine_er_direct : c.fine_er_blind;
    o.refine.max_iterations = c.refine_iterations;
    o.refine.accept_objective = c.refine_accept_objective;
    o.refine.pad_factor = c.pad_factor;
    o.refine_enabled = direct ? c.refine_direct : c.refine_blind;
    return o;
}

[[nodiscard]] inline LoopConfig loop_config(const RunConfig& c) {
    LoopConfig l = c.loop;
    l.noise_sigma = c.noise_sigma;
    l.pad_factor = c.pad_factor;
    return l;
}

/// Scene per configuration; synthetic scenes draw from `seed`.
[[nodiscard]] inline SceneImage build_scene(const RunConfig& c, std::uint64_t seed) {
    if (c.scene.source == "file") return SceneImage(read_grid_any(c.scene.path));
    return textured_scene(c.scene.size, c.scene.size, seed);
}

}  // namespace gfao::io
