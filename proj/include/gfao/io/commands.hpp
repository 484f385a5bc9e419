#pragma once

// Subcommand pipelines. Each writes its artifacts into a directory and returns an exit code:
// 0 success, 1 bad arguments or config, 2 numerical non-convergence, 3 I/O failure.

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <iomanip>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "gfao/ambiguity.hpp"
#include "gfao/io/config.hpp"
#include "gfao/io/image.hpp"
#include "gfao/io/trace.hpp"
#include "gfao/metrics.hpp"

namespace gfao::io {

enum ExitCode : int { exit_ok = 0, exit_usage = 1, exit_not_converged = 2, exit_io = 3 };

/// Maps an in-flight exception to the exit-code contract and prints it.
inline int exit_code_for_current_exception(std::ostream& err) {
    try {
        throw;
    } catch (const FormatError& e) {
        err << "error: " << e.what() << "\n";
        return exit_io;
    } catch (const IoError& e) {
        err << "error: " << e.what() << "\n";
        return exit_io;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return exit_io;
    } catch (const std::invalid_argument& e) {  // ConfigError, ArgumentError, DimensionError
        err << "error: " << e.what() << "\n";
        return exit_usage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return exit_io;
    }
}

namespace detail {

inline std::string iter_name(const char* stem, int k, const char* ext) {
    std::ostringstream s;
    s << stem << '_' << std::setw(2) << std::setfill('0') << k << ext;
    return s.str();
}

inline void write_psf_files(const fs::path& dir, const std::string& stem, const Psf& psf) {
    write_float_grid(dir / (stem + ".f32"), psf.kernel());
    write_gray8(dir / (stem + ".png"), psf.kernel(), Range{0.0, max_value(psf.kernel())});
}

inline void write_phase_files(const fs::path& dir, const std::string& stem, const PhaseMap& phase, const Aperture& ap) {
    write_float_grid(dir / (stem + ".f32"), phase.values());
    write_phase_png(dir / (stem + ".png"), phase, &ap);
}

inline std::string json_text(const nlohmann::json& j) { return j.dump(2) + "\n"; }

}  // namespace detail

/// Tilt-free aberration drawn from run.seed.
[[nodiscard]] inline PhaseMap build_aberration(const RunConfig& c, const ZernikeBasis& basis, const Aperture& aperture) {
    const auto coeffs = sample_coeffs(mix_seed(c.seed, 1001), c.aberration_rms, basis, 0.0, c.min_order);
    return remove_tilt_piston(phase_from_coeffs(coeffs, basis), aperture);
}

[[nodiscard]] inline std::uint64_t scene_seed(const RunConfig& c) { return mix_seed(c.seed, 1000); }

// ---- demo-ambiguity

struct AmbiguityRow {
    std::string shape;
    bool point_symmetric = false;
    double distance = 0.0;
    bool pass = false;
};

struct AmbiguityReport {
    double even_rms = 0.0;
    bool degenerate = false;  // flip leaves an odd-parity phase unchanged; nothing to separate
    std::vector<AmbiguityRow> rows;
    bool pass = false;
};

inline constexpr double kTwinIdenticalTol = 1e-9;
inline constexpr double kTwinDistinctMin = 1e-2;

inline AmbiguityReport cmd_demo_ambiguity(const RunConfig& c, const fs::path& dir) {
    validate(c);
    fs::create_directories(dir);
    write_text(dir / "config.ini", to_ini(c));
    const ZernikeBasis basis = build_basis(c);
    ZernikeCoeffs coeffs{std::vector<double>(basis.mode_count(), 0.0), basis.id()};
    if (c.ambiguity.phase == "tilt") {
        for (std::size_t k = 0; k < basis.mode_count(); ++k)
            if (basis.indices()[k].noll == 2) coeffs.values[k] = c.aberration_rms;
    } else {
        coeffs = sample_separable_coeffs(c.seed, c.aberration_rms, basis, c.ambiguity.min_even_rms);
    }
    const PhaseMap phi = phase_from_coeffs(coeffs, basis);
    const PhaseMap twin = conjugate_flip(phi);

    AmbiguityReport rep;
    rep.even_rms = even_order_rms(coeffs, basis);
    rep.degenerate = rep.even_rms < 1e-12;
    rep.pass = !rep.degenerate;
    for (const char* shape : {"disk", "rectangle", "triangle"}) {
        const Aperture ap = make_aperture(parse_aperture_shape(shape), c.n, c.aperture_fraction);
        const Psf p1 = psf_of(ap, phi, c.pad_factor);
        const Psf p2 = psf_of(ap, twin, c.pad_factor);
        AmbiguityRow row;
        row.shape = shape;
        row.point_symmetric = is_point_symmetric(ap);
        row.distance = relative_l2(p1.kernel(), p2.kernel());
        row.pass = row.point_symmetric ? row.distance <= kTwinIdenticalTol : row.distance >= kTwinDistinctMin;
        rep.pass = rep.pass && row.pass;
        const std::string s(shape);
        detail::write_phase_files(dir, s + "_phase", phi, ap);
        detail::write_phase_files(dir, s + "_phase_twin", twin, ap);
        detail::write_psf_files(dir, s + "_psf", p1);
        detail::write_psf_files(dir, s + "_psf_twin", p2);
        rep.rows.push_back(row);
    }

    nlohmann::json j;
    j["schema"] = "gfao.ambiguity/1";
    j["phase"] = c.ambiguity.phase;
    j["even_order_rms"] = rep.even_rms;
    j["degenerate"] = rep.degenerate;
    if (rep.degenerate) j["note"] = "odd-parity phase: the conjugate flip leaves it unchanged, so no aperture separates the twins";
    j["identical_tolerance"] = kTwinIdenticalTol;
    j["distinct_minimum"] = kTwinDistinctMin;
    for (const auto& r : rep.rows)
        j["apertures"].push_back(
            {{"shape", r.shape}, {"point_symmetric", r.point_symmetric}, {"distance", r.distance}, {"pass", r.pass}});
    j["pass"] = rep.pass;
    write_text(dir / "report.json", detail::json_text(j));
    return rep;
}

// ---- run-loop

struct LoopRun {
    LoopTrace trace;
    bool diverged = false;
};

inline LoopRun cmd_run_loop(const RunConfig& c, const fs::path& dir, std::ostream* log = nullptr) {
    validate(c);
    const Aperture aperture = build_aperture(c);
    const ZernikeBasis basis = build_basis(c);
    const SceneImage scene = build_scene(c, scene_seed(c));
    if (scene.height() != c.n || scene.width() != c.n)
        throw ConfigError("config: scene must be grid.n x grid.n pixels");
    const PhaseMap phi = build_aberration(c, basis, aperture);
    fs::create_directories(dir);
    write_text(dir / "config.ini", to_ini(c));

    LoopRun run;
    run.trace = run_closed_loop(scene, phi, aperture, default_estimators(basis, estimator_options(c, false)),
                                loop_config(c), c.seed);

    detail::write_phase_files(dir, "aberration", phi, aperture);
    write_gray8(dir / "scene.png", scene.pixels(), Range{0.0, 1.0});
    for (const auto& r : run.trace.records) {
        const int k = r.iteration;
        write_float_grid(dir / detail::iter_name("measurement", k, ".f32"), r.measurement.pixels);
        write_gray8(dir / detail::iter_name("measurement", k, ".png"), r.measurement.pixels, Range{0.0, 1.0});
        if (r.psf) {
            const std::string stem = detail::iter_name("psf", k, "");
            detail::write_psf_files(dir, stem, r.psf->psf);
            run.diverged |= r.psf->status == SolverStatus::diverged;
        }
        if (r.phase) {
            detail::write_phase_files(dir, detail::iter_name("phase", k, ""), r.phase->phase, aperture);
            run.diverged |= r.phase->status == SolverStatus::diverged;
        }
        if (log)
            *log << "iteration " << k << ": strehl " << r.strehl << ", residual rms " << r.residual_rms
                 << ", estimated rms " << r.estimated_rms << "\n";
    }
    write_text(dir / "trace.jsonl", trace_jsonl(run.trace));
    write_text(dir / "metrics.csv", metrics_csv(run.trace));
    return run;
}

// ---- retrieve-phase (direct PSF input)

inline PhaseEstimate cmd_retrieve_phase(const RunConfig& c, const fs::path& psf_path, const fs::path& dir) {
    validate(c);
    const Psf psf(read_grid_any(psf_path));
    const Aperture aperture = build_aperture(c);
    const ZernikeBasis basis = build_basis(c);
    const Estimators est = default_estimators(basis, estimator_options(c, true));
    const PhaseEstimate out = est.phase(psf, aperture, mix_seed(c.seed, 1), Truth{});
    fs::create_directories(dir);
    write_text(dir / "config.ini", to_ini(c));
    detail::write_phase_files(dir, "phase", out.phase, aperture);
    write_text(dir / "coefficients.csv", coeffs_csv(out.coeffs, basis));

    std::size_t dominant = 0;
    for (std::size_t k = 1; k < out.coeffs.values.size(); ++k)
        if (std::abs(out.coeffs.values[k]) > std::abs(out.coeffs.values[dominant])) dominant = k;
    nlohmann::json j;
    j["schema"] = "gfao.retrieval/1";
    j["status"] = std::string(to_string(out.status));
    j["residual"] = out.residual;
    j["ambiguous"] = out.ambiguous;
    if (out.ambiguous)
        j["note"] = "point-symmetric aperture: the conjugate-flipped phase fits the PSF equally well";
    j["phase_rms"] = rms_over(out.phase, aperture);
    if (!out.coeffs.values.empty())
        j["dominant_mode"] = {{"noll", basis.indices()[dominant].noll}, {"value", out.coeffs.values[dominant]}};
    write_text(dir / "report.json", detail::json_text(j));
    return out;
}

// ---- estimate-psf

inline PsfEstimate cmd_estimate_psf(const RunConfig& c, const fs::path& image_path, const fs::path& dir,
                                    const std::optional<fs::path>& truth_path = std::nullopt) {
    validate(c);
    const Measurement m{read_grid_any(image_path), c.noise_sigma};
    const PsfEstimate est = estimate_psf_blind(m, c.psf);
    fs::create_directories(dir);
    write_text(dir / "config.ini", to_ini(c));
    detail::write_psf_files(dir, "psf", est.psf);
    nlohmann::json j;
    j["schema"] = "gfao.psf/1";
    j["status"] = std::string(to_string(est.status));
    j["fidelity"] = est.fidelity;
    j["iterations"] = est.iterations_used;
    if (truth_path) j["ncc"] = kernel_ncc(est.psf.kernel(), read_grid_any(*truth_path));
    write_text(dir / "report.json", detail::json_text(j));
    return est;
}

// ---- metrics

struct MetricsInputs {
    std::optional<fs::path> image, reference;
    std::optional<fs::path> phase, phase_truth;
    std::optional<fs::path> psf;
};

[[nodiscard]] inline nlohmann::json cmd_metrics(const RunConfig& c, const MetricsInputs& in) {
    validate(c);
    nlohmann::json j;
    j["schema"] = "gfao.metrics-report/1";
    if (in.image.has_value() != in.reference.has_value())
        throw ArgumentError("metrics: --image and --reference go together");
    if (in.phase.has_value() != in.phase_truth.has_value())
        throw ArgumentError("metrics: --phase and --phase-truth go together");
    if (!in.image && !in.phase && !in.psf) throw ArgumentError("metrics: nothing to measure");
    if (in.image) {
        const RealGrid a = read_grid_any(*in.image);
        const RealGrid b = read_grid_any(*in.reference);
        j["psnr"] = detail::finite_or_null(psnr(a, b));
        j["ssim"] = ssim(a, b);
    }
    if (in.phase || in.psf) {
        const Aperture aperture = build_aperture(c);
        if (in.phase) {
            const PhaseMap est(read_float_grid(*in.phase));
            const PhaseMap gt(read_float_grid(*in.phase_truth));
            j["gradient_phase_error"] = gradient_phase_error(est, gt, aperture);
        }
        if (in.psf) j["strehl"] = strehl_ratio(Psf(read_grid_any(*in.psf)), aperture, c.pad_factor);
    }
    return j;
}

// ---- batch

struct BatchRow {
    std::uint64_t seed = 0;
    int code = exit_ok;
    double initial_strehl = 0.0;
    double final_strehl = 0.0;
    std::string error;
};

/// One run-loop per seed in `dir/seed-<s>`, spread over `threads` workers (0 = hardware).
inline std::vector<BatchRow> cmd_batch(const RunConfig& base, const std::vector<std::uint64_t>& seeds,
                                       const fs::path& dir, int threads) {
    validate(base);
    fs::create_directories(dir);
    write_text(dir / "config.ini", to_ini(base));
    std::vector<BatchRow> rows(seeds.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < seeds.size(); i = next++) {
            BatchRow& row = rows[i];
            row.seed = seeds[i];
            RunConfig c = base;
            c.seed = seeds[i];
            std::ostringstream err;
            try {
                const LoopRun run = cmd_run_loop(c, dir / ("seed-" + std::to_string(seeds[i])));
                row.initial_strehl = run.trace.records.front().strehl;
                row.final_strehl = run.trace.records.back().strehl;
                row.code = run.diverged ? exit_not_converged : exit_ok;
            } catch (...) {
                row.code = exit_code_for_current_exception(err);
                row.error = err.str();
            }
        }
    };
    std::size_t n = threads > 0 ? static_cast<std::size_t>(threads) : std::max(1u, std::thread::hardware_concurrency());
    n = std::min(n, std::max<std::size_t>(seeds.size(), 1));
    {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
    }
    std::string csv = "# gfao.batch/1\nseed,exit_code,initial_strehl,final_strehl\n";
    for (const auto& r : rows)
        csv += std::to_string(r.seed) + "," + std::to_string(r.code) + "," + detail::format_double(r.initial_strehl) +
               "," + detail::format_double(r.final_strehl) + "\n";
    write_text(dir / "summary.csv", csv);
    return rows;
}

}  // namespace gfao::io
