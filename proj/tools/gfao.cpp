// gfao: command-line harness for the guidestar-free AO simulation.

#include <CLI11.hpp>

#include <iostream>
#include <numeric>

#include "gfao/io/commands.hpp"

namespace io = gfao::io;

namespace {

struct Common {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string output;
    std::optional<std::uint64_t> seed;
    bool verbose = false;
};

void add_common(CLI::App* cmd, Common& common) {
    cmd->add_option("-c,--config", common.config_path, "INI configuration file")->check(CLI::ExistingFile);
    cmd->add_option("--set", common.overrides, "Override a key, e.g. --set loop.loops=5 (repeatable)");
    cmd->add_option("-o,--output", common.output, "Output directory (default: run.output_dir, $GFAO_OUTPUT_ROOT, ./gfao-out)");
    cmd->add_option("--seed", common.seed, "Run seed (overrides run.seed)");
    cmd->add_flag("-v,--verbose", common.verbose, "Log progress to stderr");
}

io::RunConfig resolve(const Common& common) {
    io::RunConfig c = common.config_path.empty() ? io::RunConfig{} : io::load_config(common.config_path);
    for (const auto& o : common.overrides) io::apply_override(c, o);
    if (!common.output.empty()) c.output_dir = common.output;
    if (common.seed) c.seed = *common.seed;
    io::validate(c);
    return c;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"gfao: guidestar-free adaptive optics simulation"};
    app.require_subcommand(1);
    Common common;

    auto* demo = app.add_subcommand("demo-ambiguity", "Compare PSFs of a phase and its conjugate flip on three apertures");
    add_common(demo, common);
    bool tilt = false;
    demo->add_flag("--tilt", tilt, "Use a pure-tilt phase (odd parity, degenerate)");

    auto* loop = app.add_subcommand("run-loop", "Run the closed correction loop on a scene");
    add_common(loop, common);
    std::string scene_path;
    loop->add_option("--scene", scene_path, "Scene image (.pgm, .png or .f32); default is a synthetic texture");

    auto* retrieve = app.add_subcommand("retrieve-phase", "Recover the pupil phase from a directly measured PSF");
    add_common(retrieve, common);
    std::string psf_path;
    retrieve->add_option("--psf", psf_path, "PSF image (.f32, .pgm or .png)")->required();

    auto* estimate = app.add_subcommand("estimate-psf", "Blindly estimate the PSF of a blurred image");
    add_common(estimate, common);
    std::string image_path;
    std::optional<std::string> truth_path;
    estimate->add_option("--image", image_path, "Blurred image")->required();
    estimate->add_option("--truth", truth_path, "True PSF, for a kernel NCC score");

    auto* metrics = app.add_subcommand("metrics", "Image, phase and PSF quality metrics (JSON on stdout)");
    add_common(metrics, common);
    std::optional<std::string> m_image, m_ref, m_phase, m_phase_truth, m_psf;
    metrics->add_option("--image", m_image, "Image to score");
    metrics->add_option("--reference", m_ref, "Reference image");
    metrics->add_option("--phase", m_phase, "Estimated phase (.f32)");
    metrics->add_option("--phase-truth", m_phase_truth, "True phase (.f32)");
    metrics->add_option("--psf", m_psf, "PSF for a Strehl ratio over the configured aperture");

    auto* batch = app.add_subcommand("batch", "run-loop over many seeds in parallel");
    add_common(batch, common);
    std::uint64_t first_seed = 0;
    int count = 20;
    int threads = -1;
    batch->add_option("--first-seed", first_seed, "First seed");
    batch->add_option("--count", count, "Number of seeds")->check(CLI::PositiveNumber);
    batch->add_option("--threads", threads, "Worker threads (default: run.threads; 0 = all cores)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? io::exit_ok : io::exit_usage;
    }

    try {
        io::RunConfig c = resolve(common);
        const io::fs::path out = io::output_root(c);
        std::ostream* log = common.verbose ? &std::cerr : nullptr;

        if (*demo) {
            if (tilt) c.ambiguity.phase = "tilt";
            const auto rep = io::cmd_demo_ambiguity(c, out);
            for (const auto& r : rep.rows)
                std::cout << r.shape << ": distance " << r.distance << (r.pass ? " ok" : rep.degenerate ? " (degenerate)" : " FAIL") << "\n";
            if (rep.degenerate) std::cout << "degenerate: odd-parity phase, twins coincide on every aperture\n";
            return rep.pass ? io::exit_ok : io::exit_not_converged;
        }
        if (*loop) {
            if (!scene_path.empty()) {
                c.scene.source = "file";
                c.scene.path = scene_path;
            }
            const auto run = io::cmd_run_loop(c, out, log);
            std::cout << "final strehl " << run.trace.records.back().strehl << "\n";
            return run.diverged ? io::exit_not_converged : io::exit_ok;
        }
        if (*retrieve) {
            const auto est = io::cmd_retrieve_phase(c, psf_path, out);
            std::cout << "status " << gfao::to_string(est.status) << ", residual " << est.residual
                      << (est.ambiguous ? ", ambiguous (point-symmetric aperture)" : "") << "\n";
            return est.status == gfao::SolverStatus::converged ? io::exit_ok : io::exit_not_converged;
        }
        if (*estimate) {
            std::optional<io::fs::path> truth;
            if (truth_path) truth = *truth_path;
            const auto est = io::cmd_estimate_psf(c, image_path, out, truth);
            std::cout << "status " << gfao::to_string(est.status) << ", iterations " << est.iterations_used << "\n";
            return est.status == gfao::SolverStatus::converged ? io::exit_ok : io::exit_not_converged;
        }
        if (*metrics) {
            io::MetricsInputs in;
            auto to_path = [](const std::optional<std::string>& s) {
                return s ? std::optional<io::fs::path>(*s) : std::nullopt;
            };
            in.image = to_path(m_image);
            in.reference = to_path(m_ref);
            in.phase = to_path(m_phase);
            in.phase_truth = to_path(m_phase_truth);
            in.psf = to_path(m_psf);
            std::cout << io::cmd_metrics(c, in).dump(2) << "\n";
            return io::exit_ok;
        }
        if (*batch) {
            std::vector<std::uint64_t> seeds(static_cast<std::size_t>(count));
            std::iota(seeds.begin(), seeds.end(), first_seed);
            const auto rows = io::cmd_batch(c, seeds, out, threads >= 0 ? threads : c.threads);
            int worst = io::exit_ok;
            for (const auto& r : rows) {
                std::cout << "seed " << r.seed << ": exit " << r.code << ", strehl " << r.initial_strehl << " -> "
                          << r.final_strehl << "\n";
                if (!r.error.empty()) std::cerr << "seed " << r.seed << ": " << r.error;
                worst = std::max(worst, r.code);
            }
            return worst;
        }
    } catch (...) {
        return io::exit_code_for_current_exception(std::cerr);
    }
    return io::exit_usage;
}
