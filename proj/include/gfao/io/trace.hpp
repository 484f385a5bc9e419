#pragma once

// Loop traces as JSON Lines (one record per iteration) and a flat metrics CSV.

#include <nlohmann/json.hpp>

#include <cmath>
#include <string>

#include "gfao/control_loop.hpp"
#include "gfao/io/config.hpp"
#include "gfao/io/image.hpp"

namespace gfao::io {

inline constexpr const char* kTraceSchema = "gfao.trace/1";
inline constexpr const char* kMetricsSchema = "gfao.metrics/1";

namespace detail {

// JSON has no infinity; a perfect PSNR is written as null.
inline nlohmann::json finite_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

inline std::string csv_number(double v) { return std::isfinite(v) ? format_double(v) : std::string("inf"); }

}  // namespace detail

[[nodiscard]] inline nlohmann::json record_json(const LoopRecord& r) {
    nlohmann::json j;
    j["schema"] = kTraceSchema;
    j["iteration"] = r.iteration;
    j["strehl"] = r.strehl;
    j["residual_rms"] = r.residual_rms;
    j["estimated_rms"] = r.estimated_rms;
    j["estimated_strehl"] = r.estimated_strehl;
    j["psnr"] = detail::finite_or_null(r.psnr);
    j["ssim"] = r.ssim;
    if (r.psf)
        j["psf"] = {{"status", std::string(to_string(r.psf->status))},
                    {"fidelity", r.psf->fidelity},
                    {"iterations", r.psf->iterations_used}};
    else
        j["psf"] = nullptr;
    if (r.phase)
        j["phase"] = {{"status", std::string(to_string(r.phase->status))},
                      {"residual", r.phase->residual},
                      {"ambiguous", r.phase->ambiguous},
                      {"coeffs", r.phase->coeffs.values}};
    else
        j["phase"] = nullptr;
    return j;
}

[[nodiscard]] inline std::string trace_jsonl(const LoopTrace& t) {
    std::string out;
    for (const auto& r : t.records) out += record_json(r).dump() + "\n";
    return out;
}

[[nodiscard]] inline std::string metrics_csv(const LoopTrace& t) {
    std::string out = std::string("# ") + kMetricsSchema + "\n";
    out += "iteration,strehl,residual_rms,estimated_rms,estimated_strehl,psnr,ssim\n";
    for (const auto& r : t.records) {
        out += std::to_string(r.iteration) + "," + detail::format_double(r.strehl) + "," +
               detail::format_double(r.residual_rms) + "," + detail::format_double(r.estimated_rms) + "," +
               detail::format_double(r.estimated_strehl) + "," + detail::csv_number(r.psnr) + "," +
               detail::format_double(r.ssim) + "\n";
    }
    return out;
}

/// Coefficients as `noll,n,m,value` rows.
[[nodiscard]] inline std::string coeffs_csv(const ZernikeCoeffs& c, const ZernikeBasis& basis) {
    std::string out = "noll,n,m,value\n";
    for (std::size_t k = 0; k < c.values.size() && k < basis.mode_count(); ++k) {
        const auto& id = basis.indices()[k];
        out += std::to_string(id.noll) + "," + std::to_string(id.n) + "," + std::to_string(id.m) + "," +
               detail::format_double(c.values[k]) + "\n";
    }
    return out;
}

}  // namespace gfao::io
