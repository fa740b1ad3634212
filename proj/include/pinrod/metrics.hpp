#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "pinrod/datagen.hpp"
#include "pinrod/pnode.hpp"
#include "pinrod/siren.hpp"
#include "pinrod/training.hpp"

namespace pinrod {

// Mean of squared differences over all elements; same summation order as the
// autodiff mse, so the two agree bitwise.
double metric_mse(const Tensor& pred, const Tensor& truth);

// Global 2-norm ratio |pred - truth| / |truth| over the whole block. Errors
// out when |truth| < 1e-12 (undefined metric).
double metric_rel_l2(const Tensor& pred, const Tensor& truth);

struct CurveRow {
    std::int64_t step;
    std::string model;  // "pnode" | "persistence" | "ar"
    std::string field;
    double mse;
    double rel_l2;
};

struct FieldMetric {
    std::string field;
    double mse = 0.0;
    double rel_l2 = 0.0;
};

struct EvalOptions {
    std::int64_t timing_repeats = 3;  // 0 disables timing
    LatentFitConfig fit;
};

// Metrics over the test split, physical units. Per-trajectory metrics over
// the forecast horizon (steps 1..T-1) averaged over trajectories; the curve
// additionally carries step 0 (pure auto-decoding reconstruction).
struct EvalResult {
    std::vector<FieldMetric> pnode, persistence, ar;
    std::vector<CurveRow> curve;
    double inference_seconds = 0.0;  // median over repeats, one trajectory
    std::int64_t horizon = 0;
};

EvalResult evaluate(const Dataset& ds, ParamStore& decoder, const SirenConfig& dcfg,
                    ParamStore& pnode, const PnodeConfig& pcfg,
                    ParamStore* ar_params, const PnodeConfig* ar_cfg,
                    const EvalOptions& opts);

// Fig-style error-over-time curve only (no timing).
std::vector<CurveRow> error_over_time(const Dataset& ds, ParamStore& decoder,
                                      const SirenConfig& dcfg, ParamStore& pnode,
                                      const PnodeConfig& pcfg, ParamStore* ar_params,
                                      const PnodeConfig* ar_cfg, const LatentFitConfig& fit);

// Median wall-clock seconds over `repeats` runs, after one untimed warm-up.
double time_inference(const std::function<void()>& pipeline, std::int64_t repeats);

void write_curve_csv(const std::string& path, const std::vector<CurveRow>& curve);

struct ReportMeta {
    std::string dataset_dir, dataset_hash;
    std::string decoder_hash, pnode_hash, ar_hash;
    std::string config_json;  // serialized resolved config
    std::string version;
};

void write_report_json(const std::string& path, const EvalResult& result, const ReportMeta& meta);

}  // namespace pinrod
