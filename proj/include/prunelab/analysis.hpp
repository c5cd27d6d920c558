#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "prunelab/pruner.hpp"

namespace prunelab {

enum class Direction { Increasing, Decreasing };
enum class Curvature { Concave, Convex };

// Discrete curve for knee detection; x strictly increasing, everything finite.
struct Curve2D {
    std::vector<double> x, y;
    Direction direction = Direction::Increasing;
    Curvature curvature = Curvature::Concave;
};

struct KneedleOptions {
    double psi = 1.0;
    // Threshold spacing term. The default is the mean consecutive spacing of
    // the normalized x values; the printed form preserves the telescoping
    // sum of (x_{i+1} - x_n) for comparison.
    bool printed_threshold_form = false;
    int smooth_window = 0;  // optional moving average over y (0 or 3)
};

struct KneeResult {
    bool found = false;
    double knee_x = 0.0, knee_y = 0.0;  // original (pre-normalization) coordinates
    int knee_index = -1;                // index into the input curve
    std::vector<double> diff_x, diff_y; // difference curve in canonical coordinates
    std::vector<int> local_maxima;      // indices into the difference curve
    double psi = 0.0;
};

// Kneedle: min-max normalize, flip to the canonical concave-increasing form,
// build the difference curve y - x, and declare a knee at a local maximum if
// the difference drops below y_lmx - psi * spacing before the next local
// maximum.
KneeResult kneedle(const Curve2D& curve, const KneedleOptions& opt = {});

struct PruneKneeResult {
    double pk = 0.0;  // parameter-prune fraction at the knee
    bool knee_found = false;
    KneeResult detail;
};

// Runs kneedle on (param_prune_fraction, accuracy), a decreasing concave
// curve. When no knee qualifies, falls back to the largest prune fraction
// whose accuracy loss stays within 2%, flagged via knee_found = false.
PruneKneeResult prune_knee(const PruningCurve& curve, double psi = 1.0,
                           const KneedleOptions* base_options = nullptr);

struct CorrelationReport {
    double slope_m = 0.0;
    double intercept_b = 0.0;
    double pearson_r = 0.0;
    size_t n = 0;
    double ws_mean = 0.0;
    double pk_mean = 0.0;
};

// least squares PK = m*WS + b; throws when ws is constant
std::pair<double, double> linear_regression(const std::vector<double>& ws,
                                            const std::vector<double>& pk);

// throws when either sequence has zero variance
double pearson(const std::vector<double>& ws, const std::vector<double>& pk);

CorrelationReport correlate(const std::vector<double>& ws, const std::vector<double>& pk);

std::string knee_result_json(const KneeResult& k);
std::string correlation_report_json(const CorrelationReport& r);

}  // namespace prunelab
