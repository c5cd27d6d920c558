#include "prunelab/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace prunelab {

namespace {

void validate_curve(const Curve2D& c) {
    if (c.x.size() != c.y.size()) throw std::invalid_argument("kneedle: x/y length mismatch");
    if (c.x.size() < 3) throw std::invalid_argument("kneedle: need at least 3 points");
    for (size_t i = 0; i < c.x.size(); ++i)
        if (!std::isfinite(c.x[i]) || !std::isfinite(c.y[i]))
            throw std::invalid_argument("kneedle: non-finite sample");
    for (size_t i = 1; i < c.x.size(); ++i)
        if (!(c.x[i] > c.x[i - 1]))
            throw std::invalid_argument("kneedle: x must be strictly increasing");
}

std::vector<double> minmax_normalize(const std::vector<double>& v) {
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    const double range = *hi - *lo;
    std::vector<double> out(v.size());
    for (size_t i = 0; i < v.size(); ++i) out[i] = range > 0.0 ? (v[i] - *lo) / range : 0.0;
    return out;
}

}  // namespace

KneeResult kneedle(const Curve2D& curve, const KneedleOptions& opt) {
    validate_curve(curve);
    const size_t n = curve.x.size();

    std::vector<double> ys_raw = curve.y;
    if (opt.smooth_window > 1) {
        const int w = opt.smooth_window / 2;
        std::vector<double> sm(n);
        for (size_t i = 0; i < n; ++i) {
            double s = 0.0;
            int cnt = 0;
            for (int j = -w; j <= w; ++j) {
                const long long k = static_cast<long long>(i) + j;
                if (k < 0 || k >= static_cast<long long>(n)) continue;
                s += ys_raw[static_cast<size_t>(k)];
                cnt += 1;
            }
            sm[i] = s / cnt;
        }
        ys_raw = std::move(sm);
    }

    std::vector<double> xs = minmax_normalize(curve.x);
    std::vector<double> ys = minmax_normalize(ys_raw);

    // canonical concave-increasing form
    if (curve.curvature == Curvature::Convex)
        for (double& v : ys) v = 1.0 - v;
    const bool reversed = curve.direction == Direction::Decreasing;
    if (reversed) {
        for (double& v : xs) v = 1.0 - v;
        std::reverse(xs.begin(), xs.end());
        std::reverse(ys.begin(), ys.end());
    }
    auto original_index = [&](size_t i) {
        return reversed ? static_cast<int>(n - 1 - i) : static_cast<int>(i);
    };

    KneeResult res;
    res.psi = opt.psi;
    res.diff_x = xs;
    res.diff_y.resize(n);
    for (size_t i = 0; i < n; ++i) res.diff_y[i] = ys[i] - xs[i];

    for (size_t i = 1; i + 1 < n; ++i)
        if (res.diff_y[i] > res.diff_y[i - 1] && res.diff_y[i] > res.diff_y[i + 1])
            res.local_maxima.push_back(static_cast<int>(i));

    double spacing;
    if (opt.printed_threshold_form) {
        // literal sum of (x_{i+1} - x_n) / (n - 1)
        double s = 0.0;
        for (size_t i = 0; i + 1 < n; ++i) s += xs[i + 1] - xs[n - 1];
        spacing = s / static_cast<double>(n - 1);
    } else {
        double s = 0.0;
        for (size_t i = 0; i + 1 < n; ++i) s += xs[i + 1] - xs[i];
        spacing = s / static_cast<double>(n - 1);
    }

    for (size_t mi = 0; mi < res.local_maxima.size(); ++mi) {
        const size_t lmx = static_cast<size_t>(res.local_maxima[mi]);
        const double threshold = res.diff_y[lmx] - opt.psi * spacing;
        const size_t stop = mi + 1 < res.local_maxima.size()
                                ? static_cast<size_t>(res.local_maxima[mi + 1])
                                : n;
        for (size_t i = lmx + 1; i < stop; ++i) {
            if (res.diff_y[i] < threshold) {
                res.found = true;
                res.knee_index = original_index(lmx);
                res.knee_x = curve.x[static_cast<size_t>(res.knee_index)];
                res.knee_y = curve.y[static_cast<size_t>(res.knee_index)];
                return res;
            }
        }
    }
    return res;
}

PruneKneeResult prune_knee(const PruningCurve& curve, double psi,
                           const KneedleOptions* base_options) {
    // x: parameter prune fraction, y: accuracy; equal-x points collapse to the last
    std::vector<double> x, y, loss;
    for (const auto& p : curve.points) {
        if (!x.empty() && p.param_prune_fraction == x.back()) {
            y.back() = p.accuracy;
            loss.back() = p.accuracy_loss;
            continue;
        }
        x.push_back(p.param_prune_fraction);
        y.push_back(p.accuracy);
        loss.push_back(p.accuracy_loss);
    }
    if (x.size() < 3)
        throw std::invalid_argument("prune_knee: curve needs at least 3 distinct points");

    Curve2D c{x, y, Direction::Decreasing, Curvature::Concave};
    KneedleOptions opt = base_options ? *base_options : KneedleOptions{};
    opt.psi = psi;
    PruneKneeResult out;
    out.detail = kneedle(c, opt);
    out.knee_found = out.detail.found;
    if (out.knee_found) {
        out.pk = out.detail.knee_x;
    } else {
        // fallback: deepest prune whose accuracy loss stays within 2%
        double best = x.front();
        for (size_t i = 0; i < x.size(); ++i)
            if (loss[i] <= 0.02) best = std::max(best, x[i]);
        out.pk = best;
    }
    return out;
}

std::pair<double, double> linear_regression(const std::vector<double>& ws,
                                            const std::vector<double>& pk) {
    if (ws.size() != pk.size()) throw std::invalid_argument("regression: length mismatch");
    const size_t n = ws.size();
    if (n < 2) throw std::invalid_argument("regression: need at least 2 samples");
    double mw = 0.0, mp = 0.0;
    for (size_t i = 0; i < n; ++i) {
        mw += ws[i];
        mp += pk[i];
    }
    mw /= static_cast<double>(n);
    mp /= static_cast<double>(n);
    double num = 0.0, den = 0.0;
    for (size_t i = 0; i < n; ++i) {
        num += (ws[i] - mw) * (pk[i] - mp);
        den += (ws[i] - mw) * (ws[i] - mw);
    }
    if (den == 0.0) throw std::invalid_argument("regression: constant regressor");
    const double m = num / den;
    return {m, mp - m * mw};
}

double pearson(const std::vector<double>& ws, const std::vector<double>& pk) {
    if (ws.size() != pk.size()) throw std::invalid_argument("pearson: length mismatch");
    const size_t n = ws.size();
    if (n < 2) throw std::invalid_argument("pearson: need at least 2 samples");
    double mw = 0.0, mp = 0.0;
    for (size_t i = 0; i < n; ++i) {
        mw += ws[i];
        mp += pk[i];
    }
    mw /= static_cast<double>(n);
    mp /= static_cast<double>(n);
    double cov = 0.0, vw = 0.0, vp = 0.0;
    for (size_t i = 0; i < n; ++i) {
        cov += (ws[i] - mw) * (pk[i] - mp);
        vw += (ws[i] - mw) * (ws[i] - mw);
        vp += (pk[i] - mp) * (pk[i] - mp);
    }
    if (vw == 0.0 || vp == 0.0)
        throw std::invalid_argument("pearson: zero variance sequence");
    return cov / (std::sqrt(vw) * std::sqrt(vp));
}

CorrelationReport correlate(const std::vector<double>& ws, const std::vector<double>& pk) {
    CorrelationReport r;
    auto [m, b] = linear_regression(ws, pk);
    r.slope_m = m;
    r.intercept_b = b;
    r.pearson_r = pearson(ws, pk);
    r.n = ws.size();
    for (double v : ws) r.ws_mean += v;
    for (double v : pk) r.pk_mean += v;
    r.ws_mean /= static_cast<double>(ws.size());
    r.pk_mean /= static_cast<double>(pk.size());
    return r;
}

std::string knee_result_json(const KneeResult& k) {
    nlohmann::json j;
    j["found"] = k.found;
    j["knee_x"] = k.knee_x;
    j["knee_y"] = k.knee_y;
    j["knee_index"] = k.knee_index;
    j["psi"] = k.psi;
    j["local_maxima"] = k.local_maxima;
    return j.dump(2);
}

std::string correlation_report_json(const CorrelationReport& r) {
    nlohmann::json j;
    j["slope_m"] = r.slope_m;
    j["intercept_b"] = r.intercept_b;
    j["pearson_r"] = r.pearson_r;
    j["n"] = r.n;
    j["ws_mean"] = r.ws_mean;
    j["pk_mean"] = r.pk_mean;
    return j.dump(2);
}

}  // namespace prunelab
