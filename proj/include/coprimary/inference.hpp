#ifndef COPRIMARY_INFERENCE_HPP
#define COPRIMARY_INFERENCE_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "core_types.hpp"
#include "mvnorm.hpp"
#include "random.hpp"

namespace coprimary
{

struct TestStatistics
{
    Vector t_se;
    Vector t_sp;
    /// Elementwise min(t_se, t_sp).
    Vector t_min;
    /// 1 where the sensitivity margin is the smaller one (ties count as sensitivity).
    std::vector<std::uint8_t> b_hat;
    Vector se_stderr;
    Vector sp_stderr;
};

struct TestOutcome
{
    TestStatistics statistics;
    double critical_value{0.0};
    /// Equicoordinate median used for the corrected estimates; NaN when not computed.
    double median_critical_value{std::numeric_limits<double>::quiet_NaN()};
    std::vector<std::uint8_t> rejected;
    Vector se_mean;
    Vector sp_mean;
    Vector ci_lower_se;
    Vector ci_lower_sp;
    Vector corrected_se;
    Vector corrected_sp;
    CorrelationMatrix r_hat;

    std::size_t models() const noexcept { return rejected.size(); }
    bool any_rejected() const
    {
        return std::any_of(rejected.begin(), rejected.end(), [](auto v) { return v != 0; });
    }
};

struct TestOptions
{
    /// Second quantile call at p = 0.5; skipped in pure error-rate simulations.
    bool corrected_estimates{true};
};

inline TestStatistics test_statistics(const CoPrimaryEstimate& est, const Threshold& thr)
{
    const auto s = static_cast<Eigen::Index>(est.models());
    if (est.sp_mean.size() != s || est.se_cov.rows() != s || est.sp_cov.rows() != s)
    {
        throw Error(ErrorKind::DimensionMismatch, "estimate components differ in model count");
    }
    TestStatistics out;
    out.se_stderr = est.se_cov.diagonal().cwiseMax(0.0).cwiseSqrt();
    out.sp_stderr = est.sp_cov.diagonal().cwiseMax(0.0).cwiseSqrt();
    out.t_se.resize(s);
    out.t_sp.resize(s);
    out.t_min.resize(s);
    out.b_hat.resize(static_cast<std::size_t>(s));
    for (Eigen::Index m = 0; m < s; ++m)
    {
        const double d_se = est.se_mean(m) - thr.se0();
        const double d_sp = est.sp_mean(m) - thr.sp0();
        if (!(out.se_stderr(m) > 0.0) || !(out.sp_stderr(m) > 0.0))
        {
            throw Error(ErrorKind::ZeroStandardError, "model " + std::to_string(m) + " has zero standard error");
        }
        out.t_se(m) = d_se / out.se_stderr(m);
        out.t_sp(m) = d_sp / out.sp_stderr(m);
        out.t_min(m) = std::min(out.t_se(m), out.t_sp(m));
        out.b_hat[static_cast<std::size_t>(m)] = d_se <= d_sp ? 1 : 0;
    }
    return out;
}

/// Correlation of the statistics under the estimated least favorable configuration:
/// B R_se B + (I - B) R_sp (I - B) with unit diagonal.
inline CorrelationMatrix lfc_correlation(const CoPrimaryEstimate& est, const TestStatistics& stats)
{
    const CorrelationMatrix r_se = CorrelationMatrix::from_covariance(est.se_cov);
    const CorrelationMatrix r_sp = CorrelationMatrix::from_covariance(est.sp_cov);
    const auto s = static_cast<Eigen::Index>(stats.b_hat.size());
    Matrix r = Matrix::Identity(s, s);
    for (Eigen::Index i = 0; i < s; ++i)
    {
        const bool bi = stats.b_hat[static_cast<std::size_t>(i)] != 0;
        for (Eigen::Index j = 0; j < i; ++j)
        {
            const bool bj = stats.b_hat[static_cast<std::size_t>(j)] != 0;
            double v = 0.0;
            if (bi && bj)
            {
                v = r_se(i, j);
            }
            else if (!bi && !bj)
            {
                v = r_sp(i, j);
            }
            r(i, j) = v;
            r(j, i) = v;
        }
    }
    return CorrelationMatrix(std::move(r));
}

/// maxT simultaneous test of H_m: Se_m <= Se0 or Sp_m <= Sp0 over all evaluated models.
inline TestOutcome max_t_test(const CoPrimaryEstimate& est, const StudyConfig& cfg, const TestOptions& options = {})
{
    cfg.validate();
    TestOutcome out;
    out.statistics = test_statistics(est, cfg.threshold);
    out.r_hat = lfc_correlation(est, out.statistics);
    out.se_mean = est.se_mean;
    out.sp_mean = est.sp_mean;

    QuantileOptions q;
    q.tolerance = cfg.quantile_tolerance;
    q.cdf_tolerance = cfg.mc_tolerance;
    q.seed = cfg.seed;
    out.critical_value = equicoordinate_quantile(out.r_hat, 1.0 - cfg.alpha, q);

    const auto s = static_cast<Eigen::Index>(est.models());
    const auto& st = out.statistics;
    out.rejected.resize(static_cast<std::size_t>(s));
    for (Eigen::Index m = 0; m < s; ++m)
    {
        out.rejected[static_cast<std::size_t>(m)] = st.t_min(m) > out.critical_value ? 1 : 0;
    }
    out.ci_lower_se = (est.se_mean - out.critical_value * st.se_stderr).cwiseMax(0.0);
    out.ci_lower_sp = (est.sp_mean - out.critical_value * st.sp_stderr).cwiseMax(0.0);

    if (options.corrected_estimates)
    {
        out.median_critical_value = equicoordinate_quantile(out.r_hat, 0.5, q);
        out.corrected_se = (est.se_mean - out.median_critical_value * st.se_stderr).cwiseMax(0.0);
        out.corrected_sp = (est.sp_mean - out.median_critical_value * st.sp_stderr).cwiseMax(0.0);
    }
    return out;
}

/// maxT decision for one model (or for the best model when `model` is empty) without solving
/// for the critical value: H_m is rejected iff P(max Z <= t_min(m)) > 1 - alpha.
/// At most one probability evaluation.
inline bool max_t_rejects(const CoPrimaryEstimate& est, const StudyConfig& cfg, std::optional<std::size_t> model)
{
    cfg.validate();
    const TestStatistics stats = test_statistics(est, cfg.threshold);
    if (model && *model >= static_cast<std::size_t>(stats.t_min.size()))
    {
        throw Error(ErrorKind::IndexOutOfRange, "model index " + std::to_string(*model) + " out of range");
    }
    const double t = model ? stats.t_min(static_cast<Eigen::Index>(*model)) : stats.t_min.maxCoeff();
    const auto s = static_cast<double>(stats.t_min.size());
    if (t <= normal::quantile(1.0 - cfg.alpha))
    {
        return false;
    }
    if (t > normal::quantile(1.0 - cfg.alpha / s))
    {
        return true;
    }
    const CorrelationMatrix r = lfc_correlation(est, stats);
    OrthantOptions opt;
    opt.tolerance = cfg.mc_tolerance;
    opt.seed = cfg.seed;
    opt.separate_from = 1.0 - cfg.alpha;
    const auto prob = mvn_orthant_cdf(t, stats.t_min.size() > 2 ? repair_correlation(r) : r, opt);
    return prob.value > 1.0 - cfg.alpha;
}

/// Whether the maxT test rejects at least one hypothesis.
inline bool max_t_rejects_any(const CoPrimaryEstimate& est, const StudyConfig& cfg)
{
    return max_t_rejects(est, cfg, std::nullopt);
}

/// Embeds decisions for the evaluated subset into all M candidates; unevaluated models are 0.
inline std::vector<std::uint8_t> extend_decision(const TestOutcome& outcome, const IndexList& selected,
                                                 std::size_t total_models)
{
    if (selected.size() != outcome.rejected.size())
    {
        throw Error(ErrorKind::DimensionMismatch, "selection size does not match outcome size");
    }
    std::vector<std::uint8_t> full(total_models, 0);
    for (std::size_t k = 0; k < selected.size(); ++k)
    {
        if (selected[k] >= total_models)
        {
            throw Error(ErrorKind::IndexOutOfRange,
                        "model index " + std::to_string(selected[k]) + " outside " + std::to_string(total_models));
        }
        full[selected[k]] = outcome.rejected[k];
    }
    return full;
}

/// Index of the largest value among `eligible` entries, ties broken uniformly at random.
/// The generator is only consulted when a tie occurs.
template <typename Values>
std::optional<std::size_t> argmax_random_tie(const Values& values, const std::vector<std::uint8_t>* eligible, Rng& rng)
{
    std::optional<std::size_t> best;
    double best_value = 0.0;
    std::size_t ties = 0;
    const auto n = static_cast<std::size_t>(values.size());
    for (std::size_t i = 0; i < n; ++i)
    {
        if (eligible && (*eligible)[i] == 0)
        {
            continue;
        }
        const double v = values[static_cast<Eigen::Index>(i)];
        if (!best || v > best_value)
        {
            best = i;
            best_value = v;
            ties = 1;
        }
        else if (v == best_value)
        {
            ++ties;
            std::uniform_int_distribution<std::size_t> pick(0, ties - 1);
            if (pick(rng) == 0)
            {
                best = i;
            }
        }
    }
    return best;
}

enum class FinalModelRule
{
    max_t,
    max_weighted
};

struct FinalModelChoice
{
    FinalModelRule rule{FinalModelRule::max_t};
    /// Weight on sensitivity for the weighted rule; 0.5 maximizes balanced accuracy.
    double weight{0.5};
};

/// max_t: argmax of t_min over all evaluated models (defined even without rejections).
/// max_weighted: argmax of w Se + (1 - w) Sp among rejected models, none if nothing is rejected.
inline std::optional<std::size_t> final_model(const TestOutcome& outcome, const FinalModelChoice& choice, Rng& rng)
{
    if (choice.rule == FinalModelRule::max_t)
    {
        return argmax_random_tie(outcome.statistics.t_min, nullptr, rng);
    }
    if (!(choice.weight > 0.0 && choice.weight < 1.0))
    {
        throw Error(ErrorKind::ParameterOutOfRange, "weight must lie in (0,1)");
    }
    const Vector score = choice.weight * outcome.se_mean + (1.0 - choice.weight) * outcome.sp_mean;
    return argmax_random_tie(score, &outcome.rejected, rng);
}

} // namespace coprimary

#endif // COPRIMARY_INFERENCE_HPP
