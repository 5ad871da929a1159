#ifndef COPRIMARY_SELECTION_HPP
#define COPRIMARY_SELECTION_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "core_types.hpp"
#include "inference.hpp"
#include "mbeta.hpp"
#include "parallel.hpp"
#include "random.hpp"
#include "sampling.hpp"

namespace coprimary
{

/// Hold-out validation predictions of all M candidates, split by class.
struct ValidationData
{
    SimilarityMatrix q_se;
    SimilarityMatrix q_sp;

    ValidationData(SimilarityMatrix se, SimilarityMatrix sp)
        : q_se(std::move(se))
        , q_sp(std::move(sp))
    {
        if (q_se.models() != q_sp.models())
        {
            throw Error(ErrorKind::DimensionMismatch, "validation matrices differ in model count");
        }
    }

    std::size_t models() const noexcept { return q_se.models(); }
};

/// Balanced accuracy (Se + Sp) / 2 of regularized estimates and its standard error.
struct BalancedAccuracy
{
    Vector value;
    Vector stderr_;
};

inline BalancedAccuracy balanced_accuracy(const CoPrimaryEstimate& est)
{
    BalancedAccuracy out;
    out.value = 0.5 * (est.se_mean + est.sp_mean);
    out.stderr_ = (0.25 * (est.se_cov.diagonal() + est.sp_cov.diagonal())).cwiseMax(0.0).cwiseSqrt();
    return out;
}

/// Indices sorted by descending score, ties by lower index.
inline IndexList order_descending(const Vector& score)
{
    IndexList idx(static_cast<std::size_t>(score.size()));
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return score(static_cast<Eigen::Index>(a)) > score(static_cast<Eigen::Index>(b));
    });
    return idx;
}

/// Models ordered by validation min(T_se, T_sp), truncated to s_max.
inline IndexList prerank(const ValidationData& val, const Threshold& thr, std::size_t s_max)
{
    if (s_max == 0)
    {
        throw Error(ErrorKind::ParameterOutOfRange, "s_max must be at least 1");
    }
    const TestStatistics stats = test_statistics(regularized_estimate(val.q_se, val.q_sp), thr);
    IndexList order = order_descending(stats.t_min);
    order.resize(std::min(order.size(), s_max));
    return order;
}

/// All models whose score is at least `cutoff`, in index order.
inline IndexList at_least(const Vector& score, double cutoff)
{
    IndexList out;
    for (Eigen::Index m = 0; m < score.size(); ++m)
    {
        if (score(m) >= cutoff)
        {
            out.push_back(static_cast<std::size_t>(m));
        }
    }
    return out;
}

inline IndexList select_default(const ValidationData& val)
{
    const auto bacc = balanced_accuracy(regularized_estimate(val.q_se, val.q_sp));
    return at_least(bacc.value, bacc.value.maxCoeff());
}

/// { m : bAcc_m >= max bAcc - k SE(best) }.
inline IndexList select_within_k_se(const ValidationData& val, double k)
{
    if (!(k >= 0.0))
    {
        throw Error(ErrorKind::ParameterOutOfRange, "k must be non-negative");
    }
    const auto bacc = balanced_accuracy(regularized_estimate(val.q_se, val.q_sp));
    Eigen::Index best = 0;
    bacc.value.maxCoeff(&best);
    return at_least(bacc.value, bacc.value(best) - k * bacc.stderr_(best));
}

/// Target performance min(Se, Sp + delta0) per model.
inline Vector target_performance(const Vector& se, const Vector& sp, double delta0)
{
    return se.cwiseMin((sp.array() + delta0).matrix());
}

inline IndexList select_oracle(const Vector& true_se, const Vector& true_sp, const Threshold& thr)
{
    if (true_se.size() != true_sp.size() || true_se.size() == 0)
    {
        throw Error(ErrorKind::DimensionMismatch, "truth vectors must be non-empty and of equal length");
    }
    const Vector v = target_performance(true_se, true_sp, thr.delta0());
    return at_least(v, v.maxCoeff());
}

/// max over selected of vartheta - max over all of vartheta - c |S|. Diagnostic only.
inline double subset_utility(const IndexList& selected, const Vector& vartheta, double c)
{
    if (selected.empty())
    {
        throw Error(ErrorKind::EmptyModelSet, "empty selection");
    }
    double best = -std::numeric_limits<double>::infinity();
    for (auto m : selected)
    {
        if (m >= static_cast<std::size_t>(vartheta.size()))
        {
            throw Error(ErrorKind::IndexOutOfRange, "model index " + std::to_string(m) + " out of range");
        }
        best = std::max(best, vartheta(static_cast<Eigen::Index>(m)));
    }
    return best - vartheta.maxCoeff() - c * static_cast<double>(selected.size());
}

enum class SStarRule
{
    one_se,
    argmax
};

struct EfpOptions
{
    /// 0 selects round(sqrt(n_eval)).
    std::size_t s_max{0};
    std::size_t max_iter{250};
    double num_tol{0.001};
    SStarRule s_star_rule{SStarRule::one_se};
    /// Class counts for the prevalence prior; validation counts when absent.
    std::optional<std::size_t> n1_learn;
    std::optional<std::size_t> n0_learn;
    std::optional<double> fixed_prevalence;
    std::size_t workers{1};
};

struct EfpCurve
{
    Vector efp;
    Vector se;
    /// Selected number of models, 1-based count.
    std::size_t s_star{1};
    std::size_t iterations_used{0};
    /// Pre-ranked candidates (length s_max); the selection is its first s_star entries.
    IndexList ranking;
    std::size_t projections{0};

    IndexList selected() const { return IndexList(ranking.begin(), ranking.begin() + static_cast<std::ptrdiff_t>(s_star)); }
};

/// Generative model of one simulated evaluation study.
struct EfpModel
{
    MBetaSampler se;
    MBetaSampler sp;
    Threshold threshold;
    std::size_t n_eval;
    std::size_t n1_learn;
    std::size_t n0_learn;
    std::optional<double> fixed_prevalence;
};

/// Posterior of the ranked models under the uniform prior, as used by optimal_efp.
inline EfpModel efp_model(const ValidationData& val, const IndexList& ranking, const StudyConfig& cfg,
                          const EfpOptions& options)
{
    const SimilarityMatrix q_se = val.q_se.select_columns(ranking);
    const SimilarityMatrix q_sp = val.q_sp.select_columns(ranking);
    const auto prior = uniform_prior(ranking.size());
    return EfpModel{MBetaSampler(posterior_update(prior, moment_matrix(q_se))),
                    MBetaSampler(posterior_update(prior, moment_matrix(q_sp))),
                    cfg.threshold,
                    cfg.n_eval,
                    options.n1_learn.value_or(q_se.rows()),
                    options.n0_learn.value_or(q_sp.rows()),
                    options.fixed_prevalence};
}

/// Regularized one-sided statistic for `count` successes out of n against theta0.
inline double regularized_t(double count, double n, double theta0)
{
    const double mean = (count + 1.0) / (n + 2.0);
    return (mean - theta0) / std::sqrt(mean * (1.0 - mean) / (n + 3.0));
}

struct EfpIteration
{
    /// vartheta of the empirically best model among the first S, for S = 1..s_max.
    Vector row;
    std::size_t projections{0};
};

/// One simulated evaluation study: draw truth, group sizes and counts, then record the true
/// performance of the running argmax of min(T_se, T_sp) over every prefix.
inline EfpIteration efp_iteration(const EfpModel& model, Rng& rng)
{
    const ThetaDraw theta = [&] {
        MBetaDraw se = model.se(rng);
        MBetaDraw sp = model.sp(rng);
        return ThetaDraw{std::move(se.theta), std::move(sp.theta), std::move(se.corr), std::move(sp.corr),
                         se.projections + sp.projections};
    }();
    const GroupSizes g = sample_group_sizes(model.n_eval, model.n1_learn, model.n0_learn, rng, model.fixed_prevalence);
    const auto c_se = CorrelatedBinarySampler(theta.se, theta.corr_se).sample_counts(g.n1, rng);
    const auto c_sp = CorrelatedBinarySampler(theta.sp, theta.corr_sp).sample_counts(g.n0, rng);

    const Vector vartheta = target_performance(theta.se, theta.sp, model.threshold.delta0());
    const auto s = vartheta.size();
    EfpIteration out;
    out.projections = theta.projections;
    out.row.resize(s);
    const double n1 = static_cast<double>(g.n1);
    const double n0 = static_cast<double>(g.n0);
    double best = -std::numeric_limits<double>::infinity();
    Eigen::Index best_m = 0;
    std::size_t ties = 0;
    for (Eigen::Index m = 0; m < s; ++m)
    {
        const double t = std::min(regularized_t(static_cast<double>(c_se(m)), n1, model.threshold.se0()),
                                  regularized_t(static_cast<double>(c_sp(m)), n0, model.threshold.sp0()));
        if (t > best)
        {
            best = t;
            best_m = m;
            ties = 1;
        }
        else if (t == best)
        {
            ++ties;
            std::uniform_int_distribution<std::size_t> pick(0, ties - 1);
            if (pick(rng) == 0)
            {
                best_m = m;
            }
        }
        out.row(m) = vartheta(best_m);
    }
    return out;
}

namespace detail
{

struct ColumnSummary
{
    Vector mean;
    Vector se;
};

inline ColumnSummary summarize_columns(const Matrix& e, std::size_t rows)
{
    const auto i = static_cast<Eigen::Index>(rows);
    const auto block = e.topRows(i);
    ColumnSummary out;
    out.mean = block.colwise().mean().transpose();
    out.se = Vector::Constant(e.cols(), std::numeric_limits<double>::infinity());
    if (rows > 1)
    {
        const Matrix centered = block.rowwise() - out.mean.transpose();
        const Vector var = centered.colwise().squaredNorm().transpose() / static_cast<double>(rows - 1);
        out.se = (var / static_cast<double>(rows)).cwiseSqrt();
    }
    return out;
}

inline std::size_t choose_s_star(const ColumnSummary& sum, SStarRule rule)
{
    Eigen::Index best = 0;
    const double top = sum.mean.maxCoeff(&best);
    if (rule == SStarRule::argmax)
    {
        return static_cast<std::size_t>(best) + 1;
    }
    const double se = std::isfinite(sum.se(best)) ? sum.se(best) : 0.0;
    for (Eigen::Index s = 0; s < sum.mean.size(); ++s)
    {
        if (sum.mean(s) >= top - se)
        {
            return static_cast<std::size_t>(s) + 1;
        }
    }
    return static_cast<std::size_t>(best) + 1;
}

} // namespace detail

inline constexpr std::uint64_t efp_stream = 0xEF9;

/// Monte Carlo optimization of the expected final performance over the number of pre-ranked
/// models to evaluate. Iteration i uses its own seed derived from `seed`; iterations run in
/// batches of `workers` and the stopping rule is checked after each iteration in order, so the
/// curve does not depend on the worker count.
inline EfpCurve optimal_efp(const ValidationData& val, const StudyConfig& cfg, const EfpOptions& options,
                            std::uint64_t seed)
{
    if (options.max_iter == 0)
    {
        throw Error(ErrorKind::ParameterOutOfRange, "max_iter must be at least 1");
    }
    if (cfg.n_eval < 2)
    {
        throw Error(ErrorKind::ParameterOutOfRange, "evaluation sample size must be at least 2");
    }
    std::size_t s_max = options.s_max;
    if (s_max == 0)
    {
        s_max = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(cfg.n_eval))));
    }
    s_max = std::max<std::size_t>(1, std::min(s_max, val.models()));

    EfpCurve curve;
    curve.ranking = prerank(val, cfg.threshold, s_max);
    const EfpModel model = efp_model(val, curve.ranking, cfg, options);

    Matrix e(static_cast<Eigen::Index>(options.max_iter), static_cast<Eigen::Index>(s_max));
    const std::size_t batch = std::max<std::size_t>(1, options.workers);
    std::vector<EfpIteration> results;
    std::size_t done = 0;
    bool stop = false;
    detail::ColumnSummary sum;
    while (!stop && done < options.max_iter)
    {
        const std::size_t count = std::min(batch, options.max_iter - done);
        results.assign(count, EfpIteration{});
        parallel_for(count, options.workers, [&](std::size_t k) {
            Rng rng = make_rng(seed, efp_stream, done + k);
            results[k] = efp_iteration(model, rng);
        });
        for (std::size_t k = 0; k < count && !stop; ++k)
        {
            e.row(static_cast<Eigen::Index>(done)) = results[k].row.transpose();
            curve.projections += results[k].projections;
            ++done;
            sum = detail::summarize_columns(e, done);
            curve.s_star = detail::choose_s_star(sum, options.s_star_rule);
            const double eps = sum.se(static_cast<Eigen::Index>(curve.s_star) - 1);
            stop = eps <= options.num_tol;
        }
    }
    curve.efp = sum.mean;
    curve.se = sum.se;
    curve.iterations_used = done;
    return curve;
}

inline EfpCurve optimal_efp(const ValidationData& val, const StudyConfig& cfg, const EfpOptions& options, Rng& rng)
{
    return optimal_efp(val, cfg, options, rng());
}

} // namespace coprimary

#endif // COPRIMARY_SELECTION_HPP
