#ifndef COPRIMARY_SIMHARNESS_HPP
#define COPRIMARY_SIMHARNESS_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "core_types.hpp"
#include "inference.hpp"
#include "mbeta.hpp"
#include "parallel.hpp"
#include "random.hpp"
#include "sampling.hpp"
#include "selection.hpp"

namespace coprimary
{

/// Sensitivities and specificities at the least favorable configuration indexed by b:
/// b_m = 1 puts model m on the sensitivity boundary (Se0 - (m-1) eps, 1), b_m = 0 on the
/// specificity boundary (1, Sp0 - (S-m) eps).
inline std::pair<Vector, Vector> lfc_parameters(std::size_t s, const Threshold& thr, double epsilon,
                                                const std::vector<std::uint8_t>& b)
{
    if (s == 0 || b.size() != s)
    {
        throw Error(ErrorKind::DimensionMismatch, "b must have one entry per model");
    }
    if (!(epsilon >= 0.0) || epsilon * static_cast<double>(s - 1) >= std::min(thr.se0(), thr.sp0()))
    {
        throw Error(ErrorKind::ParameterOutOfRange, "epsilon " + std::to_string(epsilon) + " leaves (0,1) for S = " +
                                                        std::to_string(s));
    }
    Vector se(static_cast<Eigen::Index>(s));
    Vector sp(static_cast<Eigen::Index>(s));
    for (std::size_t m = 0; m < s; ++m)
    {
        const auto i = static_cast<Eigen::Index>(m);
        if (b[m] > 1)
        {
            throw Error(ErrorKind::ParameterOutOfRange, "b entries must be 0 or 1");
        }
        if (b[m] == 1)
        {
            se(i) = thr.se0() - static_cast<double>(m) * epsilon;
            sp(i) = 1.0;
        }
        else
        {
            se(i) = 1.0;
            sp(i) = thr.sp0() - static_cast<double>(s - 1 - m) * epsilon;
        }
    }
    return {se, sp};
}

/// Uniformly random b with floor(S/2) ones; S = 1 gives b = (1).
inline std::vector<std::uint8_t> draw_lfc_indicator(std::size_t s, Rng& rng)
{
    std::vector<std::uint8_t> b(s, 0);
    if (s == 1)
    {
        b[0] = 1;
        return b;
    }
    std::fill(b.begin(), b.begin() + static_cast<std::ptrdiff_t>(s / 2), 1);
    std::shuffle(b.begin(), b.end(), rng);
    return b;
}

/// Lowers components equal to 1 so that prevalence * Se + (1 - prevalence) * Sp <= cap.
inline void apply_accuracy_cap(Vector& se, Vector& sp, double prevalence, double cap)
{
    if (!(cap > 0.0 && cap <= 1.0))
    {
        throw Error(ErrorKind::ParameterOutOfRange, "accuracy cap must lie in (0, 1]");
    }
    const double rho = prevalence;
    auto acc = [&](Eigen::Index m) { return rho * se(m) + (1.0 - rho) * sp(m); };
    for (Eigen::Index m = 0; m < se.size(); ++m)
    {
        if (acc(m) <= cap)
        {
            continue;
        }
        double& degenerate = sp(m) == 1.0 ? sp(m) : se(m);
        const double other = sp(m) == 1.0 ? se(m) : sp(m);
        const double weight = sp(m) == 1.0 ? 1.0 - rho : rho;
        degenerate = (cap - (1.0 - weight) * other) / weight;
        while (acc(m) > cap)
        {
            degenerate = std::nextafter(degenerate, 0.0);
        }
        if (!(degenerate > 0.0))
        {
            throw Error(ErrorKind::ParameterOutOfRange, "accuracy cap unreachable");
        }
    }
}

enum class CorrStructure
{
    equicorrelation,
    independence,
    autocorrelation
};

inline const char* to_string(CorrStructure c)
{
    switch (c)
    {
    case CorrStructure::equicorrelation: return "equicorrelation";
    case CorrStructure::independence: return "independence";
    case CorrStructure::autocorrelation: return "autocorrelation";
    }
    return "unknown";
}

inline Matrix structured_correlation(std::size_t s, CorrStructure structure, double r)
{
    const auto n = static_cast<Eigen::Index>(s);
    Matrix out = Matrix::Identity(n, n);
    if (structure == CorrStructure::independence)
    {
        return out;
    }
    for (Eigen::Index i = 0; i < n; ++i)
    {
        for (Eigen::Index j = 0; j < n; ++j)
        {
            if (i != j)
            {
                out(i, j) = structure == CorrStructure::equicorrelation ? r : std::pow(r, std::abs(static_cast<double>(i - j)));
            }
        }
    }
    return out;
}

struct LfcScenario
{
    std::size_t S{1};
    Threshold theta0{0.8, 0.8};
    double epsilon{0.0};
    double prevalence{0.2};
    std::size_t n_total{200};
    double corr_strength{0.5};
    CorrStructure corr_structure{CorrStructure::equicorrelation};
    std::optional<double> acc_cap;
    std::size_t n_sim{1000};
    /// Binomial group sizes instead of n1 = round(prevalence * n).
    bool random_group_sizes{false};

    void validate() const
    {
        if (S == 0)
        {
            throw Error(ErrorKind::EmptyModelSet, "S must be at least 1");
        }
        if (n_sim == 0)
        {
            throw Error(ErrorKind::ParameterOutOfRange, "n_sim must be at least 1");
        }
        if (!(prevalence > 0.0 && prevalence < 1.0))
        {
            throw Error(ErrorKind::ParameterOutOfRange, "prevalence must lie in (0,1)");
        }
        if (!(epsilon >= 0.0) || epsilon * static_cast<double>(S - 1) >= std::min(theta0.se0(), theta0.sp0()))
        {
            throw Error(ErrorKind::ParameterOutOfRange, "epsilon out of range for S = " + std::to_string(S));
        }
        if (corr_structure != CorrStructure::independence && !(corr_strength > -1.0 && corr_strength < 1.0))
        {
            throw Error(ErrorKind::ParameterOutOfRange, "correlation strength must lie in (-1, 1)");
        }
        if (acc_cap && !(*acc_cap > 0.0 && *acc_cap <= 1.0))
        {
            throw Error(ErrorKind::ParameterOutOfRange, "accuracy cap must lie in (0, 1]");
        }
    }
};

struct FwerResult
{
    double fwer{0.0};
    double mc_se{0.0};
    std::size_t n_sim{0};
    std::size_t rejections_any{0};
};

inline constexpr std::uint64_t lfc_stream = 0x1FC;

/// One replicate at the least favorable configuration; true when a true null is rejected.
inline bool lfc_replicate(const LfcScenario& sc, const StudyConfig& cfg, Rng& rng)
{
    const auto b = draw_lfc_indicator(sc.S, rng);
    auto [se, sp] = lfc_parameters(sc.S, sc.theta0, sc.epsilon, b);
    if (sc.acc_cap)
    {
        apply_accuracy_cap(se, sp, sc.prevalence, *sc.acc_cap);
    }
    const GroupSizes g = sc.random_group_sizes ? sample_group_sizes(sc.n_total, 0, 0, rng)
                                               : sample_group_sizes(sc.n_total, 0, 0, rng, sc.prevalence);
    const Matrix corr = structured_correlation(sc.S, sc.corr_structure, sc.corr_strength);
    const SimilarityMatrix q_se = CorrelatedBinarySampler(se, corr).sample(g.n1, rng, ClassLabel::diseased);
    const SimilarityMatrix q_sp = CorrelatedBinarySampler(sp, corr).sample(g.n0, rng, ClassLabel::healthy);
    const CoPrimaryEstimate est = regularized_estimate(q_se, q_sp);

    // every hypothesis is true at the LFC, so a false rejection is any rejection
    StudyConfig test_cfg = cfg;
    test_cfg.threshold = sc.theta0;
    return max_t_rejects_any(est, test_cfg);
}

/// Family-wise error rate at the scenario's least favorable configuration.
inline FwerResult simulate_fwer(const LfcScenario& sc, const StudyConfig& cfg, std::uint64_t seed, std::size_t workers = 1)
{
    sc.validate();
    cfg.validate();
    std::vector<std::uint8_t> hit(sc.n_sim, 0);
    parallel_for(sc.n_sim, workers, [&](std::size_t r) {
        Rng rng = make_rng(seed, lfc_stream, r);
        hit[r] = lfc_replicate(sc, cfg, rng) ? 1 : 0;
    });
    FwerResult out;
    out.n_sim = sc.n_sim;
    out.rejections_any = static_cast<std::size_t>(std::count(hit.begin(), hit.end(), 1));
    out.fwer = static_cast<double>(out.rejections_any) / static_cast<double>(sc.n_sim);
    out.mc_se = std::sqrt(out.fwer * (1.0 - out.fwer) / static_cast<double>(sc.n_sim));
    return out;
}

inline FwerResult simulate_fwer(const LfcScenario& sc, const StudyConfig& cfg, Rng& rng, std::size_t workers = 1)
{
    return simulate_fwer(sc, cfg, rng(), workers);
}

/// True parameters of all M candidates.
struct StudyTruth
{
    Vector se;
    Vector sp;
    Matrix corr_se;
    Matrix corr_sp;

    std::size_t models() const noexcept { return static_cast<std::size_t>(se.size()); }
};

enum class SelectionRule
{
    default_rule,
    within_k_se,
    optimal_efp,
    oracle,
    all
};

inline const char* to_string(SelectionRule r)
{
    switch (r)
    {
    case SelectionRule::default_rule: return "default";
    case SelectionRule::within_k_se: return "within_k_se";
    case SelectionRule::optimal_efp: return "optimal_efp";
    case SelectionRule::oracle: return "oracle";
    case SelectionRule::all: return "all";
    }
    return "unknown";
}

struct StudyDesign
{
    std::size_t n_validation{200};
    std::size_t n_eval{400};
    double prevalence{0.5};
    /// Cap on evaluated models for every rule; 0 selects round(sqrt(n_eval)).
    std::size_t s_max{0};
    double k{1.0};
    EfpOptions efp{};
    /// Threshold offsets for rr(delta): theta0 = vartheta_oracle - delta.
    std::vector<double> deltas{0.0, 0.05, 0.10};
    /// false: only select m* (argmax of t_min); no test, corrected = raw estimates, rr empty.
    bool inference{true};

    std::size_t effective_s_max() const
    {
        return s_max > 0 ? s_max : static_cast<std::size_t>(std::max<long long>(1, std::llround(std::sqrt(static_cast<double>(n_eval)))));
    }
};

struct StudyRecord
{
    SelectionRule rule{SelectionRule::default_rule};
    IndexList selected;
    std::vector<std::uint8_t> rejected;
    std::size_t m_star{0};
    bool final_rejected{false};
    double vartheta_star{0.0};
    double vartheta_oracle{0.0};
    double se_star{0.0};
    double sp_star{0.0};
    double corrected_se{0.0};
    double corrected_sp{0.0};
    double delta0{0.0};
    std::vector<double> deltas;
    /// Rejection of the final model at theta0 = vartheta_oracle - delta; NaN-free 0/1, 2 if undefined.
    std::vector<std::uint8_t> rr;
    /// Rejection of m* when theta0 is its own true performance (upper-bound variant).
    std::uint8_t conditional_rejection{0};
    std::size_t efp_projections{0};
};

inline constexpr std::uint64_t validation_stream = 0x7A1;
inline constexpr std::uint64_t evaluation_stream = 0xE7A;
inline constexpr std::uint64_t selection_stream = 0x5E1;
inline constexpr std::uint64_t final_stream = 0xF1A;

/// One evaluation-study pipeline for a fixed truth. Validation and evaluation data depend only
/// on the seed, so different rules run on common random numbers.
class StudySimulator
{
public:
    StudySimulator(StudyTruth truth, StudyDesign design)
        : m_truth(std::move(truth))
        , m_design(std::move(design))
        , m_se_sampler(m_truth.se, m_truth.corr_se)
        , m_sp_sampler(m_truth.sp, m_truth.corr_sp)
    {
        const auto m = static_cast<Eigen::Index>(m_truth.models());
        if (m == 0)
        {
            throw Error(ErrorKind::EmptyModelSet, "truth has no models");
        }
        if (m_truth.sp.size() != m || m_truth.corr_se.rows() != m || m_truth.corr_sp.rows() != m)
        {
            throw Error(ErrorKind::DimensionMismatch, "truth components differ in model count");
        }
        for (Eigen::Index i = 0; i < m; ++i)
        {
            if (!(m_truth.se(i) > 0.0 && m_truth.se(i) < 1.0 && m_truth.sp(i) > 0.0 && m_truth.sp(i) < 1.0))
            {
                throw Error(ErrorKind::ParameterOutOfRange, "true proportions must lie in (0,1)");
            }
        }
        if (!(m_design.prevalence > 0.0 && m_design.prevalence < 1.0))
        {
            throw Error(ErrorKind::ParameterOutOfRange, "prevalence must lie in (0,1)");
        }
    }

    const StudyTruth& truth() const noexcept { return m_truth; }
    const StudyDesign& design() const noexcept { return m_design; }

    ValidationData validation_data(std::uint64_t seed) const
    {
        Rng rng = make_rng(seed, validation_stream, 0);
        return draw(m_design.n_validation, rng);
    }

    ValidationData evaluation_data(std::uint64_t seed) const
    {
        Rng rng = make_rng(seed, evaluation_stream, 0);
        return draw(m_design.n_eval, rng);
    }

    IndexList select(SelectionRule rule, const StudyConfig& cfg, std::uint64_t seed, std::size_t* projections = nullptr) const
    {
        const std::size_t s_max = m_design.effective_s_max();
        const auto& thr = cfg.threshold;
        switch (rule)
        {
        case SelectionRule::oracle:
            return cap(select_oracle(m_truth.se, m_truth.sp, thr),
                       target_performance(m_truth.se, m_truth.sp, thr.delta0()), s_max);
        case SelectionRule::all:
        {
            IndexList all(m_truth.models());
            std::iota(all.begin(), all.end(), std::size_t{0});
            return all;
        }
        default: break;
        }
        const ValidationData val = validation_data(seed);
        const Vector bacc = balanced_accuracy(regularized_estimate(val.q_se, val.q_sp)).value;
        if (rule == SelectionRule::default_rule)
        {
            return cap(select_default(val), bacc, s_max);
        }
        if (rule == SelectionRule::within_k_se)
        {
            return cap(select_within_k_se(val, m_design.k), bacc, s_max);
        }
        StudyConfig efp_cfg = cfg;
        efp_cfg.n_eval = m_design.n_eval;
        EfpOptions opt = m_design.efp;
        opt.s_max = s_max;
        const EfpCurve curve = optimal_efp(val, efp_cfg, opt, derive_seed(seed, selection_stream, 0));
        if (projections)
        {
            *projections = curve.projections;
        }
        return curve.selected();
    }

    StudyRecord run(SelectionRule rule, const StudyConfig& cfg, std::uint64_t seed) const
    {
        cfg.validate();
        StudyRecord rec;
        rec.rule = rule;
        rec.delta0 = cfg.threshold.delta0();
        rec.selected = select(rule, cfg, seed, &rec.efp_projections);
        std::sort(rec.selected.begin(), rec.selected.end());

        const ValidationData eval = evaluation_data(seed);
        const SimilarityMatrix q_se = eval.q_se.select_columns(rec.selected);
        const SimilarityMatrix q_sp = eval.q_sp.select_columns(rec.selected);
        const CoPrimaryEstimate est = regularized_estimate(q_se, q_sp);
        TestOutcome outcome;
        if (m_design.inference)
        {
            outcome = max_t_test(est, cfg);
        }
        else
        {
            outcome.statistics = test_statistics(est, cfg.threshold);
            outcome.rejected.assign(rec.selected.size(), 0);
            outcome.corrected_se = est.se_mean;
            outcome.corrected_sp = est.sp_mean;
        }
        rec.rejected = outcome.rejected;

        Rng tie = make_rng(seed, final_stream, 0);
        const std::size_t local = *final_model(outcome, FinalModelChoice{}, tie);
        rec.m_star = rec.selected[local];
        rec.final_rejected = outcome.rejected[local] != 0;

        const Vector vartheta = target_performance(m_truth.se, m_truth.sp, rec.delta0);
        const auto ms = static_cast<Eigen::Index>(rec.m_star);
        rec.vartheta_star = vartheta(ms);
        rec.vartheta_oracle = vartheta.maxCoeff();
        rec.se_star = m_truth.se(ms);
        rec.sp_star = m_truth.sp(ms);
        rec.corrected_se = outcome.corrected_se(static_cast<Eigen::Index>(local));
        rec.corrected_sp = outcome.corrected_sp(static_cast<Eigen::Index>(local));
        if (!m_design.inference)
        {
            rec.conditional_rejection = 2;
            return rec;
        }

        // the final model is the argmax of t_min at any threshold, so phi_* is "any rejection"
        rec.deltas = m_design.deltas;
        for (double delta : m_design.deltas)
        {
            rec.rr.push_back(decision_at(est, cfg, rec.vartheta_oracle - delta, std::nullopt));
        }
        rec.conditional_rejection = decision_at(est, cfg, rec.vartheta_star, local);
        return rec;
    }

private:
    ValidationData draw(std::size_t n, Rng& rng) const
    {
        const GroupSizes g = sample_group_sizes(n, 0, 0, rng, m_design.prevalence);
        SimilarityMatrix se = m_se_sampler.sample(g.n1, rng, ClassLabel::diseased);
        SimilarityMatrix sp = m_sp_sampler.sample(g.n0, rng, ClassLabel::healthy);
        return ValidationData(std::move(se), std::move(sp));
    }

    /// Keeps at most s_max models, highest score first, ties by index.
    static IndexList cap(IndexList chosen, const Vector& score, std::size_t s_max)
    {
        if (chosen.size() <= s_max)
        {
            return chosen;
        }
        std::stable_sort(chosen.begin(), chosen.end(), [&](std::size_t a, std::size_t b) {
            return score(static_cast<Eigen::Index>(a)) > score(static_cast<Eigen::Index>(b));
        });
        chosen.resize(s_max);
        return chosen;
    }

    /// 0/1 decision at theta0 = (level, level - delta0); 2 when that threshold leaves (0,1).
    static std::uint8_t decision_at(const CoPrimaryEstimate& est, const StudyConfig& cfg, double level,
                                    std::optional<std::size_t> model)
    {
        const double sp0 = level - cfg.threshold.delta0();
        if (!(level > 0.0 && level < 1.0 && sp0 > 0.0 && sp0 < 1.0))
        {
            return 2;
        }
        StudyConfig c = cfg;
        c.threshold = Threshold(level, sp0);
        return max_t_rejects(est, c, model) ? 1 : 0;
    }

    StudyTruth m_truth;
    StudyDesign m_design;
    CorrelatedBinarySampler m_se_sampler;
    CorrelatedBinarySampler m_sp_sampler;
};

inline StudyRecord simulate_study(const StudyTruth& truth, SelectionRule rule, const StudyDesign& design,
                                  const StudyConfig& cfg, std::uint64_t seed)
{
    return StudySimulator(truth, design).run(rule, cfg, seed);
}

struct Metric
{
    double mean{0.0};
    double mc_se{0.0};
    std::size_t n{0};
};

inline Metric summarize(const std::vector<double>& values)
{
    Metric m;
    m.n = values.size();
    if (values.empty())
    {
        return m;
    }
    const double n = static_cast<double>(values.size());
    m.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    if (values.size() > 1)
    {
        double ss = 0.0;
        for (double v : values)
        {
            ss += (v - m.mean) * (v - m.mean);
        }
        m.mc_se = std::sqrt(ss / (n - 1.0) / n);
    }
    return m;
}

struct StudySummary
{
    std::size_t records{0};
    Metric vartheta_star;
    Metric p_above_tau;
    double tau{0.75};
    std::vector<double> deltas;
    std::vector<Metric> rr;
    Metric final_rejection;
    Metric fwer_conditional;
    Metric bias;
    Metric mae2;
    Metric p_o1;
    Metric p_o2;
    Metric selected_size;
};

/// Monte Carlo summaries over study records of one rule.
inline StudySummary aggregate(const std::vector<StudyRecord>& records, double tau = 0.75)
{
    if (records.empty())
    {
        throw Error(ErrorKind::EmptyInput, "no study records");
    }
    const std::size_t n = records.size();
    auto collect = [&](auto f) {
        std::vector<double> v;
        v.reserve(n);
        for (const auto& r : records)
        {
            v.push_back(f(r));
        }
        return summarize(v);
    };
    StudySummary out;
    out.records = n;
    out.tau = tau;
    out.vartheta_star = collect([](const StudyRecord& r) { return r.vartheta_star; });
    out.p_above_tau = collect([&](const StudyRecord& r) { return r.vartheta_star > tau ? 1.0 : 0.0; });
    out.final_rejection = collect([](const StudyRecord& r) { return r.final_rejected ? 1.0 : 0.0; });
    out.bias = collect([](const StudyRecord& r) {
        return std::min(r.corrected_se, r.corrected_sp + r.delta0) - r.vartheta_star;
    });
    out.mae2 = collect([](const StudyRecord& r) {
        return 0.5 * (std::fabs(r.corrected_se - r.se_star) + std::fabs(r.corrected_sp - r.sp_star));
    });
    out.p_o1 = collect([](const StudyRecord& r) {
        return r.corrected_se > r.se_star || r.corrected_sp > r.sp_star ? 1.0 : 0.0;
    });
    out.p_o2 = collect([](const StudyRecord& r) {
        return r.corrected_se > r.se_star && r.corrected_sp > r.sp_star ? 1.0 : 0.0;
    });
    out.selected_size = collect([](const StudyRecord& r) { return static_cast<double>(r.selected.size()); });

    std::vector<double> cond;
    for (const auto& r : records)
    {
        if (r.conditional_rejection != 2)
        {
            cond.push_back(r.conditional_rejection);
        }
    }
    out.fwer_conditional = summarize(cond);

    out.deltas = records.front().deltas;
    for (std::size_t d = 0; d < out.deltas.size(); ++d)
    {
        std::vector<double> v;
        for (const auto& r : records)
        {
            if (d < r.rr.size() && r.rr[d] != 2)
            {
                v.push_back(r.rr[d]);
            }
        }
        out.rr.push_back(summarize(v));
    }
    return out;
}

} // namespace coprimary

#endif // COPRIMARY_SIMHARNESS_HPP
