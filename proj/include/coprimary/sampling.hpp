#ifndef COPRIMARY_SAMPLING_HPP
#define COPRIMARY_SAMPLING_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/special_functions/beta.hpp>

#include "core_types.hpp"
#include "mbeta.hpp"
#include "mvnorm.hpp"
#include "normal.hpp"
#include "random.hpp"

namespace coprimary
{

/// Target law of one class's similarity matrix: column means in (0, 1] and pairwise
/// indicator (phi) correlations. Entries of `corr` that involve a column with mean 1 are ignored.
struct BinaryTargetSpec
{
    Vector means;
    Matrix corr;
    std::size_t n{0};
};

struct CorrelationBounds
{
    double lower;
    double upper;
};

/// Range of the phi coefficient between Bernoulli(p1) and Bernoulli(p2), both in (0, 1).
inline CorrelationBounds phi_bounds(double p1, double p2)
{
    const double scale = std::sqrt(p1 * (1.0 - p1) * p2 * (1.0 - p2));
    const double lo = (std::max(0.0, p1 + p2 - 1.0) - p1 * p2) / scale;
    const double hi = (std::min(p1, p2) - p1 * p2) / scale;
    return {std::max(-1.0, lo), std::min(1.0, hi)};
}

inline bool correlation_feasible(double p1, double p2, double r, double tol = 1e-12)
{
    const auto b = phi_bounds(p1, p2);
    return r >= b.lower - tol && r <= b.upper + tol;
}

/// Latent normal correlation whose dichotomization at Phi^-1(1 - p) reproduces the phi
/// correlation `r` between Bernoulli(p1) and Bernoulli(p2).
inline double latent_correlation(double p1, double p2, double r)
{
    if (!(p1 > 0.0 && p1 < 1.0 && p2 > 0.0 && p2 < 1.0))
    {
        throw Error(ErrorKind::ParameterOutOfRange, "latent correlation needs means strictly inside (0,1)");
    }
    if (!correlation_feasible(p1, p2, r))
    {
        const auto b = phi_bounds(p1, p2);
        throw Error(ErrorKind::InfeasibleCorrelation, "correlation " + std::to_string(r) + " outside [" +
                                                          std::to_string(b.lower) + ", " + std::to_string(b.upper) + "]");
    }
    const double joint = r * std::sqrt(p1 * (1.0 - p1) * p2 * (1.0 - p2)) + p1 * p2;
    const double t1 = normal::quantile(1.0 - p1);
    const double t2 = normal::quantile(1.0 - p2);

    double lo = -1.0;
    double hi = 1.0;
    if (joint <= normal::bivariate_upper(t1, t2, -1.0))
    {
        return -1.0;
    }
    if (joint >= normal::bivariate_upper(t1, t2, 1.0))
    {
        return 1.0;
    }
    double x = std::clamp(r, -0.999, 0.999);
    for (int iter = 0; iter < 200; ++iter)
    {
        const double f = normal::bivariate_upper(t1, t2, x) - joint;
        if (std::fabs(f) < 1e-14)
        {
            return x;
        }
        (f > 0.0 ? hi : lo) = x;
        if (hi - lo < 1e-15)
        {
            break;
        }
        const double slope = normal::bivariate_pdf(t1, t2, x);
        double next = slope > 0.0 ? x - f / slope : 0.5 * (lo + hi);
        if (!(next > lo && next < hi))
        {
            next = 0.5 * (lo + hi);
        }
        x = next;
    }
    return x;
}

/// Gaussian-copula dichotomization sampler. Latent correlations are solved once per pair at
/// construction; columns with mean 1 are constant.
class CorrelatedBinarySampler
{
public:
    CorrelatedBinarySampler(const Vector& means, const Matrix& corr)
        : m_means(means)
    {
        const Eigen::Index s = means.size();
        if (s == 0)
        {
            throw Error(ErrorKind::EmptyModelSet, "no columns to sample");
        }
        if (corr.rows() != s || corr.cols() != s)
        {
            throw Error(ErrorKind::DimensionMismatch, "correlation matrix does not match mean vector");
        }
        for (Eigen::Index m = 0; m < s; ++m)
        {
            const double p = means(m);
            if (!(p > 0.0 && p <= 1.0))
            {
                throw Error(ErrorKind::ParameterOutOfRange, "column mean " + std::to_string(p) + " outside (0, 1]");
            }
            if (p < 1.0)
            {
                m_free.push_back(m);
            }
        }
        const auto k = static_cast<Eigen::Index>(m_free.size());
        m_thresholds.resize(k);
        Matrix latent = Matrix::Identity(k, k);
        for (Eigen::Index a = 0; a < k; ++a)
        {
            const double pa = means(m_free[static_cast<std::size_t>(a)]);
            m_thresholds(a) = normal::quantile(1.0 - pa);
            for (Eigen::Index b = 0; b < a; ++b)
            {
                const auto ia = m_free[static_cast<std::size_t>(a)];
                const auto ib = m_free[static_cast<std::size_t>(b)];
                const double target = corr(ia, ib);
                if (std::fabs(target - corr(ib, ia)) > 1e-10)
                {
                    throw Error(ErrorKind::ParameterOutOfRange, "correlation matrix must be symmetric");
                }
                const double v = target == 0.0 ? 0.0 : latent_correlation(pa, means(ib), target);
                latent(a, b) = v;
                latent(b, a) = v;
            }
        }
        m_latent = latent;
        if (k > 0)
        {
            Eigen::LLT<Matrix> llt(latent);
            if (llt.info() == Eigen::Success)
            {
                m_factor = llt.matrixL();
            }
            else
            {
                m_repaired = min_eigenvalue(latent) < -1e-10;
                Eigen::SelfAdjointEigenSolver<Matrix> eig(clip_to_correlation(latent));
                m_factor = eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
            }
        }
    }

    std::size_t models() const noexcept { return static_cast<std::size_t>(m_means.size()); }
    const Matrix& latent_correlation_matrix() const noexcept { return m_latent; }
    /// True when the latent matrix was indefinite and had to be clipped.
    bool latent_repaired() const noexcept { return m_repaired; }

    SimilarityMatrix sample(std::size_t n, Rng& rng, ClassLabel label = ClassLabel::diseased) const
    {
        const auto rows = static_cast<Eigen::Index>(n);
        BinaryMatrix out = BinaryMatrix::Ones(rows, m_means.size());
        const auto k = static_cast<Eigen::Index>(m_free.size());
        if (k > 0 && rows > 0)
        {
            std::normal_distribution<double> gauss(0.0, 1.0);
            Matrix g(rows, m_factor.cols());
            for (Eigen::Index j = 0; j < g.cols(); ++j)
            {
                for (Eigen::Index i = 0; i < rows; ++i)
                {
                    g(i, j) = gauss(rng);
                }
            }
            const Matrix z = g * m_factor.transpose();
            for (Eigen::Index a = 0; a < k; ++a)
            {
                const Eigen::Index col = m_free[static_cast<std::size_t>(a)];
                const double t = m_thresholds(a);
                for (Eigen::Index i = 0; i < rows; ++i)
                {
                    out(i, col) = z(i, a) > t ? 1 : 0;
                }
            }
        }
        return SimilarityMatrix(std::move(out), label);
    }

    /// Column sums of a fresh sample; avoids materializing the matrix.
    Eigen::Matrix<std::int64_t, Eigen::Dynamic, 1> sample_counts(std::size_t n, Rng& rng) const
    {
        const SimilarityMatrix q = sample(n, rng);
        return q.entries().cast<std::int64_t>().colwise().sum().transpose();
    }

private:
    Vector m_means;
    std::vector<Eigen::Index> m_free;
    Vector m_thresholds;
    Matrix m_latent;
    Matrix m_factor;
    bool m_repaired{false};
};

inline SimilarityMatrix sample_correlated_binary(const BinaryTargetSpec& spec, Rng& rng,
                                                 ClassLabel label = ClassLabel::diseased)
{
    return CorrelatedBinarySampler(spec.means, spec.corr).sample(spec.n, rng, label);
}

/// One draw of a single class's parameters from an mBeta distribution.
struct MBetaDraw
{
    Vector theta;
    /// Indicator-level correlation, feasible for the drawn means.
    Matrix corr;
    /// Number of pairwise correlations projected onto their feasible range.
    std::size_t projections{0};
};

/// True parameters for both classes.
struct ThetaDraw
{
    Vector se;
    Vector sp;
    Matrix corr_se;
    Matrix corr_sp;
    std::size_t projections{0};
};

/// Copula sampler for mBeta(nu, A): Beta(A_mm, nu - A_mm) margins coupled by a Gaussian copula
/// with the mBeta correlation. The indicator correlation of a draw is the phi coefficient of the
/// expected moments A / nu, projected onto the feasible range of the drawn means.
class MBetaSampler
{
public:
    explicit MBetaSampler(const MBetaParams& params)
        : m_params(params)
    {
        const auto s = static_cast<Eigen::Index>(params.size());
        const double nu = params.nu();
        const Matrix& a = params.moment_matrix();
        if (s == 1)
        {
            m_factor = Matrix::Ones(1, 1);
        }
        else
        {
            const Moments mom = posterior_moments(params);
            const CorrelationMatrix copula = CorrelationMatrix::from_covariance(mom.cov);
            Eigen::LLT<Matrix> llt(copula.entries());
            if (llt.info() == Eigen::Success)
            {
                m_factor = llt.matrixL();
            }
            else
            {
                const CorrelationMatrix fixed = repair_correlation(copula);
                Eigen::SelfAdjointEigenSolver<Matrix> eig(fixed.entries());
                m_factor = eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
            }
        }
        m_phi = Matrix::Identity(s, s);
        for (Eigen::Index i = 0; i < s; ++i)
        {
            const double pi = a(i, i) / nu;
            for (Eigen::Index j = 0; j < i; ++j)
            {
                const double pj = a(j, j) / nu;
                const double r = (a(i, j) / nu - pi * pj) / std::sqrt(pi * (1.0 - pi) * pj * (1.0 - pj));
                m_phi(i, j) = r;
                m_phi(j, i) = r;
            }
        }
    }

    const MBetaParams& params() const noexcept { return m_params; }

    MBetaDraw operator()(Rng& rng) const
    {
        const auto s = static_cast<Eigen::Index>(m_params.size());
        const double nu = m_params.nu();
        const Matrix& a = m_params.moment_matrix();
        std::normal_distribution<double> gauss(0.0, 1.0);
        Vector g(m_factor.cols());
        for (Eigen::Index i = 0; i < g.size(); ++i)
        {
            g(i) = gauss(rng);
        }
        const Vector z = m_factor * g;

        MBetaDraw out;
        out.theta.resize(s);
        constexpr double edge = 1e-12;
        for (Eigen::Index i = 0; i < s; ++i)
        {
            const double u = std::clamp(normal::cdf(z(i)), 1e-300, 1.0 - 1e-16);
            out.theta(i) = std::clamp(boost::math::ibeta_inv(a(i, i), nu - a(i, i), u), edge, 1.0 - edge);
        }
        out.corr = m_phi;
        for (Eigen::Index i = 0; i < s; ++i)
        {
            for (Eigen::Index j = 0; j < i; ++j)
            {
                const auto b = phi_bounds(out.theta(i), out.theta(j));
                const double r = m_phi(i, j);
                if (r < b.lower || r > b.upper)
                {
                    const double v = std::clamp(r, b.lower, b.upper);
                    out.corr(i, j) = v;
                    out.corr(j, i) = v;
                    ++out.projections;
                }
            }
        }
        return out;
    }

private:
    MBetaParams m_params;
    Matrix m_factor;
    Matrix m_phi;
};

inline MBetaDraw sample_mbeta(const MBetaParams& params, Rng& rng)
{
    return MBetaSampler(params)(rng);
}

inline ThetaDraw sample_theta(const MBetaParams& pi_se, const MBetaParams& pi_sp, Rng& rng)
{
    MBetaDraw se = sample_mbeta(pi_se, rng);
    MBetaDraw sp = sample_mbeta(pi_sp, rng);
    return ThetaDraw{std::move(se.theta), std::move(sp.theta), std::move(se.corr), std::move(sp.corr),
                     se.projections + sp.projections};
}

struct GroupSizes
{
    std::size_t n1{0};
    std::size_t n0{0};
    double prevalence{0.0};
};

inline constexpr int group_size_redraws = 100;

inline double sample_beta(double a, double b, Rng& rng)
{
    std::gamma_distribution<double> ga(a, 1.0);
    std::gamma_distribution<double> gb(b, 1.0);
    const double x = ga(rng);
    const double y = gb(rng);
    return x / (x + y);
}

/// Prevalence ~ Beta(1 + n1_learn, 1 + n0_learn), n1 ~ Bin(n, prevalence), n0 = n - n1.
/// Draws with an empty class are rejected and redrawn (prevalence and n1 together).
/// A fixed prevalence gives the deterministic split n1 = round(prevalence * n).
inline GroupSizes sample_group_sizes(std::size_t n, std::size_t n1_learn, std::size_t n0_learn, Rng& rng,
                                     std::optional<double> fixed_prevalence = std::nullopt)
{
    if (n < 2)
    {
        throw Error(ErrorKind::DegenerateGroupSizes, "need at least two subjects");
    }
    if (fixed_prevalence)
    {
        const double rho = *fixed_prevalence;
        if (!(rho > 0.0 && rho < 1.0))
        {
            throw Error(ErrorKind::ParameterOutOfRange, "prevalence must lie in (0,1)");
        }
        const auto n1 = static_cast<std::size_t>(std::llround(rho * static_cast<double>(n)));
        if (n1 == 0 || n1 == n)
        {
            throw Error(ErrorKind::DegenerateGroupSizes, "fixed prevalence leaves a class empty");
        }
        return {n1, n - n1, rho};
    }
    for (int attempt = 0; attempt < group_size_redraws; ++attempt)
    {
        const double rho = sample_beta(1.0 + static_cast<double>(n1_learn), 1.0 + static_cast<double>(n0_learn), rng);
        std::binomial_distribution<std::size_t> bin(n, rho);
        const std::size_t n1 = bin(rng);
        if (n1 != 0 && n1 != n)
        {
            return {n1, n - n1, rho};
        }
    }
    throw Error(ErrorKind::DegenerateGroupSizes, "empty class after " + std::to_string(group_size_redraws) + " redraws");
}

} // namespace coprimary

#endif // COPRIMARY_SAMPLING_HPP
