#ifndef COPRIMARY_MBETA_HPP
#define COPRIMARY_MBETA_HPP

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>

#include "core_types.hpp"

namespace coprimary
{

/// Multivariate Beta distribution in reduced form: sample size nu and symmetric moment
/// matrix A. Marginally theta_m ~ Beta(A_mm, nu - A_mm); A_ij is the pseudo-count of joint
/// successes of models i and j.
class MBetaParams
{
public:
    MBetaParams(double nu, Matrix moment_matrix)
        : m_nu(nu)
        , m_moments(std::move(moment_matrix))
    {
        const Eigen::Index s = m_moments.rows();
        if (s == 0 || m_moments.cols() != s)
        {
            throw Error(ErrorKind::DimensionMismatch, "moment matrix must be square and non-empty");
        }
        if (!(nu > 0.0))
        {
            throw Error(ErrorKind::ParameterOutOfRange, "nu must be positive");
        }
        for (Eigen::Index i = 0; i < s; ++i)
        {
            const double a = m_moments(i, i);
            if (!(a > 0.0 && a < nu))
            {
                throw Error(ErrorKind::ParameterOutOfRange, "moment diagonal must lie strictly inside (0, nu)");
            }
            for (Eigen::Index j = 0; j < i; ++j)
            {
                const double v = m_moments(i, j);
                if (v != m_moments(j, i))
                {
                    throw Error(ErrorKind::ParameterOutOfRange, "moment matrix must be symmetric");
                }
                if (!(v > 0.0) || v > std::min(a, m_moments(j, j)))
                {
                    throw Error(ErrorKind::ParameterOutOfRange,
                                "joint moment (" + std::to_string(i) + ", " + std::to_string(j) + ") infeasible");
                }
            }
        }
    }

    double nu() const noexcept { return m_nu; }
    const Matrix& moment_matrix() const noexcept { return m_moments; }
    std::size_t size() const noexcept { return static_cast<std::size_t>(m_moments.rows()); }

private:
    double m_nu;
    Matrix m_moments;
};

/// Sample size and joint success counts U = Q^T Q of one similarity matrix.
struct MomentUpdate
{
    std::size_t n{0};
    CountMatrix counts;
};

/// Marginal moments of an mBeta distribution.
struct Moments
{
    Vector mean;
    Matrix cov;
};

/// Independent uniform margins: nu = 2, diagonal 1, off-diagonal 0.5.
inline MBetaParams uniform_prior(std::size_t s)
{
    if (s == 0)
    {
        throw Error(ErrorKind::EmptyModelSet, "prior needs at least one model");
    }
    const auto n = static_cast<Eigen::Index>(s);
    Matrix a = Matrix::Constant(n, n, 0.5);
    a.diagonal().setOnes();
    return MBetaParams(2.0, std::move(a));
}

inline MomentUpdate moment_matrix(const SimilarityMatrix& q)
{
    const Matrix qd = q.entries().cast<double>();
    const Matrix u = qd.transpose() * qd;
    MomentUpdate out;
    out.n = q.rows();
    out.counts = u.array().round().cast<std::int64_t>().matrix();
    return out;
}

inline MBetaParams posterior_update(const MBetaParams& prior, const MomentUpdate& data)
{
    if (static_cast<std::size_t>(data.counts.rows()) != prior.size() || data.counts.cols() != data.counts.rows())
    {
        throw Error(ErrorKind::DimensionMismatch, "update matrix dimension " + std::to_string(data.counts.rows()) +
                                                      " does not match prior dimension " + std::to_string(prior.size()));
    }
    return MBetaParams(prior.nu() + static_cast<double>(data.n), prior.moment_matrix() + data.counts.cast<double>());
}

/// Mean alpha / nu and covariance (nu A - alpha alpha^T) / (nu^2 (nu + 1)), alpha = diag(A).
inline Moments posterior_moments(const MBetaParams& params)
{
    const double nu = params.nu();
    const Matrix& a = params.moment_matrix();
    const Vector alpha = a.diagonal();
    Moments out;
    out.mean = alpha / nu;
    out.cov = (nu * a - alpha * alpha.transpose()) / (nu * nu * (nu + 1.0));
    return out;
}

/// Bayesian (uniform-prior mBeta posterior) means and covariances, independently per class.
inline CoPrimaryEstimate regularized_estimate(const SimilarityMatrix& q_se, const SimilarityMatrix& q_sp)
{
    if (q_se.models() != q_sp.models())
    {
        throw Error(ErrorKind::DimensionMismatch, "sensitivity and specificity matrices differ in model count");
    }
    const auto prior = uniform_prior(q_se.models());
    const Moments se = posterior_moments(posterior_update(prior, moment_matrix(q_se)));
    const Moments sp = posterior_moments(posterior_update(prior, moment_matrix(q_sp)));
    return CoPrimaryEstimate{se.mean, sp.mean, se.cov, sp.cov, q_se.rows(), q_sp.rows()};
}

/// Plug-in proportions u / n and covariance (n U - u u^T) / n^3. Diagnostics only.
inline CoPrimaryEstimate naive_estimate(const SimilarityMatrix& q_se, const SimilarityMatrix& q_sp)
{
    if (q_se.models() != q_sp.models())
    {
        throw Error(ErrorKind::DimensionMismatch, "sensitivity and specificity matrices differ in model count");
    }
    auto plug_in = [](const SimilarityMatrix& q) {
        if (q.rows() == 0)
        {
            throw Error(ErrorKind::EmptyClass, "class has no subjects");
        }
        const MomentUpdate upd = moment_matrix(q);
        const double n = static_cast<double>(upd.n);
        const Matrix u = upd.counts.cast<double>();
        const Vector d = u.diagonal();
        return Moments{d / n, (n * u - d * d.transpose()) / (n * n * n)};
    };
    const Moments se = plug_in(q_se);
    const Moments sp = plug_in(q_sp);
    return CoPrimaryEstimate{se.mean, sp.mean, se.cov, sp.cov, q_se.rows(), q_sp.rows()};
}

} // namespace coprimary

#endif // COPRIMARY_MBETA_HPP
