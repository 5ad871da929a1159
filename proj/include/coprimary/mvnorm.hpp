#ifndef COPRIMARY_MVNORM_HPP
#define COPRIMARY_MVNORM_HPP

#include <algorithm>
#include <cmath>
#include <optional>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "core_types.hpp"
#include "normal.hpp"
#include "random.hpp"

namespace coprimary
{

/// Symmetric matrix with unit diagonal and off-diagonals in [-1, 1].
/// Positive semidefiniteness is checked (and repaired) where a factorization is needed.
class CorrelationMatrix
{
public:
    CorrelationMatrix() = default;

    explicit CorrelationMatrix(Matrix entries, double tol = 1e-10)
        : m_entries(std::move(entries))
    {
        if (m_entries.rows() != m_entries.cols() || m_entries.rows() == 0)
        {
            throw Error(ErrorKind::DimensionMismatch, "correlation matrix must be square and non-empty");
        }
        const Eigen::Index s = m_entries.rows();
        for (Eigen::Index i = 0; i < s; ++i)
        {
            if (std::fabs(m_entries(i, i) - 1.0) > tol)
            {
                throw Error(ErrorKind::ParameterOutOfRange, "correlation matrix diagonal must be 1");
            }
            m_entries(i, i) = 1.0;
            for (Eigen::Index j = 0; j < i; ++j)
            {
                const double a = m_entries(i, j);
                const double b = m_entries(j, i);
                if (!std::isfinite(a) || std::fabs(a - b) > tol)
                {
                    throw Error(ErrorKind::ParameterOutOfRange, "correlation matrix must be symmetric");
                }
                const double mean = 0.5 * (a + b);
                if (std::fabs(mean) > 1.0 + tol)
                {
                    throw Error(ErrorKind::ParameterOutOfRange, "correlation outside [-1, 1]");
                }
                const double v = std::clamp(mean, -1.0, 1.0);
                m_entries(i, j) = v;
                m_entries(j, i) = v;
            }
        }
    }

    static CorrelationMatrix identity(std::size_t s)
    {
        return CorrelationMatrix(Matrix::Identity(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(s)));
    }

    static CorrelationMatrix equicorrelation(std::size_t s, double r)
    {
        const auto n = static_cast<Eigen::Index>(s);
        Matrix m = Matrix::Constant(n, n, r);
        m.diagonal().setOnes();
        return CorrelationMatrix(std::move(m));
    }

    /// Correlation matrix derived from a covariance with strictly positive diagonal.
    static CorrelationMatrix from_covariance(const Matrix& cov)
    {
        const Vector sd = cov.diagonal().cwiseSqrt();
        for (Eigen::Index i = 0; i < sd.size(); ++i)
        {
            if (!(sd(i) > 0.0))
            {
                throw Error(ErrorKind::ZeroStandardError, "covariance diagonal entry " + std::to_string(i) + " is not positive");
            }
        }
        Matrix r = cov.array() / (sd * sd.transpose()).array();
        r.diagonal().setOnes();
        r = r.cwiseMax(-1.0).cwiseMin(1.0);
        return CorrelationMatrix(std::move(r), 1e-8);
    }

    const Matrix& entries() const noexcept { return m_entries; }
    std::size_t size() const noexcept { return static_cast<std::size_t>(m_entries.rows()); }
    double operator()(Eigen::Index i, Eigen::Index j) const { return m_entries(i, j); }

private:
    Matrix m_entries{Matrix::Identity(1, 1)};
};

/// Clips eigenvalues below `floor` and rescales to unit diagonal.
inline Matrix clip_to_correlation(const Matrix& r, double floor = 0.0)
{
    Eigen::SelfAdjointEigenSolver<Matrix> eig(r);
    Vector lambda = eig.eigenvalues().cwiseMax(floor);
    Matrix fixed = eig.eigenvectors() * lambda.asDiagonal() * eig.eigenvectors().transpose();
    const Vector d = fixed.diagonal().cwiseMax(std::numeric_limits<double>::min()).cwiseSqrt().cwiseInverse();
    fixed = d.asDiagonal() * fixed * d.asDiagonal();
    fixed = 0.5 * (fixed + fixed.transpose());
    fixed.diagonal().setOnes();
    return fixed;
}

inline double min_eigenvalue(const Matrix& r)
{
    Eigen::SelfAdjointEigenSolver<Matrix> eig(r, Eigen::EigenvaluesOnly);
    return eig.eigenvalues().minCoeff();
}

/// Returns `r` unchanged when it is positive semidefinite, a clipped repair when it is only
/// numerically indefinite, and throws NotPositiveSemidefinite when the smallest eigenvalue is
/// below `fail_below`.
inline CorrelationMatrix repair_correlation(const CorrelationMatrix& r, double fail_below = -1e-8)
{
    Eigen::LDLT<Matrix> ldlt(r.entries());
    if (ldlt.info() == Eigen::Success && ldlt.isPositive() && (ldlt.vectorD().array() >= 0.0).all())
    {
        return r;
    }
    const double lambda = min_eigenvalue(r.entries());
    if (lambda >= 0.0)
    {
        return r;
    }
    if (lambda < fail_below)
    {
        throw Error(ErrorKind::NotPositiveSemidefinite,
                    "smallest eigenvalue " + std::to_string(lambda) + " below repair limit");
    }
    return CorrelationMatrix(clip_to_correlation(r.entries()), 1e-8);
}

struct ProbabilityEstimate
{
    double value{0.0};
    /// Absolute error bound (3.5 standard errors of the randomized rule).
    double error{0.0};
    std::size_t evaluations{0};
};

namespace detail
{

inline const std::vector<double>& richtmyer_generators()
{
    static const std::vector<double> generators = [] {
        std::vector<double> g;
        g.reserve(1000);
        for (int candidate = 2; g.size() < 1000; ++candidate)
        {
            bool prime = true;
            for (int d = 2; d * d <= candidate; ++d)
            {
                if (candidate % d == 0)
                {
                    prime = false;
                    break;
                }
            }
            if (prime)
            {
                const double s = std::sqrt(static_cast<double>(candidate));
                g.push_back(s - std::floor(s));
            }
        }
        return g;
    }();
    return generators;
}

/// Cholesky factor of a permuted correlation matrix, ordered for the equicoordinate
/// upper limit `c` by smallest conditional probability first (Genz & Bretz).
struct SovFactor
{
    Matrix lower;
    bool indefinite{false};
};

inline SovFactor sov_factor(const Matrix& r, double c)
{
    constexpr double degenerate_tol = 1e-10;
    constexpr double negative_tol = -1e-10;

    const Eigen::Index s = r.rows();
    Matrix cov = r;
    Matrix low = Matrix::Zero(s, s);
    Vector y = Vector::Zero(s);
    SovFactor out;

    for (Eigen::Index k = 0; k < s; ++k)
    {
        Eigen::Index best = k;
        double best_prob = std::numeric_limits<double>::infinity();
        for (Eigen::Index i = k; i < s; ++i)
        {
            const double var = cov(i, i) - low.row(i).head(k).squaredNorm();
            const double mean = low.row(i).head(k).dot(y.head(k));
            const double prob = var > degenerate_tol ? normal::cdf((c - mean) / std::sqrt(var)) : (mean <= c ? 1.0 : 0.0);
            if (prob < best_prob)
            {
                best_prob = prob;
                best = i;
            }
        }
        if (best != k)
        {
            cov.row(k).swap(cov.row(best));
            cov.col(k).swap(cov.col(best));
            low.row(k).swap(low.row(best));
        }

        const double var = cov(k, k) - low.row(k).head(k).squaredNorm();
        if (var < negative_tol)
        {
            out.indefinite = true;
            return out;
        }
        if (var <= degenerate_tol)
        {
            low(k, k) = 0.0;
            y(k) = 0.0;
            continue;
        }
        const double diag = std::sqrt(var);
        low(k, k) = diag;
        for (Eigen::Index i = k + 1; i < s; ++i)
        {
            low(i, k) = (cov(i, k) - low.row(i).head(k).dot(low.row(k).head(k))) / diag;
        }
        const double b = (c - low.row(k).head(k).dot(y.head(k))) / diag;
        const double pb = normal::cdf(b);
        y(k) = pb > 1e-300 ? -normal::pdf(b) / pb : b;
    }
    out.lower = std::move(low);
    return out;
}

/// Separation-of-variables integrand for P(Z <= c) with Z = L * standard normal.
class SovIntegrand
{
public:
    SovIntegrand(const Matrix& lower, double c)
        : m_dim(static_cast<std::size_t>(lower.rows()))
        , m_c(c)
        , m_lower(m_dim * m_dim)
        , m_y(m_dim)
    {
        for (std::size_t i = 0; i < m_dim; ++i)
        {
            for (std::size_t j = 0; j < m_dim; ++j)
            {
                m_lower[i * m_dim + j] = lower(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
            }
        }
        m_first = normal::cdf(c / m_lower[0]);
    }

    std::size_t dimension() const noexcept { return m_dim - 1; }

    double operator()(const double* w)
    {
        constexpr double edge = 1e-16;
        double f = m_first;
        if (f <= 0.0)
        {
            return 0.0;
        }
        m_y[0] = normal::quantile(std::clamp(w[0] * f, edge, 1.0 - edge));
        for (std::size_t k = 1; k < m_dim; ++k)
        {
            const double* row = &m_lower[k * m_dim];
            double s = 0.0;
            for (std::size_t j = 0; j < k; ++j)
            {
                s += row[j] * m_y[j];
            }
            const double diag = row[k];
            if (diag > 0.0)
            {
                const double e = normal::cdf((m_c - s) / diag);
                f *= e;
                if (f <= 0.0)
                {
                    return 0.0;
                }
                if (k + 1 < m_dim)
                {
                    m_y[k] = normal::quantile(std::clamp(w[k] * e, edge, 1.0 - edge));
                }
            }
            else
            {
                if (s > m_c)
                {
                    return 0.0;
                }
                m_y[k] = 0.0;
            }
        }
        return f;
    }

private:
    std::size_t m_dim;
    double m_c;
    std::vector<double> m_lower;
    std::vector<double> m_y;
    double m_first{1.0};
};

} // namespace detail

struct OrthantOptions
{
    double tolerance{1e-4};
    std::uint64_t seed{1};
    std::size_t shifts{12};
    std::size_t initial_points{256};
    std::size_t max_evaluations{20'000'000};
    /// Stop early once the estimate is farther than its error bound from this value.
    std::optional<double> separate_from;
};

/// P(Z_1 <= c, ..., Z_S <= c) for Z ~ N_S(0, R).
/// Randomized Richtmyer lattice rule over the Genz separation-of-variables transform with
/// antithetic tent-periodized points. Dimensions one and two are computed in closed form.
inline ProbabilityEstimate mvn_orthant_cdf(double c, const CorrelationMatrix& r, const OrthantOptions& opt)
{
    if (!(opt.tolerance > 0.0))
    {
        throw Error(ErrorKind::ParameterOutOfRange, "tolerance must be positive");
    }
    const std::size_t s = r.size();
    if (std::isinf(c))
    {
        return {c > 0 ? 1.0 : 0.0, 0.0, 0};
    }
    if (s == 1)
    {
        return {normal::cdf(c), 0.0, 1};
    }
    if (s == 2)
    {
        return {normal::bivariate_cdf(c, c, r(0, 1)), 1e-15, 1};
    }

    auto factor = detail::sov_factor(r.entries(), c);
    if (factor.indefinite)
    {
        const CorrelationMatrix fixed = repair_correlation(r);
        factor = detail::sov_factor(fixed.entries(), c);
        if (factor.indefinite)
        {
            throw Error(ErrorKind::NotPositiveSemidefinite, "factorization failed after repair");
        }
    }

    detail::SovIntegrand integrand(factor.lower, c);
    const std::size_t dim = integrand.dimension();
    const auto& gen = detail::richtmyer_generators();
    if (dim > gen.size())
    {
        throw Error(ErrorKind::ParameterOutOfRange, "dimension above supported maximum");
    }

    Rng rng = make_rng(opt.seed);
    std::vector<double> shift(dim);
    std::vector<double> point(dim);
    std::vector<double> anti(dim);

    double weighted_sum = 0.0;
    double weight_total = 0.0;
    std::size_t evaluations = 0;
    std::size_t n = opt.initial_points;

    for (;;)
    {
        double level_sum = 0.0;
        double level_sq = 0.0;
        for (std::size_t sh = 0; sh < opt.shifts; ++sh)
        {
            for (auto& d : shift)
            {
                d = uniform_open(rng);
            }
            double acc = 0.0;
            for (std::size_t i = 1; i <= n; ++i)
            {
                for (std::size_t j = 0; j < dim; ++j)
                {
                    double x = static_cast<double>(i) * gen[j] + shift[j];
                    x -= std::floor(x);
                    x = std::fabs(2.0 * x - 1.0);
                    point[j] = x;
                    anti[j] = 1.0 - x;
                }
                acc += 0.5 * (integrand(point.data()) + integrand(anti.data()));
            }
            const double mean = acc / static_cast<double>(n);
            level_sum += mean;
            level_sq += mean * mean;
            evaluations += 2 * n;
        }
        const double k = static_cast<double>(opt.shifts);
        const double level_mean = level_sum / k;
        const double level_var = std::max(0.0, (level_sq - k * level_mean * level_mean) / (k - 1.0)) / k;

        if (level_var <= 0.0)
        {
            return {std::clamp(level_mean, 0.0, 1.0), 0.0, evaluations};
        }
        weighted_sum += level_mean / level_var;
        weight_total += 1.0 / level_var;
        const double value = weighted_sum / weight_total;
        const double error = 3.5 * std::sqrt(1.0 / weight_total);
        if (error <= opt.tolerance || (opt.separate_from && std::fabs(value - *opt.separate_from) > error))
        {
            return {std::clamp(value, 0.0, 1.0), error, evaluations};
        }
        n *= 2;
        if (evaluations + 2 * n * opt.shifts > opt.max_evaluations)
        {
            throw Error(ErrorKind::NonConvergence, "error estimate " + std::to_string(error) + " above tolerance " +
                                                       std::to_string(opt.tolerance));
        }
    }
}

inline ProbabilityEstimate mvn_orthant_cdf(double c, const CorrelationMatrix& r, double tol, std::uint64_t seed)
{
    OrthantOptions opt;
    opt.tolerance = tol;
    opt.seed = seed;
    return mvn_orthant_cdf(c, r, opt);
}

struct QuantileOptions
{
    /// Target width of the final root bracket in c.
    double tolerance{1e-3};
    /// Error target for each probability evaluation.
    double cdf_tolerance{1e-4};
    std::uint64_t seed{1};
};

/// Equicoordinate quantile: the c with P(max_m Z_m <= c) = p for Z ~ N_S(0, R).
/// Safeguarded false position inside the bracket [Phi^-1(p), Phi^-1(1 - (1-p)/S)] with common
/// random numbers across evaluations. Returns the upper end of the final bracket.
inline double equicoordinate_quantile(const CorrelationMatrix& r, double p, const QuantileOptions& opt)
{
    if (!(p > 0.0 && p < 1.0))
    {
        throw Error(ErrorKind::ParameterOutOfRange, "probability must lie in (0,1)");
    }
    const std::size_t s = r.size();
    if (s == 1)
    {
        return normal::quantile(p);
    }
    const CorrelationMatrix fixed = s > 2 ? repair_correlation(r) : r;

    OrthantOptions cdf_opt;
    cdf_opt.tolerance = opt.cdf_tolerance;
    cdf_opt.seed = opt.seed;
    cdf_opt.separate_from = p;
    auto g = [&](double c) { return mvn_orthant_cdf(c, fixed, cdf_opt).value - p; };

    double lo = normal::quantile(p);
    double hi = normal::quantile(1.0 - (1.0 - p) / static_cast<double>(s));
    double g_lo = g(lo);
    if (g_lo >= 0.0)
    {
        return lo;
    }
    double g_hi = g(hi);
    if (g_hi < 0.0)
    {
        // the bracket is analytic; only integration noise can land here
        hi += 4.0 * opt.tolerance;
        g_hi = g(hi);
        if (g_hi < 0.0)
        {
            return hi;
        }
    }

    // Illinois false position; values stay unmodified for the slope used to place probes
    double f_lo = g_lo;
    double f_hi = g_hi;
    int side = 0;
    double width_before = hi - lo;
    for (int iter = 0; iter < 200 && hi - lo > opt.tolerance; ++iter)
    {
        const double width = hi - lo;
        double m = lo - f_lo * width / (f_hi - f_lo);
        if (iter % 3 == 2)
        {
            if (width > 0.5 * width_before)
            {
                m = 0.5 * (lo + hi);
            }
            width_before = width;
        }
        if (!std::isfinite(m) || m <= lo + 0.01 * width || m >= hi - 0.01 * width)
        {
            m = 0.5 * (lo + hi);
        }
        const double slope = (g_hi - g_lo) / width;
        const double gm = g(m);
        if (gm >= 0.0)
        {
            hi = m;
            g_hi = gm;
            f_hi = gm;
            if (side == 1)
            {
                f_lo *= 0.5;
            }
            side = 1;
        }
        else
        {
            lo = m;
            g_lo = gm;
            f_lo = gm;
            if (side == -1)
            {
                f_hi *= 0.5;
            }
            side = -1;
        }
        // root predicted within tolerance of m: walk toward it until the bracket closes
        if (hi - lo > opt.tolerance && slope > 0.0 && std::fabs(gm) < slope * opt.tolerance)
        {
            const bool down = gm >= 0.0;
            double step = 0.999 * opt.tolerance;
            double from = m;
            for (int walk = 0; walk < 4 && hi - lo > opt.tolerance; ++walk)
            {
                const double probe = down ? from - step : from + step;
                if (!(probe > lo && probe < hi))
                {
                    break;
                }
                const double gp = g(probe);
                if (gp >= 0.0)
                {
                    hi = probe;
                    g_hi = gp;
                    f_hi = gp;
                }
                else
                {
                    lo = probe;
                    g_lo = gp;
                    f_lo = gp;
                }
                if ((gp >= 0.0) != down)
                {
                    break;
                }
                from = probe;
                step *= 2.0;
            }
            side = 0;
        }
    }
    return hi;
}

inline double equicoordinate_quantile(const CorrelationMatrix& r, double p, double tol, std::uint64_t seed)
{
    QuantileOptions opt;
    opt.tolerance = tol;
    opt.seed = seed;
    return equicoordinate_quantile(r, p, opt);
}

} // namespace coprimary

#endif // COPRIMARY_MVNORM_HPP
