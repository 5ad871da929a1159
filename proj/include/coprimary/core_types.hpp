#ifndef COPRIMARY_CORE_TYPES_HPP
#define COPRIMARY_CORE_TYPES_HPP

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace coprimary
{

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using BinaryMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;
using CountMatrix = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;
using IndexList = std::vector<std::size_t>;

enum class ErrorKind
{
    NonBinaryEntry,
    EmptyModelSet,
    DimensionMismatch,
    EmptyClass,
    ZeroStandardError,
    NotPositiveSemidefinite,
    NonConvergence,
    IndexOutOfRange,
    InfeasibleCorrelation,
    DegenerateGroupSizes,
    ParameterOutOfRange,
    EmptyInput,
    ParseError,
    ConfigError
};

inline const char* to_string(ErrorKind kind)
{
    switch (kind)
    {
    case ErrorKind::NonBinaryEntry: return "NonBinaryEntry";
    case ErrorKind::EmptyModelSet: return "EmptyModelSet";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::EmptyClass: return "EmptyClass";
    case ErrorKind::ZeroStandardError: return "ZeroStandardError";
    case ErrorKind::NotPositiveSemidefinite: return "NotPositiveSemidefinite";
    case ErrorKind::NonConvergence: return "NonConvergence";
    case ErrorKind::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorKind::InfeasibleCorrelation: return "InfeasibleCorrelation";
    case ErrorKind::DegenerateGroupSizes: return "DegenerateGroupSizes";
    case ErrorKind::ParameterOutOfRange: return "ParameterOutOfRange";
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::ConfigError: return "ConfigError";
    }
    return "Unknown";
}

/// Exception carrying a machine-checkable error kind.
class Error : public std::runtime_error
{
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what)
        , m_kind(kind)
    {
    }

    ErrorKind kind() const noexcept { return m_kind; }

private:
    ErrorKind m_kind;
};

/// 1 = diseased (target condition present), 0 = healthy.
enum class ClassLabel
{
    healthy = 0,
    diseased = 1
};

/// Binary correct/incorrect prediction matrix of one class.
/// Rows are subjects, columns are models; an entry of 1 marks a correct prediction.
class SimilarityMatrix
{
public:
    SimilarityMatrix() = default;

    /// Validates entries. Zero rows are allowed, zero columns are not.
    SimilarityMatrix(BinaryMatrix entries, ClassLabel label)
        : m_entries(std::move(entries))
        , m_label(label)
    {
        if (m_entries.cols() == 0)
        {
            throw Error(ErrorKind::EmptyModelSet, "similarity matrix has no model columns");
        }
        for (Eigen::Index j = 0; j < m_entries.cols(); ++j)
        {
            for (Eigen::Index i = 0; i < m_entries.rows(); ++i)
            {
                if (m_entries(i, j) > 1)
                {
                    throw Error(ErrorKind::NonBinaryEntry,
                                "entry (" + std::to_string(i) + ", " + std::to_string(j) + ") is not 0/1");
                }
            }
        }
    }

    const BinaryMatrix& entries() const noexcept { return m_entries; }
    ClassLabel label() const noexcept { return m_label; }
    std::size_t rows() const noexcept { return static_cast<std::size_t>(m_entries.rows()); }
    std::size_t models() const noexcept { return static_cast<std::size_t>(m_entries.cols()); }

    /// Column means; zero-row matrices yield NaN.
    Vector column_means() const
    {
        return m_entries.cast<double>().colwise().mean().transpose();
    }

    /// Restrict to the given model columns, in the given order.
    SimilarityMatrix select_columns(const IndexList& columns) const
    {
        BinaryMatrix sub(m_entries.rows(), static_cast<Eigen::Index>(columns.size()));
        for (std::size_t k = 0; k < columns.size(); ++k)
        {
            if (columns[k] >= models())
            {
                throw Error(ErrorKind::IndexOutOfRange, "column " + std::to_string(columns[k]));
            }
            sub.col(static_cast<Eigen::Index>(k)) = m_entries.col(static_cast<Eigen::Index>(columns[k]));
        }
        return SimilarityMatrix(std::move(sub), m_label);
    }

private:
    BinaryMatrix m_entries{BinaryMatrix::Zero(0, 1)};
    ClassLabel m_label{ClassLabel::diseased};
};

/// Performance thresholds (Se0, Sp0); delta0 = se0 - sp0.
class Threshold
{
public:
    Threshold() = default;

    Threshold(double se0, double sp0)
        : m_se0(se0)
        , m_sp0(sp0)
        , m_delta0(se0 - sp0)
    {
        if (!(se0 > 0.0 && se0 < 1.0) || !(sp0 > 0.0 && sp0 < 1.0))
        {
            throw Error(ErrorKind::ParameterOutOfRange, "thresholds must lie in (0,1)");
        }
    }

    /// Threshold with equal weight on both endpoints at level theta0.
    static Threshold symmetric(double theta0) { return Threshold(theta0, theta0); }

    double se0() const noexcept { return m_se0; }
    double sp0() const noexcept { return m_sp0; }
    double delta0() const noexcept { return m_delta0; }

private:
    double m_se0{0.5};
    double m_sp0{0.5};
    double m_delta0{0.0};
};

/// Per-model paired (Se, Sp) means with covariance for both classes.
struct CoPrimaryEstimate
{
    Vector se_mean;
    Vector sp_mean;
    Matrix se_cov;
    Matrix sp_cov;
    std::size_t n1{0};
    std::size_t n0{0};

    std::size_t models() const noexcept { return static_cast<std::size_t>(se_mean.size()); }
};

struct StudyConfig
{
    Threshold threshold{};
    double alpha{0.025};
    std::size_t n_eval{0};
    std::uint64_t seed{20200322};
    /// Absolute error target for multivariate normal probabilities.
    double mc_tolerance{1e-4};
    /// Target width of the critical-value root bracket.
    double quantile_tolerance{1e-3};

    void validate() const
    {
        if (!(alpha > 0.0 && alpha < 0.5))
        {
            throw Error(ErrorKind::ParameterOutOfRange, "alpha must lie in (0, 0.5)");
        }
        if (!(mc_tolerance > 0.0) || !(quantile_tolerance > 0.0))
        {
            throw Error(ErrorKind::ParameterOutOfRange, "tolerances must be positive");
        }
    }
};

/// Checks a raw integer matrix and wraps it as a SimilarityMatrix.
inline SimilarityMatrix validate_similarity(const Eigen::MatrixXi& raw, ClassLabel label)
{
    if (raw.cols() == 0)
    {
        throw Error(ErrorKind::EmptyModelSet, "similarity matrix has no model columns");
    }
    BinaryMatrix entries(raw.rows(), raw.cols());
    for (Eigen::Index j = 0; j < raw.cols(); ++j)
    {
        for (Eigen::Index i = 0; i < raw.rows(); ++i)
        {
            const int v = raw(i, j);
            if (v != 0 && v != 1)
            {
                throw Error(ErrorKind::NonBinaryEntry,
                            "entry (" + std::to_string(i) + ", " + std::to_string(j) + ") = " + std::to_string(v));
            }
            entries(i, j) = static_cast<std::uint8_t>(v);
        }
    }
    return SimilarityMatrix(std::move(entries), label);
}

/// Splits predictions by label into the sensitivity (label 1) and specificity (label 0)
/// similarity matrices.
inline std::pair<SimilarityMatrix, SimilarityMatrix> build_similarity(const BinaryMatrix& predictions,
                                                                      const std::vector<std::uint8_t>& labels)
{
    if (static_cast<std::size_t>(predictions.rows()) != labels.size())
    {
        throw Error(ErrorKind::DimensionMismatch, "prediction rows " + std::to_string(predictions.rows()) +
                                                      " != label count " + std::to_string(labels.size()));
    }
    if (predictions.cols() == 0)
    {
        throw Error(ErrorKind::EmptyModelSet, "no model columns");
    }
    Eigen::Index n1 = 0;
    for (auto y : labels)
    {
        if (y > 1)
        {
            throw Error(ErrorKind::NonBinaryEntry, "label is not 0/1");
        }
        n1 += y;
    }
    const Eigen::Index n0 = static_cast<Eigen::Index>(labels.size()) - n1;
    const Eigen::Index cols = predictions.cols();

    BinaryMatrix q_se(n1, cols);
    BinaryMatrix q_sp(n0, cols);
    Eigen::Index r1 = 0;
    Eigen::Index r0 = 0;
    for (std::size_t i = 0; i < labels.size(); ++i)
    {
        const auto row = static_cast<Eigen::Index>(i);
        for (Eigen::Index j = 0; j < cols; ++j)
        {
            const std::uint8_t p = predictions(row, j);
            if (p > 1)
            {
                throw Error(ErrorKind::NonBinaryEntry, "prediction is not 0/1");
            }
            if (labels[i] == 1)
            {
                q_se(r1, j) = p;
            }
            else
            {
                q_sp(r0, j) = static_cast<std::uint8_t>(1 - p);
            }
        }
        (labels[i] == 1 ? r1 : r0) += 1;
    }
    return {SimilarityMatrix(std::move(q_se), ClassLabel::diseased),
            SimilarityMatrix(std::move(q_sp), ClassLabel::healthy)};
}

} // namespace coprimary

#endif // COPRIMARY_CORE_TYPES_HPP
