#include <coprimary/core_types.hpp>
#include <coprimary/random.hpp>

#include <gtest/gtest.h>

#include <random>

using namespace coprimary;

namespace
{

template <typename F>
ErrorKind kind_of(F&& f)
{
    try
    {
        f();
    }
    catch (const Error& e)
    {
        return e.kind();
    }
    ADD_FAILURE() << "no error thrown";
    return ErrorKind::ConfigError;
}

} // namespace

TEST(ValidateSimilarity, AcceptsBinary)
{
    Eigen::MatrixXi raw(2, 2);
    raw << 1, 0, 1, 1;
    const auto q = validate_similarity(raw, ClassLabel::diseased);
    EXPECT_EQ(q.rows(), 2u);
    EXPECT_EQ(q.models(), 2u);
    EXPECT_EQ(q.label(), ClassLabel::diseased);
    EXPECT_EQ(q.entries()(1, 1), 1);
}

TEST(ValidateSimilarity, RejectsNonBinary)
{
    Eigen::MatrixXi raw(1, 2);
    raw << 2, 0;
    EXPECT_EQ(kind_of([&] { validate_similarity(raw, ClassLabel::healthy); }), ErrorKind::NonBinaryEntry);
}

TEST(ValidateSimilarity, RejectsNoColumns)
{
    Eigen::MatrixXi raw(0, 0);
    EXPECT_EQ(kind_of([&] { validate_similarity(raw, ClassLabel::healthy); }), ErrorKind::EmptyModelSet);
}

TEST(ValidateSimilarity, ZeroRowsAllowed)
{
    Eigen::MatrixXi raw(0, 3);
    EXPECT_EQ(validate_similarity(raw, ClassLabel::healthy).rows(), 0u);
}

TEST(BuildSimilarity, SplitsByLabel)
{
    BinaryMatrix pred(3, 1);
    pred << 1, 0, 0;
    const auto [se, sp] = build_similarity(pred, {1, 0, 1});
    ASSERT_EQ(se.rows(), 2u);
    ASSERT_EQ(sp.rows(), 1u);
    EXPECT_EQ(se.entries()(0, 0), 1);
    EXPECT_EQ(se.entries()(1, 0), 0);
    EXPECT_EQ(sp.entries()(0, 0), 1);
    EXPECT_EQ(se.label(), ClassLabel::diseased);
    EXPECT_EQ(sp.label(), ClassLabel::healthy);
}

TEST(BuildSimilarity, PerfectClassifierGivesOnes)
{
    BinaryMatrix pred(4, 2);
    pred << 1, 1, 0, 0, 1, 1, 0, 0;
    const auto [se, sp] = build_similarity(pred, {1, 0, 1, 0});
    EXPECT_TRUE((se.entries().array() == 1).all());
    EXPECT_TRUE((sp.entries().array() == 1).all());
}

TEST(BuildSimilarity, SingleHealthySubject)
{
    BinaryMatrix pred(1, 2);
    pred << 1, 0;
    const auto [se, sp] = build_similarity(pred, {0});
    EXPECT_EQ(se.rows(), 0u);
    EXPECT_EQ(se.models(), 2u);
    EXPECT_EQ(sp.entries()(0, 0), 0);
    EXPECT_EQ(sp.entries()(0, 1), 1);
}

TEST(BuildSimilarity, DimensionMismatch)
{
    BinaryMatrix pred = BinaryMatrix::Zero(3, 1);
    EXPECT_EQ(kind_of([&] { build_similarity(pred, {1, 0}); }), ErrorKind::DimensionMismatch);
}

TEST(BuildSimilarity, ColumnMeansMatchDirectSensitivity)
{
    Rng rng = make_rng(7);
    std::bernoulli_distribution coin(0.5);
    for (int rep = 0; rep < 50; ++rep)
    {
        const int n = 1 + rep;
        BinaryMatrix pred(n, 4);
        std::vector<std::uint8_t> labels(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i)
        {
            labels[static_cast<std::size_t>(i)] = coin(rng) ? 1 : 0;
            for (int j = 0; j < 4; ++j)
            {
                pred(i, j) = coin(rng) ? 1 : 0;
            }
        }
        const auto [se, sp] = build_similarity(pred, labels);
        EXPECT_EQ(se.rows() + sp.rows(), static_cast<std::size_t>(n));
        if (se.rows() == 0)
        {
            continue;
        }
        const Vector means = se.column_means();
        for (int j = 0; j < 4; ++j)
        {
            int hits = 0;
            int pos = 0;
            for (int i = 0; i < n; ++i)
            {
                if (labels[static_cast<std::size_t>(i)] == 1)
                {
                    ++pos;
                    hits += pred(i, j);
                }
            }
            EXPECT_EQ(means(j), static_cast<double>(hits) / pos);
        }
    }
}

TEST(Threshold, DeltaIsExactDifference)
{
    const Threshold t(0.85, 0.7);
    EXPECT_EQ(t.delta0(), 0.85 - 0.7);
    EXPECT_EQ(Threshold::symmetric(0.8).delta0(), 0.0);
    EXPECT_EQ(kind_of([] { Threshold(1.0, 0.5); }), ErrorKind::ParameterOutOfRange);
}

TEST(StudyConfig, Defaults)
{
    StudyConfig cfg;
    EXPECT_DOUBLE_EQ(cfg.alpha, 0.025);
    cfg.alpha = 0.6;
    EXPECT_EQ(kind_of([&] { cfg.validate(); }), ErrorKind::ParameterOutOfRange);
}

TEST(Random, SameSeedSameStream)
{
    Rng a = make_rng(42, 3, 9);
    Rng b = make_rng(42, 3, 9);
    for (int i = 0; i < 100; ++i)
    {
        EXPECT_EQ(a(), b());
    }
    EXPECT_NE(derive_seed(42, 3, 9), derive_seed(42, 3, 10));
    EXPECT_NE(derive_seed(42, 3, 9), derive_seed(42, 4, 9));
}

TEST(Random, UniformOpenNeverHitsEnds)
{
    Rng rng = make_rng(1);
    for (int i = 0; i < 100000; ++i)
    {
        const double u = uniform_open(rng);
        ASSERT_GT(u, 0.0);
        ASSERT_LT(u, 1.0);
    }
}
