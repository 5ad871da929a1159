#include <coprimary/random.hpp>
#include <coprimary/simharness.hpp>

#include <gtest/gtest.h>

#include <cmath>

using namespace coprimary;

namespace
{

StudyTruth identical_truth(std::size_t m, double se, double sp)
{
    const auto s = static_cast<Eigen::Index>(m);
    return StudyTruth{Vector::Constant(s, se), Vector::Constant(s, sp), Matrix::Identity(s, s), Matrix::Identity(s, s)};
}

StudyTruth spread_truth()
{
    Vector se(6), sp(6);
    se << 0.80, 0.86, 0.90, 0.84, 0.78, 0.88;
    sp << 0.90, 0.85, 0.80, 0.88, 0.92, 0.83;
    Matrix c = Matrix::Constant(6, 6, 0.3);
    c.diagonal().setOnes();
    return StudyTruth{se, sp, c, c};
}

StudyRecord record(double cse, double csp, double se, double sp)
{
    StudyRecord r;
    r.corrected_se = cse;
    r.corrected_sp = csp;
    r.se_star = se;
    r.sp_star = sp;
    r.vartheta_star = std::min(se, sp);
    r.selected = {0};
    r.deltas = {0.0};
    r.rr = {1};
    r.conditional_rejection = 1;
    r.final_rejected = true;
    return r;
}

} // namespace

TEST(LfcParameters, WorkedExample)
{
    const std::vector<std::uint8_t> b = {1, 1, 0, 1, 0, 0, 0, 1, 1, 0};
    const auto [se, sp] = lfc_parameters(10, Threshold(0.8, 0.8), 0.001, b);
    const double ese[] = {0.800, 0.799, 1, 0.797, 1, 1, 1, 0.793, 0.792, 1};
    const double esp[] = {1, 1, 0.793, 1, 0.795, 0.796, 0.797, 1, 1, 0.800};
    for (Eigen::Index m = 0; m < 10; ++m)
    {
        EXPECT_NEAR(se(m), ese[m], 1e-12);
        EXPECT_NEAR(sp(m), esp[m], 1e-12);
    }
}

TEST(LfcParameters, ExactLfcAndSingleModel)
{
    const auto [se, sp] = lfc_parameters(4, Threshold(0.8, 0.8), 0.0, {0, 1, 1, 0});
    for (Eigen::Index m = 0; m < 4; ++m)
    {
        EXPECT_EQ(std::min(se(m), sp(m)), 0.8);
        EXPECT_EQ(std::max(se(m), sp(m)), 1.0);
    }
    const auto [se1, sp1] = lfc_parameters(1, Threshold(0.7, 0.9), 0.0, {1});
    EXPECT_EQ(se1(0), 0.7);
    EXPECT_EQ(sp1(0), 1.0);
    EXPECT_THROW(lfc_parameters(3, Threshold(0.8, 0.8), 0.5, {1, 0, 1}), Error);
    EXPECT_THROW(lfc_parameters(3, Threshold(0.8, 0.8), 0.0, {1, 0}), Error);
}

TEST(LfcIndicator, HalfOnesUniformly)
{
    Rng rng = make_rng(51);
    std::vector<int> hits(6, 0);
    const int n = 30000;
    for (int i = 0; i < n; ++i)
    {
        const auto b = draw_lfc_indicator(6, rng);
        ASSERT_EQ(std::count(b.begin(), b.end(), 1), 3);
        for (int m = 0; m < 6; ++m)
        {
            hits[static_cast<std::size_t>(m)] += b[static_cast<std::size_t>(m)];
        }
    }
    for (int h : hits)
    {
        EXPECT_NEAR(h / static_cast<double>(n), 0.5, 0.015);
    }
    EXPECT_EQ(draw_lfc_indicator(1, rng), (std::vector<std::uint8_t>{1}));
    const auto odd = draw_lfc_indicator(5, rng);
    EXPECT_EQ(std::count(odd.begin(), odd.end(), 1), 2);
}

TEST(AccuracyCap, HoldsExactly)
{
    Rng rng = make_rng(52);
    for (int rep = 0; rep < 200; ++rep)
    {
        const std::size_t s = 1 + rep % 12;
        auto [se, sp] = lfc_parameters(s, Threshold(0.9, 0.9), 0.002, draw_lfc_indicator(s, rng));
        const Vector se_before = se;
        const Vector sp_before = sp;
        const double rho = 0.2;
        apply_accuracy_cap(se, sp, rho, 0.95);
        for (Eigen::Index m = 0; m < se.size(); ++m)
        {
            ASSERT_LE(rho * se(m) + (1 - rho) * sp(m), 0.95);
            // the null boundary component is untouched; the other only moves when the cap binds
            const bool binds = rho * se_before(m) + (1 - rho) * sp_before(m) > 0.95;
            if (sp_before(m) == 1.0)
            {
                ASSERT_EQ(se(m), se_before(m));
                ASSERT_EQ(sp(m) < 1.0, binds);
            }
            else
            {
                ASSERT_EQ(sp(m), sp_before(m));
                ASSERT_EQ(se(m) < 1.0, binds);
            }
        }
    }
}

TEST(AccuracyCap, NoChangeWhenSatisfied)
{
    Vector se(1), sp(1);
    se << 0.8;
    sp << 0.9;
    apply_accuracy_cap(se, sp, 0.5, 0.95);
    EXPECT_EQ(se(0), 0.8);
    EXPECT_EQ(sp(0), 0.9);
}

TEST(StructuredCorrelation, Shapes)
{
    const Matrix e = structured_correlation(3, CorrStructure::equicorrelation, 0.4);
    EXPECT_EQ(e(0, 2), 0.4);
    const Matrix a = structured_correlation(3, CorrStructure::autocorrelation, 0.5);
    EXPECT_EQ(a(0, 2), 0.25);
    EXPECT_EQ(a(1, 2), 0.5);
    EXPECT_EQ(structured_correlation(3, CorrStructure::independence, 0.5), Matrix::Identity(3, 3));
}

TEST(SimulateFwer, SingleModelNearAlpha)
{
    LfcScenario sc;
    sc.S = 1;
    sc.n_total = 2000;
    sc.n_sim = 4000;
    const auto r = simulate_fwer(sc, StudyConfig{}, 61);
    EXPECT_LE(r.mc_se, 0.5 / std::sqrt(4000.0));
    EXPECT_NEAR(r.fwer, 0.025, 3.0 * std::sqrt(0.025 * 0.975 / 4000) + 0.005);
    EXPECT_EQ(r.n_sim, 4000u);
    EXPECT_EQ(r.fwer, r.rejections_any / 4000.0);
}

TEST(SimulateFwer, ReproducibleAcrossWorkers)
{
    LfcScenario sc;
    sc.S = 4;
    sc.n_total = 150;
    sc.n_sim = 200;
    const auto a = simulate_fwer(sc, StudyConfig{}, 62, 1);
    const auto b = simulate_fwer(sc, StudyConfig{}, 62, 4);
    EXPECT_EQ(a.rejections_any, b.rejections_any);
}

TEST(SimulateFwer, ValidatesBeforeRunning)
{
    LfcScenario sc;
    sc.S = 10;
    sc.epsilon = 0.1;
    EXPECT_THROW(simulate_fwer(sc, StudyConfig{}, 1), Error);
    sc.epsilon = 0.0;
    sc.n_sim = 0;
    EXPECT_THROW(simulate_fwer(sc, StudyConfig{}, 1), Error);
}

TEST(SimulateFwer, NearLfcIsSmaller)
{
    LfcScenario sc;
    sc.S = 6;
    sc.n_total = 400;
    sc.n_sim = 600;
    const auto exact = simulate_fwer(sc, StudyConfig{}, 63);
    sc.epsilon = 0.01;
    const auto near = simulate_fwer(sc, StudyConfig{}, 63);
    EXPECT_LE(near.fwer, exact.fwer + 2.0 * exact.mc_se);
}

TEST(Study, OracleRuleFindsBestModel)
{
    const auto truth = spread_truth();
    StudyDesign design;
    design.n_eval = 300;
    StudyConfig cfg;
    const IndexList oracle = select_oracle(truth.se, truth.sp, cfg.threshold);
    for (std::uint64_t seed = 1; seed <= 5; ++seed)
    {
        const auto rec = simulate_study(truth, SelectionRule::oracle, design, cfg, seed);
        EXPECT_EQ(rec.selected, oracle);
        EXPECT_EQ(rec.m_star, oracle.front());
        EXPECT_EQ(rec.vartheta_star, rec.vartheta_oracle);
    }
}

TEST(Study, SingleModelCorrectedEqualsRaw)
{
    const auto truth = spread_truth();
    StudyDesign design;
    StudyConfig cfg;
    const StudySimulator sim(truth, design);
    const auto rec = sim.run(SelectionRule::default_rule, cfg, 77);
    ASSERT_EQ(rec.selected.size(), 1u);
    const auto eval = sim.evaluation_data(77);
    const auto est = regularized_estimate(eval.q_se.select_columns(rec.selected), eval.q_sp.select_columns(rec.selected));
    EXPECT_NEAR(rec.corrected_se, est.se_mean(0), 1e-12);
    EXPECT_NEAR(rec.corrected_sp, est.sp_mean(0), 1e-12);
}

TEST(Study, IdenticalModelsGiveIdenticalTarget)
{
    const auto truth = identical_truth(5, 0.85, 0.8);
    StudyDesign design;
    design.n_eval = 200;
    design.efp.max_iter = 30;
    StudyConfig cfg;
    for (auto rule : {SelectionRule::default_rule, SelectionRule::within_k_se, SelectionRule::optimal_efp,
                      SelectionRule::oracle, SelectionRule::all})
    {
        const auto rec = simulate_study(truth, rule, design, cfg, 3);
        EXPECT_EQ(rec.vartheta_star, 0.8) << to_string(rule);
        EXPECT_LE(rec.selected.size(), design.effective_s_max());
    }
}

TEST(Study, RecordConsistency)
{
    const auto truth = spread_truth();
    StudyDesign design;
    design.n_eval = 400;
    design.efp.max_iter = 40;
    StudyConfig cfg;
    const StudySimulator sim(truth, design);
    for (std::uint64_t seed = 10; seed < 14; ++seed)
    {
        const auto rec = sim.run(SelectionRule::within_k_se, cfg, seed);
        EXPECT_TRUE(std::is_sorted(rec.selected.begin(), rec.selected.end()));
        EXPECT_NE(std::find(rec.selected.begin(), rec.selected.end(), rec.m_star), rec.selected.end());
        EXPECT_EQ(rec.rejected.size(), rec.selected.size());
        EXPECT_LE(rec.vartheta_star, rec.vartheta_oracle);
        EXPECT_EQ(rec.rr.size(), 3u);
        // larger delta lowers the threshold, so rejection is monotone
        EXPECT_LE(rec.rr[0], rec.rr[1]);
        EXPECT_LE(rec.rr[1], rec.rr[2]);
        const auto again = sim.run(SelectionRule::within_k_se, cfg, seed);
        EXPECT_EQ(again.m_star, rec.m_star);
        EXPECT_EQ(again.corrected_se, rec.corrected_se);
    }
}

TEST(Study, CommonRandomNumbersAcrossRules)
{
    const StudySimulator sim(spread_truth(), StudyDesign{});
    EXPECT_EQ(sim.evaluation_data(4).q_se.entries(), sim.evaluation_data(4).q_se.entries());
    EXPECT_NE(sim.evaluation_data(4).q_se.entries(), sim.validation_data(4).q_se.entries());
}

TEST(Aggregate, SingleRecord)
{
    const auto s = aggregate({record(0.82, 0.79, 0.8, 0.8)});
    EXPECT_EQ(s.records, 1u);
    EXPECT_EQ(s.vartheta_star.mean, 0.8);
    EXPECT_NEAR(s.bias.mean, 0.79 - 0.8, 1e-15);
    EXPECT_NEAR(s.mae2.mean, 0.5 * (0.02 + 0.01), 1e-15);
    EXPECT_EQ(s.p_o1.mean, 1.0);
    EXPECT_EQ(s.p_o2.mean, 0.0);
    EXPECT_EQ(s.rr[0].mean, 1.0);
    EXPECT_EQ(s.selected_size.mean, 1.0);
    EXPECT_EQ(s.vartheta_star.mc_se, 0.0);
}

TEST(Aggregate, OverestimationInclusion)
{
    Rng rng = make_rng(71);
    std::uniform_real_distribution<double> u(0.7, 0.9);
    std::vector<StudyRecord> recs;
    for (int i = 0; i < 300; ++i)
    {
        recs.push_back(record(u(rng), u(rng), u(rng), u(rng)));
    }
    const auto s = aggregate(recs);
    EXPECT_LE(s.p_o2.mean, s.p_o1.mean);
    const auto above = std::count_if(recs.begin(), recs.end(), [](const auto& r) { return r.vartheta_star > 0.75; });
    EXPECT_NEAR(s.p_above_tau.mean, static_cast<double>(above) / 300.0, 1e-12);
    EXPECT_GT(s.vartheta_star.mc_se, 0.0);
}

TEST(Aggregate, UndefinedRatesSkipped)
{
    auto a = record(0.8, 0.8, 0.8, 0.8);
    auto b = a;
    b.rr = {2};
    b.conditional_rejection = 2;
    const auto s = aggregate({a, b});
    EXPECT_EQ(s.rr[0].n, 1u);
    EXPECT_EQ(s.fwer_conditional.n, 1u);
    EXPECT_THROW(aggregate({}), Error);
}
