#include "brute_scorer.hpp"
#include "fixtures.hpp"
#include "generators.hpp"
#include "metric_fixture.hpp"

#include "ptool/evalkit.hpp"

#include <gtest/gtest.h>

#include <set>
#include <tuple>

using namespace ptool;
using namespace ptool::testing;

namespace {

std::set<std::string> error_names(const SampleEval& e) {
    std::set<std::string> out;
    for (auto c : e.errors) out.insert(std::string(to_string(c)));
    return out;
}

void expect_matches_oracle(const SampleEval& e, const oracle::Scored& s, const std::string& context) {
    EXPECT_EQ(e.format_ok, s.format) << context;
    EXPECT_EQ(e.platform_ok, s.platform) << context;
    EXPECT_EQ(e.name_ok, s.name) << context;
    EXPECT_EQ(e.param_ok, s.param) << context;
    EXPECT_EQ(e.value_ok, s.value) << context;
    EXPECT_EQ(e.query_params.correct, static_cast<std::size_t>(s.query_hits)) << context;
    EXPECT_EQ(e.query_params.total, static_cast<std::size_t>(s.query_total)) << context;
    EXPECT_EQ(e.profile_params.correct, static_cast<std::size_t>(s.profile_hits)) << context;
    EXPECT_EQ(e.profile_params.total, static_cast<std::size_t>(s.profile_total)) << context;
    EXPECT_EQ(error_names(e), s.errors) << context;
}

std::map<std::string, UserSplit> splits(const std::map<std::string, bool>& trained) {
    std::map<std::string, UserSplit> out;
    for (const auto& [u, t] : trained) out[u] = t ? UserSplit::trained : UserSplit::untrained;
    return out;
}

void expect_report_matches_oracle(const EvalReport& r, const oracle::Report& o) {
    for (const auto& [name, ratio] : r.metrics()) {
        const auto& f = o.metrics.at(name);
        EXPECT_EQ(ratio->numerator, static_cast<std::size_t>(f.num)) << name;
        EXPECT_EQ(ratio->denominator, static_cast<std::size_t>(f.den)) << name;
    }
    for (const auto& [c, n] : r.error_histogram)
        EXPECT_EQ(n, static_cast<std::size_t>(o.errors.at(std::string(to_string(c))))) << to_string(c);
}

Sample generated_gold(Gen& gen, int i, const std::string& user) {
    Sample s;
    s.id = "gen" + std::to_string(i);
    s.user_id = user;
    s.scenario = "shopping";
    s.query = "q";
    s.gold = gen.solution();
    for (std::size_t c = 0; c < s.gold.calls.size(); ++c)
        for (const auto& [n, _] : s.gold.calls[c].args)
            s.provenance.tags[{c, n}] = gen.coin() ? Origin::profile : Origin::query;
    return s;
}

/// Structural edits of a gold solution: each one exercises a different part
/// of the matcher.
Solution perturbed(Gen& gen, Solution s) {
    const int edits = 1 + static_cast<int>(gen.below(3));
    for (int k = 0; k < edits; ++k) {
        if (s.calls.empty()) {
            s.calls.push_back(gen.call("P" + std::to_string(gen.below(3))));
            continue;
        }
        const std::size_t i = gen.below(s.calls.size());
        ToolCall& c = s.calls[i];
        switch (gen.below(8)) {
        case 0: s.calls.erase(s.calls.begin() + static_cast<long>(i)); break;
        case 1: s.calls.push_back(s.calls[i]); break;
        case 2: std::swap(s.calls[i], s.calls[gen.below(s.calls.size())]); break;
        case 3: c.platform = "P" + std::to_string(gen.below(3)); break;
        case 4: c.function = gen.identifier(); break;
        case 5:
            if (!c.args.empty()) c.args.erase(c.args.begin() + static_cast<long>(gen.below(c.args.size())));
            break;
        case 6:
            if (!c.args.empty()) c.args[gen.below(c.args.size())].second = gen.value();
            else c.args.emplace_back("x", gen.value());
            break;
        default: {
            const std::string name = "extra" + gen.identifier();
            if (!c.arg(name)) c.args.emplace_back(name, gen.value());
        }
        }
    }
    return s;
}

} // namespace

TEST(EvalkitOracle, FixtureAgreesPerSample) {
    const MetricFixture f = metric_fixture();
    for (std::size_t i = 0; i < f.pairs.size(); ++i) {
        const auto& [pred, gold] = f.pairs[i];
        expect_matches_oracle(evaluate_sample(pred, gold), oracle::score(pred, gold),
                              "pair " + std::to_string(i) + ": " + pred);
    }
}

TEST(EvalkitOracle, FixtureAgreesOnReport) {
    const MetricFixture f = metric_fixture();
    std::vector<SampleEval> evals;
    for (const auto& [pred, gold] : f.pairs) evals.push_back(evaluate_sample(pred, gold));
    expect_report_matches_oracle(compute_report(evals, splits(f.trained)), oracle::report(f.pairs, f.trained));
}

TEST(EvalkitOracle, FixtureCoversEveryFlagCombinationAndCategory) {
    const MetricFixture f = metric_fixture();
    std::set<std::tuple<bool, bool, bool, bool, bool>> combos;
    std::set<ErrorCategory> seen;
    for (const auto& [pred, gold] : f.pairs) {
        const SampleEval e = evaluate_sample(pred, gold);
        combos.insert({e.format_ok, e.platform_ok, e.name_ok, e.param_ok, e.value_ok});
        if (e.format_ok) seen.insert(e.errors.begin(), e.errors.end());
    }
    // name agreement implies platform agreement, and value > param > name, so six combinations exist
    const std::set<std::tuple<bool, bool, bool, bool, bool>> reachable{
        {false, false, false, false, false}, {true, false, false, false, false}, {true, true, false, false, false},
        {true, true, true, false, false},    {true, true, true, true, false},    {true, true, true, true, true}};
    EXPECT_EQ(combos, reachable);
    EXPECT_EQ(seen.size(), all_error_categories.size());
}

TEST(EvalkitOracleProperty, PerturbedPredictionsAgree) {
    Gen gen(4242);
    std::vector<std::pair<std::string, Sample>> pairs;
    const std::map<std::string, bool> trained{{"u-a", true}, {"u-b", false}};
    for (int i = 0; i < 2000; ++i) {
        Sample gold = generated_gold(gen, i, i % 3 ? "u-a" : "u-b");
        std::string pred = serialize_solution(perturbed(gen, gold.gold));
        if (i % 50 == 0) pred = gen.mutated(pred);
        const SampleEval e = evaluate_sample(pred, gold);
        const oracle::Scored s = oracle::score(pred, gold);
        expect_matches_oracle(e, s, "case " + std::to_string(i) + ": " + pred);
        if (::testing::Test::HasFailure()) return;
        pairs.emplace_back(std::move(pred), std::move(gold));
    }
    std::vector<SampleEval> evals;
    for (const auto& [pred, gold] : pairs) evals.push_back(evaluate_sample(pred, gold));
    expect_report_matches_oracle(compute_report(evals, splits(trained)), oracle::report(pairs, trained));
}

TEST(EvalkitProperty, GoldScoredAgainstItselfIsPerfect) {
    Gen gen(1000);
    for (int i = 0; i < 1000; ++i) {
        const Sample gold = generated_gold(gen, i, "u-a");
        const SampleEval e = evaluate_sample(serialize_solution(gold.gold), gold);
        ASSERT_TRUE(e.format_ok && e.platform_ok && e.name_ok && e.param_ok && e.value_ok) << i;
        ASSERT_EQ(e.query_params.correct, e.query_params.total);
        ASSERT_EQ(e.profile_params.correct, e.profile_params.total);
        ASSERT_TRUE(e.errors.empty());
    }
}

TEST(Evalkit, ConsentFlipIsAParameterValueError) {
    const Sample gold = register_sample();
    Solution pred = register_solution();
    for (auto& [n, v] : pred.calls[0].args)
        if (n == "marketingConsent") v = Value(true);
    const SampleEval e = evaluate_sample(serialize_solution(pred), gold);
    EXPECT_TRUE(e.format_ok);
    EXPECT_TRUE(e.platform_ok);
    EXPECT_TRUE(e.name_ok);
    EXPECT_TRUE(e.param_ok);
    EXPECT_FALSE(e.value_ok);
    EXPECT_FALSE(e.correct());
    EXPECT_EQ(e.profile_params, (Count{5, 6}));
    EXPECT_EQ(e.query_params, (Count{0, 0}));
    EXPECT_EQ(e.errors, std::set<ErrorCategory>{ErrorCategory::p_error});
}

TEST(Evalkit, FourSampleReportByHand) {
    Sample a = register_sample();
    a.id = "a";
    a.user_id = "u-t1";
    Sample b = a;
    b.id = "b";
    const MetricFixture f = metric_fixture();
    Sample c = f.pairs[13].second;  // g3, untrained
    Sample d = f.pairs[7].second;   // g2, trained
    ASSERT_EQ(c.id, "g3");
    ASSERT_EQ(d.id, "g2");
    const std::vector<SampleEval> evals{
        evaluate_sample(serialize_solution(a.gold), a),
        evaluate_sample(f.pairs[1].first, b),  // marketingConsent=True
        evaluate_sample(serialize_solution(c.gold), c),
        evaluate_sample("hello", d),
    };
    const EvalReport r = compute_report(evals, splits(f.trained));
    EXPECT_EQ(r.format, (Ratio{3, 4}));
    EXPECT_EQ(r.platform, (Ratio{3, 4}));
    EXPECT_EQ(r.tool_name, (Ratio{3, 4}));
    EXPECT_EQ(r.tool_param, (Ratio{3, 4}));
    EXPECT_EQ(r.tool_value, (Ratio{2, 4}));
    EXPECT_EQ(r.overall, (Ratio{2, 4}));
    EXPECT_EQ(r.trained_overall, (Ratio{1, 3}));
    EXPECT_EQ(r.untrained_overall, (Ratio{1, 1}));
    EXPECT_EQ(r.query_param, (Ratio{3, 5}));
    EXPECT_EQ(r.profile_param, (Ratio{12, 14}));
    EXPECT_EQ(r.error_histogram.at(ErrorCategory::p_error), 1u);
    std::size_t total_errors = 0;
    for (const auto& [_, n] : r.error_histogram) total_errors += n;
    EXPECT_EQ(total_errors, 1u);
    EXPECT_EQ(format_ratio(r.trained_overall), "33.33");
    EXPECT_DOUBLE_EQ(r.profile_param.value().value(), 12.0 / 14.0);
}

TEST(Evalkit, FormatFailureStillCountsGoldParameters) {
    const Sample gold = register_sample();
    const SampleEval e = evaluate_sample("{MegaMart:[registerUser(", gold);
    EXPECT_FALSE(e.format_ok);
    EXPECT_EQ(e.profile_params, (Count{0, 6}));
    EXPECT_TRUE(e.errors.empty());
}

TEST(Evalkit, EmptyBucketIsAbsentNotZero) {
    const Sample gold = register_sample();
    const std::vector<SampleEval> evals{evaluate_sample(serialize_solution(gold.gold), gold)};
    const EvalReport r = compute_report(evals, {{gold.user_id, UserSplit::untrained}});
    EXPECT_FALSE(r.trained_overall.value());
    EXPECT_EQ(r.untrained_overall.value(), 1.0);
    EXPECT_FALSE(r.query_param.value());
    EXPECT_EQ(format_ratio(r.trained_overall), "-");
    const Json j = to_json(r, "gold");
    EXPECT_TRUE(j["metrics"]["trained_overall"]["value"].is_null());
    EXPECT_EQ(j["metrics"]["overall"]["value"], 1.0);
    EXPECT_EQ(j["metrics"]["profile_param"]["numerator"], 6);
}

TEST(Evalkit, UnknownUserIsMissingSplit) {
    const Sample gold = register_sample();
    const std::vector<SampleEval> evals{evaluate_sample("", gold)};
    try {
        (void)compute_report(evals, {});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::missing_split);
    }
}

TEST(Evalkit, BatchTreatsMissingPredictionAsUnparsable) {
    const MetricFixture f = metric_fixture();
    std::vector<Sample> samples;
    std::map<std::string, std::string> preds;
    for (std::size_t i = 0; i < f.pairs.size(); ++i) {
        Sample s = f.pairs[i].second;
        s.id = "p" + std::to_string(i);
        samples.push_back(s);
        if (i % 4) preds[s.id] = f.pairs[i].first;
    }
    const auto evals = evaluate_batch(samples, preds, 4);
    ASSERT_EQ(evals.size(), samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        EXPECT_EQ(evals[i].sample_id, samples[i].id);
        EXPECT_EQ(evals[i], evaluate_sample(i % 4 ? f.pairs[i].first : "", samples[i]));
    }
}

TEST(Evalkit, SampleEvalJsonRoundTrip) {
    const MetricFixture f = metric_fixture();
    for (const auto& [pred, gold] : f.pairs) {
        const SampleEval e = evaluate_sample(pred, gold);
        EXPECT_EQ(sample_eval_from_json(Json::parse(to_json(e).dump())), e);
    }
    Json bad = to_json(evaluate_sample("", register_sample()));
    bad["errors"] = Json::array({"T-sideways"});
    EXPECT_THROW((void)sample_eval_from_json(bad), Error);
}

TEST(Evalkit, ReportTableLayout) {
    const Sample gold = register_sample();
    const std::vector<SampleEval> evals{evaluate_sample(serialize_solution(gold.gold), gold)};
    const std::string table = report_table(compute_report(evals, {{gold.user_id, UserSplit::trained}}), "gold");
    EXPECT_EQ(table.substr(0, 5), "Model");
    EXPECT_NE(table.find("    100.00"), std::string::npos);
    EXPECT_NE(table.find("         -"), std::string::npos);
    EXPECT_NE(table.find("P-error=0"), std::string::npos);
}
