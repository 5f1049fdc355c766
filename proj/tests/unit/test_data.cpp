#include "tailhawk/data.hpp"
#include "tailhawk/rng.hpp"
#include "tailhawk/simulate.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

using namespace tailhawk;

namespace {

std::filesystem::path write_temp(const std::string& name, const std::string& body) {
    const auto dir = std::filesystem::temp_directory_path() / "tailhawk_unit";
    std::filesystem::create_directories(dir);
    const auto path = dir / name;
    std::ofstream(path) << body;
    return path;
}

ReturnSeries series_of(std::vector<double> v, std::size_t split = 0) {
    return detail::synthetic_series(std::move(v), split);
}

}  // namespace

TEST(LoadReturns, PricesToLogReturns) {
    const auto p = write_temp("prices.csv", "date,close\n2020-01-01,100\n2020-01-02,110\n");
    const auto s = load_returns(p.string(), SeriesFormat::prices, "");
    ASSERT_EQ(s.size(), 1u);
    EXPECT_NEAR(s.values[0], std::log(1.1), 1e-15);
    EXPECT_EQ(s.timestamps[0], "2020-01-02");
    EXPECT_EQ(s.split_index, 1u);
}

TEST(LoadReturns, ConstantPriceGivesZeroReturns) {
    const auto p = write_temp("flat.csv", "date,close\n2020-01-01,100\n2020-01-02,100\n2020-01-03,100\n");
    const auto s = load_returns(p.string(), SeriesFormat::prices, "");
    ASSERT_EQ(s.size(), 2u);
    EXPECT_EQ(s.values[0], 0.0);
    EXPECT_EQ(s.values[1], 0.0);
}

TEST(LoadReturns, SplitIndexIsFirstRowOnOrAfterDate) {
    std::string body = "date,value\n";
    for (int i = 0; i < 10; ++i) body += iso_date_from_days(18262 + i) + "," + std::to_string(0.001 * i) + "\n";
    const auto p = write_temp("ten.csv", body);
    const auto s = load_returns(p.string(), SeriesFormat::returns, iso_date_from_days(18262 + 7));
    EXPECT_EQ(s.split_index, 7u);
    EXPECT_EQ(s.in_sample().size(), 7u);
    EXPECT_EQ(s.out_of_sample().size(), 3u);
}

TEST(LoadReturns, SortsRowsAndSkipsComments) {
    const auto p = write_temp("unsorted.csv", "# a comment\ndate,value\n2020-01-03,3\n2020-01-01,1\n2020-01-02,2\n");
    const auto s = load_returns(p.string(), SeriesFormat::returns, "");
    EXPECT_EQ(s.values, (std::vector<double>{1, 2, 3}));
}

TEST(LoadReturns, Errors) {
    EXPECT_THROW(load_returns("/nonexistent/file.csv", SeriesFormat::returns, ""), DataError);
    const auto neg = write_temp("neg.csv", "date,close\n2020-01-01,100\n2020-01-02,-5\n");
    EXPECT_THROW(load_returns(neg.string(), SeriesFormat::prices, ""), DataError);
    const auto dup = write_temp("dup.csv", "date,value\n2020-01-01,1\n2020-01-01,2\n");
    EXPECT_THROW(load_returns(dup.string(), SeriesFormat::returns, ""), DataError);
    const auto ok = write_temp("ok.csv", "date,value\n2020-01-01,1\n2020-01-02,2\n2020-01-03,2\n");
    EXPECT_THROW(load_returns(ok.string(), SeriesFormat::returns, "2019-12-31"), ValidationError);
    EXPECT_THROW(load_returns(ok.string(), SeriesFormat::returns, "2020-01-01"), ValidationError);
    EXPECT_THROW(load_returns(ok.string(), SeriesFormat::returns, "2020-02-01"), ValidationError);
    EXPECT_THROW(load_returns(ok.string(), SeriesFormat::returns, "not-a-date"), ValidationError);
    const auto bad = write_temp("bad.csv", "date,value\n2020-13-01,1\n");
    EXPECT_THROW(load_returns(bad.string(), SeriesFormat::returns, ""), DataError);
}

TEST(WriteReturns, RoundTripsThroughLoader) {
    SplitMix64 rng(3);
    std::vector<double> v;
    for (int i = 0; i < 50; ++i) v.push_back(rng.normal() * 0.01);
    const auto s = series_of(v);
    std::ostringstream os;
    const std::vector<std::string> comments{"generated"};
    write_returns(os, s, comments);
    const auto p = write_temp("roundtrip.csv", os.str());
    const auto back = load_returns(p.string(), SeriesFormat::returns, "");
    EXPECT_EQ(back.values, s.values);
    EXPECT_EQ(back.timestamps, s.timestamps);
}

TEST(EmpiricalQuantile, Examples) {
    const std::vector<double> five{1, 2, 3, 4, 5};
    EXPECT_EQ(empirical_quantile(five, 0.5), 3.0);
    const std::vector<double> four{4, 2, 1, 3};
    EXPECT_EQ(empirical_quantile(four, 0.0), 1.0);
    EXPECT_EQ(empirical_quantile(four, 1.0), 4.0);
    EXPECT_DOUBLE_EQ(empirical_quantile(four, 0.5), 2.5);
    EXPECT_THROW(empirical_quantile(std::vector<double>{}, 0.5), ValidationError);
    EXPECT_THROW(empirical_quantile(five, 1.5), ValidationError);
}

TEST(EmpiricalQuantile, MatchesSortingOracle) {
    SplitMix64 rng(11);
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<double> v(3 + rng.below(40));
        for (auto& x : v) x = rng.normal();
        std::vector<double> sorted = v;
        std::sort(sorted.begin(), sorted.end());
        for (double q : {0.0, 0.013, 0.25, 0.5, 0.77, 1.0}) {
            // closest ranks j = floor((n-1) q), weight on the next rank
            const double pos = q * static_cast<double>(sorted.size() - 1);
            const auto j = static_cast<std::size_t>(pos);
            const double expect = j + 1 < sorted.size() ? sorted[j] * (1 - (pos - j)) + sorted[j + 1] * (pos - j) : sorted[j];
            EXPECT_NEAR(empirical_quantile(v, q), expect, 1e-14);
        }
    }
}

TEST(EmpiricalQuantile, ConstantSampleIsIdempotent) {
    const std::vector<double> c(17, 0.25);
    for (double q : {0.0, 0.1, 0.5, 0.9, 1.0}) EXPECT_EQ(empirical_quantile(c, q), 0.25);
}

TEST(Exceedances, DirectSetConstruction) {
    const std::vector<double> x{-3, -1, 0, 1, 3};
    const auto ex = exceedances_at(x, -2.0, 2.0, 0.2);
    ASSERT_EQ(ex.left.size(), 1u);
    ASSERT_EQ(ex.right.size(), 1u);
    EXPECT_EQ(ex.left[0], (ExceedanceEvent{0, 1.0}));
    EXPECT_EQ(ex.right[0], (ExceedanceEvent{4, 1.0}));
}

TEST(Exceedances, ValuesAtThresholdAreNotEvents) {
    const std::vector<double> x{-2, 2, -2.5};
    const auto ex = exceedances_at(x, -2.0, 2.0, 0.2);
    EXPECT_EQ(ex.left.size(), 1u);
    EXPECT_EQ(ex.right.size(), 0u);
}

TEST(Exceedances, MirrorPropertyIsExact) {
    SplitMix64 rng(5);
    std::vector<double> v(4000);
    for (auto& x : v) x = rng.normal() * 0.01 + (rng.uniform() < 0.1 ? 0.003 : 0.0);
    std::vector<double> neg(v.size());
    std::transform(v.begin(), v.end(), neg.begin(), [](double x) { return -x; });
    const auto a = extract_exceedances(series_of(v, 3000), 0.025);
    const auto b = extract_exceedances(series_of(neg, 3000), 0.025);
    EXPECT_EQ(a.u_left, -b.u_right);
    EXPECT_EQ(a.u_right, -b.u_left);
    EXPECT_EQ(a.left, b.right);
    EXPECT_EQ(a.right, b.left);
}

TEST(Exceedances, CountsMatchThresholdLevel) {
    SplitMix64 rng(17);
    std::vector<double> v(40000);
    for (auto& x : v) x = rng.normal();
    const std::size_t T_in = 30000;
    const auto ex = extract_exceedances(series_of(v, T_in), 0.025);
    const auto expected = static_cast<double>(std::floor(0.025 * T_in));
    EXPECT_NEAR(static_cast<double>(ex.count_before(Tail::left, T_in)), expected, 1.0);
    EXPECT_NEAR(static_cast<double>(ex.count_before(Tail::right, T_in)), expected, 1.0);
    // events after the split use the in-sample thresholds
    EXPECT_GT(ex.left.size(), ex.count_before(Tail::left, T_in));
}

TEST(Exceedances, MonotoneInThresholdLevel) {
    SplitMix64 rng(23);
    std::vector<double> v(5000);
    for (auto& x : v) x = rng.normal();
    const auto s = series_of(v);
    const auto small = extract_exceedances(s, 0.0125);
    const auto large = extract_exceedances(s, 0.05);
    for (Tail o : {Tail::left, Tail::right}) {
        for (const auto& e : small.events(o)) {
            const auto& big = large.events(o);
            EXPECT_TRUE(std::any_of(big.begin(), big.end(), [&](const ExceedanceEvent& f) { return f.t == e.t; }));
        }
    }
}

TEST(Exceedances, RefusesTooFewEvents) {
    std::vector<double> v(200);
    SplitMix64 rng(1);
    for (auto& x : v) x = rng.normal();
    EXPECT_THROW(extract_exceedances(series_of(v), 0.02), ValidationError);
    EXPECT_THROW(extract_exceedances(series_of(v), 0.6), ValidationError);
    EXPECT_THROW(extract_exceedances(series_of(v), 0.0), ValidationError);
    EXPECT_NO_THROW(extract_exceedances(series_of(v), 0.02, 2));
}

TEST(ReturnSeries, ValidateRejectsBrokenInvariants) {
    ReturnSeries s = series_of({0.1, 0.2});
    EXPECT_NO_THROW(s.validate());
    s.split_index = 0;
    EXPECT_THROW(s.validate(), ValidationError);
    s.split_index = 2;
    s.values[1] = std::nan("");
    EXPECT_THROW(s.validate(), ValidationError);
    s.values[1] = 0.0;
    std::swap(s.timestamps[0], s.timestamps[1]);
    EXPECT_THROW(s.validate(), ValidationError);
}
