#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "ccast/climatology.hpp"
#include "ccast/ref.hpp"
#include "ccast/rng.hpp"

using namespace ccast;
namespace fs = std::filesystem;

namespace {

GridSpec grid() { return GridSpec::uniform(3, 4); }

FieldSeries lead_series(double base, int days, double per_day = 0.0) {
    FieldSeries s;
    for (int d = 1; d <= days; ++d) {
        s.insert(Field(grid(), VariableId::T2M, d, base + per_day * d));
    }
    return s;
}

/// Hindcast with one member per (year, date); value = value_of(year, lead).
HindcastSet make_hindcast(const std::vector<int>& years, int days,
                          double (*value_of)(int year, int lead)) {
    HindcastSet set;
    for (int y : years) {
        HindcastEntry e;
        e.year = y;
        e.init_date = 1;
        std::map<VarKey, FieldSeries> member;
        FieldSeries s;
        for (int d = 1; d <= days; ++d) {
            s.insert(Field(grid(), VariableId::T2M, d, value_of(y, d)));
        }
        member[{VariableId::T2M, ""}] = std::move(s);
        e.members.push_back(std::move(member));
        set.entries.push_back(std::move(e));
    }
    return set;
}

const VarKey k_t2m{VariableId::T2M, ""};

}  // namespace

TEST_CASE("two-year mean") {
    auto set = make_hindcast({1, 2}, 7, [](int y, int) { return y == 1 ? 1.0 : 3.0; });
    Climatology c = build_climatology(set);
    CHECK(c.daily(1, 3, k_t2m).mean.values[0] == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("degenerate distribution: percentiles equal the mean") {
    auto set = make_hindcast({1, 2, 3}, 7, [](int, int) { return 4.2; });
    ClimatologyOptions opts;
    opts.daily_percentiles = true;
    Climatology c = build_climatology(set, opts);
    const auto& stats = c.daily(1, 1, k_t2m);
    for (auto pc : {Pct::p10, Pct::p33, Pct::p67, Pct::p90}) {
        CHECK(stats.percentiles.at(pc).values[0] == doctest::Approx(4.2).epsilon(1e-14));
    }
}

TEST_CASE("15-year sample percentile matches the sorted-sample oracle") {
    std::vector<int> years(15);
    for (int i = 0; i < 15; ++i) years[i] = i + 1;
    auto set = make_hindcast(years, 7, [](int y, int) { return static_cast<double>(y); });
    ClimatologyOptions opts;
    opts.daily_percentiles = true;
    Climatology c = build_climatology(set, opts);
    // Oracle: linear interpolation on the sorted pooled sample.
    std::vector<double> sample;
    for (int y = 1; y <= 15; ++y) sample.push_back(static_cast<double>(y));
    double expect = ref::percentile_linear(sample, 0.9);
    CHECK(expect == doctest::Approx(13.6).epsilon(1e-12));
    CHECK(c.daily(1, 2, k_t2m).percentiles.at(Pct::p90).values[0] ==
          doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("stored mean is reproducible and percentiles are monotone") {
    Rng rng(5);
    HindcastSet set;
    std::vector<std::vector<double>> values(6);
    for (int y = 1; y <= 6; ++y) {
        HindcastEntry e;
        e.year = y;
        e.init_date = 10;
        std::map<VarKey, FieldSeries> member;
        FieldSeries s;
        Field f(grid(), VariableId::T2M, 1);
        for (auto& v : f.values) v = rng.normal();
        values[y - 1] = f.values;
        s.insert(std::move(f));
        member[k_t2m] = std::move(s);
        e.members.push_back(std::move(member));
        set.entries.push_back(std::move(e));
    }
    ClimatologyOptions opts;
    opts.daily_percentiles = true;
    Climatology c = build_climatology(set, opts);
    const auto& stats = c.daily(10, 1, k_t2m);
    for (std::size_t p = 0; p < stats.mean.values.size(); ++p) {
        double m = 0.0;
        for (const auto& v : values) m += v[p];
        m /= 6.0;
        CHECK(stats.mean.values[p] == doctest::Approx(m).epsilon(1e-12));
        CHECK(stats.percentiles.at(Pct::p10).values[p] <=
              stats.percentiles.at(Pct::p33).values[p]);
        CHECK(stats.percentiles.at(Pct::p33).values[p] <=
              stats.percentiles.at(Pct::p67).values[p]);
        CHECK(stats.percentiles.at(Pct::p67).values[p] <=
              stats.percentiles.at(Pct::p90).values[p]);
    }
}

TEST_CASE("one hindcast year is rejected") {
    auto set = make_hindcast({1}, 7, [](int, int) { return 0.0; });
    CHECK_THROWS_AS(build_climatology(set), DataError);
}

TEST_CASE("anomaly basics") {
    auto set = make_hindcast({1, 2}, 7, [](int, int d) { return static_cast<double>(d); });
    Climatology c = build_climatology(set);

    // x equal to the climatological mean -> all zero.
    FieldSeries x = lead_series(0.0, 7, 1.0);
    FieldSeries a = anomaly(x, c, 1);
    for (std::int64_t t : a.times()) {
        for (double v : a.at(t).values) CHECK(v == doctest::Approx(0.0).epsilon(1e-14));
    }

    // x = mean + 1 everywhere -> constant 1.
    FieldSeries x1;
    for (int d = 1; d <= 7; ++d) x1.insert(Field(grid(), VariableId::T2M, d, d + 1.0));
    FieldSeries a1 = anomaly(x1, c, 1);
    for (std::int64_t t : a1.times()) {
        for (double v : a1.at(t).values) CHECK(v == doctest::Approx(1.0).epsilon(1e-14));
    }

    // Missing climatology key -> error.
    FieldSeries x9 = lead_series(0.0, 9, 1.0);
    CHECK_THROWS_AS(anomaly(x9, c, 1), DataError);
    CHECK_THROWS_AS(anomaly(x, c, 2), DataError);
}

TEST_CASE("anomaly of an anomaly with a zero climatology is the identity") {
    auto set = make_hindcast({1, 2}, 7, [](int, int) { return 0.0; });
    Climatology zero_clim = build_climatology(set);
    Rng rng(8);
    FieldSeries x;
    for (int d = 1; d <= 7; ++d) {
        Field f(grid(), VariableId::T2M, d);
        for (auto& v : f.values) v = rng.normal();
        x.insert(std::move(f));
    }
    FieldSeries once = anomaly(x, zero_clim, 1);
    FieldSeries twice = anomaly(once, zero_clim, 1);
    for (std::int64_t t : x.times()) {
        for (std::size_t k = 0; k < x.at(t).values.size(); ++k) {
            CHECK(twice.at(t).values[k] == x.at(t).values[k]);
        }
    }
}

TEST_CASE("weekly mean") {
    FieldSeries c2 = lead_series(2.0, 14);
    CHECK(weekly_mean(c2, 1).values[0] == doctest::Approx(2.0));
    CHECK(weekly_mean(c2, 2).values[0] == doctest::Approx(2.0));

    FieldSeries ramp = lead_series(0.0, 7, 1.0);  // days 1..7 hold 1..7
    CHECK(weekly_mean(ramp, 1).values[0] == doctest::Approx(4.0).epsilon(1e-14));

    FieldSeries s42 = lead_series(1.0, 42);
    CHECK_THROWS_AS(weekly_mean(s42, 9), DataError);
    // The weeks 3-6 window.
    CHECK(window_mean(s42, 15, 42).values[0] == doctest::Approx(1.0));
}

TEST_CASE("anomaly then weekly mean commutes with weekly climatology") {
    auto set = make_hindcast({1, 2, 3}, 14, [](int y, int d) {
        return 0.5 * y + 0.25 * d + 0.1 * y * d;
    });
    Climatology c = build_climatology(set);
    Rng rng(13);
    FieldSeries x;
    for (int d = 1; d <= 14; ++d) {
        Field f(grid(), VariableId::T2M, d);
        for (auto& v : f.values) v = rng.normal();
        x.insert(std::move(f));
    }
    for (int w : {1, 2}) {
        Field lhs = weekly_mean(anomaly(x, c, 1), w);
        // Weekly climatological mean == weekly mean of daily means (linearity).
        Field rhs = field_sub(weekly_mean(x, w), c.weekly(1, w, k_t2m).mean);
        for (std::size_t k = 0; k < lhs.values.size(); ++k) {
            CHECK(lhs.values[k] == doctest::Approx(rhs.values[k]).epsilon(1e-12));
        }
    }
}

TEST_CASE("detrend on constant and exactly linear data") {
    std::vector<int> years = {1, 2, 3, 4, 5};
    // Constant 5.0: trend line is the constant, detrended test value 0.
    auto r1 = detrend(years, {5, 5, 5, 5, 5}, {5, 5, 5, 5, 5}, 6, 5.0, 5.0);
    CHECK(r1.pred == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(r1.obs == doctest::Approx(0.0).epsilon(1e-12));

    // v(y) = 2y, test year 6 value 12: extrapolated trend removes it exactly.
    auto r2 = detrend(years, {2, 4, 6, 8, 10}, {2, 4, 6, 8, 10}, 6, 12.0, 12.0);
    CHECK(r2.pred == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(r2.obs == doctest::Approx(0.0).epsilon(1e-9));

    CHECK_THROWS_WITH_AS(detrend({1, 2}, {1, 2}, {1, 2}, 3, 1, 1),
                         "insufficient trend sample", DataError);
}

TEST_CASE("detrended hindcast residuals have zero OLS slope") {
    Rng rng(21);
    std::vector<int> years;
    std::vector<double> pred, obs;
    for (int y = 1; y <= 9; ++y) {
        years.push_back(y);
        pred.push_back(0.7 * y + rng.normal());
        obs.push_back(-0.3 * y + rng.normal());
    }
    // Residuals after removing the fitted trend at each hindcast year.
    std::vector<double> xs(years.begin(), years.end());
    double slope, intercept;
    ref::ols_fit(xs, pred, slope, intercept);
    std::vector<double> resid;
    for (std::size_t i = 0; i < years.size(); ++i) {
        auto r = detrend(years, pred, obs, years[i], pred[i], obs[i]);
        resid.push_back(r.pred);
    }
    double rslope, rintercept;
    ref::ols_fit(xs, resid, rslope, rintercept);
    CHECK(std::abs(rslope) < 1e-10);
    double mean_resid = 0.0;
    for (double r : resid) mean_resid += r;
    CHECK(std::abs(mean_resid / resid.size()) < 1e-10);
}

TEST_CASE("detrend_fields matches the scalar path per point") {
    std::vector<int> years = {1, 2, 3, 4};
    std::vector<Field> pred, obs;
    Rng rng(3);
    for (int y : years) {
        Field fp(grid(), VariableId::T2M, y);
        Field fo(grid(), VariableId::T2M, y);
        for (std::size_t k = 0; k < fp.values.size(); ++k) {
            fp.values[k] = 0.5 * y + rng.normal();
            fo.values[k] = -0.2 * y + rng.normal();
        }
        pred.push_back(std::move(fp));
        obs.push_back(std::move(fo));
    }
    Field tp(grid(), VariableId::T2M, 5, 1.0);
    Field to(grid(), VariableId::T2M, 5, -1.0);
    auto [dp, dob] = detrend_fields(years, pred, obs, 5, tp, to);
    for (std::size_t k = 0; k < dp.values.size(); ++k) {
        std::vector<double> pv, ov;
        for (std::size_t i = 0; i < years.size(); ++i) {
            pv.push_back(pred[i].values[k]);
            ov.push_back(obs[i].values[k]);
        }
        auto r = detrend(years, pv, ov, 5, 1.0, -1.0);
        CHECK(dp.values[k] == doctest::Approx(r.pred).epsilon(1e-12));
        CHECK(dob.values[k] == doctest::Approx(r.obs).epsilon(1e-12));
    }
}

TEST_CASE("standardized box anomaly") {
    // Two hindcast years with spread 1 at every point: values m-1 and m+1
    // around mean m, population std = 1.
    auto set = make_hindcast({1, 2}, 7, [](int y, int) { return y == 1 ? -1.0 : 1.0; });
    Climatology c = build_climatology(set);
    BoxSpec box{-90.0, 90.0, 0.0, 360.0};

    FieldSeries zero = lead_series(0.0, 7);
    CHECK(standardized_box_anomaly(zero, c, 1, box, 1, 7) == doctest::Approx(0.0));

    FieldSeries ones = lead_series(1.0, 7);  // +1 sigma everywhere
    CHECK(standardized_box_anomaly(ones, c, 1, box, 1, 7) ==
          doctest::Approx(1.0).epsilon(1e-12));

    // 2 sigma over half the box (equal weights), 0 elsewhere -> 1.0.
    GridSpec g({-10.0, 10.0}, {0.0, 90.0, 180.0, 270.0});
    HindcastSet hs;
    for (int y : {1, 2}) {
        HindcastEntry e;
        e.year = y;
        e.init_date = 1;
        std::map<VarKey, FieldSeries> member;
        FieldSeries s;
        s.insert(Field(g, VariableId::T2M, 1, y == 1 ? -1.0 : 1.0));
        member[k_t2m] = std::move(s);
        e.members.push_back(std::move(member));
        hs.entries.push_back(std::move(e));
    }
    Climatology c2 = build_climatology(hs);
    Field f(g, VariableId::T2M, 1);
    for (std::size_t j = 0; j < 4; ++j) {
        f.at(0, j) = j < 2 ? 2.0 : 0.0;  // half the box at 2 sigma
        f.at(1, j) = j < 2 ? 2.0 : 0.0;
    }
    FieldSeries fs;
    fs.insert(std::move(f));
    CHECK(standardized_box_anomaly(fs, c2, 1, box, 1, 1) ==
          doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("degenerate variance in most of the box is an error") {
    // Identical years: std 0 everywhere.
    auto set = make_hindcast({1, 2}, 7, [](int, int) { return 3.0; });
    Climatology c = build_climatology(set);
    FieldSeries x = lead_series(1.0, 7);
    BoxSpec box{-90.0, 90.0, 0.0, 360.0};
    CHECK_THROWS_WITH_AS(standardized_box_anomaly(x, c, 1, box, 1, 7), "degenerate variance",
                         DataError);
}

TEST_CASE("climatology save/load round trip") {
    auto set = make_hindcast({1, 2, 3}, 14, [](int y, int d) { return y * 0.3 + d * 0.1; });
    ClimatologyOptions opts;
    opts.daily_percentiles = true;
    Climatology c = build_climatology(set, opts);
    fs::path dir = fs::temp_directory_path() / "ccast_clim_test";
    fs::remove_all(dir);
    c.save(dir.string());
    Climatology r = Climatology::load(dir.string());
    for (int lead : {1, 5, 14}) {
        const auto& a = c.daily(1, lead, k_t2m);
        const auto& b = r.daily(1, lead, k_t2m);
        for (std::size_t k = 0; k < a.mean.values.size(); ++k) {
            CHECK(a.mean.values[k] == b.mean.values[k]);
            CHECK(a.stddev.values[k] == b.stddev.values[k]);
            CHECK(a.percentiles.at(Pct::p90).values[k] ==
                  b.percentiles.at(Pct::p90).values[k]);
        }
    }
    for (int w : {1, 2}) {
        const auto& a = c.weekly(1, w, k_t2m);
        const auto& b = r.weekly(1, w, k_t2m);
        for (std::size_t k = 0; k < a.mean.values.size(); ++k) {
            CHECK(a.mean.values[k] == b.mean.values[k]);
            CHECK(a.percentiles.at(Pct::p33).values[k] ==
                  b.percentiles.at(Pct::p33).values[k]);
        }
    }
}
