#pragma once

#include <map>
#include <string>
#include <vector>

#include "ccast/grid.hpp"

namespace ccast {

/// Percentile ranks stored by the climatology (tercile boundaries are the
/// exact thirds).
enum class Pct { p10, p33, p67, p90 };
double pct_rank(Pct p);
const std::string& pct_name(Pct p);

struct VarKey {
    VariableId var;
    std::string level;
    auto operator<=>(const VarKey&) const = default;
};

/// One hindcast entry: all members of one (year, init date), each member a
/// per-variable series of lead days 1..horizon. Observations are a single
/// member.
struct HindcastEntry {
    int year = 0;
    int init_date = 0;  ///< calendar day within the (pseudo-)year
    std::vector<std::map<VarKey, FieldSeries>> members;
};

struct HindcastSet {
    std::vector<HindcastEntry> entries;
};

/// Lead- and calendar-date-dependent statistics of a hindcast set. Daily
/// keys carry mean and interannual standard deviation; weekly keys add the
/// percentiles used for tercile and extreme thresholds (computed on weekly
/// means, which is where they are consumed). Daily percentiles can be
/// switched on for small sets.
class Climatology {
public:
    struct DailyStats {
        Field mean;
        Field stddev;
        std::map<Pct, Field> percentiles;  ///< populated only when requested
    };
    struct WeeklyStats {
        Field mean;
        Field stddev;
        std::map<Pct, Field> percentiles;
    };

    bool has_daily(int init_date, int lead_day, const VarKey& key) const;
    const DailyStats& daily(int init_date, int lead_day, const VarKey& key) const;
    const WeeklyStats& weekly(int init_date, int week, const VarKey& key) const;
    bool has_weekly(int init_date, int week, const VarKey& key) const;

    void put_daily(int init_date, int lead_day, const VarKey& key, DailyStats stats);
    void put_weekly(int init_date, int week, const VarKey& key, WeeklyStats stats);

    std::vector<int> init_dates() const;
    int horizon_days() const;
    int weeks() const;

    /// Persist as a directory of GFB files plus index.csv
    /// (`date,lead,var,level,stat,filename` rows; weekly leads prefixed 'w').
    void save(const std::string& dir) const;
    static Climatology load(const std::string& dir);

private:
    // (init_date, lead or week) -> per-variable stats
    std::map<std::pair<int, int>, std::map<VarKey, DailyStats>> daily_;
    std::map<std::pair<int, int>, std::map<VarKey, WeeklyStats>> weekly_;
};

struct ClimatologyOptions {
    bool daily_percentiles = false;
    int weeks = 0;  ///< 0 = as many full weeks as the horizon holds
};

/// Pooled year-and-member statistics per (init date, lead, variable).
/// Needs at least two hindcast years per init date.
Climatology build_climatology(const HindcastSet& hindcast,
                              const ClimatologyOptions& opts = {});

/// Pointwise x - climatological mean at (init_date, lead). The climatology
/// must cover every lead present in the series.
FieldSeries anomaly(const FieldSeries& x, const Climatology& clim, int init_date);

/// Mean of lead days 7(w-1)+1 .. 7w; throws on an incomplete week.
Field weekly_mean(const FieldSeries& x, int week);

/// Mean over an inclusive lead-day window (e.g. days 15..42 for weeks 3-6).
Field window_mean(const FieldSeries& x, int day_first, int day_last);

/// OLS trend against year over the hindcast sample, evaluated at the test
/// year and subtracted; predictions and observations are fit separately.
struct DetrendResult {
    double pred;
    double obs;
};
DetrendResult detrend(const std::vector<int>& years,
                      const std::vector<double>& pred_by_year,
                      const std::vector<double>& obs_by_year,
                      int test_year, double test_pred, double test_obs);

/// Per-grid-point detrending of paired prediction/observation fields.
std::pair<Field, Field> detrend_fields(const std::vector<int>& years,
                                       const std::vector<Field>& pred_by_year,
                                       const std::vector<Field>& obs_by_year,
                                       int test_year, const Field& test_pred,
                                       const Field& test_obs);

/// Latitude-weighted box mean of anomaly / interannual-std, then time mean
/// over [day_first, day_last]. Errors out when more than half the box has
/// zero variance.
double standardized_box_anomaly(const FieldSeries& anomalies, const Climatology& clim,
                                int init_date, const BoxSpec& box,
                                int day_first, int day_last);

}  // namespace ccast
