#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ccast/errors.hpp"

namespace ccast {

enum class Sphere { Atmosphere, Land, Ocean, SeaIce };

/// Variable registry. Land variables ride with the atmospheric model half,
/// sea ice with the oceanic half; the sphere tag records the physical origin.
enum class VariableId {
    TP,
    T2M,
    T2M_MIN,
    T2M_MAX,
    Z500,
    OLR,
    MSL,
    U850,
    U200,
    SM100,
    ST100,
    T300,
    S300,
    MLT,
    SSH,
    SIC,
    SIT,
};

const std::vector<VariableId>& all_variables();
const std::string& var_name(VariableId v);
Sphere var_sphere(VariableId v);
VariableId var_from_name(const std::string& name);
const std::string& sphere_name(Sphere s);
Sphere sphere_from_name(const std::string& name);

/// Latitude/longitude grid. Latitudes are strictly monotonic in [-90, 90]
/// (poles excluded so cos-latitude weights stay positive); longitudes are
/// strictly monotonic in [0, 360) and treated as periodic.
class GridSpec {
public:
    GridSpec() = default;
    GridSpec(std::vector<double> lats, std::vector<double> lons);

    /// Uniform grid: nlat rows centered on the equator, nlon columns from 0.
    static GridSpec uniform(std::size_t nlat, std::size_t nlon);

    std::size_t nlat() const { return lats_.size(); }
    std::size_t nlon() const { return lons_.size(); }
    std::size_t npoints() const { return lats_.size() * lons_.size(); }
    const std::vector<double>& lats() const { return lats_; }
    const std::vector<double>& lons() const { return lons_; }

    /// cos(latitude) weights, strictly positive.
    const std::vector<double>& lat_weights() const { return weights_; }

    bool operator==(const GridSpec& o) const {
        return lats_ == o.lats_ && lons_ == o.lons_;
    }
    bool operator!=(const GridSpec& o) const { return !(*this == o); }

private:
    std::vector<double> lats_;
    std::vector<double> lons_;
    std::vector<double> weights_;
};

/// One gridded 2-D snapshot of one variable at one day.
struct Field {
    GridSpec grid;
    VariableId var = VariableId::T2M;
    std::string level;  ///< empty = no level
    std::int64_t time = 0;
    std::vector<double> values;  ///< nlat*nlon, row-major (lat-major)
    std::vector<std::uint8_t> mask;  ///< 1 = valid

    Field() = default;
    Field(GridSpec g, VariableId v, std::int64_t t, double fill = 0.0);

    std::size_t size() const { return values.size(); }
    double& at(std::size_t i, std::size_t j) { return values[i * grid.nlon() + j]; }
    double at(std::size_t i, std::size_t j) const { return values[i * grid.nlon() + j]; }
    bool valid(std::size_t i, std::size_t j) const { return mask[i * grid.nlon() + j] != 0; }
    bool all_valid() const;

    /// Throws DataError unless both fields live on the same grid.
    void require_same_grid(const Field& other, const char* op) const;
};

/// Pointwise arithmetic; masks intersect.
Field field_add(const Field& a, const Field& b);
Field field_sub(const Field& a, const Field& b);
Field field_scale(const Field& a, double c);
Field field_add_scalar(const Field& a, double c);

/// Time-indexed collection of fields sharing grid, variable and level.
class FieldSeries {
public:
    FieldSeries() = default;

    void insert(Field f);
    bool has(std::int64_t time) const { return fields_.count(time) != 0; }
    const Field& at(std::int64_t time) const;
    std::size_t size() const { return fields_.size(); }
    bool empty() const { return fields_.empty(); }
    std::vector<std::int64_t> times() const;
    const std::map<std::int64_t, Field>& entries() const { return fields_; }

    const GridSpec& grid() const;
    VariableId var() const;
    const std::string& level() const;

private:
    std::map<std::int64_t, Field> fields_;
};

/// Latitude box, longitudes wrap: lon_min > lon_max crosses the 0 meridian.
struct BoxSpec {
    double lat_min = -90.0;
    double lat_max = 90.0;
    double lon_min = 0.0;
    double lon_max = 360.0;

    bool contains(double lat, double lon) const;
};

/// Area-weighted mean over valid points, weights proportional to cos(lat).
/// Throws DataError("empty field") when nothing is valid.
double latitude_weighted_mean(const Field& f);

/// As above but restricted to a box; throws when the box holds no valid point.
double latitude_weighted_box_mean(const Field& f, const BoxSpec& box);

/// Bilinear interpolation onto a target grid with longitudinal wraparound.
/// The source must be fully valid and span the target latitudes.
Field regrid(const Field& f, const GridSpec& target);

}  // namespace ccast
