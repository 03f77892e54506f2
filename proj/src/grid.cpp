#include "ccast/grid.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace ccast {

namespace {

struct VarInfo {
    VariableId id;
    const char* name;
    Sphere sphere;
};

const VarInfo k_registry[] = {
    {VariableId::TP, "TP", Sphere::Atmosphere},
    {VariableId::T2M, "T2M", Sphere::Atmosphere},
    {VariableId::T2M_MIN, "T2M_MIN", Sphere::Atmosphere},
    {VariableId::T2M_MAX, "T2M_MAX", Sphere::Atmosphere},
    {VariableId::Z500, "Z500", Sphere::Atmosphere},
    {VariableId::OLR, "OLR", Sphere::Atmosphere},
    {VariableId::MSL, "MSL", Sphere::Atmosphere},
    {VariableId::U850, "U850", Sphere::Atmosphere},
    {VariableId::U200, "U200", Sphere::Atmosphere},
    {VariableId::SM100, "SM100", Sphere::Land},
    {VariableId::ST100, "ST100", Sphere::Land},
    {VariableId::T300, "T300", Sphere::Ocean},
    {VariableId::S300, "S300", Sphere::Ocean},
    {VariableId::MLT, "MLT", Sphere::Ocean},
    {VariableId::SSH, "SSH", Sphere::Ocean},
    {VariableId::SIC, "SIC", Sphere::SeaIce},
    {VariableId::SIT, "SIT", Sphere::SeaIce},
};

const char* k_sphere_names[] = {"atmosphere", "land", "ocean", "sea-ice"};

bool strictly_monotonic(const std::vector<double>& v) {
    if (v.size() < 2) return false;
    bool inc = v[1] > v[0];
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (inc ? (v[i] <= v[i - 1]) : (v[i] >= v[i - 1])) return false;
    }
    return true;
}

}  // namespace

const std::vector<VariableId>& all_variables() {
    static const std::vector<VariableId> vars = [] {
        std::vector<VariableId> v;
        for (const auto& e : k_registry) v.push_back(e.id);
        return v;
    }();
    return vars;
}

const std::string& var_name(VariableId v) {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> n;
        for (const auto& e : k_registry) n.emplace_back(e.name);
        return n;
    }();
    return names[static_cast<std::size_t>(v)];
}

Sphere var_sphere(VariableId v) {
    return k_registry[static_cast<std::size_t>(v)].sphere;
}

VariableId var_from_name(const std::string& name) {
    for (const auto& e : k_registry) {
        if (name == e.name) return e.id;
    }
    throw DataError("unknown variable '" + name + "'");
}

const std::string& sphere_name(Sphere s) {
    static const std::vector<std::string> names(std::begin(k_sphere_names),
                                                std::end(k_sphere_names));
    return names[static_cast<std::size_t>(s)];
}

Sphere sphere_from_name(const std::string& name) {
    for (int i = 0; i < 4; ++i) {
        if (name == k_sphere_names[i]) return static_cast<Sphere>(i);
    }
    throw DataError("unknown sphere '" + name + "'");
}

GridSpec::GridSpec(std::vector<double> lats, std::vector<double> lons)
    : lats_(std::move(lats)), lons_(std::move(lons)) {
    if (lats_.size() < 2 || lons_.size() < 2) {
        throw DataError("grid needs at least 2 latitudes and 2 longitudes");
    }
    if (!strictly_monotonic(lats_)) throw DataError("latitudes not strictly monotonic");
    if (!strictly_monotonic(lons_)) throw DataError("longitudes not strictly monotonic");
    for (double lat : lats_) {
        if (!(lat > -90.0 && lat < 90.0)) {
            throw DataError("latitude out of (-90, 90): " + std::to_string(lat));
        }
    }
    for (double lon : lons_) {
        if (!(lon >= 0.0 && lon < 360.0)) {
            throw DataError("longitude out of [0, 360): " + std::to_string(lon));
        }
    }
    weights_.resize(lats_.size());
    for (std::size_t i = 0; i < lats_.size(); ++i) {
        weights_[i] = std::cos(lats_[i] * M_PI / 180.0);
    }
}

GridSpec GridSpec::uniform(std::size_t nlat, std::size_t nlon) {
    std::vector<double> lats(nlat), lons(nlon);
    double dlat = 180.0 / static_cast<double>(nlat + 1);
    for (std::size_t i = 0; i < nlat; ++i) {
        lats[i] = -90.0 + dlat * static_cast<double>(i + 1);
    }
    double dlon = 360.0 / static_cast<double>(nlon);
    for (std::size_t j = 0; j < nlon; ++j) lons[j] = dlon * static_cast<double>(j);
    return GridSpec(std::move(lats), std::move(lons));
}

Field::Field(GridSpec g, VariableId v, std::int64_t t, double fill)
    : grid(std::move(g)), var(v), time(t),
      values(grid.npoints(), fill), mask(grid.npoints(), 1) {}

bool Field::all_valid() const {
    return std::all_of(mask.begin(), mask.end(), [](std::uint8_t m) { return m != 0; });
}

void Field::require_same_grid(const Field& other, const char* op) const {
    if (grid != other.grid) {
        std::ostringstream os;
        os << op << ": grid mismatch (" << grid.nlat() << "x" << grid.nlon()
           << " vs " << other.grid.nlat() << "x" << other.grid.nlon() << ")";
        throw DataError(os.str());
    }
}

namespace {

template <typename F>
Field combine(const Field& a, const Field& b, const char* op, F&& fn) {
    a.require_same_grid(b, op);
    Field out = a;
    for (std::size_t k = 0; k < out.values.size(); ++k) {
        out.mask[k] = static_cast<std::uint8_t>(a.mask[k] && b.mask[k]);
        out.values[k] = out.mask[k] ? fn(a.values[k], b.values[k]) : 0.0;
    }
    return out;
}

}  // namespace

Field field_add(const Field& a, const Field& b) {
    return combine(a, b, "add", [](double x, double y) { return x + y; });
}

Field field_sub(const Field& a, const Field& b) {
    return combine(a, b, "sub", [](double x, double y) { return x - y; });
}

Field field_scale(const Field& a, double c) {
    Field out = a;
    for (std::size_t k = 0; k < out.values.size(); ++k) {
        if (out.mask[k]) out.values[k] *= c;
    }
    return out;
}

Field field_add_scalar(const Field& a, double c) {
    Field out = a;
    for (std::size_t k = 0; k < out.values.size(); ++k) {
        if (out.mask[k]) out.values[k] += c;
    }
    return out;
}

void FieldSeries::insert(Field f) {
    if (!fields_.empty()) {
        const Field& first = fields_.begin()->second;
        if (f.grid != first.grid) throw DataError("series: grid mismatch");
        if (f.var != first.var) throw DataError("series: variable mismatch");
        if (f.level != first.level) throw DataError("series: level mismatch");
    }
    auto time = f.time;
    if (!fields_.emplace(time, std::move(f)).second) {
        throw DataError("series: duplicate time " + std::to_string(time));
    }
}

const Field& FieldSeries::at(std::int64_t time) const {
    auto it = fields_.find(time);
    if (it == fields_.end()) {
        throw DataError("series: missing time " + std::to_string(time));
    }
    return it->second;
}

std::vector<std::int64_t> FieldSeries::times() const {
    std::vector<std::int64_t> t;
    t.reserve(fields_.size());
    for (const auto& kv : fields_) t.push_back(kv.first);
    return t;
}

const GridSpec& FieldSeries::grid() const {
    if (fields_.empty()) throw DataError("series: empty");
    return fields_.begin()->second.grid;
}

VariableId FieldSeries::var() const {
    if (fields_.empty()) throw DataError("series: empty");
    return fields_.begin()->second.var;
}

const std::string& FieldSeries::level() const {
    if (fields_.empty()) throw DataError("series: empty");
    return fields_.begin()->second.level;
}

bool BoxSpec::contains(double lat, double lon) const {
    if (lat < lat_min || lat > lat_max) return false;
    if (lon_min <= lon_max) return lon >= lon_min && lon <= lon_max;
    return lon >= lon_min || lon <= lon_max;  // wraps through 0
}

double latitude_weighted_mean(const Field& f) {
    const auto& w = f.grid.lat_weights();
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < f.grid.nlat(); ++i) {
        for (std::size_t j = 0; j < f.grid.nlon(); ++j) {
            if (f.valid(i, j)) {
                num += w[i] * f.at(i, j);
                den += w[i];
            }
        }
    }
    if (den == 0.0) throw DataError("empty field");
    return num / den;
}

double latitude_weighted_box_mean(const Field& f, const BoxSpec& box) {
    const auto& w = f.grid.lat_weights();
    const auto& lats = f.grid.lats();
    const auto& lons = f.grid.lons();
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < f.grid.nlat(); ++i) {
        for (std::size_t j = 0; j < f.grid.nlon(); ++j) {
            if (f.valid(i, j) && box.contains(lats[i], lons[j])) {
                num += w[i] * f.at(i, j);
                den += w[i];
            }
        }
    }
    if (den == 0.0) throw DataError("empty field");
    return num / den;
}

namespace {

/// Bracketing index and weight along an ascending coordinate axis.
struct AxisPos {
    std::size_t lo;
    std::size_t hi;
    double t;  ///< weight of hi
};

AxisPos locate(const std::vector<double>& ascending, double x) {
    auto it = std::lower_bound(ascending.begin(), ascending.end(), x);
    if (it == ascending.begin()) return {0, 0, 0.0};
    if (it == ascending.end()) return {ascending.size() - 1, ascending.size() - 1, 0.0};
    std::size_t hi = static_cast<std::size_t>(it - ascending.begin());
    std::size_t lo = hi - 1;
    double t = (x - ascending[lo]) / (ascending[hi] - ascending[lo]);
    return {lo, hi, t};
}

}  // namespace

Field regrid(const Field& f, const GridSpec& target) {
    if (!f.all_valid()) throw DataError("regrid: source has masked points");

    const auto& src_lats = f.grid.lats();
    const auto& src_lons = f.grid.lons();
    const std::size_t nlat = f.grid.nlat();
    const std::size_t nlon = f.grid.nlon();

    // Work in ascending order regardless of the stored direction.
    std::vector<std::size_t> lat_order(nlat);
    for (std::size_t i = 0; i < nlat; ++i) lat_order[i] = i;
    if (src_lats.front() > src_lats.back()) std::reverse(lat_order.begin(), lat_order.end());
    std::vector<double> asc_lats(nlat);
    for (std::size_t i = 0; i < nlat; ++i) asc_lats[i] = src_lats[lat_order[i]];

    std::vector<std::size_t> lon_order(nlon);
    for (std::size_t j = 0; j < nlon; ++j) lon_order[j] = j;
    if (src_lons.front() > src_lons.back()) std::reverse(lon_order.begin(), lon_order.end());
    std::vector<double> asc_lons(nlon);
    for (std::size_t j = 0; j < nlon; ++j) asc_lons[j] = src_lons[lon_order[j]];

    double lat_lo = asc_lats.front(), lat_hi = asc_lats.back();
    for (double lat : target.lats()) {
        if (lat < lat_lo || lat > lat_hi) throw DataError("extrapolation");
    }

    Field out(target, f.var, f.time);
    out.level = f.level;
    const double span = 360.0;
    for (std::size_t ti = 0; ti < target.nlat(); ++ti) {
        AxisPos pl = locate(asc_lats, target.lats()[ti]);
        for (std::size_t tj = 0; tj < target.nlon(); ++tj) {
            double lon = target.lons()[tj];
            // Periodic bracket: wrap segment covers [last, first + 360).
            std::size_t jlo, jhi;
            double tl;
            if (lon < asc_lons.front() || lon >= asc_lons.back()) {
                jlo = nlon - 1;
                jhi = 0;
                double seg = asc_lons.front() + span - asc_lons.back();
                double off = lon >= asc_lons.back() ? lon - asc_lons.back()
                                                    : lon + span - asc_lons.back();
                tl = off / seg;
            } else {
                AxisPos pj = locate(asc_lons, lon);
                jlo = pj.lo;
                jhi = pj.hi;
                tl = pj.t;
            }
            auto v = [&](std::size_t ai, std::size_t aj) {
                return f.at(lat_order[ai], lon_order[aj]);
            };
            double v00 = v(pl.lo, jlo), v01 = v(pl.lo, jhi);
            double v10 = v(pl.hi, jlo), v11 = v(pl.hi, jhi);
            double lo = v00 * (1.0 - tl) + v01 * tl;
            double hi = v10 * (1.0 - tl) + v11 * tl;
            out.at(ti, tj) = lo * (1.0 - pl.t) + hi * pl.t;
        }
    }
    return out;
}

}  // namespace ccast
