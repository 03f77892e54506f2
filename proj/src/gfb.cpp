#include "ccast/gfb.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

static_assert(std::endian::native == std::endian::little,
              "GFB serialization assumes a little-endian host");

namespace ccast {

namespace {

constexpr char k_magic[4] = {'G', 'F', 'B', '1'};

void put_bytes(std::string& buf, const void* p, std::size_t n) {
    buf.append(static_cast<const char*>(p), n);
}

template <typename T>
void put_scalar(std::string& buf, T v) {
    put_bytes(buf, &v, sizeof(T));
}

class Reader {
public:
    Reader(std::string data) : data_(std::move(data)) {}

    void read(void* out, std::size_t n) {
        if (pos_ + n > data_.size()) {
            throw GfbError(GfbErrorCode::Truncated,
                           "truncated: need " + std::to_string(n) + " bytes at offset " +
                               std::to_string(pos_));
        }
        std::memcpy(out, data_.data() + pos_, n);
        pos_ += n;
    }

    template <typename T>
    T scalar() {
        T v;
        read(&v, sizeof(T));
        return v;
    }

    std::string bytes(std::size_t n) {
        std::string s(n, '\0');
        read(s.data(), n);
        return s;
    }

private:
    std::string data_;
    std::size_t pos_ = 0;
};

std::map<std::string, std::string> parse_header(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw GfbError(GfbErrorCode::BadHeader, "header line without '=': " + line);
        }
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return kv;
}

const std::string& require_key(const std::map<std::string, std::string>& kv,
                               const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end()) {
        throw GfbError(GfbErrorCode::BadHeader, "missing header key '" + key + "'");
    }
    return it->second;
}

std::size_t parse_count(const std::string& s, const std::string& key) {
    try {
        long long v = std::stoll(s);
        if (v < 0) throw std::out_of_range("negative");
        return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
        throw GfbError(GfbErrorCode::BadHeader, "bad value for '" + key + "': " + s);
    }
}

}  // namespace

void write_gfb(const std::string& path, const FieldSeries& series) {
    if (series.empty()) throw DataError("write_gfb: empty series");
    const GridSpec& grid = series.grid();
    const std::size_t nlat = grid.nlat();
    const std::size_t nlon = grid.nlon();
    const std::size_t ntime = series.size();
    const auto times = series.times();

    std::ostringstream hdr;
    hdr << "var=" << var_name(series.var()) << "\n"
        << "sphere=" << sphere_name(var_sphere(series.var())) << "\n"
        << "level=" << (series.level().empty() ? "none" : series.level()) << "\n"
        << "nlat=" << nlat << "\n"
        << "nlon=" << nlon << "\n"
        << "ntime=" << ntime << "\n"
        << "time0=" << times.front() << "\n";
    const std::string header = hdr.str();

    std::string buf;
    put_bytes(buf, k_magic, 4);
    put_scalar<std::uint32_t>(buf, static_cast<std::uint32_t>(header.size()));
    put_bytes(buf, header.data(), header.size());
    for (double lat : grid.lats()) put_scalar(buf, lat);
    for (double lon : grid.lons()) put_scalar(buf, lon);
    for (std::int64_t t : times) put_scalar(buf, t);

    const std::size_t total = ntime * nlat * nlon;
    std::vector<std::uint8_t> mask_bits((total + 7) / 8, 0);
    std::size_t flat = 0;
    for (std::int64_t t : times) {
        const Field& f = series.at(t);
        for (std::size_t k = 0; k < f.values.size(); ++k, ++flat) {
            put_scalar(buf, f.values[k]);
            if (f.mask[k]) mask_bits[flat >> 3] |= static_cast<std::uint8_t>(1u << (flat & 7));
        }
    }
    put_bytes(buf, mask_bits.data(), mask_bits.size());

    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw GfbError(GfbErrorCode::IoFailure, "cannot open for write: " + path);
    os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!os) throw GfbError(GfbErrorCode::IoFailure, "write failed: " + path);
}

FieldSeries read_gfb(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw GfbError(GfbErrorCode::IoFailure, "cannot open: " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    Reader rd(ss.str());

    char magic[4];
    rd.read(magic, 4);
    if (std::memcmp(magic, k_magic, 4) != 0) {
        throw GfbError(GfbErrorCode::BadMagic, "bad magic in " + path);
    }
    auto header_len = rd.scalar<std::uint32_t>();
    auto kv = parse_header(rd.bytes(header_len));

    const VariableId var = var_from_name(require_key(kv, "var"));
    const Sphere sphere = sphere_from_name(require_key(kv, "sphere"));
    if (sphere != var_sphere(var)) {
        throw GfbError(GfbErrorCode::BadHeader,
                       "sphere does not match variable in " + path);
    }
    std::string level = require_key(kv, "level");
    if (level == "none") level.clear();
    const std::size_t nlat = parse_count(require_key(kv, "nlat"), "nlat");
    const std::size_t nlon = parse_count(require_key(kv, "nlon"), "nlon");
    const std::size_t ntime = parse_count(require_key(kv, "ntime"), "ntime");
    if (nlat < 2 || nlon < 2 || ntime == 0) {
        throw GfbError(GfbErrorCode::DimensionMismatch,
                       "bad dimensions " + std::to_string(nlat) + "x" + std::to_string(nlon) +
                           "x" + std::to_string(ntime) + " in " + path);
    }

    std::vector<double> lats(nlat), lons(nlon);
    rd.read(lats.data(), nlat * sizeof(double));
    rd.read(lons.data(), nlon * sizeof(double));
    std::vector<std::int64_t> times(ntime);
    rd.read(times.data(), ntime * sizeof(std::int64_t));

    GridSpec grid;
    try {
        grid = GridSpec(std::move(lats), std::move(lons));
    } catch (const DataError& e) {
        throw GfbError(GfbErrorCode::DimensionMismatch, std::string(e.what()) + " in " + path);
    }

    const std::int64_t time0 = std::stoll(require_key(kv, "time0"));
    if (times.front() != time0) {
        throw GfbError(GfbErrorCode::BadHeader, "time0 does not match time axis in " + path);
    }

    const std::size_t total = ntime * nlat * nlon;
    std::vector<double> values(total);
    rd.read(values.data(), total * sizeof(double));
    std::vector<std::uint8_t> mask_bits((total + 7) / 8);
    rd.read(mask_bits.data(), mask_bits.size());

    FieldSeries series;
    std::size_t flat = 0;
    for (std::size_t ti = 0; ti < ntime; ++ti) {
        Field f(grid, var, times[ti]);
        f.level = level;
        for (std::size_t k = 0; k < f.values.size(); ++k, ++flat) {
            f.values[k] = values[flat];
            f.mask[k] = (mask_bits[flat >> 3] >> (flat & 7)) & 1u;
        }
        series.insert(std::move(f));
    }
    return series;
}

}  // namespace ccast
