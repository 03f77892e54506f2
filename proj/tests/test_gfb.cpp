#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "ccast/gfb.hpp"
#include "ccast/rng.hpp"

using namespace ccast;
namespace fs = std::filesystem;

namespace {

std::string tmp_path(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / "ccast_gfb_test";
    fs::create_directories(dir);
    return (dir / name).string();
}

std::string slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

FieldSeries random_series(std::size_t nlat, std::size_t nlon, std::size_t ntime,
                          std::uint64_t seed, VariableId var = VariableId::SSH) {
    Rng rng(seed);
    GridSpec grid = GridSpec::uniform(nlat, nlon);
    FieldSeries s;
    for (std::size_t t = 0; t < ntime; ++t) {
        Field f(grid, var, static_cast<std::int64_t>(t) + 1);
        for (std::size_t k = 0; k < f.values.size(); ++k) {
            f.values[k] = rng.normal();
            f.mask[k] = rng.uniform() < 0.9 ? 1 : 0;
        }
        s.insert(std::move(f));
    }
    return s;
}

}  // namespace

TEST_CASE("round-trip is bit-exact and rewrite is byte-identical") {
    FieldSeries s = random_series(2, 3, 1, 11);
    std::string p1 = tmp_path("a.gfb"), p2 = tmp_path("b.gfb");
    write_gfb(p1, s);
    FieldSeries r = read_gfb(p1);
    write_gfb(p2, r);
    CHECK(slurp(p1) == slurp(p2));

    REQUIRE(r.size() == s.size());
    for (std::int64_t t : s.times()) {
        const Field& a = s.at(t);
        const Field& b = r.at(t);
        CHECK(a.grid == b.grid);
        CHECK(a.var == b.var);
        for (std::size_t k = 0; k < a.values.size(); ++k) {
            CHECK(a.values[k] == b.values[k]);  // exact payload bits
            CHECK(a.mask[k] == b.mask[k]);
        }
    }
}

TEST_CASE("round-trip across sizes and masks") {
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
        FieldSeries s = random_series(4 + seed, 9, 5, seed, VariableId::SIC);
        std::string p = tmp_path("case.gfb");
        write_gfb(p, s);
        FieldSeries r = read_gfb(p);
        for (std::int64_t t : s.times()) {
            const Field& a = s.at(t);
            const Field& b = r.at(t);
            for (std::size_t k = 0; k < a.values.size(); ++k) {
                CHECK(a.values[k] == b.values[k]);
                CHECK(a.mask[k] == b.mask[k]);
            }
        }
    }
}

TEST_CASE("bad magic is rejected with its own code") {
    std::string p = tmp_path("magic.gfb");
    write_gfb(p, random_series(2, 3, 1, 5));
    std::string bytes = slurp(p);
    bytes[3] = '0';  // GFB1 -> GFB0
    std::ofstream(p, std::ios::binary).write(bytes.data(), bytes.size());
    try {
        read_gfb(p);
        FAIL("expected GfbError");
    } catch (const GfbError& e) {
        CHECK(e.code() == GfbErrorCode::BadMagic);
    }
}

TEST_CASE("truncated payload is rejected with its own code") {
    std::string p = tmp_path("trunc.gfb");
    write_gfb(p, random_series(4, 6, 3, 9));
    std::string bytes = slurp(p);
    bytes.resize(bytes.size() / 2);
    std::ofstream(p, std::ios::binary | std::ios::trunc).write(bytes.data(), bytes.size());
    try {
        read_gfb(p);
        FAIL("expected GfbError");
    } catch (const GfbError& e) {
        CHECK(e.code() == GfbErrorCode::Truncated);
    }
}

TEST_CASE("dimension mismatch is rejected with its own code") {
    // Header claims nlat=1, which no grid accepts.
    std::ostringstream hdr;
    hdr << "var=SSH\nsphere=ocean\nlevel=none\nnlat=1\nnlon=2\nntime=1\ntime0=0\n";
    std::string header = hdr.str();
    std::string bytes = "GFB1";
    std::uint32_t h = static_cast<std::uint32_t>(header.size());
    bytes.append(reinterpret_cast<const char*>(&h), 4);
    bytes += header;
    double lat = 0.0;
    bytes.append(reinterpret_cast<const char*>(&lat), 8);
    std::string p = tmp_path("dims.gfb");
    std::ofstream(p, std::ios::binary).write(bytes.data(), bytes.size());
    try {
        read_gfb(p);
        FAIL("expected GfbError");
    } catch (const GfbError& e) {
        CHECK(e.code() == GfbErrorCode::DimensionMismatch);
    }
}

TEST_CASE("header sphere must match the variable registry") {
    std::string p = tmp_path("sphere.gfb");
    write_gfb(p, random_series(2, 3, 1, 5, VariableId::SSH));
    std::string bytes = slurp(p);
    auto pos = bytes.find("sphere=ocean");
    bytes.replace(pos, 12, "sphere=land\n");  // same length, wrong sphere
    std::ofstream(p, std::ios::binary | std::ios::trunc).write(bytes.data(), bytes.size());
    CHECK_THROWS_AS(read_gfb(p), GfbError);
}
