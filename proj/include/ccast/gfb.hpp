#pragma once

#include <string>

#include "ccast/grid.hpp"

namespace ccast {

enum class GfbErrorCode {
    BadMagic,
    Truncated,
    DimensionMismatch,
    BadHeader,
    IoFailure,
};

class GfbError : public DataError {
public:
    GfbError(GfbErrorCode code, const std::string& msg)
        : DataError(msg), code_(code) {}
    GfbErrorCode code() const { return code_; }

private:
    GfbErrorCode code_;
};

/// Binary gridded-series container, magic "GFB1". Write/read round-trips are
/// bit-exact on the value payload.
void write_gfb(const std::string& path, const FieldSeries& series);
FieldSeries read_gfb(const std::string& path);

}  // namespace ccast
