#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ccast/model.hpp"
#include "ccast/toytruth.hpp"
#include "ccast/train.hpp"

namespace ccast {

/// Line-oriented `key = value` configuration under bracketed sections.
/// Unknown sections or keys are rejected; serialize(parse(text)) is a fixed
/// point (canonical ordering, every key present).
struct RunConfig {
    // [grid]
    std::size_t nlat = 8;
    std::size_t nlon = 32;

    // [toy]
    ToyConfig toy;
    int years = 6;
    int inits_per_year = 10;
    int horizon = 60;

    // [model]
    CsmConfig model;

    // [train]
    TrainConfig train;
    int train_years_end = 3;  ///< trajectories from years 1..train_years_end

    // [verify]
    int verify_weeks = 8;
    int window_first_day = 15;  ///< the weeks 3-6 window
    int window_last_day = 42;
    bool detrend = false;

    static RunConfig defaults();
    static RunConfig parse_file(const std::string& path);
    static RunConfig parse_text(const std::string& text);
    std::string serialize() const;

    /// Propagate shared grid/variable settings into the sub-configs.
    void finalize();
};

}  // namespace ccast
