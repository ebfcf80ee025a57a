#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "upwell/dates.hpp"

namespace upwell {

// Regular cell-centered latitude/longitude raster with inclusive endpoint
// registration: lat_of(0) = lat_min, lat_of(n_lat-1) = lat_max.
struct GeoGrid {
    double lat_min = 0.0, lat_max = 0.0;
    double lon_min = 0.0, lon_max = 0.0;
    std::size_t n_lat = 0, n_lon = 0;
    std::vector<std::uint8_t> land_mask;  // row-major (n_lat, n_lon), 1 = land

    static GeoGrid create(double lat_min, double lat_max, double lon_min, double lon_max,
                          std::size_t n_lat, std::size_t n_lon,
                          std::vector<std::uint8_t> land_mask);

    std::size_t cells() const { return n_lat * n_lon; }
    double lat_of(std::size_t i) const;
    double lon_of(std::size_t j) const;
    bool is_land(std::size_t i, std::size_t j) const { return land_mask[i * n_lon + j] != 0; }
    std::size_t sea_count() const;

    bool same_raster(const GeoGrid& other) const;
};

// cos(latitude) metric weights in three flavors (see latitude_weights).
struct LatWeights {
    std::vector<double> raw;         // per row, cos(phi_i)
    std::vector<double> normalized;  // per cell, raw / mean(raw), mean over cells = 1
    std::vector<double> effective;   // per cell, land zeroed, renormalized to sea-mean 1
    std::size_t n_lat = 0, n_lon = 0;
    std::size_t n_sea = 0;
};

LatWeights latitude_weights(const GeoGrid& grid);

enum class Unit : std::uint8_t { Celsius = 0, Kelvin = 1, Normalized = 2 };

std::string unit_name(Unit u);
Unit unit_from_name(const std::string& name);

// Daily time-stacked 2-d field for one variable. Missing values are quiet
// NaN. Dates are consecutive days.
struct FieldSeries {
    std::string variable;
    Unit unit = Unit::Celsius;
    std::vector<Date> times;
    std::vector<double> data;  // (T, n_lat, n_lon) row-major
    GeoGrid grid;

    static FieldSeries create(std::string variable, Unit unit, std::vector<Date> times,
                              std::vector<double> data, GeoGrid grid);

    std::size_t steps() const { return times.size(); }
    double at(std::size_t t, std::size_t i, std::size_t j) const {
        return data[(t * grid.n_lat + i) * grid.n_lon + j];
    }
    const double* slice(std::size_t t) const { return data.data() + t * grid.cells(); }
    double* slice_mut(std::size_t t) { return data.data() + t * grid.cells(); }
};

struct NormStats {
    double mean = 0.0;
    double std = 1.0;  // population convention, strictly positive
    std::string fitted_on = "train";
};

// Half-open [start, end) calendar ranges; construction from the published
// inclusive end dates adds one day to each.
struct SplitSpec {
    Date train_start, train_end;
    Date val_start, val_end;
    Date test_start, test_end;

    static SplitSpec create(Date train_start, Date train_end, Date val_start, Date val_end,
                            Date test_start, Date test_end);
    // Default study-period split: train 2014-01-01..2018-11-25, validation
    // 2018-11-26..2019-12-13, test 2019-12-14..2021-01-01 (ends inclusive).
    static SplitSpec default_split();
    // Contiguous fractional split of an observed date range.
    static SplitSpec by_fraction(const std::vector<Date>& times, double train_frac,
                                 double val_frac);
};

struct SplitResult {
    FieldSeries train, val, test;
};

// One training sample: indices into the source series. inputs are
// (t_minus_1, t), targets are the `horizon` following steps.
struct SampleWindow {
    std::size_t start = 0;    // index of X^{t-1} in the source series
    std::size_t horizon = 1;  // number of target steps
    Date input_date;          // date of X^t
    bool padded = false;      // batch-padding duplicate; excluded from metrics
};

using Batch = std::vector<SampleWindow>;

FieldSeries celsius_to_kelvin(const FieldSeries& series);
FieldSeries kelvin_to_celsius(const FieldSeries& series);

// Replaces every missing sea value by the per-slice mean of the known sea
// values and sets land cells to that same mean, so downstream tensors are
// fully finite. Rejects a slice with no known sea value.
FieldSeries fill_missing_with_mean(const FieldSeries& series);

NormStats fit_norm_stats(const FieldSeries& series, const SplitSpec& split);
FieldSeries normalize(const FieldSeries& series, const NormStats& stats);
FieldSeries denormalize(const FieldSeries& series, const NormStats& stats);

FieldSeries bilinear_regrid(const FieldSeries& series, const GeoGrid& target);

SplitResult temporal_split(const FieldSeries& series, const SplitSpec& split);

std::vector<SampleWindow> sliding_windows(const FieldSeries& series, std::size_t horizon);

std::vector<Batch> make_batches(const std::vector<SampleWindow>& windows,
                                std::size_t batch_size, std::uint64_t seed);

}  // namespace upwell
