#include "upwell/grid.hpp"

#include <algorithm>
#include <cmath>

#include "upwell/errors.hpp"
#include "upwell/rng.hpp"

namespace upwell {

namespace {
constexpr double kDegToRad = 0.017453292519943295769236907684886;
}

GeoGrid GeoGrid::create(double lat_min, double lat_max, double lon_min, double lon_max,
                        std::size_t n_lat, std::size_t n_lon,
                        std::vector<std::uint8_t> land_mask) {
    if (n_lat == 0 || n_lon == 0) throw DataError("grid dimensions must be positive");
    if (!(lat_min < lat_max) || !(lon_min < lon_max)) {
        throw DataError("grid bounds must satisfy min < max");
    }
    if (lat_min < -90.0 || lat_max > 90.0) {
        throw DataError("latitudes must lie in [-90, 90]");
    }
    if (land_mask.empty()) {
        land_mask.assign(n_lat * n_lon, 0);
    } else if (land_mask.size() != n_lat * n_lon) {
        throw ShapeError("land mask has " + std::to_string(land_mask.size()) +
                         " cells, expected " + std::to_string(n_lat * n_lon));
    }
    GeoGrid g;
    g.lat_min = lat_min;
    g.lat_max = lat_max;
    g.lon_min = lon_min;
    g.lon_max = lon_max;
    g.n_lat = n_lat;
    g.n_lon = n_lon;
    g.land_mask = std::move(land_mask);
    return g;
}

double GeoGrid::lat_of(std::size_t i) const {
    if (n_lat == 1) return lat_min;
    return lat_min + (lat_max - lat_min) * static_cast<double>(i) /
                         static_cast<double>(n_lat - 1);
}

double GeoGrid::lon_of(std::size_t j) const {
    if (n_lon == 1) return lon_min;
    return lon_min + (lon_max - lon_min) * static_cast<double>(j) /
                         static_cast<double>(n_lon - 1);
}

std::size_t GeoGrid::sea_count() const {
    std::size_t n = 0;
    for (auto m : land_mask) n += (m == 0);
    return n;
}

bool GeoGrid::same_raster(const GeoGrid& other) const {
    return n_lat == other.n_lat && n_lon == other.n_lon && lat_min == other.lat_min &&
           lat_max == other.lat_max && lon_min == other.lon_min && lon_max == other.lon_max;
}

LatWeights latitude_weights(const GeoGrid& grid) {
    LatWeights w;
    w.n_lat = grid.n_lat;
    w.n_lon = grid.n_lon;
    w.raw.resize(grid.n_lat);
    for (std::size_t i = 0; i < grid.n_lat; ++i) {
        w.raw[i] = std::cos(grid.lat_of(i) * kDegToRad);
    }
    double mean_w = 0.0;
    for (double r : w.raw) mean_w += r;
    mean_w /= static_cast<double>(grid.n_lat);

    w.normalized.resize(grid.cells());
    for (std::size_t i = 0; i < grid.n_lat; ++i) {
        const double nw = w.raw[i] / mean_w;
        for (std::size_t j = 0; j < grid.n_lon; ++j) w.normalized[i * grid.n_lon + j] = nw;
    }

    w.n_sea = grid.sea_count();
    if (w.n_sea == 0) throw DataError("grid has no sea cells; effective weights undefined");
    double sea_sum = 0.0;
    for (std::size_t c = 0; c < grid.cells(); ++c) {
        if (grid.land_mask[c] == 0) sea_sum += w.normalized[c];
    }
    const double sea_mean = sea_sum / static_cast<double>(w.n_sea);
    w.effective.resize(grid.cells());
    for (std::size_t c = 0; c < grid.cells(); ++c) {
        w.effective[c] = grid.land_mask[c] ? 0.0 : w.normalized[c] / sea_mean;
    }
    return w;
}

std::string unit_name(Unit u) {
    switch (u) {
        case Unit::Celsius: return "celsius";
        case Unit::Kelvin: return "kelvin";
        case Unit::Normalized: return "normalized";
    }
    return "unknown";
}

Unit unit_from_name(const std::string& name) {
    if (name == "celsius") return Unit::Celsius;
    if (name == "kelvin") return Unit::Kelvin;
    if (name == "normalized") return Unit::Normalized;
    throw DataError("unknown unit '" + name + "'");
}

FieldSeries FieldSeries::create(std::string variable, Unit unit, std::vector<Date> times,
                                std::vector<double> data, GeoGrid grid) {
    if (times.empty()) throw DataError("field series needs at least one time step");
    for (std::size_t t = 1; t < times.size(); ++t) {
        if (times[t].days != times[t - 1].days + 1) {
            throw DataError("field series dates must be consecutive days; gap after " +
                            format_date(times[t - 1]));
        }
    }
    if (data.size() != times.size() * grid.cells()) {
        throw ShapeError("field series data length " + std::to_string(data.size()) +
                         " does not match " + std::to_string(times.size()) + " x " +
                         std::to_string(grid.n_lat) + " x " + std::to_string(grid.n_lon));
    }
    FieldSeries s;
    s.variable = std::move(variable);
    s.unit = unit;
    s.times = std::move(times);
    s.data = std::move(data);
    s.grid = std::move(grid);
    return s;
}

FieldSeries celsius_to_kelvin(const FieldSeries& series) {
    if (series.unit != Unit::Celsius) {
        throw DataError("celsius_to_kelvin expects celsius input, got " + unit_name(series.unit));
    }
    FieldSeries out = series;
    out.unit = Unit::Kelvin;
    for (double& v : out.data) v += 273.15;  // NaN markers pass through
    return out;
}

FieldSeries kelvin_to_celsius(const FieldSeries& series) {
    if (series.unit != Unit::Kelvin) {
        throw DataError("kelvin_to_celsius expects kelvin input, got " + unit_name(series.unit));
    }
    FieldSeries out = series;
    out.unit = Unit::Celsius;
    for (double& v : out.data) v -= 273.15;
    return out;
}

FieldSeries fill_missing_with_mean(const FieldSeries& series) {
    FieldSeries out = series;
    const GeoGrid& g = out.grid;
    for (std::size_t t = 0; t < out.steps(); ++t) {
        double* s = out.slice_mut(t);
        double sum = 0.0;
        std::size_t known = 0;
        for (std::size_t c = 0; c < g.cells(); ++c) {
            if (g.land_mask[c] == 0 && !std::isnan(s[c])) {
                sum += s[c];
                ++known;
            }
        }
        if (known == 0) {
            throw DataError("time slice " + format_date(out.times[t]) +
                            " has no known sea values to average");
        }
        const double fill = sum / static_cast<double>(known);
        for (std::size_t c = 0; c < g.cells(); ++c) {
            if (g.land_mask[c] != 0 || std::isnan(s[c])) s[c] = fill;
        }
    }
    return out;
}

NormStats fit_norm_stats(const FieldSeries& series, const SplitSpec& split) {
    if (series.unit != Unit::Kelvin) {
        throw DataError("norm stats are fitted on kelvin data, got " + unit_name(series.unit));
    }
    if (series.times.front() > split.train_start || series.times.back() < Date{split.train_end.days - 1}) {
        throw DataError("series does not cover the training range");
    }
    const GeoGrid& g = series.grid;
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t t = 0; t < series.steps(); ++t) {
        const Date d = series.times[t];
        if (d < split.train_start || d >= split.train_end) continue;
        const double* s = series.slice(t);
        for (std::size_t c = 0; c < g.cells(); ++c) {
            if (g.land_mask[c] == 0 && !std::isnan(s[c])) {
                sum += s[c];
                ++n;
            }
        }
    }
    if (n == 0) throw DataError("no sea values inside the training range");
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t t = 0; t < series.steps(); ++t) {
        const Date d = series.times[t];
        if (d < split.train_start || d >= split.train_end) continue;
        const double* s = series.slice(t);
        for (std::size_t c = 0; c < g.cells(); ++c) {
            if (g.land_mask[c] == 0 && !std::isnan(s[c])) {
                const double dd = s[c] - mean;
                ss += dd * dd;
            }
        }
    }
    const double std_dev = std::sqrt(ss / static_cast<double>(n));  // population convention
    if (!(std_dev > 0.0)) {
        throw NumericError("training field is constant; cannot standardize");
    }
    return NormStats{mean, std_dev, "train"};
}

FieldSeries normalize(const FieldSeries& series, const NormStats& stats) {
    if (series.unit != Unit::Kelvin) {
        throw DataError("normalize expects kelvin input, got " + unit_name(series.unit));
    }
    FieldSeries out = series;
    out.unit = Unit::Normalized;
    const double inv = 1.0 / stats.std;
    for (double& v : out.data) v = (v - stats.mean) * inv;
    return out;
}

FieldSeries denormalize(const FieldSeries& series, const NormStats& stats) {
    if (series.unit != Unit::Normalized) {
        throw DataError("denormalize expects normalized input, got " + unit_name(series.unit));
    }
    FieldSeries out = series;
    out.unit = Unit::Kelvin;
    for (double& v : out.data) v = v * stats.std + stats.mean;
    return out;
}

FieldSeries bilinear_regrid(const FieldSeries& series, const GeoGrid& target) {
    const GeoGrid& src = series.grid;
    if (target.lat_min < src.lat_min || target.lat_max > src.lat_max ||
        target.lon_min < src.lon_min || target.lon_max > src.lon_max) {
        throw DataError("regrid target bounds fall outside the source domain");
    }
    GeoGrid tgt = target;
    const double lat_step = src.n_lat > 1 ? (src.lat_max - src.lat_min) / double(src.n_lat - 1) : 1.0;
    const double lon_step = src.n_lon > 1 ? (src.lon_max - src.lon_min) / double(src.n_lon - 1) : 1.0;

    // Target land mask: nearest source cell.
    tgt.land_mask.assign(tgt.cells(), 0);
    for (std::size_t i = 0; i < tgt.n_lat; ++i) {
        const std::size_t si = static_cast<std::size_t>(std::lround(
            std::clamp((tgt.lat_of(i) - src.lat_min) / lat_step, 0.0, double(src.n_lat - 1))));
        for (std::size_t j = 0; j < tgt.n_lon; ++j) {
            const std::size_t sj = static_cast<std::size_t>(std::lround(
                std::clamp((tgt.lon_of(j) - src.lon_min) / lon_step, 0.0, double(src.n_lon - 1))));
            tgt.land_mask[i * tgt.n_lon + j] = src.land_mask[si * src.n_lon + sj];
        }
    }

    std::vector<double> out(series.steps() * tgt.cells());
    for (std::size_t t = 0; t < series.steps(); ++t) {
        const double* s = series.slice(t);
        double* o = out.data() + t * tgt.cells();
        for (std::size_t i = 0; i < tgt.n_lat; ++i) {
            const double fi = std::clamp((tgt.lat_of(i) - src.lat_min) / lat_step, 0.0,
                                         double(src.n_lat - 1));
            const std::size_t i0 = std::min(static_cast<std::size_t>(fi), src.n_lat - 1);
            const std::size_t i1 = std::min(i0 + 1, src.n_lat - 1);
            const double wi = fi - static_cast<double>(i0);
            for (std::size_t j = 0; j < tgt.n_lon; ++j) {
                const double fj = std::clamp((tgt.lon_of(j) - src.lon_min) / lon_step, 0.0,
                                             double(src.n_lon - 1));
                const std::size_t j0 = std::min(static_cast<std::size_t>(fj), src.n_lon - 1);
                const std::size_t j1 = std::min(j0 + 1, src.n_lon - 1);
                const double wj = fj - static_cast<double>(j0);
                const double v00 = s[i0 * src.n_lon + j0];
                const double v01 = s[i0 * src.n_lon + j1];
                const double v10 = s[i1 * src.n_lon + j0];
                const double v11 = s[i1 * src.n_lon + j1];
                o[i * tgt.n_lon + j] = (1.0 - wi) * ((1.0 - wj) * v00 + wj * v01) +
                                       wi * ((1.0 - wj) * v10 + wj * v11);
            }
        }
    }
    return FieldSeries::create(series.variable, series.unit, series.times, std::move(out),
                               std::move(tgt));
}

SplitSpec SplitSpec::create(Date train_start, Date train_end, Date val_start, Date val_end,
                            Date test_start, Date test_end) {
    SplitSpec s{train_start, train_end, val_start, val_end, test_start, test_end};
    if (!(s.train_start < s.train_end && s.val_start < s.val_end && s.test_start < s.test_end)) {
        throw ConfigError("each split range must be non-empty");
    }
    if (s.train_end > s.val_start || s.val_end > s.test_start) {
        throw ConfigError("split ranges must be ordered train <= val <= test without overlap");
    }
    return s;
}

SplitSpec SplitSpec::default_split() {
    return create(make_date(2014, 1, 1), make_date(2018, 11, 26),   // train
                  make_date(2018, 11, 26), make_date(2019, 12, 14),  // val
                  make_date(2019, 12, 14), make_date(2021, 1, 2));   // test, end inclusive
}

SplitSpec SplitSpec::by_fraction(const std::vector<Date>& times, double train_frac,
                                 double val_frac) {
    if (times.size() < 3) throw ConfigError("need at least 3 time steps to split");
    if (!(train_frac > 0.0 && val_frac > 0.0 && train_frac + val_frac < 1.0)) {
        throw ConfigError("split fractions must be positive and sum below 1");
    }
    const auto T = static_cast<double>(times.size());
    std::size_t n_train = static_cast<std::size_t>(std::lround(T * train_frac));
    std::size_t n_val = static_cast<std::size_t>(std::lround(T * val_frac));
    n_train = std::clamp<std::size_t>(n_train, 1, times.size() - 2);
    n_val = std::clamp<std::size_t>(n_val, 1, times.size() - n_train - 1);
    const Date t0 = times.front();
    return create(t0, t0.plus(static_cast<std::int64_t>(n_train)),
                  t0.plus(static_cast<std::int64_t>(n_train)),
                  t0.plus(static_cast<std::int64_t>(n_train + n_val)),
                  t0.plus(static_cast<std::int64_t>(n_train + n_val)),
                  times.back().next());
}

namespace {

FieldSeries extract_range(const FieldSeries& series, Date start, Date end,
                          const char* which) {
    if (series.times.front() > start || series.times.back().next() < end) {
        throw DataError(std::string("series does not cover the ") + which + " range " +
                        format_date(start) + ".." + format_date(Date{end.days - 1}));
    }
    const std::size_t first = static_cast<std::size_t>(start.days - series.times.front().days);
    const std::size_t count = static_cast<std::size_t>(end.days - start.days);
    std::vector<Date> times(series.times.begin() + first, series.times.begin() + first + count);
    std::vector<double> data(series.data.begin() + first * series.grid.cells(),
                             series.data.begin() + (first + count) * series.grid.cells());
    return FieldSeries::create(series.variable, series.unit, std::move(times), std::move(data),
                               series.grid);
}

}  // namespace

SplitResult temporal_split(const FieldSeries& series, const SplitSpec& split) {
    SplitResult r{extract_range(series, split.train_start, split.train_end, "train"),
                  extract_range(series, split.val_start, split.val_end, "validation"),
                  extract_range(series, split.test_start, split.test_end, "test")};
    return r;
}

std::vector<SampleWindow> sliding_windows(const FieldSeries& series, std::size_t horizon) {
    if (horizon < 1) throw DataError("window horizon must be >= 1");
    const std::size_t need = 2 + horizon;
    if (series.steps() < need) {
        throw DataError("series of " + std::to_string(series.steps()) +
                        " steps is too short for windows of length " + std::to_string(need));
    }
    const std::size_t count = series.steps() - need + 1;
    std::vector<SampleWindow> out;
    out.reserve(count);
    for (std::size_t s = 0; s < count; ++s) {
        out.push_back(SampleWindow{s, horizon, series.times[s + 1], false});
    }
    return out;
}

std::vector<Batch> make_batches(const std::vector<SampleWindow>& windows, std::size_t batch_size,
                                std::uint64_t seed) {
    if (windows.empty()) throw DataError("cannot batch an empty window sequence");
    if (batch_size < 1) throw DataError("batch size must be >= 1");
    std::vector<SampleWindow> shuffled = windows;
    Rng rng(seed);
    rng.shuffle(shuffled);

    const std::size_t n_batches = (shuffled.size() + batch_size - 1) / batch_size;
    std::vector<Batch> out(n_batches);
    for (std::size_t b = 0; b < n_batches; ++b) {
        Batch& batch = out[b];
        batch.reserve(batch_size);
        for (std::size_t k = 0; k < batch_size; ++k) {
            const std::size_t idx = b * batch_size + k;
            if (idx < shuffled.size()) {
                batch.push_back(shuffled[idx]);
            } else {
                // pad by cycling from the start of the shuffled sequence
                SampleWindow pad = shuffled[(idx - shuffled.size()) % shuffled.size()];
                pad.padded = true;
                batch.push_back(pad);
            }
        }
    }
    return out;
}

}  // namespace upwell
