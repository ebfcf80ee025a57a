#pragma once

#include <string>

#include "upwell/grid.hpp"

namespace upwell {

// GridPack binary container, little-endian, bit-exact:
//   8 bytes   magic "GRIDPAK1"
//   3 x u64   n_time, n_lat, n_lon
//   4 x f64   lat_min, lat_max, lon_min, lon_max
//   u8        unit code (0 celsius, 1 kelvin, 2 normalized)
//   u32       variable-name byte length, then that many UTF-8 bytes
//   payload   land_mask as n_lat*n_lon bytes (1 = land),
//             times as n_time x i64 days since 1970-01-01,
//             data as n_time*n_lat*n_lon f32, time-major then lat-major.
// Missing values are stored as quiet NaN.

void write_gridpack(const FieldSeries& series, const std::string& path);

FieldSeries read_gridpack(const std::string& path);

// Assembles a series from a directory holding `manifest.txt` (key=value
// lines: variable, unit, lat_min, lat_max, lon_min, lon_max, mask_file)
// plus one `YYYY-MM-DD.csv` raster per day. Empty CSV cells are missing.
FieldSeries import_csv_grid(const std::string& dir);

}  // namespace upwell
