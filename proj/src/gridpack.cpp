#include "upwell/gridpack.hpp"

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "upwell/errors.hpp"

namespace upwell {

namespace {

constexpr char kMagic[8] = {'G', 'R', 'I', 'D', 'P', 'A', 'K', '1'};

// Explicit little-endian serialization keeps files portable regardless of
// host byte order.
template <typename T>
void put_le(std::string& out, T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    if constexpr (sizeof(T) > 1) {
        unsigned test = 1;
        if (*reinterpret_cast<unsigned char*>(&test) == 0) {
            std::reverse(bytes, bytes + sizeof(T));
        }
    }
    out.append(reinterpret_cast<const char*>(bytes), sizeof(T));
}

class Reader {
public:
    Reader(const std::string& bytes, const std::string& path) : bytes_(bytes), path_(path) {}

    template <typename T>
    T get_le() {
        if (pos_ + sizeof(T) > bytes_.size()) {
            throw DataError("truncated gridpack file: " + path_);
        }
        unsigned char raw[sizeof(T)];
        std::memcpy(raw, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        if constexpr (sizeof(T) > 1) {
            unsigned test = 1;
            if (*reinterpret_cast<unsigned char*>(&test) == 0) {
                std::reverse(raw, raw + sizeof(T));
            }
        }
        T value;
        std::memcpy(&value, raw, sizeof(T));
        return value;
    }

    std::string get_bytes(std::size_t n) {
        if (pos_ + n > bytes_.size()) {
            throw DataError("truncated gridpack file: " + path_);
        }
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    const std::string& bytes_;
    const std::string& path_;
    std::size_t pos_ = 0;
};

}  // namespace

void write_gridpack(const FieldSeries& series, const std::string& path) {
    const GeoGrid& g = series.grid;
    std::string out;
    out.reserve(64 + series.variable.size() + g.cells() + series.steps() * 8 +
                series.data.size() * 4);
    out.append(kMagic, sizeof(kMagic));
    put_le<std::uint64_t>(out, series.steps());
    put_le<std::uint64_t>(out, g.n_lat);
    put_le<std::uint64_t>(out, g.n_lon);
    put_le<double>(out, g.lat_min);
    put_le<double>(out, g.lat_max);
    put_le<double>(out, g.lon_min);
    put_le<double>(out, g.lon_max);
    put_le<std::uint8_t>(out, static_cast<std::uint8_t>(series.unit));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(series.variable.size()));
    out.append(series.variable);
    out.append(reinterpret_cast<const char*>(g.land_mask.data()), g.land_mask.size());
    for (Date d : series.times) put_le<std::int64_t>(out, d.days);
    for (double v : series.data) put_le<float>(out, static_cast<float>(v));

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot open for writing: " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw DataError("write failed: " + path);
}

FieldSeries read_gridpack(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open gridpack file: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    const std::string bytes = ss.str();

    Reader r(bytes, path);
    const std::string magic = r.get_bytes(sizeof(kMagic));
    if (std::memcmp(magic.data(), kMagic, sizeof(kMagic)) != 0) {
        throw DataError("bad magic in gridpack file: " + path);
    }
    const auto n_time = r.get_le<std::uint64_t>();
    const auto n_lat = r.get_le<std::uint64_t>();
    const auto n_lon = r.get_le<std::uint64_t>();
    if (n_time == 0 || n_lat == 0 || n_lon == 0) {
        throw DataError("gridpack header has zero dimension: " + path);
    }
    // 1 GiB payload guard before allocating anything
    const std::uint64_t cells = n_lat * n_lon;
    const std::uint64_t payload = cells + n_time * 8 + n_time * cells * 4;
    if (payload > (1ull << 30) || payload + 45 + 8 != 0) {
        if (r.remaining() < 45) throw DataError("truncated gridpack file: " + path);
    }
    const double lat_min = r.get_le<double>();
    const double lat_max = r.get_le<double>();
    const double lon_min = r.get_le<double>();
    const double lon_max = r.get_le<double>();
    const auto unit_code = r.get_le<std::uint8_t>();
    if (unit_code > 2) throw DataError("unknown unit code in gridpack file: " + path);
    const auto name_len = r.get_le<std::uint32_t>();
    if (name_len > 4096) throw DataError("unreasonable variable-name length: " + path);
    const std::string variable = r.get_bytes(name_len);

    const std::string mask_bytes = r.get_bytes(cells);
    std::vector<std::uint8_t> mask(mask_bytes.begin(), mask_bytes.end());
    for (auto m : mask) {
        if (m > 1) throw DataError("gridpack land mask holds non-boolean byte: " + path);
    }

    std::vector<Date> times(n_time);
    for (std::uint64_t t = 0; t < n_time; ++t) {
        times[t] = Date{r.get_le<std::int64_t>()};
        if (t > 0 && times[t].days <= times[t - 1].days) {
            throw DataError("gridpack times are not strictly increasing: " + path);
        }
    }

    std::vector<double> data(n_time * cells);
    for (auto& v : data) v = static_cast<double>(r.get_le<float>());
    if (r.remaining() != 0) {
        throw DataError("gridpack file has trailing bytes: " + path);
    }

    GeoGrid grid = GeoGrid::create(lat_min, lat_max, lon_min, lon_max, n_lat, n_lon,
                                   std::move(mask));
    return FieldSeries::create(variable, static_cast<Unit>(unit_code), std::move(times),
                               std::move(data), std::move(grid));
}

namespace {

std::vector<std::vector<double>> read_csv_raster(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot open CSV raster: " + path);
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(f, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() && f.eof()) break;
        std::vector<double> row;
        std::size_t begin = 0;
        while (begin <= line.size()) {
            std::size_t end = line.find(',', begin);
            if (end == std::string::npos) end = line.size();
            std::string cell = line.substr(begin, end - begin);
            // trim blanks
            while (!cell.empty() && (cell.front() == ' ' || cell.front() == '\t')) cell.erase(0, 1);
            while (!cell.empty() && (cell.back() == ' ' || cell.back() == '\t')) cell.pop_back();
            if (cell.empty()) {
                row.push_back(std::numeric_limits<double>::quiet_NaN());
            } else {
                try {
                    row.push_back(std::stod(cell));
                } catch (const std::exception&) {
                    throw DataError("non-numeric cell '" + cell + "' in " + path);
                }
            }
            if (end == line.size()) break;
            begin = end + 1;
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw DataError("empty CSV raster: " + path);
    for (const auto& row : rows) {
        if (row.size() != rows[0].size()) {
            throw DataError("ragged CSV raster: " + path);
        }
    }
    return rows;
}

}  // namespace

FieldSeries import_csv_grid(const std::string& dir) {
    namespace fs = std::filesystem;
    const fs::path manifest_path = fs::path(dir) / "manifest.txt";
    std::ifstream mf(manifest_path);
    if (!mf) throw DataError("manifest missing: " + manifest_path.string());

    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(mf, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw DataError("manifest line without '=': " + line);
        }
        auto trim = [](std::string s) {
            while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.erase(0, 1);
            while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.pop_back();
            return s;
        };
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    for (const char* key : {"variable", "unit", "lat_min", "lat_max", "lon_min", "lon_max"}) {
        if (!kv.count(key)) throw DataError("manifest missing key '" + std::string(key) + "'");
    }

    std::map<std::int64_t, fs::path> by_date;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        if (name.size() != 14 || name.substr(10) != ".csv") continue;
        Date d;
        try {
            d = parse_date(name.substr(0, 10));
        } catch (const DataError&) {
            continue;
        }
        if (by_date.count(d.days)) {
            throw DataError("duplicate date " + format_date(d) + " in " + dir);
        }
        by_date[d.days] = entry.path();
    }
    if (by_date.empty()) throw DataError("no YYYY-MM-DD.csv rasters found in " + dir);

    std::vector<Date> times;
    std::vector<double> data;
    std::size_t n_lat = 0, n_lon = 0;
    std::string first_file;
    for (const auto& [days, path] : by_date) {
        const auto rows = read_csv_raster(path.string());
        if (n_lat == 0) {
            n_lat = rows.size();
            n_lon = rows[0].size();
            first_file = path.filename().string();
        } else if (rows.size() != n_lat || rows[0].size() != n_lon) {
            throw DataError("raster shape of " + path.filename().string() + " (" +
                            std::to_string(rows.size()) + "x" + std::to_string(rows[0].size()) +
                            ") differs from " + first_file + " (" + std::to_string(n_lat) + "x" +
                            std::to_string(n_lon) + ")");
        }
        times.push_back(Date{days});
        for (const auto& row : rows) data.insert(data.end(), row.begin(), row.end());
    }

    std::vector<std::uint8_t> mask;
    if (kv.count("mask_file")) {
        const auto rows = read_csv_raster((fs::path(dir) / kv["mask_file"]).string());
        if (rows.size() != n_lat || rows[0].size() != n_lon) {
            throw DataError("mask raster shape differs from data rasters in " + dir);
        }
        for (const auto& row : rows) {
            for (double v : row) mask.push_back(v != 0.0 ? 1 : 0);
        }
    }

    GeoGrid grid = GeoGrid::create(std::stod(kv["lat_min"]), std::stod(kv["lat_max"]),
                                   std::stod(kv["lon_min"]), std::stod(kv["lon_max"]), n_lat,
                                   n_lon, std::move(mask));
    return FieldSeries::create(kv["variable"], unit_from_name(kv["unit"]), std::move(times),
                               std::move(data), std::move(grid));
}

}  // namespace upwell
