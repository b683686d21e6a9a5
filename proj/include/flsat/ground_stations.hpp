// Ground-station network: built-in default network and the plain-text
// station file format (name,lat_deg,lon_deg,min_elevation_deg).
#pragma once

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "flsat/orbital.hpp"

namespace flsat {

inline constexpr double kDefaultElevationMaskDeg = 10.0;

/// Thirteen stations modelled on the Landsat International Ground Station
/// network, in the order used for count-prefix subsetting.
inline std::vector<orbital::GroundStation> default_ground_stations() {
  struct Row {
    const char* name;
    double lat, lon;
  };
  static constexpr Row rows[] = {
      {"Sioux Falls", 43.54, -96.73},   {"Sanya", 18.25, 109.51},
      {"Johannesburg", -26.20, 28.05},  {"Cordoba", -31.42, -64.18},
      {"Tromso", 69.65, 18.96},         {"Kashi", 39.47, 75.99},
      {"Beijing", 39.90, 116.41},       {"Neustrelitz", 53.36, 13.07},
      {"Parepare", -4.01, 119.62},      {"Alice Springs", -23.70, 133.88},
      {"Fairbanks", 64.84, -147.72},    {"Prince Albert", 53.20, -105.75},
      {"Shadnagar", 17.07, 78.20},
  };
  std::vector<orbital::GroundStation> out;
  for (const auto& r : rows)
    out.push_back({r.name, {r.lat, r.lon, 0.0}, kDefaultElevationMaskDeg});
  return out;
}

namespace detail {
inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline double parse_double(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("cannot parse " + what + " from '" + s + "'");
  }
}
}  // namespace detail

/// Parses a station file. Blank lines and lines starting with '#' are
/// skipped; a header row whose second cell is not numeric is skipped.
/// The mask column is optional and defaults to 10 deg.
inline std::vector<orbital::GroundStation> parse_ground_stations(std::istream& in) {
  std::vector<orbital::GroundStation> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto cells = detail::split_csv_line(t);
    if (out.empty() && cells.size() >= 2 && cells[1] == "lat_deg") continue;
    if (cells.size() < 3 || cells.size() > 4)
      throw std::invalid_argument("station file line " + std::to_string(line_no) +
                                  ": expected name,lat_deg,lon_deg[,min_elevation_deg]");
    orbital::GroundStation gs;
    gs.name = cells[0];
    gs.location.latitude_deg = detail::parse_double(cells[1], "lat_deg");
    gs.location.longitude_deg = detail::parse_double(cells[2], "lon_deg");
    gs.min_elevation_deg =
        cells.size() == 4 ? detail::parse_double(cells[3], "min_elevation_deg")
                          : kDefaultElevationMaskDeg;
    gs.location.validate();
    if (!(gs.min_elevation_deg >= -90.0 && gs.min_elevation_deg <= 90.0))
      throw std::invalid_argument("station '" + gs.name + "': mask out of range");
    out.push_back(std::move(gs));
  }
  return out;
}

inline std::vector<orbital::GroundStation> load_ground_stations(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open ground-station file: " + path);
  return parse_ground_stations(in);
}

inline void write_ground_stations(std::ostream& out,
                                  const std::vector<orbital::GroundStation>& stations) {
  out << "name,lat_deg,lon_deg,min_elevation_deg\n";
  for (const auto& gs : stations)
    out << gs.name << ',' << gs.location.latitude_deg << ',' << gs.location.longitude_deg
        << ',' << gs.min_elevation_deg << '\n';
}

}  // namespace flsat
