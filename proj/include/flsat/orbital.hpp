// Two-body circular orbits, Earth-fixed ground points and line-of-sight
// geometry on a spherical Earth.
#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace flsat::orbital {

inline constexpr double kEarthRadiusKm = 6371.0;
inline constexpr double kMuKm3PerS2 = 398600.4418;
inline constexpr double kEarthRotationRadPerS = 7.2921159e-5;
inline constexpr double kPi = std::numbers::pi;

inline constexpr double deg2rad(double deg) { return deg * kPi / 180.0; }
inline constexpr double rad2deg(double rad) { return rad * 180.0 / kPi; }

/// Wraps an angle into [0, 360).
inline double normalize_deg(double deg) {
  double r = std::fmod(deg, 360.0);
  if (r < 0.0) r += 360.0;
  if (r >= 360.0) r = 0.0;
  return r;
}

struct EciPosition {
  double x_km = 0.0;
  double y_km = 0.0;
  double z_km = 0.0;

  double norm() const { return std::sqrt(x_km * x_km + y_km * y_km + z_km * z_km); }
  double dot(const EciPosition& o) const {
    return x_km * o.x_km + y_km * o.y_km + z_km * o.z_km;
  }
  EciPosition operator-(const EciPosition& o) const {
    return {x_km - o.x_km, y_km - o.y_km, z_km - o.z_km};
  }
  EciPosition operator+(const EciPosition& o) const {
    return {x_km + o.x_km, y_km + o.y_km, z_km + o.z_km};
  }
  EciPosition operator*(double s) const { return {x_km * s, y_km * s, z_km * s}; }
};

/// Circular Keplerian orbit. Eccentricity is fixed at zero, so the epoch
/// phase is the argument of latitude measured from the ascending node.
struct OrbitState {
  double semi_major_axis_km = kEarthRadiusKm + 500.0;
  double inclination_deg = 90.0;
  double raan_deg = 0.0;
  double true_anomaly_epoch_deg = 0.0;
  double eccentricity = 0.0;

  void validate() const {
    if (eccentricity != 0.0)
      throw std::invalid_argument("orbit eccentricity must be 0");
    if (!(semi_major_axis_km > kEarthRadiusKm))
      throw std::invalid_argument("semi-major axis must exceed the Earth radius");
  }
};

struct GeodeticPoint {
  double latitude_deg = 0.0;
  double longitude_deg = 0.0;
  double altitude_km = 0.0;

  void validate() const {
    if (!(latitude_deg >= -90.0 && latitude_deg <= 90.0))
      throw std::invalid_argument("latitude out of range [-90, 90]");
    if (!(longitude_deg >= -180.0 && longitude_deg <= 180.0))
      throw std::invalid_argument("longitude out of range [-180, 180]");
  }
};

/// A named ground station with its own elevation mask.
struct GroundStation {
  std::string name;
  GeodeticPoint location;
  double min_elevation_deg = 10.0;
};

inline double period_for_radius(double semi_major_axis_km) {
  return 2.0 * kPi * std::sqrt(semi_major_axis_km * semi_major_axis_km *
                               semi_major_axis_km / kMuKm3PerS2);
}

/// Orbital period in seconds for a circular orbit at the given altitude.
inline double orbital_period(double altitude_km) {
  if (!(altitude_km > 0.0))
    throw std::invalid_argument("altitude_km must be positive");
  return period_for_radius(kEarthRadiusKm + altitude_km);
}

/// Analytic circular propagation. The argument of latitude advances
/// uniformly; the in-plane position is rotated by inclination, then RAAN.
inline EciPosition propagate(const OrbitState& orbit, double t_s) {
  const double a = orbit.semi_major_axis_km;
  const double n = 2.0 * kPi / period_for_radius(a);
  const double u = deg2rad(orbit.true_anomaly_epoch_deg) + n * t_s;
  const double cu = std::cos(u), su = std::sin(u);
  const double ci = std::cos(deg2rad(orbit.inclination_deg));
  const double si = std::sin(deg2rad(orbit.inclination_deg));
  const double co = std::cos(deg2rad(orbit.raan_deg));
  const double so = std::sin(deg2rad(orbit.raan_deg));
  return {a * (co * cu - so * ci * su), a * (so * cu + co * ci * su), a * (si * su)};
}

/// Spherical-Earth position of a ground point at time t. Inertial and
/// Earth-fixed frames coincide at t = 0.
inline EciPosition ground_position(const GeodeticPoint& gs, double t_s) {
  const double r = kEarthRadiusKm + gs.altitude_km;
  const double lat = deg2rad(gs.latitude_deg);
  const double lon = deg2rad(gs.longitude_deg) + kEarthRotationRadPerS * t_s;
  return {r * std::cos(lat) * std::cos(lon), r * std::cos(lat) * std::sin(lon),
          r * std::sin(lat)};
}

/// Elevation of `sat` above the local horizon at `gs`, in degrees.
inline double elevation_deg(const EciPosition& sat, const EciPosition& gs) {
  const double gs_norm = gs.norm();
  if (!(gs_norm > 0.0)) throw std::invalid_argument("ground position must be non-zero");
  const EciPosition rel = sat - gs;
  const double rel_norm = rel.norm();
  if (rel_norm == 0.0) throw std::invalid_argument("coincident points have no elevation");
  double s = rel.dot(gs) / (rel_norm * gs_norm);
  s = std::fmax(-1.0, std::fmin(1.0, s));
  return rad2deg(std::asin(s));
}

/// True iff the segment p1-p2 stays at least `grazing_radius_km` from the
/// Earth centre.
inline bool line_of_sight(const EciPosition& p1, const EciPosition& p2,
                          double grazing_radius_km) {
  // Canonical endpoint order keeps the result bitwise symmetric.
  auto before = [](const EciPosition& a, const EciPosition& b) {
    if (a.x_km != b.x_km) return a.x_km < b.x_km;
    if (a.y_km != b.y_km) return a.y_km < b.y_km;
    return a.z_km < b.z_km;
  };
  const EciPosition& a = before(p2, p1) ? p2 : p1;
  const EciPosition& b = before(p2, p1) ? p1 : p2;

  const EciPosition d = b - a;
  const double dd = d.dot(d);
  double closest_sq = a.dot(a);
  if (dd > 0.0) {
    const double s = -a.dot(d) / dd;
    if (s >= 1.0) {
      closest_sq = b.dot(b);
    } else if (s > 0.0) {
      const EciPosition c = a + d * s;
      closest_sq = c.dot(c);
    }
  }
  return closest_sq >= grazing_radius_km * grazing_radius_km;
}

/// Walker-star layout: `num_clusters` planes with RAANs spread over 180 deg,
/// each with `sats_per_cluster` equally phased satellites.
struct ConstellationSpec {
  std::size_t num_clusters = 0;
  std::size_t sats_per_cluster = 0;
  double altitude_km = 500.0;
  double inclination_deg = 90.0;
  std::vector<OrbitState> satellites;
  std::vector<std::size_t> cluster_of;

  std::size_t size() const { return satellites.size(); }
  double semi_major_axis_km() const { return kEarthRadiusKm + altitude_km; }
  double period_s() const { return orbital_period(altitude_km); }
  /// Satellite id of slot `slot` in cluster `cluster`.
  std::size_t sat_id(std::size_t cluster, std::size_t slot) const {
    return cluster * sats_per_cluster + slot;
  }
};

inline ConstellationSpec build_walker_star(std::size_t num_clusters,
                                           std::size_t sats_per_cluster,
                                           double altitude_km,
                                           double inclination_deg = 90.0) {
  if (num_clusters == 0) throw std::invalid_argument("num_clusters must be >= 1");
  if (sats_per_cluster == 0) throw std::invalid_argument("sats_per_cluster must be >= 1");
  if (!(altitude_km > 0.0)) throw std::invalid_argument("altitude_km must be positive");

  ConstellationSpec spec;
  spec.num_clusters = num_clusters;
  spec.sats_per_cluster = sats_per_cluster;
  spec.altitude_km = altitude_km;
  spec.inclination_deg = inclination_deg;
  spec.satellites.reserve(num_clusters * sats_per_cluster);
  for (std::size_t c = 0; c < num_clusters; ++c) {
    const double raan = static_cast<double>(c) * 180.0 / static_cast<double>(num_clusters);
    for (std::size_t j = 0; j < sats_per_cluster; ++j) {
      OrbitState o;
      o.semi_major_axis_km = kEarthRadiusKm + altitude_km;
      o.inclination_deg = inclination_deg;
      o.raan_deg = normalize_deg(raan);
      o.true_anomaly_epoch_deg =
          normalize_deg(static_cast<double>(j) * 360.0 / static_cast<double>(sats_per_cluster));
      spec.satellites.push_back(o);
      spec.cluster_of.push_back(c);
    }
  }
  return spec;
}

/// Relative angle between two orbit planes, from their unit normals.
inline double plane_angle_deg(const OrbitState& a, const OrbitState& b) {
  auto normal = [](const OrbitState& o) {
    const double i = deg2rad(o.inclination_deg), w = deg2rad(o.raan_deg);
    return EciPosition{std::sin(i) * std::sin(w), -std::sin(i) * std::cos(w), std::cos(i)};
  };
  double c = normal(a).dot(normal(b));
  c = std::fmax(-1.0, std::fmin(1.0, c));
  return rad2deg(std::acos(c));
}

}  // namespace flsat::orbital
