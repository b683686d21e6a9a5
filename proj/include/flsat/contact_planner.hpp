// Access-window computation and the contact schedulers: fastest
// contact-and-return selection, ring-relay-aware selection and the
// cross-cluster connection planner.
#pragma once

#include <algorithm>
#include <climits>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "flsat/orbital.hpp"

namespace flsat::planner {

enum class LinkKind { SatGs, IntraSl, InterSl };

inline const char* to_string(LinkKind k) {
  switch (k) {
    case LinkKind::SatGs: return "sat-gs";
    case LinkKind::IntraSl: return "intra-sl";
    case LinkKind::InterSl: return "inter-sl";
  }
  return "?";
}

/// Interval during which endpoint `a` (always a satellite) can talk to
/// endpoint `b` (a station id for sat-gs, a satellite id otherwise).
struct ContactWindow {
  LinkKind kind = LinkKind::SatGs;
  std::size_t a = 0;
  std::size_t b = 0;
  double start_s = 0.0;
  double end_s = 0.0;

  double duration() const { return end_s - start_s; }
  bool operator==(const ContactWindow&) const = default;
};

/// Raised when a scheduler cannot satisfy its request inside the horizon
/// covered by the windows it was given.
class SchedulingHorizonExhausted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ScanOptions {
  double step_s = 10.0;
  double edge_tolerance_s = 0.1;
};

struct IslOptions {
  double grazing_margin_km = 100.0;
  ScanOptions scan{};
};

namespace detail {

inline void sort_windows(std::vector<ContactWindow>& w) {
  std::sort(w.begin(), w.end(), [](const ContactWindow& x, const ContactWindow& y) {
    if (x.start_s != y.start_s) return x.start_s < y.start_s;
    if (x.a != y.a) return x.a < y.a;
    if (x.kind != y.kind) return x.kind < y.kind;
    return x.b < y.b;
  });
}

/// Bisects between a sample outside and one inside the window and returns
/// the inside bound once the bracket is below `tol`.
template <class Visible>
double refine_edge(double out_t, double in_t, double tol, Visible& vis) {
  while (std::fabs(in_t - out_t) > tol) {
    const double mid = 0.5 * (out_t + in_t);
    if (vis(mid))
      in_t = mid;
    else
      out_t = mid;
  }
  return in_t;
}

/// Coarse grid scan over [t0, t1] plus edge bisection. `safe_gap(t)` returns
/// a duration after `t` over which the predicate is provably false; grid
/// points inside it are skipped without changing the result.
template <class Visible, class SafeGap, class Emit>
void scan_windows(double t0, double t1, const ScanOptions& opt, Visible vis,
                  SafeGap safe_gap, Emit emit) {
  const double step = opt.step_s;
  double t = t0;
  long long k = 0;
  bool in = vis(t0);
  double start = t0;
  while (t < t1) {
    long long jump = 1;
    if (!in) {
      const double gap = safe_gap(t);
      if (gap > step) jump = std::max<long long>(1, static_cast<long long>(gap / step));
    }
    long long next_k = k + jump;
    double tn = t0 + static_cast<double>(next_k) * step;
    double prev_out = t0 + static_cast<double>(next_k - 1) * step;
    if (tn >= t1) {
      if (!in && t1 - t < safe_gap(t)) break;
      tn = t1;
      prev_out = std::max(t, std::min(prev_out, t1));
    }
    const bool v = vis(tn);
    if (!in && v) {
      start = refine_edge(prev_out, tn, opt.edge_tolerance_s, vis);
    } else if (in && !v) {
      const double end = refine_edge(tn, t, opt.edge_tolerance_s, vis);
      if (end > start) emit(start, end);
    }
    in = v;
    t = tn;
    k = next_k;
  }
  if (in && t1 > start) emit(start, t1);
}

}  // namespace detail

/// Ground-station access windows for every (satellite, station) pair over
/// [t0, t1]: maximal intervals with elevation at or above the station mask.
/// Sorted by (start, satellite, station).
inline std::vector<ContactWindow> compute_access_windows(
    const orbital::ConstellationSpec& constellation,
    std::span<const orbital::GroundStation> stations, double t0, double t1,
    const ScanOptions& opt = {}) {
  if (!(t0 < t1)) throw std::invalid_argument("compute_access_windows requires t0 < t1");
  std::vector<ContactWindow> out;
  for (std::size_t s = 0; s < constellation.size(); ++s) {
    const auto& orbit = constellation.satellites[s];
    const double r = orbit.semi_major_axis_km;
    const double n = 2.0 * orbital::kPi / orbital::period_for_radius(r);
    // Upper bound on how fast the sat/station central angle can change.
    const double rate = (n + orbital::kEarthRotationRadPerS) * 1.001;
    for (std::size_t g = 0; g < stations.size(); ++g) {
      const auto& gs = stations[g];
      const double mask = gs.min_elevation_deg;
      const double rg = orbital::kEarthRadiusKm + gs.location.altitude_km;
      const double m = orbital::deg2rad(mask);
      const double cos_arg = std::clamp(rg / r * std::cos(m), -1.0, 1.0);
      const double max_angle = std::acos(cos_arg) - m;

      auto visible = [&](double t) {
        const auto sp = orbital::propagate(orbit, t);
        const auto gp = orbital::ground_position(gs.location, t);
        return orbital::elevation_deg(sp, gp) >= mask;
      };
      auto safe_gap = [&](double t) {
        const auto sp = orbital::propagate(orbit, t);
        const auto gp = orbital::ground_position(gs.location, t);
        const double c = std::clamp(sp.dot(gp) / (sp.norm() * gp.norm()), -1.0, 1.0);
        const double excess = std::acos(c) - max_angle - 1e-9;
        return excess > 0.0 ? excess / rate : 0.0;
      };
      detail::scan_windows(t0, t1, opt, visible, safe_gap, [&](double a, double b) {
        out.push_back({LinkKind::SatGs, s, g, a, b});
      });
    }
  }
  detail::sort_windows(out);
  return out;
}

/// Cross-cluster line-of-sight windows over one orbital period. Every
/// satellite shares the same period, so relative geometry (and therefore
/// every inter-plane window) repeats exactly; windows for any interval are
/// produced by tiling.
class InterSlPattern {
 public:
  InterSlPattern(const orbital::ConstellationSpec& constellation, double t0,
                 const IslOptions& opt = {})
      : t0_(t0), period_(constellation.period_s()) {
    const double grazing = orbital::kEarthRadiusKm + opt.grazing_margin_km;
    const double step = opt.scan.step_s;
    const double t1 = t0 + period_;
    const std::size_t n = constellation.size();
    const auto steps = static_cast<std::size_t>(std::floor(period_ / step));
    std::vector<double> times;
    for (std::size_t k = 0; k <= steps; ++k) times.push_back(t0 + static_cast<double>(k) * step);
    if (times.back() < t1) times.push_back(t1);

    std::vector<std::vector<orbital::EciPosition>> pos(n);
    for (std::size_t s = 0; s < n; ++s)
      for (double t : times) pos[s].push_back(orbital::propagate(constellation.satellites[s], t));

    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = a + 1; b < n; ++b) {
        if (constellation.cluster_of[a] == constellation.cluster_of[b]) continue;
        const auto& oa = constellation.satellites[a];
        const auto& ob = constellation.satellites[b];
        auto vis = [&](double t) {
          return orbital::line_of_sight(orbital::propagate(oa, t), orbital::propagate(ob, t),
                                        grazing);
        };
        bool in = orbital::line_of_sight(pos[a][0], pos[b][0], grazing);
        double start = times[0];
        for (std::size_t k = 1; k < times.size(); ++k) {
          const bool v = orbital::line_of_sight(pos[a][k], pos[b][k], grazing);
          if (!in && v) {
            start = detail::refine_edge(times[k - 1], times[k], opt.scan.edge_tolerance_s, vis);
          } else if (in && !v) {
            const double end =
                detail::refine_edge(times[k], times[k - 1], opt.scan.edge_tolerance_s, vis);
            if (end > start) pattern_.push_back({LinkKind::InterSl, a, b, start, end});
          }
          in = v;
        }
        if (in) pattern_.push_back({LinkKind::InterSl, a, b, start, t1});
      }
    }
  }

  double period() const { return period_; }
  double epoch() const { return t0_; }
  const std::vector<ContactWindow>& pattern() const { return pattern_; }

  /// Inter-sl windows clipped to [from, to], sorted by (start, a, b).
  std::vector<ContactWindow> windows(double from, double to) const {
    std::vector<ContactWindow> out;
    if (!(from < to)) return out;
    const auto k_lo = static_cast<long long>(std::floor((from - t0_) / period_)) - 1;
    const auto k_hi = static_cast<long long>(std::floor((to - t0_) / period_));
    constexpr double kJoin = 1e-6;
    // Pattern windows are grouped by pair already (scan order).
    std::size_t i = 0;
    while (i < pattern_.size()) {
      std::size_t j = i;
      while (j < pattern_.size() && pattern_[j].a == pattern_[i].a && pattern_[j].b == pattern_[i].b)
        ++j;
      std::vector<ContactWindow> tiled;
      for (long long k = k_lo; k <= k_hi; ++k) {
        const double shift = static_cast<double>(k) * period_;
        for (std::size_t q = i; q < j; ++q) {
          ContactWindow w = pattern_[q];
          w.start_s += shift;
          w.end_s += shift;
          if (!tiled.empty() && std::fabs(tiled.back().end_s - w.start_s) < kJoin)
            tiled.back().end_s = w.end_s;
          else
            tiled.push_back(w);
        }
      }
      for (auto w : tiled) {
        w.start_s = std::max(w.start_s, from);
        w.end_s = std::min(w.end_s, to);
        if (w.end_s > w.start_s) out.push_back(w);
      }
      i = j;
    }
    detail::sort_windows(out);
    return out;
  }

 private:
  double t0_;
  double period_;
  std::vector<ContactWindow> pattern_;
};

/// Intra-plane windows between ring neighbours. Satellites sharing a plane
/// and altitude keep a constant chord, so each neighbour pair either has
/// one window spanning [t0, t1] or none.
inline std::vector<ContactWindow> compute_intra_sl_windows(
    const orbital::ConstellationSpec& constellation, double t0, double t1,
    const IslOptions& opt = {}) {
  if (!(t0 < t1)) throw std::invalid_argument("compute_intra_sl_windows requires t0 < t1");
  const double grazing = orbital::kEarthRadiusKm + opt.grazing_margin_km;
  std::vector<ContactWindow> out;
  const std::size_t n = constellation.sats_per_cluster;
  if (n < 2) return out;
  for (std::size_t c = 0; c < constellation.num_clusters; ++c) {
    const std::size_t pairs = n == 2 ? 1 : n;
    for (std::size_t j = 0; j < pairs; ++j) {
      std::size_t a = constellation.sat_id(c, j);
      std::size_t b = constellation.sat_id(c, (j + 1) % n);
      if (a > b) std::swap(a, b);
      const auto pa = orbital::propagate(constellation.satellites[a], t0);
      const auto pb = orbital::propagate(constellation.satellites[b], t0);
      if (orbital::line_of_sight(pa, pb, grazing))
        out.push_back({LinkKind::IntraSl, a, b, t0, t1});
    }
  }
  detail::sort_windows(out);
  return out;
}

/// Intra-sl windows for ring neighbours plus inter-sl windows for every
/// cross-cluster pair over [t0, t1].
inline std::vector<ContactWindow> compute_isl_windows(
    const orbital::ConstellationSpec& constellation, double t0, double t1,
    const IslOptions& opt = {}) {
  auto out = compute_intra_sl_windows(constellation, t0, t1, opt);
  if (constellation.num_clusters > 1) {
    auto inter = InterSlPattern(constellation, t0, opt).windows(t0, t1);
    out.insert(out.end(), inter.begin(), inter.end());
  }
  detail::sort_windows(out);
  return out;
}

inline void write_windows_csv(std::ostream& out, std::span<const ContactWindow> windows) {
  out << "kind,a,b,start_s,end_s\n";
  char buf[96];
  for (const auto& w : windows) {
    std::snprintf(buf, sizeof buf, "%s,%zu,%zu,%.3f,%.3f\n", to_string(w.kind), w.a, w.b,
                  w.start_s, w.end_s);
    out << buf;
  }
}

// ---------------------------------------------------------------------------
// Contact index: per-satellite station windows grouped into contact periods.

struct StationWindow {
  std::size_t station = 0;
  double start_s = 0.0;
  double end_s = 0.0;
  std::size_t period = 0;
};

/// Union of overlapping station windows of one satellite; "contacting a
/// ground station again" means reaching a later period.
struct ContactPeriod {
  double start_s = 0.0;
  double end_s = 0.0;
};

struct Transfer {
  std::size_t station = 0;
  double start_s = 0.0;
  double end_s = 0.0;
  std::size_t period = 0;
};

class ContactIndex {
 public:
  ContactIndex() = default;

  /// Builds the index from sat-gs windows; other kinds are ignored.
  /// `num_satellites` of 0 infers the count from the windows.
  explicit ContactIndex(std::span<const ContactWindow> windows, std::size_t num_satellites = 0) {
    std::size_t n = num_satellites;
    for (const auto& w : windows)
      if (w.kind == LinkKind::SatGs) n = std::max(n, w.a + 1);
    windows_.resize(n);
    periods_.resize(n);
    max_len_.assign(n, 0.0);
    for (const auto& w : windows) {
      if (w.kind != LinkKind::SatGs) continue;
      if (w.a >= n) throw std::invalid_argument("window satellite id beyond num_satellites");
      windows_[w.a].push_back({w.b, w.start_s, w.end_s, 0});
    }
    for (std::size_t s = 0; s < n; ++s) {
      auto& ws = windows_[s];
      std::sort(ws.begin(), ws.end(), [](const StationWindow& x, const StationWindow& y) {
        if (x.start_s != y.start_s) return x.start_s < y.start_s;
        return x.station < y.station;
      });
      for (auto& w : ws) {
        if (periods_[s].empty() || w.start_s > periods_[s].back().end_s) {
          periods_[s].push_back({w.start_s, w.end_s});
        } else {
          periods_[s].back().end_s = std::max(periods_[s].back().end_s, w.end_s);
        }
        w.period = periods_[s].size() - 1;
        max_len_[s] = std::max(max_len_[s], w.end_s - w.start_s);
      }
    }
  }

  std::size_t num_satellites() const { return windows_.size(); }
  const std::vector<StationWindow>& windows_of(std::size_t sat) const { return windows_.at(sat); }
  const std::vector<ContactPeriod>& periods_of(std::size_t sat) const { return periods_.at(sat); }

  /// Earliest-completing transfer of `duration` seconds that starts no
  /// earlier than `ready` and fits inside one station window belonging to
  /// contact period `min_period` or later. Ties go to the lower station id.
  std::optional<Transfer> earliest_transfer(std::size_t sat, double ready, double duration,
                                            std::size_t min_period = 0) const {
    if (sat >= windows_.size()) return std::nullopt;
    const auto& ws = windows_[sat];
    const double lo = ready - max_len_[sat];
    auto it = std::lower_bound(ws.begin(), ws.end(), lo, [](const StationWindow& w, double v) {
      return w.start_s < v;
    });
    std::optional<Transfer> best;
    for (; it != ws.end(); ++it) {
      if (best && it->start_s > best->start_s) break;
      if (it->period < min_period) continue;
      const double s = std::max(it->start_s, ready);
      if (s + duration > it->end_s) continue;
      if (!best || s < best->start_s || (s == best->start_s && it->station < best->station))
        best = Transfer{it->station, s, s + duration, it->period};
    }
    return best;
  }

 private:
  std::vector<std::vector<StationWindow>> windows_;
  std::vector<std::vector<ContactPeriod>> periods_;
  std::vector<double> max_len_;
};

/// Ring-neighbour links available for relaying parameters.
class RelayIndex {
 public:
  struct Link {
    std::size_t neighbour = 0;
    double start_s = 0.0;
    double end_s = 0.0;
  };

  RelayIndex() = default;
  explicit RelayIndex(std::span<const ContactWindow> windows) {
    for (const auto& w : windows) {
      if (w.kind != LinkKind::IntraSl) continue;
      links_[w.a].push_back({w.b, w.start_s, w.end_s});
      links_[w.b].push_back({w.a, w.start_s, w.end_s});
    }
    for (auto& [sat, ls] : links_)
      std::sort(ls.begin(), ls.end(), [](const Link& x, const Link& y) {
        if (x.start_s != y.start_s) return x.start_s < y.start_s;
        return x.neighbour < y.neighbour;
      });
  }

  bool empty() const { return links_.empty(); }
  std::span<const Link> links_of(std::size_t sat) const {
    auto it = links_.find(sat);
    if (it == links_.end()) return {};
    return it->second;
  }

 private:
  std::map<std::size_t, std::vector<Link>> links_;
};

/// Durations used when simulating a client's dispatch -> train -> return.
struct ScheduleTiming {
  double dispatch_s = 0.0;
  double compute_s = 0.0;
  double upload_s = 0.0;
  double isl_s = 0.0;
  std::vector<double> compute_by_sat;  // overrides compute_s when non-empty

  double compute_for(std::size_t sat) const {
    return sat < compute_by_sat.size() ? compute_by_sat[sat] : compute_s;
  }
};

struct ReturnPath {
  bool relay = false;
  std::size_t station = 0;
  std::size_t relay_satellite = 0;
  double isl_start_s = 0.0;
};

struct ScheduleEntry {
  std::size_t satellite = 0;
  std::size_t dispatch_station = 0;
  double first_contact_s = 0.0;  // dispatch transfer start
  double dispatch_end_s = 0.0;
  double ready_s = 0.0;          // earliest time the update can leave
  double return_start_s = 0.0;   // upload start at the station
  double return_contact_s = 0.0; // upload completion
  bool has_return = false;
  ReturnPath via{};
};

/// Plans one client from time `t`: dispatch at its first feasible contact,
/// then the earliest return, either directly at a later contact period or
/// through a ring neighbour's station contact. Direct wins ties.
inline std::optional<ScheduleEntry> plan_client(const ContactIndex& index,
                                                const RelayIndex* relays, std::size_t sat,
                                                double t, const ScheduleTiming& timing) {
  const auto d = index.earliest_transfer(sat, t, timing.dispatch_s);
  if (!d) return std::nullopt;
  ScheduleEntry e;
  e.satellite = sat;
  e.dispatch_station = d->station;
  e.first_contact_s = d->start_s;
  e.dispatch_end_s = d->end_s;
  e.ready_s = d->end_s + timing.compute_for(sat);

  const auto direct = index.earliest_transfer(sat, e.ready_s, timing.upload_s, d->period + 1);
  std::optional<Transfer> relay;
  std::size_t relay_sat = 0;
  double isl_start = 0.0;
  if (relays) {
    for (const auto& link : relays->links_of(sat)) {
      if (link.end_s < e.ready_s + timing.isl_s) continue;
      // The hand-over over the ring ends exactly when the neighbour's upload begins.
      const double earliest = std::max(e.ready_s, link.start_s) + timing.isl_s;
      const auto up = index.earliest_transfer(link.neighbour, earliest, timing.upload_s);
      if (!up || up->start_s > link.end_s) continue;
      if (!relay || up->end_s < relay->end_s ||
          (up->end_s == relay->end_s && link.neighbour < relay_sat)) {
        relay = up;
        relay_sat = link.neighbour;
        isl_start = up->start_s - timing.isl_s;
      }
    }
  }
  if (direct && (!relay || direct->end_s <= relay->end_s)) {
    e.has_return = true;
    e.return_start_s = direct->start_s;
    e.return_contact_s = direct->end_s;
    e.via = {false, direct->station, 0, 0.0};
  } else if (relay) {
    e.has_return = true;
    e.return_start_s = relay->start_s;
    e.return_contact_s = relay->end_s;
    e.via = {true, relay->station, relay_sat, isl_start};
  }
  return e;
}

/// Fastest contact-and-return selection over a prebuilt index: the first
/// `count` satellites to complete their return, ties by satellite id.
inline std::vector<ScheduleEntry> fastest_return_selection(const ContactIndex& index,
                                                           const RelayIndex* relays,
                                                           std::size_t count, double t,
                                                           const ScheduleTiming& timing) {
  if (count == 0) throw std::invalid_argument("client count must be >= 1");
  std::vector<ScheduleEntry> eligible;
  for (std::size_t s = 0; s < index.num_satellites(); ++s) {
    auto e = plan_client(index, relays, s, t, timing);
    if (e && e->has_return) eligible.push_back(*e);
  }
  if (eligible.size() < count)
    throw SchedulingHorizonExhausted("only " + std::to_string(eligible.size()) + " of " +
                                     std::to_string(count) +
                                     " satellites can contact and return within the horizon");
  std::sort(eligible.begin(), eligible.end(), [](const ScheduleEntry& x, const ScheduleEntry& y) {
    if (x.return_contact_s != y.return_contact_s) return x.return_contact_s < y.return_contact_s;
    return x.satellite < y.satellite;
  });
  eligible.resize(count);
  return eligible;
}

/// Unscheduled selection: the first `count` satellites to make a usable
/// contact. Returns are whatever follows; a selected client that can never
/// return makes the round incomplete.
inline std::vector<ScheduleEntry> first_contact_selection(const ContactIndex& index,
                                                          const RelayIndex* relays,
                                                          std::size_t count, double t,
                                                          const ScheduleTiming& timing) {
  if (count == 0) throw std::invalid_argument("client count must be >= 1");
  std::vector<ScheduleEntry> contacted;
  for (std::size_t s = 0; s < index.num_satellites(); ++s) {
    auto e = plan_client(index, relays, s, t, timing);
    if (e) contacted.push_back(*e);
  }
  if (contacted.size() < count)
    throw SchedulingHorizonExhausted("only " + std::to_string(contacted.size()) + " of " +
                                     std::to_string(count) +
                                     " satellites contact a ground station within the horizon");
  std::sort(contacted.begin(), contacted.end(), [](const ScheduleEntry& x, const ScheduleEntry& y) {
    if (x.first_contact_s != y.first_contact_s) return x.first_contact_s < y.first_contact_s;
    return x.satellite < y.satellite;
  });
  contacted.resize(count);
  for (const auto& e : contacted)
    if (!e.has_return)
      throw SchedulingHorizonExhausted("satellite " + std::to_string(e.satellite) +
                                       " cannot return its update within the horizon");
  return contacted;
}

/// FLSchedule: selects the C satellites whose second ground-station contact
/// after `t` completes first.
inline std::vector<ScheduleEntry> fl_schedule(std::span<const ContactWindow> windows,
                                              std::size_t C, double t,
                                              const ScheduleTiming& timing = {}) {
  const ContactIndex index(windows);
  return fastest_return_selection(index, nullptr, C, t, timing);
}

/// FLIntraSL: like fl_schedule, but a client may also hand its update to a
/// ring neighbour that reaches a station first.
inline std::vector<ScheduleEntry> intra_sl_schedule(std::span<const ContactWindow> windows,
                                                    std::size_t C, double t,
                                                    const ScheduleTiming& timing = {}) {
  const ContactIndex index(windows);
  const RelayIndex relays(windows);
  return fastest_return_selection(index, &relays, C, t, timing);
}

// ---------------------------------------------------------------------------
// Cross-cluster connection planning.

struct ClusterConnection {
  std::size_t cluster_a = 0;
  std::size_t cluster_b = 0;
  std::size_t sat_a = 0;
  std::size_t sat_b = 0;
  ContactWindow window{};
  double transfer_start_s = 0.0;
  double transfer_end_s = 0.0;
};

struct ClusterConnectionPlan {
  std::vector<ClusterConnection> entries;
  int epoch_budget_e = 1;
  double first_s = 0.0;
  double last_s = 0.0;
};

struct InterSlOptions {
  double epoch_time_s = 1.0;
  int max_epochs = INT_MAX;
};

/// Earliest transfer of `transfer_s` seconds between any satellite of
/// cluster `ca` and any of cluster `cb`, starting no earlier than `t`.
inline std::optional<ClusterConnection> earliest_cluster_link(
    std::span<const ContactWindow> isl_windows, std::span<const std::size_t> cluster_of,
    std::size_t ca, std::size_t cb, double t, double transfer_s) {
  std::optional<ClusterConnection> best;
  for (const auto& w : isl_windows) {
    if (w.kind != LinkKind::InterSl) continue;
    std::size_t a = w.a, b = w.b;
    if (cluster_of[a] == cb && cluster_of[b] == ca) std::swap(a, b);
    if (cluster_of[a] != ca || cluster_of[b] != cb) continue;
    const double s = std::max(w.start_s, t);
    if (s + transfer_s > w.end_s) continue;
    const double e = s + transfer_s;
    if (!best || e < best->transfer_end_s ||
        (e == best->transfer_end_s && std::pair(a, b) < std::pair(best->sat_a, best->sat_b)))
      best = ClusterConnection{ca, cb, a, b, w, s, e};
  }
  return best;
}

/// Plans one model exchange for every unordered cluster pair, each at its
/// earliest feasible inter-sl window after `t`, and derives the epoch budget
/// from the spread between the first and last exchange.
inline ClusterConnectionPlan inter_sl_scheduler(const orbital::ConstellationSpec& constellation,
                                                std::span<const ContactWindow> isl_windows,
                                                std::size_t C, double t, double payload_bytes,
                                                double data_rate_Bps,
                                                const InterSlOptions& opt = {}) {
  if (C < 2) throw std::invalid_argument("inter_sl_scheduler needs at least 2 clusters");
  if (C != constellation.num_clusters)
    throw std::invalid_argument("cluster count does not match the constellation");
  if (!(data_rate_Bps > 0.0)) throw std::invalid_argument("data rate must be positive");
  if (!(opt.epoch_time_s > 0.0)) throw std::invalid_argument("epoch time must be positive");
  const double tx = payload_bytes / data_rate_Bps;
  const auto& cluster_of = constellation.cluster_of;

  // Best candidate per unordered pair; a later-found candidate replaces the
  // recorded one only when it completes earlier.
  std::vector<std::optional<ClusterConnection>> best(C * C);
  for (const auto& w : isl_windows) {
    if (w.kind != LinkKind::InterSl) continue;
    std::size_t a = w.a, b = w.b;
    if (cluster_of[a] == cluster_of[b]) continue;
    if (cluster_of[a] > cluster_of[b]) std::swap(a, b);
    const double s = std::max(w.start_s, t);
    if (s + tx > w.end_s) continue;
    auto& slot = best[cluster_of[a] * C + cluster_of[b]];
    const double e = s + tx;
    if (!slot || e < slot->transfer_end_s ||
        (e == slot->transfer_end_s && std::pair(a, b) < std::pair(slot->sat_a, slot->sat_b)))
      slot = ClusterConnection{cluster_of[a], cluster_of[b], a, b, w, s, e};
  }

  ClusterConnectionPlan plan;
  for (std::size_t ca = 0; ca < C; ++ca)
    for (std::size_t cb = ca + 1; cb < C; ++cb) {
      const auto& slot = best[ca * C + cb];
      if (!slot)
        throw SchedulingHorizonExhausted("clusters " + std::to_string(ca) + " and " +
                                         std::to_string(cb) +
                                         " never share a window long enough for the model");
      plan.entries.push_back(*slot);
    }
  plan.first_s = plan.entries.front().transfer_start_s;
  plan.last_s = plan.first_s;
  for (const auto& e : plan.entries) {
    plan.first_s = std::min(plan.first_s, e.transfer_start_s);
    plan.last_s = std::max(plan.last_s, e.transfer_start_s);
  }
  const double epochs = std::floor((plan.last_s - plan.first_s) / opt.epoch_time_s);
  plan.epoch_budget_e =
      static_cast<int>(std::clamp(epochs, 1.0, static_cast<double>(std::max(1, opt.max_epochs))));
  return plan;
}

// ---------------------------------------------------------------------------
// Ring and inter-plane geometry.

/// Smallest ring size whose neighbour chord clears the grazing radius.
inline std::size_t min_ring_size(double altitude_km, double grazing_margin_km) {
  if (!(grazing_margin_km >= 0.0) || !(altitude_km > grazing_margin_km))
    throw std::invalid_argument("min_ring_size requires altitude > grazing margin >= 0");
  const double a = orbital::kEarthRadiusKm + altitude_km;
  const double g = orbital::kEarthRadiusKm + grazing_margin_km;
  for (std::size_t n = 3;; ++n)
    if (a * std::cos(orbital::kPi / static_cast<double>(n)) >= g) return n;
}

/// Longest contiguous line-of-sight interval over one period between two
/// satellites whose planes meet at `alpha_deg`, the second trailing the
/// first by `phase_offset_deg`. Returns the period when LOS never breaks.
inline double inter_plane_window_length(double alpha_deg, double altitude_km,
                                        double phase_offset_deg = 0.0,
                                        double grazing_margin_km = 0.0,
                                        double step_s = 1.0) {
  if (!(alpha_deg >= 0.0 && alpha_deg <= 180.0))
    throw std::invalid_argument("alpha must lie in [0, 180]");
  orbital::OrbitState first;
  first.semi_major_axis_km = orbital::kEarthRadiusKm + altitude_km;
  first.inclination_deg = 0.0;
  orbital::OrbitState second = first;
  second.inclination_deg = alpha_deg;
  second.true_anomaly_epoch_deg = orbital::normalize_deg(-phase_offset_deg);
  const double period = orbital::period_for_radius(first.semi_major_axis_km);
  const double grazing = orbital::kEarthRadiusKm + grazing_margin_km;
  auto vis = [&](double t) {
    return orbital::line_of_sight(orbital::propagate(first, t), orbital::propagate(second, t),
                                  grazing);
  };

  const auto n = static_cast<std::size_t>(std::ceil(period / step_s));
  const double dt = period / static_cast<double>(n);
  std::vector<bool> samples(n);
  std::size_t visible = 0;
  for (std::size_t k = 0; k < n; ++k) {
    samples[k] = vis(static_cast<double>(k) * dt);
    visible += samples[k] ? 1 : 0;
  }
  if (visible == n) return period;
  if (visible == 0) return 0.0;

  // Walk runs starting just after an invisible sample so wrap-around runs
  // are counted once.
  std::size_t origin = 0;
  while (samples[origin]) ++origin;
  double best = 0.0;
  std::size_t k = 1;
  while (k <= n) {
    const std::size_t idx = (origin + k) % n;
    if (!samples[idx]) {
      ++k;
      continue;
    }
    const std::size_t run_begin = origin + k;
    while (k <= n && samples[(origin + k) % n]) ++k;
    const std::size_t run_end = origin + k - 1;
    const double t_in_first = static_cast<double>(run_begin) * dt;
    const double t_in_last = static_cast<double>(run_end) * dt;
    const double start = detail::refine_edge(t_in_first - dt, t_in_first, 1e-3, vis);
    const double end = detail::refine_edge(t_in_last + dt, t_in_last, 1e-3, vis);
    best = std::max(best, end - start);
  }
  return std::min(best, period);
}

}  // namespace flsat::planner
