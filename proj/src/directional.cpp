#include "tailwatch/directional.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <json.hpp>

#include "tailwatch/errors.hpp"

namespace tailwatch {

namespace {
constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kDeg = std::numbers::pi / 180.0;

// WGS84 defining constants.
constexpr double kA = 6378137.0;
constexpr double kInvF = 298.257223563;
constexpr double kF = 1.0 / kInvF;
constexpr double kB = kA * (1.0 - kF);
}  // namespace

void validate_geopoint(const GeoPoint& p) {
  if (!std::isfinite(p.lat) || !std::isfinite(p.lon)) {
    throw DataError("geopoint: non-finite coordinate");
  }
  if (p.lat < -90.0 || p.lat > 90.0) {
    throw DataError("geopoint: latitude " + std::to_string(p.lat) + " outside [-90, 90]");
  }
  // Both seam representations are accepted; -180 and 180 name the same
  // meridian and encode identically.
  if (p.lon < -180.0 || p.lon > 180.0) {
    throw DataError("geopoint: longitude " + std::to_string(p.lon) +
                    " outside [-180, 180]");
  }
}

Eigen::Vector4d wrap_encode(const GeoPoint& p) {
  validate_geopoint(p);
  Eigen::Vector4d v;
  v[0] = std::sin(kPi * p.lat / 90.0);
  v[1] = std::cos(kPi * p.lat / 90.0);
  v[2] = std::sin(kPi * p.lon / 180.0);
  v[3] = std::cos(kPi * p.lon / 180.0);
  return v;
}

double to_bearing(double angle_rad) {
  double a = std::fmod(angle_rad, kTwoPi);
  if (a < 0.0) a += kTwoPi;
  if (a >= kTwoPi) a = 0.0;  // fmod rounding at the seam
  return a;
}

double to_signed_angle(double angle_rad) {
  double a = std::fmod(angle_rad, kTwoPi);
  if (a > kPi) a -= kTwoPi;
  if (a <= -kPi) a += kTwoPi;
  return a;
}

GeodesicResult vincenty_inverse(const GeoPoint& source, const GeoPoint& target) {
  validate_geopoint(source);
  validate_geopoint(target);
  if (source.lat == target.lat && source.lon == target.lon) {
    throw DataError("vincenty_inverse: identical points, bearing undefined");
  }

  const double phi1 = source.lat * kDeg;
  const double phi2 = target.lat * kDeg;
  double ldiff = (target.lon - source.lon) * kDeg;  // L, normalized
  if (ldiff > kPi) ldiff -= kTwoPi;
  if (ldiff < -kPi) ldiff += kTwoPi;

  const double u1 = std::atan((1.0 - kF) * std::tan(phi1));
  const double u2 = std::atan((1.0 - kF) * std::tan(phi2));
  const double su1 = std::sin(u1), cu1 = std::cos(u1);
  const double su2 = std::sin(u2), cu2 = std::cos(u2);

  double lambda = ldiff;
  double sin_sigma = 0.0, cos_sigma = 0.0, sigma = 0.0;
  double cos2_alpha = 0.0, cos_2sm = 0.0;
  int iter = 0;
  const int max_iter = 200;
  for (;; ++iter) {
    if (iter >= max_iter) {
      throw DataError("vincenty_inverse: did not converge (near-antipodal pair)");
    }
    const double sl = std::sin(lambda), cl = std::cos(lambda);
    const double t1 = cu2 * sl;
    const double t2 = cu1 * su2 - su1 * cu2 * cl;
    sin_sigma = std::hypot(t1, t2);
    cos_sigma = su1 * su2 + cu1 * cu2 * cl;
    if (sin_sigma == 0.0) {
      throw DataError("vincenty_inverse: coincident points on the auxiliary sphere");
    }
    sigma = std::atan2(sin_sigma, cos_sigma);
    const double sin_alpha = cu1 * cu2 * sl / sin_sigma;
    cos2_alpha = 1.0 - sin_alpha * sin_alpha;
    cos_2sm = cos2_alpha != 0.0 ? cos_sigma - 2.0 * su1 * su2 / cos2_alpha : 0.0;
    const double c = kF / 16.0 * cos2_alpha * (4.0 + kF * (4.0 - 3.0 * cos2_alpha));
    const double lambda_new =
        ldiff + (1.0 - c) * kF * sin_alpha *
                    (sigma + c * sin_sigma *
                                 (cos_2sm + c * cos_sigma * (-1.0 + 2.0 * cos_2sm * cos_2sm)));
    const double delta = std::abs(lambda_new - lambda);
    lambda = lambda_new;
    if (std::abs(lambda) > kPi + 1e-9) {
      throw DataError("vincenty_inverse: did not converge (near-antipodal pair)");
    }
    if (delta < 1e-12) break;
  }

  const double usq = cos2_alpha * (kA * kA - kB * kB) / (kB * kB);
  const double big_a =
      1.0 + usq / 16384.0 * (4096.0 + usq * (-768.0 + usq * (320.0 - 175.0 * usq)));
  const double big_b = usq / 1024.0 * (256.0 + usq * (-128.0 + usq * (74.0 - 47.0 * usq)));
  const double delta_sigma =
      big_b * sin_sigma *
      (cos_2sm + big_b / 4.0 *
                     (cos_sigma * (-1.0 + 2.0 * cos_2sm * cos_2sm) -
                      big_b / 6.0 * cos_2sm * (-3.0 + 4.0 * sin_sigma * sin_sigma) *
                          (-3.0 + 4.0 * cos_2sm * cos_2sm)));

  GeodesicResult out;
  out.distance = kB * big_a * (sigma - delta_sigma);
  const double sl = std::sin(lambda), cl = std::cos(lambda);
  out.bearing = to_bearing(std::atan2(cu2 * sl, cu1 * su2 - su1 * cu2 * cl));
  out.iterations = iter + 1;
  return out;
}

CircularMoments circular_summary(const Eigen::VectorXd& bearings,
                                 const Eigen::VectorXd& weights) {
  if (bearings.size() != weights.size()) {
    throw DataError("circular_summary: bearing/weight length mismatch");
  }
  if (bearings.size() == 0) throw DataError("circular_summary: no edges");
  if ((weights.array() < 0.0).any()) {
    throw DataError("circular_summary: negative weight");
  }
  const double total = weights.sum();
  if (!(total > 0.0)) {
    throw DataError("circular_summary: all weights zero, summary undefined");
  }
  const double c = (weights.array() * bearings.array().cos()).sum();
  const double s = (weights.array() * bearings.array().sin()).sum();
  CircularMoments m;
  m.r = std::min(std::hypot(c, s) / total, 1.0);
  m.degenerate = m.r < 1e-12;
  m.omega = m.degenerate ? 0.0 : to_signed_angle(std::atan2(s, c));
  return m;
}

ArcInterval highest_density_arc(const Eigen::VectorXd& angles, double mass) {
  const Eigen::Index n = angles.size();
  if (n == 0) throw DataError("highest_density_arc: no angles");
  if (!(mass > 0.0 && mass <= 1.0)) {
    throw ConfigError("highest_density_arc: mass must be in (0, 1]");
  }
  std::vector<double> a(n);
  for (Eigen::Index i = 0; i < n; ++i) a[i] = to_bearing(angles[i]);
  std::sort(a.begin(), a.end());
  const Eigen::Index m =
      std::min<Eigen::Index>(n, static_cast<Eigen::Index>(std::ceil(mass * n)));
  double best_width = kTwoPi + 1.0;
  Eigen::Index best = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index j = (i + m - 1) % n;
    double width = a[j] - a[i];
    if (j < i) width += kTwoPi;
    if (width < best_width) {
      best_width = width;
      best = i;
    }
  }
  ArcInterval arc;
  arc.lo = to_signed_angle(a[best]);
  arc.hi = arc.lo + best_width;
  arc.mass = static_cast<double>(m) / static_cast<double>(n);
  return arc;
}

BearingSummary posterior_bearing_summary(const FitResult& step2,
                                         const std::vector<GeoSource>& sources,
                                         const GeoPoint& target) {
  BearingSummary out;
  if (sources.empty()) {
    out.empty = true;
    return out;
  }
  validate_geopoint(target);
  const Eigen::MatrixXd theta = step2.samples.stacked();
  const Eigen::Index s_draws = theta.rows();
  if (s_draws < 1) throw DataError("posterior_bearing_summary: fit has no draws");

  const int k = static_cast<int>(sources.size());
  Eigen::VectorXd bearings(k);
  std::vector<GeodesicResult> geos(k);
  for (int j = 0; j < k; ++j) {
    if (sources[j].column < 0 || sources[j].column >= step2.layout.dim()) {
      throw DataError("posterior_bearing_summary: column " +
                      std::to_string(sources[j].column) + " outside the parameter vector");
    }
    geos[j] = vincenty_inverse(sources[j].centroid, target);
    bearings[j] = geos[j].bearing;
  }

  out.omega_draws.resize(s_draws);
  out.r_draws.resize(s_draws);
  Eigen::VectorXd w(k);
  for (Eigen::Index s = 0; s < s_draws; ++s) {
    for (int j = 0; j < k; ++j) w[j] = std::abs(theta(s, sources[j].column));
    if (!(w.sum() > 0.0)) {  // measure-zero corner: keep the draw, mark degenerate
      out.omega_draws[s] = 0.0;
      out.r_draws[s] = 0.0;
      continue;
    }
    const CircularMoments m = circular_summary(bearings, w);
    out.omega_draws[s] = m.omega;
    out.r_draws[s] = m.r;
  }

  const double cs = out.omega_draws.array().cos().sum();
  const double ss = out.omega_draws.array().sin().sum();
  out.circular_mean = to_signed_angle(std::atan2(ss, cs));
  const ArcInterval arc = highest_density_arc(out.omega_draws, 0.95);
  out.ci_lo = arc.lo;
  out.ci_hi = arc.hi;
  out.ci_mass = arc.mass;

  for (int j = 0; j < k; ++j) {
    BearingEdge e;
    e.label = sources[j].label;
    e.source = sources[j].centroid;
    e.target = target;
    e.bearing = geos[j].bearing;
    e.distance = geos[j].distance;
    const double mean_coef = theta.col(sources[j].column).mean();
    e.weight = theta.col(sources[j].column).cwiseAbs().mean();
    e.sign = mean_coef < 0.0 ? -1 : 1;
    out.edges.push_back(e);
  }
  return out;
}

RoseBins rose_bins(const std::vector<BearingEdge>& edges, int n_sectors) {
  if (n_sectors < 2) throw ConfigError("rose_bins: need at least 2 sectors");
  RoseBins out;
  out.n_sectors = n_sectors;
  out.counts = Eigen::VectorXi::Zero(n_sectors);
  out.weights = Eigen::VectorXd::Zero(n_sectors);
  const double width = kTwoPi / n_sectors;
  for (const auto& e : edges) {
    const double b = to_bearing(e.bearing);
    int k = static_cast<int>(std::floor(b / width));
    if (k >= n_sectors) k = 0;  // b == 2pi after rounding
    out.counts[k] += 1;
    out.weights[k] += std::abs(e.weight);
  }
  return out;
}

std::string bearing_field_geojson(const std::vector<BearingEdge>& edges) {
  nlohmann::ordered_json doc;
  doc["type"] = "FeatureCollection";
  doc["features"] = nlohmann::ordered_json::array();
  for (const auto& e : edges) {
    nlohmann::ordered_json f;
    f["type"] = "Feature";
    f["geometry"]["type"] = "LineString";
    f["geometry"]["coordinates"] = {{e.source.lon, e.source.lat}, {e.target.lon, e.target.lat}};
    f["properties"]["label"] = e.label;
    f["properties"]["bearing_deg"] = e.bearing / kDeg;
    f["properties"]["distance_m"] = e.distance;
    f["properties"]["weight"] = e.weight;
    f["properties"]["sign"] = e.sign;
    doc["features"].push_back(std::move(f));
  }
  return doc.dump(2) + "\n";
}

}  // namespace tailwatch
