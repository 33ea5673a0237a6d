#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "tailwatch/glm.hpp"

namespace tailwatch {

struct GeoPoint {
  double lat = 0.0;  // degrees in [-90, 90]
  double lon = 0.0;  // degrees in (-180, 180]
};

// Throws DataError when the point is outside bounds or non-finite.
void validate_geopoint(const GeoPoint& p);

// Continuous sine/cosine position encoding:
// [sin(pi lat/90), cos(pi lat/90), sin(pi lon/180), cos(pi lon/180)].
Eigen::Vector4d wrap_encode(const GeoPoint& p);

// Angle helpers. to_bearing maps to [0, 2pi); to_signed to (-pi, pi].
double to_bearing(double angle_rad);
double to_signed_angle(double angle_rad);

struct GeodesicResult {
  double bearing = 0.0;   // forward azimuth source -> target, radians [0, 2pi)
  double distance = 0.0;  // meters
  int iterations = 0;
};

// Inverse geodesic on the WGS84 ellipsoid (a = 6378137 m, 1/f =
// 298.257223563) via Vincenty's iteration, lambda tolerance 1e-12 rad.
// Throws DataError for identical points (undefined bearing) and for
// non-convergence near the antipode; no silent fallback.
GeodesicResult vincenty_inverse(const GeoPoint& source, const GeoPoint& target);

// One spillover edge: geometry fixed by the centroids, weight summarizing the
// posterior coefficient magnitude, sign its posterior-mean direction.
struct BearingEdge {
  std::string label;  // source series / candidate name
  GeoPoint source, target;
  double bearing = 0.0;   // [0, 2pi)
  double distance = 0.0;  // meters
  double weight = 0.0;    // posterior-mean |gamma|
  int sign = 1;           // sign of the posterior-mean coefficient
};

struct CircularMoments {
  double omega = 0.0;  // preferred bearing, (-pi, pi]
  double r = 0.0;      // mean resultant length in [0, 1]
  bool degenerate = false;  // resultant vanished; omega meaningless
};

// Weighted first circular moment: omega = atan2(sum w sin b, sum w cos b),
// r = |resultant| / sum w. Weights must be nonnegative with positive total.
CircularMoments circular_summary(const Eigen::VectorXd& bearings,
                                 const Eigen::VectorXd& weights);

struct BearingSummary {
  bool empty = false;            // no geographic sources
  Eigen::VectorXd omega_draws;   // per posterior draw, (-pi, pi]
  Eigen::VectorXd r_draws;       // per posterior draw, [0, 1]
  double circular_mean = 0.0;    // circular mean of omega_draws
  double ci_lo = 0.0, ci_hi = 0.0;  // 95% highest-density arc (lo -> hi clockwise
                                    // i.e. increasing angle, possibly wrapping)
  double ci_mass = 0.0;             // realized fraction inside the arc
  std::vector<BearingEdge> edges;   // posterior-mean weights, export-ready
};

// Geographic interpretation of one fitted column: which design column of the
// step-2 fixed block carries the candidate, and where that source lives.
struct GeoSource {
  int column = 0;  // index into the step-2 fixed block
  std::string label;
  GeoPoint centroid;
};

// Per-draw (omega, r) with that draw's |gamma_j| as weights over the fixed
// source->target bearings; empty (not an error) when sources is empty.
BearingSummary posterior_bearing_summary(const FitResult& step2,
                                         const std::vector<GeoSource>& sources,
                                         const GeoPoint& target);

// Shortest arc containing at least `mass` of the angles (radians, any range).
// Returns {lo, hi, realized_mass} with lo in (-pi, pi] and hi = lo + width.
struct ArcInterval {
  double lo = 0.0, hi = 0.0, mass = 0.0;
};
ArcInterval highest_density_arc(const Eigen::VectorXd& angles, double mass);

struct RoseBins {
  int n_sectors = 16;
  Eigen::VectorXi counts;   // edges per sector
  Eigen::VectorXd weights;  // summed |weight| per sector
};

// Sector k covers [2 pi k / n, 2 pi (k+1) / n); boundary bearings fall in the
// upper sector by the half-open convention.
RoseBins rose_bins(const std::vector<BearingEdge>& edges, int n_sectors = 16);

// GeoJSON FeatureCollection of LineString features with bearing, distance,
// weight, and sign attributes; coordinates ordered [lon, lat]. Returns the
// serialized document (2-space indent, keys in fixed order).
std::string bearing_field_geojson(const std::vector<BearingEdge>& edges);

}  // namespace tailwatch
