#pragma once

// Cut curves, partial-cut truncation and the generalized winding number of
// open polylines in the plane.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace windlift {

using Point2 = Eigen::Vector2d;
using Vector2 = Eigen::Vector2d;
using Polyline = std::vector<Point2>;

/// How a single cut fraction is distributed over several polylines.
enum class AlphaMode {
  sequential,   ///< walk the concatenated length in declaration order
  per_polyline  ///< every polyline is cut to the same fraction of its own length
};

inline constexpr double kOnCurveTolerance = 1e-12;

namespace detail {

inline double point_segment_distance(const Point2& x, const Point2& a, const Point2& b) {
  const Vector2 ab = b - a;
  const double len2 = ab.squaredNorm();
  double t = len2 > 0.0 ? (x - a).dot(ab) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return (a + t * ab - x).norm();
}

inline double cross(const Vector2& a, const Vector2& b) { return a.x() * b.y() - a.y() * b.x(); }

inline bool same_point(const Point2& a, const Point2& b) { return (a - b).norm() <= kOnCurveTolerance; }

}  // namespace detail

/// Ordered set of polylines together with the fraction that has been cut.
class CutCurve {
 public:
  CutCurve() = default;

  explicit CutCurve(std::vector<Polyline> polylines, double alpha = 1.0,
                    AlphaMode mode = AlphaMode::sequential)
      : polylines_(std::move(polylines)), mode_(mode) {
    cumulative_.reserve(polylines_.size());
    for (std::size_t i = 0; i < polylines_.size(); ++i) {
      const Polyline& line = polylines_[i];
      if (line.size() < 2) {
        throw std::invalid_argument("polyline " + std::to_string(i) + " has fewer than 2 vertices");
      }
      std::vector<double> prefix(line.size(), 0.0);
      for (std::size_t v = 1; v < line.size(); ++v) {
        if (!line[v].allFinite() || !line[v - 1].allFinite()) {
          throw std::invalid_argument("polyline " + std::to_string(i) + " has a non-finite vertex");
        }
        const double len = (line[v] - line[v - 1]).norm();
        if (!(len > kOnCurveTolerance)) {
          throw std::invalid_argument("polyline " + std::to_string(i) + " has a zero-length segment");
        }
        prefix[v] = prefix[v - 1] + len;
      }
      total_length_ += prefix.back();
      cumulative_.push_back(std::move(prefix));
    }
    set_alpha(alpha);
  }

  const std::vector<Polyline>& polylines() const { return polylines_; }
  const std::vector<std::vector<double>>& cumulative_lengths() const { return cumulative_; }
  double alpha() const { return alpha_; }
  AlphaMode mode() const { return mode_; }
  double total_length() const { return total_length_; }
  bool empty() const { return polylines_.empty(); }

  void set_alpha(double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
      throw std::domain_error("cut fraction alpha must lie in [0, 1]");
    }
    alpha_ = alpha;
  }

  CutCurve with_alpha(double alpha) const {
    CutCurve copy = *this;
    copy.set_alpha(alpha);
    return copy;
  }

  bool is_closed(std::size_t i) const {
    const Polyline& line = polylines_.at(i);
    return line.size() > 2 && detail::same_point(line.front(), line.back());
  }

  friend bool operator==(const CutCurve& a, const CutCurve& b) {
    return a.alpha_ == b.alpha_ && a.mode_ == b.mode_ && a.polylines_ == b.polylines_;
  }

 private:
  std::vector<Polyline> polylines_;
  std::vector<std::vector<double>> cumulative_;
  double total_length_ = 0.0;
  double alpha_ = 1.0;
  AlphaMode mode_ = AlphaMode::sequential;
};

namespace detail {

// Leading `length` of a single polyline; empty when length <= 0.
inline Polyline walk_polyline(const Polyline& line, const std::vector<double>& prefix, double length) {
  Polyline out;
  if (length <= 0.0) return out;
  if (length >= prefix.back()) return line;
  out.push_back(line.front());
  for (std::size_t v = 1; v < line.size(); ++v) {
    if (prefix[v] < length) {
      out.push_back(line[v]);
      continue;
    }
    if (prefix[v] == length) {
      out.push_back(line[v]);
    } else {
      const double t = (length - prefix[v - 1]) / (prefix[v] - prefix[v - 1]);
      out.push_back(line[v - 1] + t * (line[v] - line[v - 1]));
    }
    break;
  }
  return out;
}

}  // namespace detail

/// Leading alpha-fraction of the curve. One entry per input polyline; entries
/// that have not been reached yet are empty.
inline std::vector<Polyline> truncate_curve(const CutCurve& curve, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw std::domain_error("cut fraction alpha must lie in [0, 1]");
  }
  const auto& lines = curve.polylines();
  const auto& prefix = curve.cumulative_lengths();
  std::vector<Polyline> out(lines.size());
  if (curve.mode() == AlphaMode::per_polyline) {
    for (std::size_t i = 0; i < lines.size(); ++i) {
      out[i] = alpha == 1.0 ? lines[i] : detail::walk_polyline(lines[i], prefix[i], alpha * prefix[i].back());
    }
    return out;
  }
  if (alpha == 1.0) return lines;
  double remaining = alpha * curve.total_length();
  for (std::size_t i = 0; i < lines.size() && remaining > 0.0; ++i) {
    out[i] = detail::walk_polyline(lines[i], prefix[i], remaining);
    remaining -= prefix[i].back();
  }
  return out;
}

inline std::vector<Polyline> truncate_curve(const CutCurve& curve) { return truncate_curve(curve, curve.alpha()); }

/// Cubic smoothstep 3t^2 - 2t^3 on [0, 1], clamped outside.
inline double smoothstep(double t) {
  t = std::clamp(t, 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

inline double smoothstep_derivative(double t) {
  if (t <= 0.0 || t >= 1.0) return 0.0;
  return 6.0 * t * (1.0 - t);
}

struct WindingSample {
  double value = 0.0;
  bool on_curve = false;
};

/// Generalized winding number H^alpha of a (partially cut) curve, smoothed to
/// zero in an eps-ball around the open tips of the cut.
///
/// H jumps by +1 when crossing a segment from its right side to its left side,
/// and is an integer for closed loops away from the curve. Immutable after
/// construction, so concurrent evaluation is safe.
class WindingField {
 public:
  WindingField(CutCurve curve, double tip_radius_eps) : curve_(std::move(curve)), eps_(tip_radius_eps) {
    if (!(eps_ > 0.0) || !std::isfinite(eps_)) {
      throw std::invalid_argument("tip smoothing radius must be positive");
    }
    const auto truncated = truncate_curve(curve_);
    for (std::size_t i = 0; i < truncated.size(); ++i) {
      const Polyline& line = truncated[i];
      if (line.size() < 2) continue;
      for (std::size_t v = 1; v < line.size(); ++v) segments_.emplace_back(line[v - 1], line[v]);
      const bool full = line.size() == curve_.polylines()[i].size() && line.back() == curve_.polylines()[i].back();
      if (!(full && curve_.is_closed(i))) {
        tips_.push_back(line.front());
        tips_.push_back(line.back());
      }
    }
  }

  const CutCurve& curve() const { return curve_; }
  double alpha() const { return curve_.alpha(); }
  double tip_radius() const { return eps_; }
  const std::vector<std::pair<Point2, Point2>>& segments() const { return segments_; }
  const std::vector<Point2>& tips() const { return tips_; }

  double distance_to_curve(const Point2& x) const {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& [a, b] : segments_) best = std::min(best, detail::point_segment_distance(x, a, b));
    return best;
  }

  /// Unsmoothed winding number; assumes x is off the curve.
  double raw_winding(const Point2& x) const {
    double angle = 0.0;
    for (const auto& [a, b] : segments_) {
      const Vector2 ra = a - x;
      const Vector2 rb = b - x;
      angle += std::atan2(detail::cross(ra, rb), ra.dot(rb));
    }
    return angle / (2.0 * std::numbers::pi);
  }

  Vector2 raw_winding_gradient(const Point2& x) const {
    // d/dx of the polar angle of (p - x) is (r_y, -r_x) / |r|^2 with r = p - x.
    Vector2 g = Vector2::Zero();
    for (const auto& [a, b] : segments_) {
      const Vector2 ra = a - x;
      const Vector2 rb = b - x;
      g += Vector2(rb.y(), -rb.x()) / rb.squaredNorm() - Vector2(ra.y(), -ra.x()) / ra.squaredNorm();
    }
    return g / (2.0 * std::numbers::pi);
  }

  double tip_distance(const Point2& x, Point2* nearest = nullptr) const {
    double best = std::numeric_limits<double>::infinity();
    for (const Point2& t : tips_) {
      const double d = (x - t).norm();
      if (d < best) {
        best = d;
        if (nearest) *nearest = t;
      }
    }
    return best;
  }

  double tip_factor(const Point2& x) const {
    if (tips_.empty()) return 1.0;
    return smoothstep(tip_distance(x) / eps_);
  }

  Vector2 tip_factor_gradient(const Point2& x) const {
    Point2 tip;
    const double d = tip_distance(x, &tip);
    if (tips_.empty() || d >= eps_ || d <= 0.0) return Vector2::Zero();
    return smoothstep_derivative(d / eps_) / eps_ * (x - tip) / d;
  }

  WindingSample evaluate(const Point2& x) const {
    if (segments_.empty()) return {0.0, false};
    std::size_t nearest = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < segments_.size(); ++s) {
      const double d = detail::point_segment_distance(x, segments_[s].first, segments_[s].second);
      if (d < best) {
        best = d;
        nearest = s;
      }
    }
    if (best > kOnCurveTolerance) return {raw_winding(x) * tip_factor(x), false};
    // Left-side limit: step off the nearest segment along its left normal.
    const auto& [a, b] = segments_[nearest];
    const Vector2 dir = (b - a).normalized();
    const double scale = std::max(1.0, std::max(a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff()));
    const Point2 probe = x + 1e-9 * scale * Vector2(-dir.y(), dir.x());
    return {raw_winding(probe) * tip_factor(x), true};
  }

 private:
  CutCurve curve_;
  double eps_;
  std::vector<std::pair<Point2, Point2>> segments_;
  std::vector<Point2> tips_;
};

inline WindingSample evaluate_winding(const WindingField& field, const Point2& x) { return field.evaluate(x); }

inline double winding_number(const WindingField& field, const Point2& x) { return field.evaluate(x).value; }

inline double tip_smooth_factor(const WindingField& field, const Point2& x) { return field.tip_factor(x); }

/// Spatial gradient of the smoothed winding number.
inline Vector2 winding_gradient(const WindingField& field, const Point2& x) {
  if (field.segments().empty()) return Vector2::Zero();
  if (field.distance_to_curve(x) <= kOnCurveTolerance) {
    throw std::domain_error("gradient undefined on the cut curve");
  }
  const double s = field.tip_factor(x);
  Vector2 g = s * field.raw_winding_gradient(x);
  const Vector2 ds = field.tip_factor_gradient(x);
  if (ds.squaredNorm() > 0.0) g += field.raw_winding(x) * ds;
  return g;
}

/// Planar polygon with optional holes; even-odd inside test.
struct Polygon {
  std::vector<Point2> outer;
  std::vector<std::vector<Point2>> holes;

  static double ring_area(const std::vector<Point2>& ring) {
    double a = 0.0;
    for (std::size_t i = 0; i < ring.size(); ++i) {
      a += detail::cross(ring[i], ring[(i + 1) % ring.size()]);
    }
    return 0.5 * std::abs(a);
  }

  static bool ring_contains(const std::vector<Point2>& ring, const Point2& p) {
    bool inside = false;
    for (std::size_t i = 0, j = ring.size() - 1; i < ring.size(); j = i++) {
      const Point2& a = ring[i];
      const Point2& b = ring[j];
      if ((a.y() > p.y()) != (b.y() > p.y()) &&
          p.x() < (b.x() - a.x()) * (p.y() - a.y()) / (b.y() - a.y()) + a.x()) {
        inside = !inside;
      }
    }
    return inside;
  }

  bool contains(const Point2& p) const {
    if (!ring_contains(outer, p)) return false;
    for (const auto& h : holes) {
      if (ring_contains(h, p)) return false;
    }
    return true;
  }

  double area() const {
    double a = ring_area(outer);
    for (const auto& h : holes) a -= ring_area(h);
    return a;
  }

  std::pair<Point2, Point2> bounds() const {
    Point2 lo = outer.front();
    Point2 hi = outer.front();
    for (const Point2& p : outer) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    return {lo, hi};
  }

  double diameter() const {
    const auto [lo, hi] = bounds();
    return (hi - lo).norm();
  }

  static Polygon rectangle(const Point2& lo, const Point2& hi) {
    return Polygon{{lo, Point2(hi.x(), lo.y()), hi, Point2(lo.x(), hi.y())}, {}};
  }
};

/// Default tip smoothing radius: 2% of the bounding-box diagonal.
inline double default_tip_radius(const Polygon& domain) { return 0.02 * domain.diameter(); }

}  // namespace windlift
