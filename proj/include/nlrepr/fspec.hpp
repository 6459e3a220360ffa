#pragma once

// The function f(t, l): continuous, strictly monotone in l with linear tails,
// surjective onto the reals. Decreasing mode runs from +inf to -inf, the
// increasing mode the other way round. Coefficients may vary per time step.

#include <cstddef>
#include <string>
#include <vector>

#include "nlrepr/common.hpp"

namespace nlrepr {

enum class MonotoneDirection { Decreasing, Increasing };
enum class FFamily { Affine, Identity, Scaled, Piecewise };

class FSpec {
 public:
  /// f(t, l) = a_t - b_t*l (decreasing) or a_t + b_t*l (increasing), b_t > 0.
  static FSpec affine(std::vector<double> a, std::vector<double> b,
                      MonotoneDirection dir = MonotoneDirection::Decreasing) {
    FSpec f;
    f.family_ = FFamily::Affine;
    f.direction_ = dir;
    f.a_ = std::move(a);
    f.b_ = std::move(b);
    if (f.a_.empty() || f.b_.empty()) throw ConfigError("affine f needs coefficients");
    for (double b_t : f.b_)
      if (!(b_t > 0.0)) throw ConfigError("affine f needs positive slopes");
    return f;
  }

  static FSpec affine(double a, double b, MonotoneDirection dir = MonotoneDirection::Decreasing) {
    return affine(std::vector<double>{a}, std::vector<double>{b}, dir);
  }

  /// f(t, l) = l.
  static FSpec identity() {
    FSpec f;
    f.family_ = FFamily::Identity;
    f.direction_ = MonotoneDirection::Increasing;
    return f;
  }

  /// f(t, l) = c_t * l with c_t > 0.
  static FSpec scaled(std::vector<double> c) {
    FSpec f;
    f.family_ = FFamily::Scaled;
    f.direction_ = MonotoneDirection::Increasing;
    f.c_ = std::move(c);
    if (f.c_.empty()) throw ConfigError("scaled f needs coefficients");
    for (double c_t : f.c_)
      if (!(c_t > 0.0)) throw ConfigError("scaled f needs positive coefficients");
    return f;
  }

  /// Strictly monotone piecewise-linear l with linear tails; slopes all share
  /// the direction's sign and stay bounded away from zero.
  static FSpec piecewise(std::vector<double> breaks, std::vector<double> slopes, double offset = 0.0) {
    FSpec f;
    f.family_ = FFamily::Piecewise;
    f.breaks_ = std::move(breaks);
    f.slopes_ = std::move(slopes);
    f.offset_ = offset;
    if (f.slopes_.size() != f.breaks_.size() + 1)
      throw ConfigError("piecewise f needs one slope per interval");
    for (std::size_t i = 1; i < f.breaks_.size(); ++i)
      if (!(f.breaks_[i] > f.breaks_[i - 1])) throw ConfigError("piecewise breakpoints must increase");
    bool increasing = f.slopes_.front() > 0.0;
    for (double s : f.slopes_) {
      if (std::abs(s) < 1e-9) throw ConfigError("piecewise slopes must stay away from zero");
      if ((s > 0.0) != increasing) throw ConfigError("piecewise slopes must share one sign");
    }
    f.direction_ = increasing ? MonotoneDirection::Increasing : MonotoneDirection::Decreasing;
    f.build_knots();
    return f;
  }

  FFamily family() const { return family_; }
  MonotoneDirection direction() const { return direction_; }

  double eval(int t, double l) const {
    switch (family_) {
      case FFamily::Affine: {
        double a = coeff(a_, t), b = coeff(b_, t);
        return direction_ == MonotoneDirection::Decreasing ? a - b * l : a + b * l;
      }
      case FFamily::Identity: return l;
      case FFamily::Scaled: return coeff(c_, t) * l;
      case FFamily::Piecewise: return eval_piecewise(l);
    }
    return l;
  }

  /// l with f(t, l) = x; exact for every family (piecewise is inverted
  /// segment by segment).
  double inverse(int t, double x) const {
    switch (family_) {
      case FFamily::Affine: {
        double a = coeff(a_, t), b = coeff(b_, t);
        return direction_ == MonotoneDirection::Decreasing ? (a - x) / b : (x - a) / b;
      }
      case FFamily::Identity: return x;
      case FFamily::Scaled: return x / coeff(c_, t);
      case FFamily::Piecewise: return invert_piecewise(x);
    }
    return x;
  }

  /// Lower bound on |df/dl| over all times and segments.
  double min_slope() const {
    switch (family_) {
      case FFamily::Affine: {
        double m = b_.front();
        for (double b_t : b_) m = std::min(m, b_t);
        return m;
      }
      case FFamily::Identity: return 1.0;
      case FFamily::Scaled: {
        double m = c_.front();
        for (double c_t : c_) m = std::min(m, c_t);
        return m;
      }
      case FFamily::Piecewise: {
        double m = std::abs(slopes_.front());
        for (double s : slopes_) m = std::min(m, std::abs(s));
        return m;
      }
    }
    return 1.0;
  }

  /// Coefficient vectors must either broadcast (size 1) or cover 0..horizon.
  void validate_horizon(int horizon) const {
    auto check = [&](const std::vector<double>& v, const char* what) {
      if (!v.empty() && v.size() != 1 && v.size() != static_cast<std::size_t>(horizon) + 1)
        throw ConfigError(std::string(what) + " must have one value or one per time 0..N");
    };
    check(a_, "f.a");
    check(b_, "f.b");
    check(c_, "f.c");
  }

 private:
  FSpec() = default;

  static double coeff(const std::vector<double>& v, int t) {
    if (v.size() == 1) return v.front();
    return v[static_cast<std::size_t>(t)];
  }

  void build_knots() {
    knot_y_.resize(breaks_.size());
    if (breaks_.empty()) return;
    // Anchor the curve with value `offset_` at l = 0.
    // First compute values with a temporary anchor at breaks_[0], then shift.
    std::vector<double> y(breaks_.size(), 0.0);
    for (std::size_t i = 1; i < breaks_.size(); ++i)
      y[i] = y[i - 1] + slopes_[i] * (breaks_[i] - breaks_[i - 1]);
    // Value at 0 with the temporary anchor:
    double at_zero;
    if (0.0 <= breaks_.front()) {
      at_zero = y[0] + slopes_[0] * (0.0 - breaks_[0]);
    } else if (0.0 >= breaks_.back()) {
      at_zero = y.back() + slopes_.back() * (0.0 - breaks_.back());
    } else {
      std::size_t i = 0;
      while (i + 1 < breaks_.size() && breaks_[i + 1] < 0.0) ++i;
      at_zero = y[i] + slopes_[i + 1] * (0.0 - breaks_[i]);
    }
    double shift = offset_ - at_zero;
    for (std::size_t i = 0; i < breaks_.size(); ++i) knot_y_[i] = y[i] + shift;
  }

  double eval_piecewise(double l) const {
    if (breaks_.empty()) return offset_ + slopes_[0] * l;
    if (l <= breaks_.front()) return knot_y_.front() + slopes_.front() * (l - breaks_.front());
    if (l >= breaks_.back()) return knot_y_.back() + slopes_.back() * (l - breaks_.back());
    std::size_t i = 0;
    while (i + 1 < breaks_.size() && breaks_[i + 1] < l) ++i;
    return knot_y_[i] + slopes_[i + 1] * (l - breaks_[i]);
  }

  double invert_piecewise(double x) const {
    if (breaks_.empty()) return (x - offset_) / slopes_[0];
    bool inc = direction_ == MonotoneDirection::Increasing;
    auto below = [&](double yk) { return inc ? x <= yk : x >= yk; };
    auto above = [&](double yk) { return inc ? x >= yk : x <= yk; };
    if (below(knot_y_.front())) return breaks_.front() + (x - knot_y_.front()) / slopes_.front();
    if (above(knot_y_.back())) return breaks_.back() + (x - knot_y_.back()) / slopes_.back();
    std::size_t i = 0;
    while (i + 1 < knot_y_.size() && !(inc ? x <= knot_y_[i + 1] : x >= knot_y_[i + 1])) ++i;
    return breaks_[i] + (x - knot_y_[i]) / slopes_[i + 1];
  }

  FFamily family_ = FFamily::Identity;
  MonotoneDirection direction_ = MonotoneDirection::Increasing;
  std::vector<double> a_, b_, c_;
  std::vector<double> breaks_, slopes_, knot_y_;
  double offset_ = 0.0;
};

}  // namespace nlrepr
