#include "steinflow/schedule.hpp"

#include <cmath>

#include "steinflow/lattice.hpp"

namespace steinflow {

std::string LatticeShape::str() const {
  return "[" + std::to_string(h) + "," + std::to_string(w) + "," + std::to_string(n) + "," +
         std::to_string(c) + "]";
}

LatticeField concat_frames(const LatticeField& a, const LatticeField& b) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (sa.h != sb.h || sa.w != sb.w || sa.c != sb.c) {
    throw ContractViolation("concat_frames: " + sa.str() + " vs " + sb.str());
  }
  LatticeField out(sa.with_frames(sa.n + sb.n));
  out.set_frames(0, a);
  out.set_frames(sa.n, b);
  return out;
}

ScheduleKind parse_schedule_kind(std::string_view name) {
  if (name == "rectified_linear") return ScheduleKind::rectified_linear;
  if (name == "variance_preserving") return ScheduleKind::variance_preserving;
  throw DomainError("unknown schedule kind '" + std::string(name) + "'");
}

std::string_view to_string(ScheduleKind kind) {
  return kind == ScheduleKind::rectified_linear ? "rectified_linear" : "variance_preserving";
}

LadderMapping parse_ladder_mapping(std::string_view name) {
  if (name == "uniform") return LadderMapping::uniform;
  if (name == "plus_one") return LadderMapping::plus_one;
  throw DomainError("unknown ladder mapping '" + std::string(name) + "'");
}

std::string_view to_string(LadderMapping mapping) {
  return mapping == LadderMapping::uniform ? "uniform" : "plus_one";
}

AnnealLadder::AnnealLadder(int steps, double eps_clamp, LadderMapping mapping)
    : steps_(steps), eps_(eps_clamp), mapping_(mapping) {
  if (steps < 1) throw DomainError("annealing length must be positive");
  if (!(eps_clamp > 0 && eps_clamp < 0.5)) throw DomainError("eps_clamp must lie in (0, 0.5)");
  if (mapping == LadderMapping::plus_one && steps > 1 &&
      double(steps - 1) / double(steps + 1) >= 1.0 - eps_clamp) {
    throw DomainError("plus_one ladder is not strictly decreasing for T=" + std::to_string(steps));
  }
}

double AnnealLadder::tau(int t) const {
  if (t < 0 || t > steps_) {
    throw DomainError("ladder index " + std::to_string(t) + " outside 0.." + std::to_string(steps_));
  }
  if (mapping_ == LadderMapping::uniform) {
    return (1.0 - eps_) * double(steps_ - t) / double(steps_);
  }
  if (t == 0) return 1.0 - eps_;
  return double(steps_ - t) / double(steps_ + 1);
}

double AnnealLadder::step(int t) const {
  if (t < 1 || t > steps_) throw DomainError("ladder step index " + std::to_string(t) + " outside 1..T");
  return tau(t - 1) - tau(t);
}

}  // namespace steinflow
