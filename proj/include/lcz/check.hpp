#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace lcz::check {

struct CaseResult {
  std::string name;
  double max_error = 0.0;  // max relative error over all probe points
};

struct GradientSuite {
  std::vector<CaseResult> cases;
  double max_error = 0.0;
};

/// Finite-difference checks of every autodiff primitive and of the VAE
/// (both architectures) and regressor losses, `points` random points each.
/// stop_gradient is checked by asserting that no adjoint crosses it.
GradientSuite gradient_suite(std::uint64_t seed, std::size_t points = 10, double h = 1e-5);

struct StepSuite {
  std::size_t cases = 0;
  double max_constraint_error = 0.0;  // |Δc·g − Δt| / |Δt|
  double max_alignment_error = 0.0;   // 1 − |cos(Δc, g)|
  std::size_t sign_mismatches = 0;    // sign(cos) ≠ sign(Δt)
  std::size_t norm_cases = 0;
  std::size_t norm_violations = 0;  // alternatives not longer than Δc
};

/// Properties of the minimum-norm latent step on random (g, Δt):
/// exactness and alignment on `cases` draws; minimality against
/// `alternatives` random constraint-satisfying steps on `norm_cases` draws.
StepSuite step_suite(std::uint64_t seed, std::size_t cases = 1000, std::size_t norm_cases = 100,
                     std::size_t alternatives = 100);

}  // namespace lcz::check
