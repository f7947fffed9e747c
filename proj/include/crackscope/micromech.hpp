#pragma once

#include <optional>
#include <string>
#include <vector>

#include "crackscope/rng.hpp"

namespace crackscope {

// Fiber/matrix constants in a fixed unit regime: lengths mm, moduli GPa,
// bond strength MPa, fractions and strains dimensionless.
struct MicromechParams {
  double fiberLengthMm = 0.0;      // L_f
  double fiberRadiusMm = 0.0;      // r_f
  double fiberVolFrac = 0.0;       // V_f
  double matrixVolFrac = 0.0;      // V_m
  double matrixModulusGpa = 0.0;   // E_m
  double matrixFailStrain = 0.0;   // eps_mu
  double bondStrengthMpa = 0.0;    // tau_eff
  double snubbingCoeff = 0.0;      // f (>= 0)

  void validate() const;
};

struct TheoryOutputs {
  double snubbingFactor = 0.0;      // g
  double lambda = 0.0;              // 4 / (pi g)
  double transferDistanceMm = 0.0;  // x
  double crackSpacingMinMm = 0.0;   // x'; spacing saturates in [x', 2x']
  double cdMaxPerM = 0.0;           // 1 / (2 x'), converted to 1/m
};

// Saturation crack spacing from fiber-bridging theory:
//   g = 2 (pi f / 2 + 1) / (4 + f^2),   lambda = 4 / (pi g),
//   x = V_m E_m eps_mu r_f / (V_f 2 tau_eff)   [E_m converted GPa -> MPa],
//   x' = (L_f - sqrt(L_f^2 - 2 pi L_f lambda x)) / 2.
// A negative discriminant means the mix cannot saturate; that is rejected
// with a NumericError naming the offending x. exponentialSnubbing switches
// g to the alternate form 2 (1 + e^{pi f/2}) / (4 + f^2).
TheoryOutputs theory_outputs(const MicromechParams& p, bool exponentialSnubbing = false);

// Strain carried by crack openings: (N / L) * avg(c), openings in mm and L in
// meters, plus the elastic term when supplied.
double strain_from_cracks(double crackCount, double gaugeLengthM, double avgOpeningMm,
                          std::optional<double> elasticStrain = std::nullopt);

struct TrilinearParams {
  double firstCrackStrain = 0.0;  // breakpoint where cracking starts
  double saturationStrain = 0.0;  // breakpoint where CD plateaus
  double cdMax = 0.0;             // plateau value, 1/m
  std::optional<double> rSquared;
};

// Continuous trilinear model: 0 below the first breakpoint, linear ramp to
// cdMax at the second, constant after. Breakpoints come from a deterministic
// coarse 50x50 grid over the strain range followed by tenfold refinements
// around the best cell; cdMax is the closed-form least-squares amplitude for
// each breakpoint pair. All-equal cd values return the degenerate fit
// (breakpoints at the range ends, R^2 absent).
TrilinearParams fit_trilinear(const std::vector<double>& strains,
                              const std::vector<double>& cds);

double trilinear_value(const TrilinearParams& p, double strain);

struct ConstantAcwFit {
  double acwConstantUm = 0.0;
  double windowLo = 0.0, windowHi = 0.0;
  std::optional<double> rSquared;  // absent when the window has zero variance
};

// Least-squares constant (the mean) over points whose strain falls in
// [windowLo, windowHi]; needs at least 3 such points.
ConstantAcwFit fit_constant_acw(const std::vector<double>& strains,
                                const std::vector<double>& acwUm, double windowLo,
                                double windowHi);

// Divides the strain column by the saturation strain so the CD plateau is
// reached at normalized strain 1.
std::vector<double> normalize_strain(const std::vector<double>& strains,
                                     double saturationStrain);

struct DamageRatio {
  double ratio = 0.0;
  bool failureCriterionReached = false;  // ratio >= 1
};

DamageRatio damage_ratio(double cdObserved, double cdMax);

std::string format_theory_text(const TheoryOutputs& t);
std::string format_trilinear_json(const TrilinearParams& p);
std::string format_acw_json(const ConstantAcwFit& f);

}  // namespace crackscope
