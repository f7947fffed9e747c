#include "crackscope/micromech.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "crackscope/error.hpp"

namespace crackscope {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct BreakpointFit {
  double e1 = 0.0, e2 = 0.0;
  double amplitude = 0.0;
  double ssRes = 0.0;
};

// Least-squares amplitude for fixed breakpoints: the model is amplitude *
// phi(strain) with phi the clamped ramp, so A = sum(cd*phi)/sum(phi^2).
BreakpointFit evaluate_breakpoints(const std::vector<double>& s, const std::vector<double>& cd,
                                   double e1, double e2) {
  BreakpointFit fit;
  fit.e1 = e1;
  fit.e2 = e2;
  double sPhiCd = 0.0, sPhi2 = 0.0;
  const double span = e2 - e1;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double phi = std::clamp((s[i] - e1) / span, 0.0, 1.0);
    sPhiCd += phi * cd[i];
    sPhi2 += phi * phi;
  }
  fit.amplitude = sPhi2 > 0.0 ? sPhiCd / sPhi2 : 0.0;
  double ss = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double phi = std::clamp((s[i] - e1) / span, 0.0, 1.0);
    const double r = cd[i] - fit.amplitude * phi;
    ss += r * r;
  }
  fit.ssRes = ss;
  return fit;
}

bool better(const BreakpointFit& a, const BreakpointFit& b) {
  if (a.ssRes != b.ssRes) return a.ssRes < b.ssRes;
  if (a.e1 != b.e1) return a.e1 < b.e1;
  return a.e2 < b.e2;
}

}  // namespace

void MicromechParams::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0)) throw DataError(std::string(name) + " must be strictly positive");
  };
  positive(fiberLengthMm, "fiberLengthMm");
  positive(fiberRadiusMm, "fiberRadiusMm");
  positive(fiberVolFrac, "fiberVolFrac");
  positive(matrixVolFrac, "matrixVolFrac");
  positive(matrixModulusGpa, "matrixModulusGpa");
  positive(matrixFailStrain, "matrixFailStrain");
  positive(bondStrengthMpa, "bondStrengthMpa");
  if (!(snubbingCoeff >= 0.0)) throw DataError("snubbingCoeff must be >= 0");
  if (fiberVolFrac + matrixVolFrac > 1.0 + 1e-9)
    throw DataError("volume fractions exceed 1");
}

TheoryOutputs theory_outputs(const MicromechParams& p, bool exponentialSnubbing) {
  p.validate();
  TheoryOutputs out;
  const double f = p.snubbingCoeff;
  out.snubbingFactor = exponentialSnubbing
                           ? 2.0 * (1.0 + std::exp(kPi * f / 2.0)) / (4.0 + f * f)
                           : 2.0 * (kPi * f / 2.0 + 1.0) / (4.0 + f * f);
  out.lambda = 4.0 / (kPi * out.snubbingFactor);
  // E_m enters in MPa so the stress units cancel against tau_eff.
  out.transferDistanceMm = p.matrixVolFrac * (p.matrixModulusGpa * 1000.0) *
                           p.matrixFailStrain * p.fiberRadiusMm /
                           (p.fiberVolFrac * 2.0 * p.bondStrengthMpa);
  const double lf = p.fiberLengthMm;
  const double disc = lf * lf - 2.0 * kPi * lf * out.lambda * out.transferDistanceMm;
  if (disc < 0.0) {
    char buf[96];
    std::snprintf(buf, sizeof buf,
                  "saturation condition violated (transfer distance x = %.6g mm)",
                  out.transferDistanceMm);
    throw NumericError(buf);
  }
  out.crackSpacingMinMm = (lf - std::sqrt(disc)) / 2.0;
  out.cdMaxPerM = 1000.0 / (2.0 * out.crackSpacingMinMm);
  return out;
}

double strain_from_cracks(double crackCount, double gaugeLengthM, double avgOpeningMm,
                          std::optional<double> elasticStrain) {
  if (!(gaugeLengthM > 0.0)) throw DataError("gauge length must be positive");
  if (crackCount < 0.0) throw DataError("crack count must be >= 0");
  const double fromCracks = crackCount / gaugeLengthM * (avgOpeningMm / 1000.0);
  return fromCracks + elasticStrain.value_or(0.0);
}

TrilinearParams fit_trilinear(const std::vector<double>& strains,
                              const std::vector<double>& cds) {
  if (strains.size() != cds.size()) throw DataError("fit_trilinear: length mismatch");
  if (strains.size() < 6) throw DataError("fit_trilinear: need at least 6 points");
  for (std::size_t i = 1; i < strains.size(); ++i)
    if (strains[i] < strains[i - 1])
      throw DataError("fit_trilinear: strains must be non-decreasing");

  const double sMin = strains.front();
  const double sMax = strains.back();
  double cdMean = 0.0;
  for (double v : cds) cdMean += v;
  cdMean /= static_cast<double>(cds.size());
  double ssTot = 0.0;
  for (double v : cds) ssTot += (v - cdMean) * (v - cdMean);

  if (ssTot == 0.0 || sMax <= sMin) {
    TrilinearParams flat;
    flat.firstCrackStrain = sMin;
    flat.saturationStrain = sMax > sMin ? sMax : sMin + 1.0;
    flat.cdMax = cds.front();
    return flat;  // R^2 undefined at zero variance
  }

  const double span = sMax - sMin;
  BreakpointFit best;
  best.ssRes = std::numeric_limits<double>::infinity();
  constexpr int kCoarse = 50;
  const double coarseStep = span / (kCoarse - 1);
  for (int i = 0; i < kCoarse; ++i)
    for (int j = i + 1; j < kCoarse; ++j) {
      const BreakpointFit fit =
          evaluate_breakpoints(strains, cds, sMin + i * coarseStep, sMin + j * coarseStep);
      if (better(fit, best)) best = fit;
    }

  // Tenfold refinements around the best cell until the grid resolves the
  // breakpoints far below a data-strain spacing.
  double step = coarseStep;
  constexpr int kRefinements = 6;
  for (int stage = 0; stage < kRefinements; ++stage) {
    const double fine = step / 10.0;
    const double lo1 = std::max(sMin, best.e1 - step);
    const double hi1 = std::min(sMax, best.e1 + step);
    const double lo2 = std::max(sMin, best.e2 - step);
    const double hi2 = std::min(sMax, best.e2 + step);
    for (double e1 = lo1; e1 <= hi1 + fine * 0.5; e1 += fine)
      for (double e2 = std::max(lo2, e1 + fine); e2 <= hi2 + fine * 0.5; e2 += fine) {
        const BreakpointFit fit = evaluate_breakpoints(strains, cds, e1, e2);
        if (better(fit, best)) best = fit;
      }
    step = fine;
  }

  TrilinearParams out;
  out.firstCrackStrain = best.e1;
  out.saturationStrain = best.e2;
  out.cdMax = best.amplitude;
  out.rSquared = 1.0 - best.ssRes / ssTot;
  return out;
}

double trilinear_value(const TrilinearParams& p, double strain) {
  if (strain <= p.firstCrackStrain) return 0.0;
  if (strain >= p.saturationStrain) return p.cdMax;
  return p.cdMax * (strain - p.firstCrackStrain) /
         (p.saturationStrain - p.firstCrackStrain);
}

ConstantAcwFit fit_constant_acw(const std::vector<double>& strains,
                                const std::vector<double>& acwUm, double windowLo,
                                double windowHi) {
  if (strains.size() != acwUm.size()) throw DataError("fit_constant_acw: length mismatch");
  if (!(windowLo < windowHi)) throw DataError("fit_constant_acw: empty strain window");
  std::vector<double> inWindow;
  for (std::size_t i = 0; i < strains.size(); ++i)
    if (strains[i] >= windowLo && strains[i] <= windowHi) inWindow.push_back(acwUm[i]);
  if (inWindow.size() < 3)
    throw DataError("fit_constant_acw: need at least 3 points inside the window, have " +
                    std::to_string(inWindow.size()));

  ConstantAcwFit fit;
  fit.windowLo = windowLo;
  fit.windowHi = windowHi;
  double mean = 0.0;
  for (double v : inWindow) mean += v;
  mean /= static_cast<double>(inWindow.size());
  fit.acwConstantUm = mean;
  double ss = 0.0;
  for (double v : inWindow) ss += (v - mean) * (v - mean);
  if (ss > 0.0) fit.rSquared = 0.0;  // the mean is the model; residual == total
  return fit;
}

std::vector<double> normalize_strain(const std::vector<double>& strains,
                                     double saturationStrain) {
  if (!(saturationStrain > 0.0)) throw DataError("normalize_strain: saturation strain must be > 0");
  std::vector<double> out(strains.size());
  for (std::size_t i = 0; i < strains.size(); ++i) out[i] = strains[i] / saturationStrain;
  return out;
}

DamageRatio damage_ratio(double cdObserved, double cdMax) {
  if (!(cdMax > 0.0)) throw DataError("damage_ratio: cdMax must be positive");
  DamageRatio out;
  out.ratio = cdObserved / cdMax;
  out.failureCriterionReached = out.ratio >= 1.0;
  return out;
}

std::string format_theory_text(const TheoryOutputs& t) {
  char buf[192];
  std::snprintf(buf, sizeof buf,
                "g: %.10g\nlambda: %.10g\nx_mm: %.10g\nxprime_mm: %.10g\ncdmax_per_m: %.10g\n",
                t.snubbingFactor, t.lambda, t.transferDistanceMm, t.crackSpacingMinMm,
                t.cdMaxPerM);
  return buf;
}

std::string format_trilinear_json(const TrilinearParams& p) {
  char buf[256];
  if (p.rSquared)
    std::snprintf(buf, sizeof buf,
                  "{\n  \"first_crack_strain\": %.17g,\n  \"saturation_strain\": %.17g,\n"
                  "  \"cd_max_per_m\": %.17g,\n  \"r_squared\": %.17g\n}\n",
                  p.firstCrackStrain, p.saturationStrain, p.cdMax, *p.rSquared);
  else
    std::snprintf(buf, sizeof buf,
                  "{\n  \"first_crack_strain\": %.17g,\n  \"saturation_strain\": %.17g,\n"
                  "  \"cd_max_per_m\": %.17g,\n  \"r_squared\": null\n}\n",
                  p.firstCrackStrain, p.saturationStrain, p.cdMax);
  return buf;
}

std::string format_acw_json(const ConstantAcwFit& f) {
  char buf[256];
  if (f.rSquared)
    std::snprintf(buf, sizeof buf,
                  "{\n  \"acw_um\": %.17g,\n  \"window\": [%.17g, %.17g],\n"
                  "  \"r_squared\": %.17g\n}\n",
                  f.acwConstantUm, f.windowLo, f.windowHi, *f.rSquared);
  else
    std::snprintf(buf, sizeof buf,
                  "{\n  \"acw_um\": %.17g,\n  \"window\": [%.17g, %.17g],\n"
                  "  \"r_squared\": null\n}\n",
                  f.acwConstantUm, f.windowLo, f.windowHi);
  return buf;
}

}  // namespace crackscope
