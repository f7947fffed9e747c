#pragma once

#include <functional>
#include <vector>

#include "crackscope/dataset.hpp"
#include "crackscope/raster.hpp"
#include "crackscope/rng.hpp"

namespace crackscope {

enum class ModificationKind { SaltPepper, Hide, Blur, Desaturate };

const char* modification_name(ModificationKind kind);
ModificationKind parse_modification(const std::string& name);

// Image-degradation parameters. Draw ranges model the uncertainty a field
// camera introduces: impulse noise, partial occlusion, defocus, washed-out
// color.
struct ModificationSpec {
  ModificationKind kind = ModificationKind::SaltPepper;
  double saltPepperDensity = 0.15;
  double hideMaxFracX = 0.2;
  double hideMaxFracY = 0.2;
  double blurSigmaMax = 3.0;
  double satLow = -0.5;
  double satHigh = 1.5;

  void validate() const;
};

// Applies one seeded random modification:
//  - SaltPepper: each pixel independently hit with probability density and
//    forced to 0 or 255 (all channels together).
//  - Hide: content translated by dx ~ U(0, hideMaxFracX)*width and
//    dy ~ U(0, hideMaxFracY)*height (rounded); the vacated band is black.
//  - Blur: separable Gaussian, sigma ~ U(0, blurSigmaMax), kernel radius
//    ceil(3*sigma) normalized to sum 1, mirrored borders; sigma < 1e-6 is
//    the identity.
//  - Desaturate: out = gray + s*(orig - gray), s ~ U(satLow, satHigh); s=0 is
//    grayscale, s=1 the identity, s<0 hue inversion, s>1 oversaturation.
Raster modify(const Raster& raster, const ModificationSpec& spec, Seed seed);

using CenterPredicate = std::function<bool(const SegmentRecord&)>;

// Appends nP modified positive and nN modified negative records drawn from
// the tiles satisfying centerPredicate. Each new record gets a uniformly
// chosen kind, a fresh per-record substream, and provenance "modified:<kind>";
// labels are preserved. Modified pixels are kept in memory on the record.
DatasetManifest expand_dataset(const DatasetManifest& manifest, std::size_t nP,
                               std::size_t nN, const CenterPredicate& centerPredicate,
                               Seed seed, const ModificationSpec& params = {});

// Gaussian kernel used by Blur, exposed for verification: sums to 1.
std::vector<double> gaussian_kernel(double sigma);

}  // namespace crackscope
