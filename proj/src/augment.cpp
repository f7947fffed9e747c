#include "crackscope/augment.hpp"

#include <algorithm>
#include <cmath>

#include "crackscope/error.hpp"

namespace crackscope {

namespace {

Raster salt_pepper(const Raster& in, double density, Rng& rng) {
  Raster out = in;
  const std::size_t pixels = static_cast<std::size_t>(in.width) * in.height;
  for (std::size_t i = 0; i < pixels; ++i) {
    if (rng.next_unit() >= density) continue;
    const std::uint8_t v = rng.next_bool() ? 255 : 0;
    for (int c = 0; c < in.channels; ++c) out.samples[i * in.channels + c] = v;
  }
  return out;
}

Raster hide(const Raster& in, double maxFracX, double maxFracY, Rng& rng) {
  const int dx = round_half_up(rng.next_range(0.0, maxFracX) * in.width);
  const int dy = round_half_up(rng.next_range(0.0, maxFracY) * in.height);
  Raster out(in.width, in.height, in.channels);
  for (int y = dy; y < in.height; ++y)
    for (int x = dx; x < in.width; ++x)
      for (int c = 0; c < in.channels; ++c) out.at(x, y, c) = in.at(x - dx, y - dy, c);
  return out;
}

int mirror_index(int i, int n) {
  if (i < 0) i = -i - 1;
  if (i >= n) i = 2 * n - 1 - i;
  return std::clamp(i, 0, n - 1);
}

Raster blur(const Raster& in, double sigmaMax, Rng& rng) {
  const double sigma = rng.next_range(0.0, sigmaMax);
  if (sigma < 1e-6) return in;
  const std::vector<double> kernel = gaussian_kernel(sigma);
  const int radius = static_cast<int>(kernel.size() / 2);

  // Horizontal then vertical pass; intermediate kept in doubles so only the
  // final result is quantized.
  std::vector<double> tmp(in.sample_count());
  for (int y = 0; y < in.height; ++y)
    for (int x = 0; x < in.width; ++x)
      for (int c = 0; c < in.channels; ++c) {
        double acc = 0.0;
        for (int k = -radius; k <= radius; ++k)
          acc += kernel[k + radius] * in.at(mirror_index(x + k, in.width), y, c);
        tmp[(static_cast<std::size_t>(y) * in.width + x) * in.channels + c] = acc;
      }
  Raster out(in.width, in.height, in.channels);
  for (int y = 0; y < in.height; ++y)
    for (int x = 0; x < in.width; ++x)
      for (int c = 0; c < in.channels; ++c) {
        double acc = 0.0;
        for (int k = -radius; k <= radius; ++k) {
          const int yy = mirror_index(y + k, in.height);
          acc += kernel[k + radius] *
                 tmp[(static_cast<std::size_t>(yy) * in.width + x) * in.channels + c];
        }
        out.at(x, y, c) = clamp_u8(acc);
      }
  return out;
}

Raster desaturate(const Raster& in, double satLow, double satHigh, Rng& rng) {
  if (in.channels != 3) throw DataError("Desaturate requires a 3-channel raster");
  const double s = rng.next_range(satLow, satHigh);
  const Raster gray = to_grayscale(in);
  Raster out(in.width, in.height, 3);
  const std::size_t pixels = static_cast<std::size_t>(in.width) * in.height;
  for (std::size_t i = 0; i < pixels; ++i) {
    const double g = gray.samples[i];
    for (int c = 0; c < 3; ++c)
      out.samples[3 * i + c] = clamp_u8(g + s * (in.samples[3 * i + c] - g));
  }
  return out;
}

}  // namespace

const char* modification_name(ModificationKind kind) {
  switch (kind) {
    case ModificationKind::SaltPepper: return "SaltPepper";
    case ModificationKind::Hide: return "Hide";
    case ModificationKind::Blur: return "Blur";
    case ModificationKind::Desaturate: return "Desaturate";
  }
  return "?";
}

ModificationKind parse_modification(const std::string& name) {
  if (name == "SaltPepper") return ModificationKind::SaltPepper;
  if (name == "Hide") return ModificationKind::Hide;
  if (name == "Blur") return ModificationKind::Blur;
  if (name == "Desaturate") return ModificationKind::Desaturate;
  throw DataError("unknown modification kind '" + name + "'");
}

void ModificationSpec::validate() const {
  if (!(saltPepperDensity >= 0.0 && saltPepperDensity <= 1.0))
    throw DataError("saltPepperDensity must be in [0, 1]");
  if (!(hideMaxFracX >= 0.0 && hideMaxFracX < 1.0) ||
      !(hideMaxFracY >= 0.0 && hideMaxFracY < 1.0))
    throw DataError("hideMaxFrac must be in [0, 1)");
  if (!(blurSigmaMax >= 0.0)) throw DataError("blurSigmaMax must be >= 0");
  if (!(satLow <= satHigh)) throw DataError("satLow must be <= satHigh");
}

std::vector<double> gaussian_kernel(double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  double sum = 0.0;
  for (int k = -radius; k <= radius; ++k) {
    const double w = std::exp(-0.5 * (k / sigma) * (k / sigma));
    kernel[k + radius] = w;
    sum += w;
  }
  for (double& w : kernel) w /= sum;
  return kernel;
}

Raster modify(const Raster& raster, const ModificationSpec& spec, Seed seed) {
  spec.validate();
  Rng rng(seed);
  switch (spec.kind) {
    case ModificationKind::SaltPepper:
      return salt_pepper(raster, spec.saltPepperDensity, rng);
    case ModificationKind::Hide:
      return hide(raster, spec.hideMaxFracX, spec.hideMaxFracY, rng);
    case ModificationKind::Blur:
      return blur(raster, spec.blurSigmaMax, rng);
    case ModificationKind::Desaturate:
      return desaturate(raster, spec.satLow, spec.satHigh, rng);
  }
  throw DataError("unknown modification kind");
}

DatasetManifest expand_dataset(const DatasetManifest& manifest, std::size_t nP,
                               std::size_t nN, const CenterPredicate& centerPredicate,
                               Seed seed, const ModificationSpec& params) {
  std::vector<std::size_t> eligibleP, eligibleN;
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    const auto& rec = manifest.records[i];
    if (centerPredicate && !centerPredicate(rec)) continue;
    (rec.label == Label::P ? eligibleP : eligibleN).push_back(i);
  }
  if (eligibleP.size() < nP)
    throw DataError("expand_dataset: need " + std::to_string(nP) + " eligible P tiles, have " +
                    std::to_string(eligibleP.size()));
  if (eligibleN.size() < nN)
    throw DataError("expand_dataset: need " + std::to_string(nN) + " eligible N tiles, have " +
                    std::to_string(eligibleN.size()));

  Rng master(seed);
  auto pick = [&](std::vector<std::size_t>& idx, std::size_t n) {
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[master.next_below(i)]);
    idx.resize(n);
    std::sort(idx.begin(), idx.end());
  };
  pick(eligibleP, nP);
  pick(eligibleN, nN);

  DatasetManifest out = manifest;
  std::size_t recordSerial = 0;
  static const ModificationKind kinds[4] = {ModificationKind::SaltPepper, ModificationKind::Hide,
                                            ModificationKind::Blur, ModificationKind::Desaturate};
  auto append_modified = [&](const std::vector<std::size_t>& idx) {
    for (std::size_t i : idx) {
      Rng sub = master.fork(recordSerial++);
      ModificationSpec spec = params;
      spec.kind = kinds[sub.next_below(4)];
      // Desaturation needs color; grayscale tiles fall back to a kind that
      // is defined for them.
      const SegmentRecord& base = manifest.records[i];
      Raster tile = resolve_tile(base, manifest.window);
      if (spec.kind == ModificationKind::Desaturate && tile.channels == 1)
        spec.kind = kinds[sub.next_below(3)];
      SegmentRecord rec = base;
      rec.pixels = std::make_shared<Raster>(modify(tile, spec, Seed{sub.next_u64()}));
      rec.path.clear();
      rec.row = rec.col = -1;
      rec.provenance = std::string("modified:") + modification_name(spec.kind);
      out.records.push_back(std::move(rec));
    }
  };
  append_modified(eligibleP);
  append_modified(eligibleN);
  return out;
}

}  // namespace crackscope
