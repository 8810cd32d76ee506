#include "plseg/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <set>

namespace plseg {

void PhantomSpec::validate() const {
  if (!spacing.valid()) throw InvalidArgument("phantom: spacing must be positive");
  for (int a = 0; a < 3; ++a) {
    if (shape[a] < 1) throw InvalidArgument("phantom: shape must be positive");
    if (!(semi_axes_mm[a] > 0.0)) throw InvalidArgument("phantom: semi-axes must be positive");
  }
  if (!(noise_sigma_hu >= 0.0) || !(texture_amplitude_hu >= 0.0) || !(texture_wavelength_mm > 0.0)) {
    throw InvalidArgument("phantom: invalid intensity model");
  }
  const double sp[3] = {spacing.dz, spacing.dy, spacing.dx};
  for (int a = 0; a < 3; ++a) {
    const double extent = static_cast<double>(shape[a] - 1) * sp[a];
    if (center_mm[a] - semi_axes_mm[a] < 0.0 || center_mm[a] + semi_axes_mm[a] > extent) {
      throw InvalidArgument("phantom: lesion does not fit inside the volume");
    }
  }
}

bool inside_ellipsoid(const PhantomSpec& spec, std::ptrdiff_t k, std::ptrdiff_t i, std::ptrdiff_t j) {
  const double z = (static_cast<double>(k) * spec.spacing.dz - spec.center_mm[0]) / spec.semi_axes_mm[0];
  const double y = (static_cast<double>(i) * spec.spacing.dy - spec.center_mm[1]) / spec.semi_axes_mm[1];
  const double x = (static_cast<double>(j) * spec.spacing.dx - spec.center_mm[2]) / spec.semi_axes_mm[2];
  return z * z + y * y + x * x <= 1.0;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Phantom generate(const PhantomSpec& spec, const std::string& lesion_id) {
  spec.validate();
  const auto [ns, nr, nc] = spec.shape;
  Phantom ph;
  ph.volume.spacing = spec.spacing;
  ph.volume.domain = IntensityDomain::RawHu;
  ph.volume.voxels = Volume<float>(ns, nr, nc);
  ph.gt = MaskVolume(ns, nr, nc);

  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  // Two random plane waves; their mean stays within +-amplitude.
  struct Wave {
    double kz, ky, kx, phase;
  };
  Wave waves[2];
  for (auto& w : waves) {
    const double theta = std::acos(2.0 * unit(rng) - 1.0);
    const double phi = 2.0 * std::numbers::pi * unit(rng);
    const double k = 2.0 * std::numbers::pi / spec.texture_wavelength_mm;
    w = {k * std::cos(theta), k * std::sin(theta) * std::sin(phi), k * std::sin(theta) * std::cos(phi),
         2.0 * std::numbers::pi * unit(rng)};
  }

  for (std::ptrdiff_t k = 0; k < ns; ++k) {
    const double z = static_cast<double>(k) * spec.spacing.dz;
    for (std::ptrdiff_t i = 0; i < nr; ++i) {
      const double y = static_cast<double>(i) * spec.spacing.dy;
      for (std::ptrdiff_t j = 0; j < nc; ++j) {
        const double x = static_cast<double>(j) * spec.spacing.dx;
        double hu = spec.background_hu;
        double tex = 0.0;
        for (const auto& w : waves) tex += 0.5 * std::sin(w.kz * z + w.ky * y + w.kx * x + w.phase);
        hu += spec.texture_amplitude_hu * tex;
        if (inside_ellipsoid(spec, k, i, j)) {
          ph.gt(k, i, j) = 1;
          hu += spec.lesion_offset_hu;
        }
        hu += spec.noise_sigma_hu * normal(rng);
        ph.volume.voxels(k, i, j) = static_cast<float>(hu);
      }
    }
  }

  std::ptrdiff_t best = -1;
  std::ptrdiff_t best_area = 0;
  for (std::ptrdiff_t k = 0; k < ns; ++k) {
    const std::ptrdiff_t area = (ph.gt.slice(k) != 0).count();
    if (area > best_area) {
      best_area = area;
      best = k;
    }
  }
  if (best < 0) throw InvalidArgument("phantom: lesion covers no voxel centre");
  ph.record.id = lesion_id;
  ph.record.recist_slice = best;
  ph.record.recist_mask = ph.gt.slice(best);
  ph.record.gt_volume_mask = ph.gt;
  return ph;
}

void PhantomRanges::validate() const {
  if (!spacing.valid()) throw InvalidArgument("phantom ranges: spacing must be positive");
  if (!(inplane_semi_axis_mm[0] > 0.0) || inplane_semi_axis_mm[1] < inplane_semi_axis_mm[0]) {
    throw InvalidArgument("phantom ranges: invalid in-plane semi-axis range");
  }
  if (!(axial_ratio[0] > 0.0) || axial_ratio[1] < axial_ratio[0]) {
    throw InvalidArgument("phantom ranges: invalid axial ratio range");
  }
  if (center_jitter_mm < 0.0) throw InvalidArgument("phantom ranges: negative centre jitter");
}

PhantomSpec sample_spec(const PhantomRanges& ranges, std::uint64_t seed) {
  ranges.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto draw = [&](const std::array<double, 2>& r) { return r[0] + (r[1] - r[0]) * unit(rng); };

  PhantomSpec spec = ranges.intensity;
  spec.seed = derive_seed(seed, 0);
  spec.shape = ranges.shape;
  spec.spacing = ranges.spacing;
  const double ay = draw(ranges.inplane_semi_axis_mm);
  const double ax = draw(ranges.inplane_semi_axis_mm);
  const double az = std::max(ay, ax) * draw(ranges.axial_ratio);
  spec.semi_axes_mm = {az, ay, ax};
  const double sp[3] = {ranges.spacing.dz, ranges.spacing.dy, ranges.spacing.dx};
  for (int a = 0; a < 3; ++a) {
    const double extent = static_cast<double>(ranges.shape[a] - 1) * sp[a];
    const double lo = spec.semi_axes_mm[a];
    const double hi = extent - spec.semi_axes_mm[a];
    if (hi < lo) throw InvalidArgument("phantom ranges: lesion cannot fit inside the volume");
    const double c = 0.5 * extent + ranges.center_jitter_mm * (2.0 * unit(rng) - 1.0);
    spec.center_mm[a] = std::clamp(c, lo, hi);
  }
  spec.validate();
  return spec;
}

PhantomDataset make_dataset(int n_train, int n_test, const PhantomRanges& ranges, std::uint64_t seed,
                            const std::filesystem::path& out_dir) {
  if (n_train < 0 || n_test < 0) throw InvalidArgument("make_dataset: counts must be non-negative");
  PhantomDataset ds;
  ds.train_manifest = out_dir / "train.jsonl";
  ds.test_manifest = out_dir / "test.jsonl";
  std::vector<ManifestEntry> train, test;
  std::set<std::uint64_t> unique;
  for (int n = 0; n < n_train + n_test; ++n) {
    const bool is_train = n < n_train;
    const std::uint64_t s = derive_seed(seed, static_cast<std::uint64_t>(n));
    if (!unique.insert(s).second) throw InvalidArgument("make_dataset: seed collision");
    ds.seeds.push_back(s);

    char name[32];
    std::snprintf(name, sizeof name, "phantom_%03d", n);
    const std::filesystem::path dir = out_dir / (is_train ? "train" : "test");
    std::filesystem::create_directories(dir);
    const Phantom ph = generate(sample_spec(ranges, s), name);
    const std::string stem = name;
    save_volume(ph.volume, dir / (stem + "_ct.nii"));
    save_mask(ph.gt, ph.volume.spacing, dir / (stem + "_gt.nii"));
    save_mask2d(ph.record.recist_mask, ph.volume.spacing, dir / (stem + "_recist.nii"));

    ManifestEntry e;
    e.id = name;
    e.volume = dir / (stem + "_ct.nii");
    e.recist_slice = ph.record.recist_slice;
    e.recist_mask = dir / (stem + "_recist.nii");
    e.gt_mask = dir / (stem + "_gt.nii");
    (is_train ? train : test).push_back(std::move(e));
  }
  write_manifest(ds.train_manifest, train);
  write_manifest(ds.test_manifest, test);
  return ds;
}

}  // namespace plseg
