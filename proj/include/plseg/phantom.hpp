#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "plseg/manifest.hpp"
#include "plseg/volume.hpp"

namespace plseg {

/// One synthetic CT volume holding a single axis-aligned ellipsoidal lesion.
/// Geometry is in mm, measured from the centre of voxel (0, 0, 0); all triples
/// are ordered (z, y, x) like the data axes.
struct PhantomSpec {
  std::uint64_t seed = 0;
  std::array<std::ptrdiff_t, 3> shape{28, 48, 48};
  Spacing3 spacing{2.0, 1.0, 1.0};
  std::array<double, 3> semi_axes_mm{10.0, 6.0, 6.0};
  std::array<double, 3> center_mm{27.0, 23.5, 23.5};
  double background_hu = -800.0;
  double lesion_offset_hu = 700.0;
  double texture_amplitude_hu = 100.0;
  double texture_wavelength_mm = 24.0;
  double noise_sigma_hu = 40.0;

  /// Throws InvalidArgument on non-positive axes/spacing or a lesion that
  /// does not fit inside the volume.
  void validate() const;
  friend bool operator==(const PhantomSpec&, const PhantomSpec&) = default;
};

struct Phantom {
  CtVolume volume;  // raw HU
  MaskVolume gt;
  LesionRecord record;  // recist slice = largest cross-section, ties to the lower index
};

/// True iff the voxel centre (k, i, j) lies inside the ellipsoid (boundary included).
bool inside_ellipsoid(const PhantomSpec& spec, std::ptrdiff_t k, std::ptrdiff_t i, std::ptrdiff_t j);

Phantom generate(const PhantomSpec& spec, const std::string& lesion_id = "phantom");

/// Ranges from which make_dataset draws each phantom. Uniform draws unless noted.
struct PhantomRanges {
  std::array<std::ptrdiff_t, 3> shape{28, 48, 48};
  Spacing3 spacing{2.0, 1.0, 1.0};
  std::array<double, 2> inplane_semi_axis_mm{4.5, 8.0};  // y and x drawn independently
  std::array<double, 2> axial_ratio{1.7, 2.1};            // z semi-axis / larger in-plane semi-axis
  double center_jitter_mm = 3.0;                          // around the volume centre, per axis
  PhantomSpec intensity;  // intensity fields are copied from here

  void validate() const;
  friend bool operator==(const PhantomRanges&, const PhantomRanges&) = default;
};

/// Deterministic per-item seed derived from a base seed (splitmix64).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

PhantomSpec sample_spec(const PhantomRanges& ranges, std::uint64_t seed);

struct PhantomDataset {
  std::filesystem::path train_manifest;
  std::filesystem::path test_manifest;
  std::vector<std::uint64_t> seeds;  // train then test
};

/// Writes n_train + n_test phantoms (NIfTI) plus train.jsonl / test.jsonl
/// manifests under `out_dir`. Lesion i uses derive_seed(seed, i).
PhantomDataset make_dataset(int n_train, int n_test, const PhantomRanges& ranges, std::uint64_t seed,
                            const std::filesystem::path& out_dir);

}  // namespace plseg
