#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tsgc/mesh.hpp"

namespace tsgc {

/// Parameters of a synthetic dental arch: a gum strip swept along a parabola
/// in the xz plane (y up) carrying 2 * num_teeth superellipse bumps. Mirrored
/// teeth share a class, so the mesh has num_teeth + 1 classes with background 0.
/// Lengths are in arbitrary units.
struct ArchSpec {
  int num_teeth = 7;
  Index cells_target = 1200;
  double arch_half_width = 32.0;   // x extent of each arm
  double arch_depth = 48.0;        // z distance from the apex to the arm ends
  double arch_jitter = 0.05;       // relative, applied to width and depth
  double strip_half_width = 6.0;
  double gum_curvature = 0.01;     // y = -c * t^2 across the strip
  double tooth_radius = 3.0;       // half extent along the arch
  double tooth_half_width = 3.6;   // half extent across the arch
  double radius_jitter = 0.1;      // relative
  double tooth_height = 5.0;
  double height_jitter = 0.15;     // relative
  double rim_fraction = 0.5;       // wall height as a fraction of tooth height
  double superellipse_power = 4.0;
  double base_gap = 1.2;
  double crowding = 0.0;           // in [0, 1]; shrinks gaps and shifts teeth sideways
  double end_margin = 2.0;         // gum left beyond the last tooth
  std::uint64_t seed = 1;

  int num_classes() const { return num_teeth + 1; }
  /// Throws GenerationError on invalid values.
  void validate() const;
};

/// Deterministic labeled mesh for `spec`. Cell count is within 10% of
/// cells_target; faces wind counter-clockwise seen from +y. Throws
/// GenerationError when the teeth do not fit the arch or a class ends up empty.
TriangleMesh generate_arch(const ArchSpec& spec);

struct ManifestEntry {
  std::filesystem::path mesh_path;   // resolved against the manifest directory
  std::filesystem::path label_path;
  std::string split;                 // "train" or "test"
  std::uint64_t seed = 0;
};

/// Tab-separated manifest, `#` comment header, one
/// `mesh_path label_path split seed` row per mesh; relative paths are
/// relative to the manifest's directory.
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::vector<ManifestEntry>& entries, const std::filesystem::path& path);

/// Per-mesh seeds of a dataset: train and test seeds are disjoint.
struct SplitSeeds {
  std::vector<std::uint64_t> train;
  std::vector<std::uint64_t> test;
};

SplitSeeds derive_split_seeds(int n_train, int n_test, std::uint64_t seed);

/// `split seed` rows, `#` comments allowed.
SplitSeeds read_split_seeds(const std::filesystem::path& path);

/// Writes `train_NNN.obj/.labels`, `test_NNN.obj/.labels` and `manifest.tsv`
/// into `out_dir`. Throws IoError if any of those files already exists.
std::vector<ManifestEntry> make_dataset(const ArchSpec& spec, const SplitSeeds& seeds,
                                        const std::filesystem::path& out_dir);
std::vector<ManifestEntry> make_dataset(const ArchSpec& spec, int n_train, int n_test, std::uint64_t seed,
                                        const std::filesystem::path& out_dir);

/// In-memory meshes of one split.
std::vector<TriangleMesh> generate_split(ArchSpec spec, const std::vector<std::uint64_t>& seeds);

/// Meshes with labels for the entries whose split equals `split`.
std::vector<TriangleMesh> load_split(const std::vector<ManifestEntry>& entries, const std::string& split);

}  // namespace tsgc
