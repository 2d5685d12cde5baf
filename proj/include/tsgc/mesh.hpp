#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "tsgc/tensor.hpp"

namespace tsgc {

using Vertices = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
using Faces = Eigen::Matrix<int, Eigen::Dynamic, 3, Eigen::RowMajor>;

/// Triangle soup with optional per-cell (per-face) class labels.
/// Cell index is the face's position in `faces`.
struct TriangleMesh {
  Vertices vertices;
  Faces faces;
  std::vector<int> labels;  // empty, or one per face

  Index num_vertices() const { return vertices.rows(); }
  Index num_cells() const { return faces.rows(); }
  bool has_labels() const { return !labels.empty(); }
};

/// Throws DataError on out-of-range indices, repeated face vertices,
/// non-finite coordinates or a label count that does not match the faces.
void validate(const TriangleMesh& mesh);

enum class MeshFormat { kObj, kPly };

/// Reads an obj or ascii ply file; the format is taken from the extension.
TriangleMesh load_mesh(const std::filesystem::path& path);
TriangleMesh load_mesh(const std::filesystem::path& path, MeshFormat format);

/// Writes `v`/`f` records with shortest round-trip decimal coordinates.
void save_obj(const TriangleMesh& mesh, const std::filesystem::path& path);

/// Newline-delimited integer labels, one per face.
std::vector<int> load_labels(const std::filesystem::path& path);
void save_labels(std::span<const int> labels, const std::filesystem::path& path);

struct NormalWarning {
  enum class Kind { kDegenerateFace, kUndefinedVertexNormal };
  Kind kind;
  Index index;
};

struct MeshNormals {
  Vertices face;    // M x 3, unit length
  Vertices vertex;  // V x 3, unit length
  std::vector<NormalWarning> warnings;
};

/// Face normals from the counter-clockwise cross product; vertex normals are
/// the normalized area-weighted sum of incident face normals. Zero-area faces
/// get +z and a warning record.
MeshNormals compute_normals(const TriangleMesh& mesh);

using FeatureBlock = Eigen::Matrix<double, Eigen::Dynamic, 12, Eigen::RowMajor>;

/// Per-cell network input: an M x 12 coordinate block (three vertices in face
/// order, then the centroid) and an M x 12 normal block in the same order
/// (three vertex normals, then the face normal).
struct CellFeatureMatrix {
  FeatureBlock coords;
  FeatureBlock normals;

  Index num_cells() const { return coords.rows(); }
  /// M x 24: coords block followed by normals block.
  RowMatrix<double> combined() const;
};

/// With `center`, the mean of all cell centroids is subtracted from every coordinate.
CellFeatureMatrix build_cell_features(const TriangleMesh& mesh, bool center = true);
CellFeatureMatrix build_cell_features(const TriangleMesh& mesh, const MeshNormals& normals, bool center = true);

/// Uniformly random subset of `target_cells` faces (file order preserved),
/// with vertices re-indexed compactly and labels carried along. When
/// `face_map` is given it receives the source face index of every kept face.
TriangleMesh subsample_cells(const TriangleMesh& mesh, Index target_cells, std::uint64_t seed,
                             std::vector<Index>* face_map = nullptr);

using Color = std::array<std::uint8_t, 3>;
using Palette = std::vector<Color>;

/// Distinct colors, gingiva/background first.
Palette default_palette(int num_classes);

/// Ascii ply with per-face `uchar red/green/blue` taken from `palette[class]`.
void export_colored_mesh(const TriangleMesh& mesh, std::span<const int> per_cell_class, const Palette& palette,
                         const std::filesystem::path& path);

struct ColoredMesh {
  TriangleMesh mesh;
  std::vector<Color> face_colors;
};

ColoredMesh read_colored_ply(const std::filesystem::path& path);

/// Inverse palette lookup; throws RangeError on a color not in the palette.
std::vector<int> classes_from_colors(std::span<const Color> colors, const Palette& palette);

}  // namespace tsgc
