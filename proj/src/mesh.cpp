#include "tsgc/mesh.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "tsgc/errors.hpp"
#include "tsgc/random.hpp"

namespace tsgc {

namespace {

std::string format_double(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

double parse_double(const std::string& token, const std::filesystem::path& path, std::size_t line) {
  double v = 0.0;
  auto [end, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (ec != std::errc() || end != token.data() + token.size()) {
    throw ParseError(path.string() + ":" + std::to_string(line) + ": cannot parse number '" + token + "'");
  }
  if (!std::isfinite(v)) {
    throw ParseError(path.string() + ":" + std::to_string(line) + ": non-finite coordinate '" + token + "'");
  }
  return v;
}

long parse_int(const std::string& token, const std::filesystem::path& path, std::size_t line) {
  long v = 0;
  auto [end, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (ec != std::errc() || end != token.data() + token.size()) {
    throw ParseError(path.string() + ":" + std::to_string(line) + ": cannot parse integer '" + token + "'");
  }
  return v;
}

std::vector<std::string> split_ws(const std::string& line) {
  std::istringstream is(line);
  std::vector<std::string> out;
  for (std::string tok; is >> tok;) out.push_back(tok);
  return out;
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

TriangleMesh assemble(std::vector<Eigen::Vector3d>& verts, std::vector<Eigen::Vector3i>& faces) {
  TriangleMesh mesh;
  mesh.vertices.resize(static_cast<Index>(verts.size()), 3);
  for (std::size_t i = 0; i < verts.size(); ++i) mesh.vertices.row(static_cast<Index>(i)) = verts[i].transpose();
  mesh.faces.resize(static_cast<Index>(faces.size()), 3);
  for (std::size_t i = 0; i < faces.size(); ++i) mesh.faces.row(static_cast<Index>(i)) = faces[i].transpose();
  return mesh;
}

TriangleMesh read_obj(const std::filesystem::path& path) {
  std::ifstream in = open_input(path);
  std::vector<Eigen::Vector3d> verts;
  std::vector<Eigen::Vector3i> faces;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto tokens = split_ws(line);
    if (tokens.empty() || tokens[0][0] == '#') continue;
    if (tokens[0] == "v") {
      if (tokens.size() < 4) throw FormatError(path.string() + ":" + std::to_string(line_no) + ": short vertex");
      verts.emplace_back(parse_double(tokens[1], path, line_no), parse_double(tokens[2], path, line_no),
                         parse_double(tokens[3], path, line_no));
    } else if (tokens[0] == "f") {
      if (tokens.size() != 4) {
        throw FormatError(path.string() + ":" + std::to_string(line_no) + ": face with " +
                          std::to_string(tokens.size() - 1) + " vertices; only triangles are accepted");
      }
      Eigen::Vector3i f;
      for (int k = 0; k < 3; ++k) {
        const std::string& tok = tokens[static_cast<std::size_t>(k + 1)];
        const long idx = parse_int(tok.substr(0, tok.find('/')), path, line_no);
        const long resolved = idx < 0 ? static_cast<long>(verts.size()) + idx : idx - 1;
        if (idx == 0 || resolved < 0 || resolved >= static_cast<long>(verts.size())) {
          throw FormatError(path.string() + ":" + std::to_string(line_no) + ": vertex index " + tok +
                            " out of range");
        }
        f[k] = static_cast<int>(resolved);
      }
      faces.push_back(f);
    }
  }
  return assemble(verts, faces);
}

struct PlyProperty {
  std::string name;
  bool is_list = false;
};

struct PlyElement {
  std::string name;
  long count = 0;
  std::vector<PlyProperty> properties;
};

ColoredMesh read_ply(const std::filesystem::path& path) {
  std::ifstream in = open_input(path);
  std::string line;
  std::size_t line_no = 0;
  auto next_line = [&]() -> bool {
    if (!std::getline(in, line)) return false;
    ++line_no;
    return true;
  };
  auto where = [&]() { return path.string() + ":" + std::to_string(line_no) + ": "; };

  if (!next_line() || split_ws(line) != std::vector<std::string>{"ply"}) throw FormatError(where() + "missing ply magic");
  std::vector<PlyElement> elements;
  bool ascii = false;
  while (true) {
    if (!next_line()) throw FormatError(where() + "unterminated header");
    const auto tokens = split_ws(line);
    if (tokens.empty()) continue;
    if (tokens[0] == "end_header") break;
    if (tokens[0] == "format") {
      ascii = tokens.size() >= 2 && tokens[1] == "ascii";
    } else if (tokens[0] == "element" && tokens.size() == 3) {
      elements.push_back({tokens[1], parse_int(tokens[2], path, line_no), {}});
    } else if (tokens[0] == "property" && !elements.empty()) {
      const bool list = tokens.size() == 5 && tokens[1] == "list";
      elements.back().properties.push_back({tokens.back(), list});
    }
  }
  if (!ascii) throw FormatError(path.string() + ": only ascii ply is supported");

  std::vector<Eigen::Vector3d> verts;
  std::vector<Eigen::Vector3i> faces;
  std::vector<Color> colors;
  for (const PlyElement& el : elements) {
    auto find = [&](const std::string& name) {
      for (std::size_t k = 0; k < el.properties.size(); ++k) {
        if (el.properties[k].name == name) return static_cast<long>(k);
      }
      return -1L;
    };
    for (long r = 0; r < el.count; ++r) {
      if (!next_line()) throw FormatError(where() + "truncated " + el.name + " data");
      const auto tokens = split_ws(line);
      // Expand list properties so every property maps to a token range.
      std::vector<std::pair<std::size_t, std::size_t>> spans;
      std::size_t pos = 0;
      for (const PlyProperty& prop : el.properties) {
        if (pos >= tokens.size()) throw FormatError(where() + "short " + el.name + " record");
        if (prop.is_list) {
          const long n = parse_int(tokens[pos], path, line_no);
          spans.emplace_back(pos + 1, static_cast<std::size_t>(n));
          pos += 1 + static_cast<std::size_t>(n);
        } else {
          spans.emplace_back(pos, 1);
          pos += 1;
        }
      }
      if (pos > tokens.size()) throw FormatError(where() + "short " + el.name + " record");
      if (el.name == "vertex") {
        const long ix = find("x"), iy = find("y"), iz = find("z");
        if (ix < 0 || iy < 0 || iz < 0) throw FormatError(path.string() + ": vertex element lacks x/y/z");
        verts.emplace_back(parse_double(tokens[spans[static_cast<std::size_t>(ix)].first], path, line_no),
                           parse_double(tokens[spans[static_cast<std::size_t>(iy)].first], path, line_no),
                           parse_double(tokens[spans[static_cast<std::size_t>(iz)].first], path, line_no));
      } else if (el.name == "face") {
        long il = find("vertex_indices");
        if (il < 0) il = find("vertex_index");
        if (il < 0) throw FormatError(path.string() + ": face element lacks vertex_indices");
        const auto [first, n] = spans[static_cast<std::size_t>(il)];
        if (n != 3) {
          throw FormatError(where() + "face with " + std::to_string(n) + " vertices; only triangles are accepted");
        }
        Eigen::Vector3i f;
        for (int k = 0; k < 3; ++k) f[k] = static_cast<int>(parse_int(tokens[first + static_cast<std::size_t>(k)], path, line_no));
        faces.push_back(f);
        const long ir = find("red"), ig = find("green"), ib = find("blue");
        if (ir >= 0 && ig >= 0 && ib >= 0) {
          colors.push_back({static_cast<std::uint8_t>(parse_int(tokens[spans[static_cast<std::size_t>(ir)].first], path, line_no)),
                            static_cast<std::uint8_t>(parse_int(tokens[spans[static_cast<std::size_t>(ig)].first], path, line_no)),
                            static_cast<std::uint8_t>(parse_int(tokens[spans[static_cast<std::size_t>(ib)].first], path, line_no))});
        }
      }
    }
  }
  ColoredMesh out{assemble(verts, faces), std::move(colors)};
  return out;
}

}  // namespace

void validate(const TriangleMesh& mesh) {
  const Index v = mesh.num_vertices();
  if (!mesh.vertices.allFinite()) throw DataError("mesh has non-finite vertex coordinates");
  for (Index i = 0; i < mesh.num_cells(); ++i) {
    const auto f = mesh.faces.row(i);
    for (int k = 0; k < 3; ++k) {
      if (f[k] < 0 || f[k] >= v) {
        throw DataError("face " + std::to_string(i) + " references vertex " + std::to_string(f[k]) + " of " +
                        std::to_string(v));
      }
    }
    if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2]) {
      throw DataError("face " + std::to_string(i) + " repeats a vertex");
    }
  }
  if (mesh.has_labels() && static_cast<Index>(mesh.labels.size()) != mesh.num_cells()) {
    throw DataError(std::to_string(mesh.labels.size()) + " labels for " + std::to_string(mesh.num_cells()) +
                    " cells");
  }
}

TriangleMesh load_mesh(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".obj") return load_mesh(path, MeshFormat::kObj);
  if (ext == ".ply") return load_mesh(path, MeshFormat::kPly);
  throw FormatError("unknown mesh extension '" + ext + "' for " + path.string());
}

TriangleMesh load_mesh(const std::filesystem::path& path, MeshFormat format) {
  TriangleMesh mesh = format == MeshFormat::kObj ? read_obj(path) : read_ply(path).mesh;
  validate(mesh);
  return mesh;
}

void save_obj(const TriangleMesh& mesh, const std::filesystem::path& path) {
  std::ofstream out = open_output(path);
  for (Index i = 0; i < mesh.num_vertices(); ++i) {
    out << "v " << format_double(mesh.vertices(i, 0)) << ' ' << format_double(mesh.vertices(i, 1)) << ' '
        << format_double(mesh.vertices(i, 2)) << '\n';
  }
  for (Index i = 0; i < mesh.num_cells(); ++i) {
    out << "f " << mesh.faces(i, 0) + 1 << ' ' << mesh.faces(i, 1) + 1 << ' ' << mesh.faces(i, 2) + 1 << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<int> load_labels(const std::filesystem::path& path) {
  std::ifstream in = open_input(path);
  std::vector<int> labels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto tokens = split_ws(line);
    if (tokens.empty()) continue;
    labels.push_back(static_cast<int>(parse_int(tokens[0], path, line_no)));
  }
  return labels;
}

void save_labels(std::span<const int> labels, const std::filesystem::path& path) {
  std::ofstream out = open_output(path);
  for (int l : labels) out << l << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

MeshNormals compute_normals(const TriangleMesh& mesh) {
  MeshNormals n;
  const Index m = mesh.num_cells();
  n.face.resize(m, 3);
  Vertices accum = Vertices::Zero(mesh.num_vertices(), 3);
  std::vector<char> referenced(static_cast<std::size_t>(mesh.num_vertices()), 0);
  for (Index i = 0; i < m; ++i) {
    const Eigen::Vector3d a = mesh.vertices.row(mesh.faces(i, 0));
    const Eigen::Vector3d b = mesh.vertices.row(mesh.faces(i, 1));
    const Eigen::Vector3d c = mesh.vertices.row(mesh.faces(i, 2));
    const Eigen::Vector3d e1 = b - a;
    const Eigen::Vector3d e2 = c - a;
    const Eigen::Vector3d cross = e1.cross(e2);
    const double len = cross.norm();
    for (int k = 0; k < 3; ++k) referenced[static_cast<std::size_t>(mesh.faces(i, k))] = 1;
    // |e1 x e2| is twice the area; compare against the edge scale so the test is unit-free.
    if (!std::isfinite(len) || len <= 1e-12 * (e1.squaredNorm() + e2.squaredNorm())) {
      n.face.row(i) = Eigen::RowVector3d::UnitZ();
      n.warnings.push_back({NormalWarning::Kind::kDegenerateFace, i});
      continue;
    }
    n.face.row(i) = (cross / len).transpose();
    for (int k = 0; k < 3; ++k) accum.row(mesh.faces(i, k)) += cross.transpose();
  }
  n.vertex.resize(mesh.num_vertices(), 3);
  for (Index v = 0; v < mesh.num_vertices(); ++v) {
    const double len = accum.row(v).norm();
    if (len > 0.0) {
      n.vertex.row(v) = accum.row(v) / len;
    } else {
      n.vertex.row(v) = Eigen::RowVector3d::UnitZ();
      if (referenced[static_cast<std::size_t>(v)]) {
        n.warnings.push_back({NormalWarning::Kind::kUndefinedVertexNormal, v});
      }
    }
  }
  return n;
}

RowMatrix<double> CellFeatureMatrix::combined() const {
  RowMatrix<double> out(num_cells(), 24);
  out.leftCols(12) = coords;
  out.rightCols(12) = normals;
  return out;
}

CellFeatureMatrix build_cell_features(const TriangleMesh& mesh, bool center) {
  return build_cell_features(mesh, compute_normals(mesh), center);
}

CellFeatureMatrix build_cell_features(const TriangleMesh& mesh, const MeshNormals& normals, bool center) {
  const Index m = mesh.num_cells();
  CellFeatureMatrix f;
  f.coords.resize(m, 12);
  f.normals.resize(m, 12);
  for (Index i = 0; i < m; ++i) {
    Eigen::RowVector3d centroid = Eigen::RowVector3d::Zero();
    for (int k = 0; k < 3; ++k) {
      const int v = mesh.faces(i, k);
      f.coords.block<1, 3>(i, 3 * k) = mesh.vertices.row(v);
      f.normals.block<1, 3>(i, 3 * k) = normals.vertex.row(v);
      centroid += mesh.vertices.row(v);
    }
    f.coords.block<1, 3>(i, 9) = centroid / 3.0;
    f.normals.block<1, 3>(i, 9) = normals.face.row(i);
  }
  if (center && m > 0) {
    const Eigen::RowVector3d mean = f.coords.middleCols<3>(9).colwise().mean();
    for (int k = 0; k < 4; ++k) f.coords.middleCols<3>(3 * k).rowwise() -= mean;
  }
  return f;
}

TriangleMesh subsample_cells(const TriangleMesh& mesh, Index target_cells, std::uint64_t seed,
                             std::vector<Index>* face_map) {
  if (target_cells <= 0) throw UsageError("subsample target must be positive, got " + std::to_string(target_cells));
  if (target_cells > mesh.num_cells()) {
    throw UsageError("subsample target " + std::to_string(target_cells) + " exceeds " +
                     std::to_string(mesh.num_cells()) + " cells");
  }
  std::vector<Index> all(static_cast<std::size_t>(mesh.num_cells()));
  std::iota(all.begin(), all.end(), Index{0});
  // Partial Fisher-Yates on raw engine bits, then back to file order.
  Rng rng = make_rng(seed);
  for (std::size_t i = 0; i < static_cast<std::size_t>(target_cells); ++i) {
    std::swap(all[i], all[i + uniform_index(rng, all.size() - i)]);
  }
  std::vector<Index> kept(all.begin(), all.begin() + target_cells);
  std::sort(kept.begin(), kept.end());

  std::vector<int> remap(static_cast<std::size_t>(mesh.num_vertices()), -1);
  std::vector<Eigen::Vector3d> verts;
  std::vector<Eigen::Vector3i> faces;
  TriangleMesh out;
  for (Index src : kept) {
    Eigen::Vector3i f;
    for (int k = 0; k < 3; ++k) {
      int& slot = remap[static_cast<std::size_t>(mesh.faces(src, k))];
      if (slot < 0) {
        slot = static_cast<int>(verts.size());
        verts.push_back(mesh.vertices.row(mesh.faces(src, k)).transpose());
      }
      f[k] = slot;
    }
    faces.push_back(f);
    if (mesh.has_labels()) out.labels.push_back(mesh.labels[static_cast<std::size_t>(src)]);
  }
  TriangleMesh assembled = assemble(verts, faces);
  out.vertices = std::move(assembled.vertices);
  out.faces = std::move(assembled.faces);
  if (face_map) *face_map = std::move(kept);
  return out;
}

Palette default_palette(int num_classes) {
  static const Palette base = {
      {{200, 200, 200}}, {{230, 25, 75}},  {{60, 180, 75}},  {{255, 225, 25}}, {{0, 130, 200}},
      {{245, 130, 48}},  {{145, 30, 180}}, {{70, 240, 240}}, {{240, 50, 230}}, {{210, 245, 60}},
      {{250, 190, 212}}, {{0, 128, 128}},  {{220, 190, 255}}, {{170, 110, 40}}, {{128, 0, 0}},
      {{0, 0, 128}}};
  if (num_classes < 0) throw RangeError("negative class count");
  if (num_classes > static_cast<int>(base.size())) {
    throw RangeError("default palette holds " + std::to_string(base.size()) + " classes");
  }
  return Palette(base.begin(), base.begin() + num_classes);
}

void export_colored_mesh(const TriangleMesh& mesh, std::span<const int> per_cell_class, const Palette& palette,
                         const std::filesystem::path& path) {
  if (palette.empty()) throw RangeError("empty palette");
  if (static_cast<Index>(per_cell_class.size()) != mesh.num_cells()) {
    throw DimensionError(std::to_string(per_cell_class.size()) + " classes for " +
                         std::to_string(mesh.num_cells()) + " cells");
  }
  for (std::size_t i = 0; i < per_cell_class.size(); ++i) {
    const int c = per_cell_class[i];
    if (c < 0 || c >= static_cast<int>(palette.size())) {
      throw RangeError("class " + std::to_string(c) + " of cell " + std::to_string(i) + " outside palette of " +
                       std::to_string(palette.size()));
    }
  }
  std::ofstream out = open_output(path);
  out << "ply\nformat ascii 1.0\n"
      << "element vertex " << mesh.num_vertices() << "\n"
      << "property double x\nproperty double y\nproperty double z\n"
      << "element face " << mesh.num_cells() << "\n"
      << "property list uchar int vertex_indices\n"
      << "property uchar red\nproperty uchar green\nproperty uchar blue\n"
      << "end_header\n";
  for (Index i = 0; i < mesh.num_vertices(); ++i) {
    out << format_double(mesh.vertices(i, 0)) << ' ' << format_double(mesh.vertices(i, 1)) << ' '
        << format_double(mesh.vertices(i, 2)) << '\n';
  }
  for (Index i = 0; i < mesh.num_cells(); ++i) {
    const Color& c = palette[static_cast<std::size_t>(per_cell_class[static_cast<std::size_t>(i)])];
    out << "3 " << mesh.faces(i, 0) << ' ' << mesh.faces(i, 1) << ' ' << mesh.faces(i, 2) << ' ' << int(c[0]) << ' '
        << int(c[1]) << ' ' << int(c[2]) << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

ColoredMesh read_colored_ply(const std::filesystem::path& path) {
  ColoredMesh cm = read_ply(path);
  validate(cm.mesh);
  return cm;
}

std::vector<int> classes_from_colors(std::span<const Color> colors, const Palette& palette) {
  std::map<Color, int> lookup;
  for (std::size_t c = 0; c < palette.size(); ++c) lookup.emplace(palette[c], static_cast<int>(c));
  std::vector<int> out;
  out.reserve(colors.size());
  for (std::size_t i = 0; i < colors.size(); ++i) {
    auto it = lookup.find(colors[i]);
    if (it == lookup.end()) throw RangeError("face " + std::to_string(i) + " color not in palette");
    out.push_back(it->second);
  }
  return out;
}

}  // namespace tsgc
