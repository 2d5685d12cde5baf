#include "tsgc/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "tsgc/errors.hpp"
#include "tsgc/random.hpp"

namespace tsgc {

void ArchSpec::validate() const {
  auto fail = [](const std::string& what) { throw GenerationError(what); };
  if (num_teeth < 1) fail("num_teeth must be >= 1");
  if (cells_target < 16) fail("cells_target must be >= 16");
  if (!(arch_half_width > 0 && arch_depth >= 0)) fail("arch size must be positive");
  if (!(arch_jitter >= 0 && arch_jitter < 0.5)) fail("arch_jitter must lie in [0, 0.5)");
  if (!(strip_half_width > 0)) fail("strip_half_width must be positive");
  if (!(tooth_radius > 0 && tooth_half_width > 0 && tooth_height > 0)) fail("tooth dimensions must be positive");
  if (!(radius_jitter >= 0 && radius_jitter < 0.5)) fail("radius_jitter must lie in [0, 0.5)");
  if (!(height_jitter >= 0 && height_jitter < 0.5)) fail("height_jitter must lie in [0, 0.5)");
  if (!(rim_fraction > 0 && rim_fraction <= 1)) fail("rim_fraction must lie in (0, 1]");
  if (!(superellipse_power >= 1)) fail("superellipse_power must be >= 1");
  if (!(base_gap >= 0)) fail("base_gap must be >= 0");
  if (!(crowding >= 0)) fail("crowding must be >= 0");
  if (crowding > 1) fail("crowding " + std::to_string(crowding) + " > 1 makes neighboring teeth overlap");
  if (!(end_margin >= 0)) fail("end_margin must be >= 0");
  if (tooth_half_width * (1 + radius_jitter) + crowding * 0.5 >= strip_half_width) {
    fail("teeth are wider than the gum strip");
  }
}

namespace {

/// Parabola z = depth * (1 - (x / w)^2) parameterized by arc length.
class ArchCurve {
 public:
  ArchCurve(double half_width, double depth) : w_(half_width), d_(depth) {
    constexpr int kSamples = 4096;
    xs_.resize(kSamples + 1);
    lengths_.resize(kSamples + 1);
    for (int i = 0; i <= kSamples; ++i) xs_[i] = -w_ + 2 * w_ * i / kSamples;
    lengths_[0] = 0;
    for (int i = 1; i <= kSamples; ++i) {
      const double dx = xs_[i] - xs_[i - 1];
      const double dz = z(xs_[i]) - z(xs_[i - 1]);
      lengths_[i] = lengths_[i - 1] + std::hypot(dx, dz);
    }
  }

  double length() const { return lengths_.back(); }

  /// Point and unit tangent at arc length s.
  void frame(double s, Eigen::Vector3d& point, Eigen::Vector3d& tangent) const {
    const auto it = std::upper_bound(lengths_.begin(), lengths_.end(), s);
    const std::size_t hi = std::clamp<std::size_t>(static_cast<std::size_t>(it - lengths_.begin()), 1, xs_.size() - 1);
    const double t = (s - lengths_[hi - 1]) / (lengths_[hi] - lengths_[hi - 1]);
    const double x = xs_[hi - 1] + t * (xs_[hi] - xs_[hi - 1]);
    point = {x, 0.0, z(x)};
    tangent = Eigen::Vector3d(1.0, 0.0, -2.0 * d_ * x / (w_ * w_)).normalized();
  }

 private:
  double z(double x) const { return d_ * (1.0 - (x / w_) * (x / w_)); }

  double w_, d_;
  std::vector<double> xs_, lengths_;
};

struct Tooth {
  int label;
  double center_s, center_t;
  double a, b, height;
};

}  // namespace

TriangleMesh generate_arch(const ArchSpec& spec) {
  spec.validate();
  Rng rng = make_rng(spec.seed);
  auto jitter = [&](double relative) { return 1.0 + uniform(rng, -relative, relative); };

  const ArchCurve curve(spec.arch_half_width * jitter(spec.arch_jitter), spec.arch_depth * jitter(spec.arch_jitter));
  const double length = curve.length();
  const double gap = spec.base_gap * (1.0 - spec.crowding);

  std::vector<Tooth> teeth;
  for (int side : {+1, -1}) {
    double cursor = gap / 2;
    for (int j = 0; j < spec.num_teeth; ++j) {
      Tooth tooth;
      tooth.label = j + 1;
      tooth.a = spec.tooth_radius * jitter(spec.radius_jitter);
      tooth.b = spec.tooth_half_width * jitter(spec.radius_jitter);
      tooth.height = spec.tooth_height * jitter(spec.height_jitter);
      tooth.center_t = spec.crowding * uniform(rng, -0.5, 0.5);
      const double offset = cursor + tooth.a;
      tooth.center_s = length / 2 + side * offset;
      cursor = offset + tooth.a + gap;
      teeth.push_back(tooth);
    }
    const double needed = cursor - gap + spec.end_margin;
    if (needed > length / 2) {
      throw GenerationError("teeth need " + std::to_string(2 * needed) + " units of arch but it is only " +
                            std::to_string(length) + " long");
    }
  }

  // Grid resolution with roughly square quads.
  const double width = 2 * spec.strip_half_width;
  const double quads = static_cast<double>(spec.cells_target) / 2.0;
  const Index nv = std::max<Index>(2, std::llround(std::sqrt(quads * width / length)));
  const Index nu = std::max<Index>(2, std::llround(quads / static_cast<double>(nv)));
  const Index cells = 2 * nu * nv;
  if (std::abs(static_cast<double>(cells - spec.cells_target)) > 0.1 * static_cast<double>(spec.cells_target)) {
    throw GenerationError("cannot tile " + std::to_string(spec.cells_target) + " cells within 10% (got " +
                          std::to_string(cells) + ")");
  }

  const double p = spec.superellipse_power;
  TriangleMesh mesh;
  mesh.vertices.resize((nu + 1) * (nv + 1), 3);
  std::vector<int> vertex_tooth(static_cast<std::size_t>(mesh.vertices.rows()), -1);
  for (Index i = 0; i <= nu; ++i) {
    const double s = length * static_cast<double>(i) / static_cast<double>(nu);
    Eigen::Vector3d point, tangent;
    curve.frame(s, point, tangent);
    const Eigen::Vector3d across(tangent.z(), 0.0, -tangent.x());
    for (Index j = 0; j <= nv; ++j) {
      const double t = -spec.strip_half_width + width * static_cast<double>(j) / static_cast<double>(nv);
      double y = -spec.gum_curvature * t * t;
      const Index v = i * (nv + 1) + j;
      for (std::size_t k = 0; k < teeth.size(); ++k) {
        const Tooth& tooth = teeth[k];
        const double r = std::pow(std::abs((s - tooth.center_s) / tooth.a), p) +
                         std::pow(std::abs((t - tooth.center_t) / tooth.b), p);
        if (r < 1.0) {
          y += tooth.height * (spec.rim_fraction + (1.0 - spec.rim_fraction) * std::pow(1.0 - r, 1.0 / p));
          vertex_tooth[static_cast<std::size_t>(v)] = static_cast<int>(k);
          break;
        }
      }
      mesh.vertices.row(v) = (point + t * across + Eigen::Vector3d(0.0, y, 0.0)).transpose();
    }
  }

  mesh.faces.resize(cells, 3);
  mesh.labels.resize(static_cast<std::size_t>(cells));
  Index f = 0;
  auto label_of = [&](int a, int b, int c) {
    const int ta = vertex_tooth[a], tb = vertex_tooth[b], tc = vertex_tooth[c];
    int tooth = -1;
    if (ta >= 0 && (ta == tb || ta == tc)) tooth = ta;
    else if (tb >= 0 && tb == tc) tooth = tb;
    return tooth < 0 ? 0 : teeth[static_cast<std::size_t>(tooth)].label;
  };
  for (Index i = 0; i < nu; ++i) {
    for (Index j = 0; j < nv; ++j) {
      const int v00 = static_cast<int>(i * (nv + 1) + j);
      const int v10 = static_cast<int>((i + 1) * (nv + 1) + j);
      const int v11 = v10 + 1;
      const int v01 = v00 + 1;
      mesh.faces.row(f) << v00, v10, v11;
      mesh.labels[static_cast<std::size_t>(f++)] = label_of(v00, v10, v11);
      mesh.faces.row(f) << v00, v11, v01;
      mesh.labels[static_cast<std::size_t>(f++)] = label_of(v00, v11, v01);
    }
  }

  std::vector<Index> histogram(static_cast<std::size_t>(spec.num_classes()), 0);
  for (int l : mesh.labels) ++histogram[static_cast<std::size_t>(l)];
  for (std::size_t c = 0; c < histogram.size(); ++c) {
    if (histogram[c] == 0) {
      throw GenerationError("class " + std::to_string(c) + " has no cells at this resolution; raise cells_target");
    }
  }
  return mesh;
}

SplitSeeds derive_split_seeds(int n_train, int n_test, std::uint64_t seed) {
  if (n_train < 1 || n_test < 1) throw UsageError("n_train and n_test must be >= 1");
  Rng rng = make_rng(seed, 0x51d);
  SplitSeeds out;
  std::set<std::uint64_t> used;
  auto draw = [&] {
    std::uint64_t s;
    do {
      s = rng() >> 1;
    } while (!used.insert(s).second);
    return s;
  };
  for (int i = 0; i < n_train; ++i) out.train.push_back(draw());
  for (int i = 0; i < n_test; ++i) out.test.push_back(draw());
  return out;
}

SplitSeeds read_split_seeds(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open seed list " + path.string());
  SplitSeeds out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream row(line);
    std::string split;
    std::uint64_t seed = 0;
    if (!(row >> split >> seed)) throw ParseError(path.string() + ":" + std::to_string(line_no) + ": expected `split seed`");
    if (split == "train") out.train.push_back(seed);
    else if (split == "test") out.test.push_back(seed);
    else throw ParseError(path.string() + ":" + std::to_string(line_no) + ": unknown split '" + split + "'");
  }
  return out;
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  const std::filesystem::path base = path.parent_path();
  std::vector<ManifestEntry> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    std::istringstream row(line);
    for (std::string field; std::getline(row, field, '\t');) fields.push_back(field);
    if (fields.size() != 4) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": expected 4 tab-separated fields, got " +
                       std::to_string(fields.size()));
    }
    ManifestEntry e;
    e.mesh_path = base / fields[0];
    e.label_path = base / fields[1];
    e.split = fields[2];
    try {
      e.seed = std::stoull(fields[3]);
    } catch (const std::exception&) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": bad seed '" + fields[3] + "'");
    }
    out.push_back(std::move(e));
  }
  return out;
}

void write_manifest(const std::vector<ManifestEntry>& entries, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest " + path.string());
  const std::filesystem::path base = path.parent_path();
  out << "# mesh_path\tlabel_path\tsplit\tseed\n";
  for (const auto& e : entries) {
    out << e.mesh_path.lexically_relative(base.empty() ? "." : base).generic_string() << '\t'
        << e.label_path.lexically_relative(base.empty() ? "." : base).generic_string() << '\t' << e.split << '\t'
        << e.seed << '\n';
  }
}

std::vector<TriangleMesh> generate_split(ArchSpec spec, const std::vector<std::uint64_t>& seeds) {
  std::vector<TriangleMesh> out;
  for (std::uint64_t s : seeds) {
    spec.seed = s;
    out.push_back(generate_arch(spec));
  }
  return out;
}

std::vector<ManifestEntry> make_dataset(const ArchSpec& spec, const SplitSeeds& seeds,
                                        const std::filesystem::path& out_dir) {
  spec.validate();
  std::set<std::uint64_t> train_set(seeds.train.begin(), seeds.train.end());
  for (std::uint64_t s : seeds.test) {
    if (train_set.count(s)) throw UsageError("seed " + std::to_string(s) + " is in both train and test splits");
  }
  std::vector<ManifestEntry> entries;
  auto plan = [&](const std::vector<std::uint64_t>& list, const std::string& split) {
    for (std::size_t i = 0; i < list.size(); ++i) {
      char stem[32];
      std::snprintf(stem, sizeof(stem), "%s_%03zu", split.c_str(), i);
      entries.push_back({out_dir / (std::string(stem) + ".obj"), out_dir / (std::string(stem) + ".labels"), split,
                         list[i]});
    }
  };
  plan(seeds.train, "train");
  plan(seeds.test, "test");
  const std::filesystem::path manifest = out_dir / "manifest.tsv";

  std::filesystem::create_directories(out_dir);
  for (const auto& e : entries) {
    for (const auto& p : {e.mesh_path, e.label_path}) {
      if (std::filesystem::exists(p)) throw IoError("refusing to overwrite " + p.string());
    }
  }
  if (std::filesystem::exists(manifest)) throw IoError("refusing to overwrite " + manifest.string());

  ArchSpec s = spec;
  for (const auto& e : entries) {
    s.seed = e.seed;
    const TriangleMesh mesh = generate_arch(s);
    save_obj(mesh, e.mesh_path);
    save_labels(mesh.labels, e.label_path);
  }
  write_manifest(entries, manifest);
  return entries;
}

std::vector<ManifestEntry> make_dataset(const ArchSpec& spec, int n_train, int n_test, std::uint64_t seed,
                                        const std::filesystem::path& out_dir) {
  return make_dataset(spec, derive_split_seeds(n_train, n_test, seed), out_dir);
}

std::vector<TriangleMesh> load_split(const std::vector<ManifestEntry>& entries, const std::string& split) {
  std::vector<TriangleMesh> out;
  for (const auto& e : entries) {
    if (e.split != split) continue;
    TriangleMesh mesh = load_mesh(e.mesh_path);
    mesh.labels = load_labels(e.label_path);
    validate(mesh);
    out.push_back(std::move(mesh));
  }
  return out;
}

}  // namespace tsgc
