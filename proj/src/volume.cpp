#include "bccmesh/volume.hpp"

#include <algorithm>
#include <charconv>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <set>
#include <sstream>

#include "bccmesh/io.hpp"
#include "bccmesh/parallel.hpp"

namespace bccmesh {

namespace {

void validate_geometry(const std::array<std::int64_t, 3>& dims, const Vec3& spacing) {
  for (int a = 0; a < 3; ++a) {
    if (dims[a] < 1) throw Error("volume dims must be >= 1 on each axis");
    if (!(spacing[a] > 0.0) || !std::isfinite(spacing[a])) throw Error("volume spacing must be > 0 on each axis");
  }
}

std::size_t voxel_count(const std::array<std::int64_t, 3>& dims) {
  return static_cast<std::size_t>(dims[0]) * static_cast<std::size_t>(dims[1]) * static_cast<std::size_t>(dims[2]);
}

}  // namespace

LabeledVolume::LabeledVolume(std::array<std::int64_t, 3> dims, Vec3 spacing, Vec3 origin)
    : dims_(dims), spacing_(spacing), origin_(origin) {
  validate_geometry(dims_, spacing_);
  labels_.assign(voxel_count(dims_), kBackground);
}

LabeledVolume::LabeledVolume(std::array<std::int64_t, 3> dims, Vec3 spacing, Vec3 origin, std::vector<Label> labels)
    : dims_(dims), spacing_(spacing), origin_(origin), labels_(std::move(labels)) {
  validate_geometry(dims_, spacing_);
  if (labels_.size() != voxel_count(dims_)) throw Error("label buffer size does not match dims");
}

Index3 LabeledVolume::unravel(std::size_t idx) const {
  const auto n = static_cast<std::int64_t>(idx);
  return {n % dims_[0], (n / dims_[0]) % dims_[1], n / (dims_[0] * dims_[1])};
}

Vec3 LabeledVolume::physical(const Index3& v) const {
  return {origin_.x + static_cast<double>(v.i) * spacing_.x, origin_.y + static_cast<double>(v.j) * spacing_.y,
          origin_.z + static_cast<double>(v.k) * spacing_.z};
}

Vec3 LabeledVolume::physical(const Vec3& c) const {
  return {origin_.x + c.x * spacing_.x, origin_.y + c.y * spacing_.y, origin_.z + c.z * spacing_.z};
}

Vec3 LabeledVolume::continuous_index(const Vec3& p) const {
  return {(p.x - origin_.x) / spacing_.x, (p.y - origin_.y) / spacing_.y, (p.z - origin_.z) / spacing_.z};
}

std::optional<Index3> LabeledVolume::voxel_at(const Vec3& p) const {
  const Vec3 c = continuous_index(p);
  const Index3 v{static_cast<std::int64_t>(std::floor(c.x + 0.5)), static_cast<std::int64_t>(std::floor(c.y + 0.5)),
                 static_cast<std::int64_t>(std::floor(c.z + 0.5))};
  if (!contains(v)) return std::nullopt;
  return v;
}

Label LabeledVolume::label_at(const Vec3& p) const {
  const auto v = voxel_at(p);
  return v ? at(*v) : kBackground;
}

std::vector<Label> LabeledVolume::inventory() const {
  std::vector<bool> seen(std::numeric_limits<Label>::max() + 1, false);
  for (Label l : labels_) seen[l] = true;
  std::vector<Label> out;
  for (std::size_t l = 0; l < seen.size(); ++l)
    if (seen[l]) out.push_back(static_cast<Label>(l));
  return out;
}

std::vector<Label> LabeledVolume::materials() const {
  auto inv = inventory();
  std::erase(inv, kBackground);
  return inv;
}

bool LabeledVolume::has_label(Label l) const { return std::find(labels_.begin(), labels_.end(), l) != labels_.end(); }

std::pair<Vec3, Vec3> LabeledVolume::bounds() const {
  const Vec3 half = spacing_ * 0.5;
  const Vec3 last = physical(Index3{dims_[0] - 1, dims_[1] - 1, dims_[2] - 1});
  return {origin_ - half, last + half};
}

// ---------------------------------------------------------------------------------------------
// File format

namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
}

template <typename T>
std::vector<T> parse_numbers(const std::string& key, const std::string& text, std::size_t count) {
  std::istringstream in(text);
  std::vector<T> out;
  T v{};
  while (in >> v) out.push_back(v);
  if (!in.eof() || out.size() != count) throw Error("malformed header: " + key + " expects " + std::to_string(count) + " values");
  return out;
}

}  // namespace

LabeledVolume parse_volume(std::span<const std::uint8_t> bytes) {
  std::map<std::string, std::string> fields;
  std::size_t pos = 0;
  bool terminated = false;
  while (pos < bytes.size()) {
    std::size_t eol = pos;
    while (eol < bytes.size() && bytes[eol] != '\n') ++eol;
    if (eol == bytes.size()) break;
    std::string line(reinterpret_cast<const char*>(bytes.data() + pos), eol - pos);
    pos = eol + 1;
    line = trim(line);
    if (line.empty()) {
      terminated = true;
      break;
    }
    const auto colon = line.find(':');
    if (colon == std::string::npos) throw Error("malformed header: line without ':'");
    fields[trim(line.substr(0, colon))] = trim(line.substr(colon + 1));
  }
  if (!terminated) throw Error("malformed header: missing terminating empty line");
  for (const char* key : {"DIMS", "SPACING", "ORIGIN", "TYPE", "DATA_OFFSET"})
    if (!fields.contains(key)) throw Error(std::string("malformed header: missing ") + key);

  const auto d = parse_numbers<std::int64_t>("DIMS", fields["DIMS"], 3);
  const auto s = parse_numbers<double>("SPACING", fields["SPACING"], 3);
  const auto o = parse_numbers<double>("ORIGIN", fields["ORIGIN"], 3);
  const auto off = parse_numbers<std::int64_t>("DATA_OFFSET", fields["DATA_OFFSET"], 1)[0];
  std::size_t width = 0;
  const std::string& type = fields["TYPE"];
  if (type == "uint8")
    width = 1;
  else if (type == "uint16")
    width = 2;
  else
    throw Error("unsupported scalar type: " + type);
  if (off < static_cast<std::int64_t>(pos) || static_cast<std::size_t>(off) > bytes.size())
    throw Error("malformed header: DATA_OFFSET out of range");

  const std::array<std::int64_t, 3> dims{d[0], d[1], d[2]};
  validate_geometry(dims, {s[0], s[1], s[2]});
  const std::size_t n = voxel_count(dims);
  if (bytes.size() - static_cast<std::size_t>(off) != n * width) throw Error("buffer length mismatch");

  std::vector<Label> labels(n);
  const std::uint8_t* raw = bytes.data() + off;
  for (std::size_t i = 0; i < n; ++i)
    labels[i] = width == 1 ? raw[i] : static_cast<Label>(raw[2 * i] | (raw[2 * i + 1] << 8));
  return LabeledVolume(dims, {s[0], s[1], s[2]}, {o[0], o[1], o[2]}, std::move(labels));
}

LabeledVolume read_volume(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open volume file: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_volume(bytes);
}

std::vector<std::uint8_t> serialize_volume(const LabeledVolume& vol, std::optional<ScalarType> type) {
  const auto labels = vol.labels();
  const Label max_label = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end());
  const ScalarType t = type.value_or(max_label < 256 ? ScalarType::uint8 : ScalarType::uint16);
  if (t == ScalarType::uint8 && max_label >= 256) throw Error("labels do not fit in uint8");

  auto fmt = [](double v) {
    std::ostringstream s;
    s.precision(17);
    s << v;
    return s.str();
  };
  std::ostringstream header;
  const auto& d = vol.dims();
  header << "DIMS: " << d[0] << ' ' << d[1] << ' ' << d[2] << '\n';
  header << "SPACING: " << fmt(vol.spacing().x) << ' ' << fmt(vol.spacing().y) << ' ' << fmt(vol.spacing().z) << '\n';
  header << "ORIGIN: " << fmt(vol.origin().x) << ' ' << fmt(vol.origin().y) << ' ' << fmt(vol.origin().z) << '\n';
  header << "TYPE: " << (t == ScalarType::uint8 ? "uint8" : "uint16") << '\n';
  // DATA_OFFSET is written with a fixed width so the header length does not depend on its value.
  const std::string head = header.str();
  const std::size_t offset = head.size() + std::string("DATA_OFFSET: 0000000000\n\n").size();
  char off_text[32];
  std::snprintf(off_text, sizeof off_text, "%010zu", offset);

  std::vector<std::uint8_t> out(head.begin(), head.end());
  const std::string tail = std::string("DATA_OFFSET: ") + off_text + "\n\n";
  out.insert(out.end(), tail.begin(), tail.end());
  for (Label l : labels) {
    out.push_back(static_cast<std::uint8_t>(l & 0xff));
    if (t == ScalarType::uint16) out.push_back(static_cast<std::uint8_t>(l >> 8));
  }
  return out;
}

void write_volume(const LabeledVolume& vol, const std::filesystem::path& path, std::optional<ScalarType> type) {
  const auto bytes = serialize_volume(vol, type);
  atomic_write(path, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

// ---------------------------------------------------------------------------------------------
// Distance transforms

double DistanceField::sample(const Vec3& p) const {
  double c[3];
  std::int64_t lo[3];
  double t[3];
  for (int a = 0; a < 3; ++a) {
    c[a] = std::clamp((p[a] - origin[a]) / spacing[a], 0.0, static_cast<double>(dims[a] - 1));
    lo[a] = std::min<std::int64_t>(static_cast<std::int64_t>(std::floor(c[a])), std::max<std::int64_t>(dims[a] - 2, 0));
    t[a] = dims[a] > 1 ? c[a] - static_cast<double>(lo[a]) : 0.0;
  }
  double acc = 0.0;
  for (int dz = 0; dz < 2; ++dz)
    for (int dy = 0; dy < 2; ++dy)
      for (int dx = 0; dx < 2; ++dx) {
        const double w = (dx ? t[0] : 1 - t[0]) * (dy ? t[1] : 1 - t[1]) * (dz ? t[2] : 1 - t[2]);
        if (w == 0.0) continue;
        const auto i = std::min(lo[0] + dx, dims[0] - 1);
        const auto j = std::min(lo[1] + dy, dims[1] - 1);
        const auto k = std::min(lo[2] + dz, dims[2] - 1);
        acc += w * at(i, j, k);
      }
  return acc;
}

bool DistanceField::covers(const Vec3& p) const {
  for (int a = 0; a < 3; ++a) {
    const double c = (p[a] - origin[a]) / spacing[a];
    if (c < -0.5 || c > static_cast<double>(dims[a]) - 0.5) return false;
  }
  return true;
}

std::vector<std::uint8_t> boundary_mask(const LabeledVolume& vol, Label material) {
  const auto& d = vol.dims();
  std::vector<std::uint8_t> mask(vol.size(), 0);
  static constexpr int kFace[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
  for (std::int64_t k = 0; k < d[2]; ++k)
    for (std::int64_t j = 0; j < d[1]; ++j)
      for (std::int64_t i = 0; i < d[0]; ++i) {
        if (vol.at(i, j, k) != material) continue;
        for (const auto& o : kFace) {
          if (vol.label_or_background(i + o[0], j + o[1], k + o[2]) != material ||
              !vol.contains(i + o[0], j + o[1], k + o[2])) {
            mask[vol.linear(i, j, k)] = 1;
            break;
          }
        }
      }
  return mask;
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Lower envelope of parabolas: out[q] = min_p f[p] + w2*(q-p)^2 over sites with finite f.
void distance_1d(const double* f, double* out, std::int64_t n, double w2, std::vector<std::int64_t>& v,
                 std::vector<double>& z) {
  v.resize(static_cast<std::size_t>(n));
  z.resize(static_cast<std::size_t>(n) + 1);
  std::int64_t k = -1;
  for (std::int64_t q = 0; q < n; ++q) {
    if (f[q] == kInf) continue;
    double s = -kInf;
    while (k >= 0) {
      const std::int64_t p = v[k];
      s = ((f[q] + w2 * static_cast<double>(q * q)) - (f[p] + w2 * static_cast<double>(p * p))) /
          (2.0 * w2 * static_cast<double>(q - p));
      if (s <= z[k]) {
        --k;
        continue;
      }
      break;
    }
    ++k;
    v[k] = q;
    z[k] = k == 0 ? -kInf : s;
    z[k + 1] = kInf;
  }
  if (k < 0) {
    for (std::int64_t q = 0; q < n; ++q) out[q] = kInf;
    return;
  }
  std::int64_t j = 0;
  for (std::int64_t q = 0; q < n; ++q) {
    while (z[j + 1] < static_cast<double>(q)) ++j;
    const double dq = static_cast<double>(q - v[j]);
    out[q] = f[v[j]] + w2 * dq * dq;
  }
}

/// Squared distance to the nearest seed along one axis for every line of the grid.
void squared_pass(std::vector<double>& grid, const std::array<std::int64_t, 3>& d, int axis, double spacing,
                  int threads) {
  const std::int64_t n = d[axis];
  const std::int64_t stride = axis == 0 ? 1 : (axis == 1 ? d[0] : d[0] * d[1]);
  const int u = axis == 0 ? 1 : 0;
  const int w = axis == 2 ? 1 : 2;
  const std::int64_t lines = d[u] * d[w];
  const std::int64_t stride_u = u == 0 ? 1 : d[0];
  const std::int64_t stride_w = w == 1 ? d[0] : d[0] * d[1];
  const double w2 = spacing * spacing;
  parallel_for(static_cast<std::size_t>(lines), threads, [&](std::size_t begin, std::size_t end) {
    std::vector<double> in(static_cast<std::size_t>(n)), out(static_cast<std::size_t>(n));
    std::vector<std::int64_t> v;
    std::vector<double> z;
    for (std::size_t line = begin; line < end; ++line) {
      const auto a = static_cast<std::int64_t>(line) % d[u];
      const auto b = static_cast<std::int64_t>(line) / d[u];
      const std::int64_t base = a * stride_u + b * stride_w;
      for (std::int64_t q = 0; q < n; ++q) in[q] = grid[base + q * stride];
      distance_1d(in.data(), out.data(), n, w2, v, z);
      for (std::int64_t q = 0; q < n; ++q) grid[base + q * stride] = out[q];
    }
  });
}

}  // namespace

DistanceField signed_distance(const LabeledVolume& vol, std::span<const std::uint8_t> inside, int threads) {
  const auto& d = vol.dims();
  // Zero level: inside voxels with a face neighbor outside the mask or outside the grid.
  std::vector<double> sq(vol.size(), kInf);
  static constexpr int kFace[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
  bool any = false;
  for (std::int64_t k = 0; k < d[2]; ++k)
    for (std::int64_t j = 0; j < d[1]; ++j)
      for (std::int64_t i = 0; i < d[0]; ++i) {
        const auto idx = vol.linear(i, j, k);
        if (!inside[idx]) continue;
        for (const auto& o : kFace) {
          const auto ni = i + o[0], nj = j + o[1], nk = k + o[2];
          if (!vol.contains(ni, nj, nk) || !inside[vol.linear(ni, nj, nk)]) {
            sq[idx] = 0.0;
            any = true;
            break;
          }
        }
      }
  if (!any) throw Error("distance transform: mask is empty");
  for (int axis = 0; axis < 3; ++axis) squared_pass(sq, d, axis, vol.spacing()[axis], threads);

  DistanceField field;
  field.dims = d;
  field.spacing = vol.spacing();
  field.origin = vol.origin();
  field.values.resize(vol.size());
  for (std::size_t i = 0; i < sq.size(); ++i) {
    const double dist = std::sqrt(sq[i]);
    field.values[i] = inside[i] ? dist : -dist;
  }
  return field;
}

DistanceField compute_edt(const LabeledVolume& vol, Label material, int threads) {
  std::vector<std::uint8_t> inside(vol.size(), 0);
  bool present = false;
  const auto labels = vol.labels();
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == material) {
      inside[i] = 1;
      present = true;
    }
  if (!present) throw Error("material " + std::to_string(material) + " is absent from the volume");
  DistanceField field = signed_distance(vol, inside, threads);
  field.material = material;
  return field;
}

FieldSet compute_all_edts(const LabeledVolume& vol, int threads) {
  FieldSet out;
  for (Label m : vol.materials()) out.emplace(m, compute_edt(vol, m, threads));
  return out;
}

// ---------------------------------------------------------------------------------------------
// Phantoms

PhantomKind parse_phantom_kind(const std::string& name) {
  if (name == "sphere") return PhantomKind::sphere;
  if (name == "two-spheres") return PhantomKind::two_spheres;
  if (name == "cube-with-inclusion") return PhantomKind::cube_with_inclusion;
  if (name == "thin-tube") return PhantomKind::thin_tube;
  throw Error("unknown phantom kind: " + name);
}

std::string to_string(PhantomKind kind) {
  switch (kind) {
    case PhantomKind::sphere: return "sphere";
    case PhantomKind::two_spheres: return "two-spheres";
    case PhantomKind::cube_with_inclusion: return "cube-with-inclusion";
    case PhantomKind::thin_tube: return "thin-tube";
  }
  return "unknown";
}

LabeledVolume generate_phantom(PhantomKind kind, std::array<std::int64_t, 3> dims, Vec3 spacing,
                               const PhantomParams& params) {
  LabeledVolume vol(dims, spacing);
  const Vec3 center{(dims[0] - 1) / 2.0, (dims[1] - 1) / 2.0, (dims[2] - 1) / 2.0};
  auto fits = [&](const Vec3& c, double r, bool check_z = true) {
    for (int a = 0; a < (check_z ? 3 : 2); ++a)
      if (c[a] - r < 0.0 || c[a] + r > static_cast<double>(dims[a] - 1)) return false;
    return true;
  };
  auto paint = [&](auto&& label_of) {
    for (std::int64_t k = 0; k < dims[2]; ++k)
      for (std::int64_t j = 0; j < dims[1]; ++j)
        for (std::int64_t i = 0; i < dims[0]; ++i)
          vol.set({i, j, k}, label_of(Vec3{static_cast<double>(i), static_cast<double>(j), static_cast<double>(k)}));
  };
  const double r = params.radius;
  if (!(r > 0.0)) throw Error("phantom radius must be positive");

  switch (kind) {
    case PhantomKind::sphere: {
      if (!fits(center, r)) throw Error("phantom shape exceeds grid bounds");
      paint([&](const Vec3& p) { return squared_norm(p - center) <= r * r ? params.label : kBackground; });
      break;
    }
    case PhantomKind::two_spheres: {
      // The spheres' extreme voxels along (1,1,1) sit `gap` diagonal steps apart, so gap = 1 gives a
      // pair of voxels touching only at a grid vertex.
      const double diag = std::sqrt(3.0);
      const Vec3 u{1.0 / diag, 1.0 / diag, 1.0 / diag};
      const double step = std::max(1.0, std::round(params.gap));
      const Vec3 tip{std::floor(center.x - step / 2), std::floor(center.y - step / 2), std::floor(center.z - step / 2)};
      const Vec3 c1 = tip - u * r;
      const Vec3 c2 = tip + Vec3{step, step, step} + u * r;
      if (!fits(c1, r) || !fits(c2, r)) throw Error("phantom shape exceeds grid bounds");
      const double r2 = r * r * (1.0 + 1e-12);
      paint([&](const Vec3& p) {
        if (squared_norm(p - c1) <= r2) return params.label;
        if (squared_norm(p - c2) <= r2) return params.second_label;
        return kBackground;
      });
      break;
    }
    case PhantomKind::cube_with_inclusion: {
      if (!fits(center, r)) throw Error("phantom shape exceeds grid bounds");
      if (params.inner_radius >= r) throw Error("inclusion must fit inside the cube");
      const double ri = params.inner_radius;
      paint([&](const Vec3& p) {
        const Vec3 q = p - center;
        if (std::abs(q.x) > r || std::abs(q.y) > r || std::abs(q.z) > r) return kBackground;
        if (ri > 0.0 && squared_norm(q) <= ri * ri) return params.second_label;
        return params.label;
      });
      break;
    }
    case PhantomKind::thin_tube: {
      if (!fits(center, r, false)) throw Error("phantom shape exceeds grid bounds");
      paint([&](const Vec3& p) {
        const double dx = p.x - center.x, dy = p.y - center.y;
        return dx * dx + dy * dy <= r * r ? params.label : kBackground;
      });
      break;
    }
  }
  return vol;
}

}  // namespace bccmesh
