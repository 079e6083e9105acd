// Copyright 2026 The Relight Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "relight/geom/geometry.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "relight/core/error.h"
#include "relight/core/rng.h"

namespace relight::geom {

ShapeParams ShapeParams::zeros(const ShapeDims& dims) {
  ShapeParams s;
  s.beta = Eigen::VectorXd::Zero(dims.identity);
  s.theta = Eigen::VectorXd::Zero(dims.pose);
  s.psi = Eigen::VectorXd::Zero(dims.expression);
  return s;
}

Eigen::VectorXd ShapeParams::concat() const {
  Eigen::VectorXd out(beta.size() + theta.size() + psi.size());
  out << beta, theta, psi;
  return out;
}

void icosphere(int level, Vertices* vertices, Faces* faces) {
  check(level >= 0 && level <= 7, "icosphere: level must be in [0,7]");
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> verts = {
      {-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t},  {0, 1, t},
      {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  for (auto& v : verts) v.normalize();
  std::vector<std::array<int, 3>> tris = {
      {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9},  {5, 11, 4},
      {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6},  {3, 6, 8},
      {3, 8, 9},  {4, 9, 5},  {2, 4, 11},  {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};

  for (int l = 0; l < level; ++l) {
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
      auto key = std::minmax(a, b);
      auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      Vec3 m = (verts[static_cast<size_t>(a)] + verts[static_cast<size_t>(b)]).normalized();
      verts.push_back(m);
      int idx = static_cast<int>(verts.size()) - 1;
      midpoint.emplace(key, idx);
      return idx;
    };
    std::vector<std::array<int, 3>> next;
    next.reserve(tris.size() * 4);
    for (const auto& tri : tris) {
      int a = mid(tri[0], tri[1]);
      int b = mid(tri[1], tri[2]);
      int c = mid(tri[2], tri[0]);
      next.push_back({tri[0], a, c});
      next.push_back({tri[1], b, a});
      next.push_back({tri[2], c, b});
      next.push_back({a, b, c});
    }
    tris = std::move(next);
  }

  vertices->resize(static_cast<Eigen::Index>(verts.size()), 3);
  for (size_t i = 0; i < verts.size(); ++i) vertices->row(static_cast<Eigen::Index>(i)) = verts[i];
  faces->resize(static_cast<Eigen::Index>(tris.size()), 3);
  for (size_t i = 0; i < tris.size(); ++i)
    faces->row(static_cast<Eigen::Index>(i)) << tris[i][0], tris[i][1], tris[i][2];
}

namespace {

// Degree-2 monomial basis in the unit-sphere position; smooth and
// low-frequency by construction.
std::array<double, 10> monomials(const Vec3& u) {
  return {1.0,           u.x(),        u.y(),        u.z(),        u.x() * u.x(),
          u.y() * u.y(), u.z() * u.z(), u.x() * u.y(), u.y() * u.z(), u.z() * u.x()};
}

std::vector<Vertices> random_smooth_fields(const Vertices& unit_positions, int count, Rng* rng) {
  std::vector<Vertices> fields;
  fields.reserve(static_cast<size_t>(count));
  const Eigen::Index n = unit_positions.rows();
  for (int k = 0; k < count; ++k) {
    Eigen::Matrix<double, 3, 10> coeff;
    for (int a = 0; a < 3; ++a)
      for (int j = 0; j < 10; ++j) coeff(a, j) = rng->normal();
    Vertices field(n, 3);
    for (Eigen::Index i = 0; i < n; ++i) {
      auto m = monomials(unit_positions.row(i).transpose());
      for (int a = 0; a < 3; ++a) {
        double v = 0;
        for (int j = 0; j < 10; ++j) v += coeff(a, j) * m[static_cast<size_t>(j)];
        field(i, a) = v;
      }
    }
    fields.push_back(std::move(field));
  }
  return fields;
}

// Modified Gram-Schmidt over flattened Nx3 fields, two passes.
void orthonormalize(std::vector<Vertices>* fields) {
  auto dot = [](const Vertices& a, const Vertices& b) {
    return (a.array() * b.array()).sum();
  };
  for (size_t k = 0; k < fields->size(); ++k) {
    for (int pass = 0; pass < 2; ++pass)
      for (size_t j = 0; j < k; ++j)
        (*fields)[k] -= dot((*fields)[j], (*fields)[k]) * (*fields)[j];
    double norm = std::sqrt(dot((*fields)[k], (*fields)[k]));
    check(norm > 1e-9, "synthetic model: degenerate basis field");
    (*fields)[k] /= norm;
  }
}

}  // namespace

BlendshapeModel make_synthetic_model(uint64_t seed, const ShapeDims& dims, int resolution_level) {
  check(dims.identity >= 1 && dims.pose >= 1 && dims.expression >= 1,
        "make_synthetic_model: basis dims must each be >= 1");
  Vertices unit;
  Faces faces;
  icosphere(resolution_level, &unit, &faces);
  check(unit.rows() >= 100, "make_synthetic_model: resolution must yield >= 100 vertices");

  // Head-like ellipsoid with a nose protrusion on the +z face.
  const Vec3 axes(0.70, 0.90, 0.75);
  const Vec3 nose_dir = Vec3(0.0, -0.15, 1.0).normalized();
  Vertices base(unit.rows(), 3);
  for (Eigen::Index i = 0; i < unit.rows(); ++i) {
    Vec3 u = unit.row(i).transpose();
    double angle = std::acos(std::clamp(u.dot(nose_dir), -1.0, 1.0));
    double bump = 0.22 * std::exp(-(angle * angle) / (0.30 * 0.30));
    Vec3 v = u.cwiseProduct(axes) + bump * u;
    base.row(i) = v;
  }

  Rng rng(splitmix64(hash_combine(seed, 0x6d6f64656cULL)));
  auto fields = random_smooth_fields(unit, dims.total(), &rng);
  orthonormalize(&fields);

  BlendshapeModel model;
  model.base_vertices = std::move(base);
  model.faces = std::move(faces);
  auto it = fields.begin();
  model.identity_basis.assign(it, it + dims.identity);
  it += dims.identity;
  model.pose_basis.assign(it, it + dims.pose);
  it += dims.pose;
  model.expression_basis.assign(it, it + dims.expression);
  return model;
}

Mesh apply_blendshape(const BlendshapeModel& model, const ShapeParams& s) {
  check(s.dims() == model.dims(), "apply_blendshape: shape parameter dims do not match the model");
  Vertices verts = model.base_vertices;
  for (int k = 0; k < s.beta.size(); ++k) verts += s.beta[k] * model.identity_basis[static_cast<size_t>(k)];
  for (int k = 0; k < s.theta.size(); ++k) verts += s.theta[k] * model.pose_basis[static_cast<size_t>(k)];
  for (int k = 0; k < s.psi.size(); ++k) verts += s.psi[k] * model.expression_basis[static_cast<size_t>(k)];
  Mesh mesh;
  mesh.faces = model.faces;
  mesh.vertex_normals = vertex_normals(verts, mesh.faces);
  mesh.vertices = std::move(verts);
  return mesh;
}

Vertices vertex_normals(const Vertices& vertices, const Faces& faces,
                        std::vector<uint8_t>* isolated) {
  Vertices accum = Vertices::Zero(vertices.rows(), 3);
  for (Eigen::Index f = 0; f < faces.rows(); ++f) {
    int i0 = faces(f, 0), i1 = faces(f, 1), i2 = faces(f, 2);
    Vec3 a = vertices.row(i0).transpose();
    Vec3 b = vertices.row(i1).transpose();
    Vec3 c = vertices.row(i2).transpose();
    // Cross product length is twice the face area: summing unnormalized face
    // normals is the area weighting.
    Vec3 n = (b - a).cross(c - a);
    accum.row(i0) += n;
    accum.row(i1) += n;
    accum.row(i2) += n;
  }
  if (isolated) isolated->assign(static_cast<size_t>(vertices.rows()), 0);
  for (Eigen::Index i = 0; i < accum.rows(); ++i) {
    double norm = accum.row(i).norm();
    if (norm < 1e-12) {
      accum.row(i) << 0, 0, 1;
      if (isolated) (*isolated)[static_cast<size_t>(i)] = 1;
    } else {
      accum.row(i) /= norm;
    }
  }
  return accum;
}

Vec3 project(const Camera& cam, const Vec3& v, int width, int height) {
  check(cam.scale > 0.0, "project: camera scale must be positive");
  double px = (cam.scale * (v.x() + cam.tx) + 1.0) / 2.0 * width;
  double py = (1.0 - (cam.scale * (v.y() + cam.ty) + 1.0) / 2.0) * height;
  return Vec3(px, py, -v.z());
}

Vec3 unproject(const Camera& cam, double px, double py, double depth, int width, int height) {
  double x = (2.0 * px / width - 1.0) / cam.scale - cam.tx;
  double y = (1.0 - 2.0 * py / height) / cam.scale - cam.ty;
  return Vec3(x, y, -depth);
}

RenderOutput rasterize(const Mesh& mesh, const Camera& cam, int width, int height,
                       const ShadeFn& shade, const Vec3& background, Tensor32* normals_out) {
  check(width > 0 && height > 0, "rasterize: image size must be positive");
  const int64_t plane = static_cast<int64_t>(width) * height;

  RenderOutput out;
  out.image = Tensor32({3, height, width});
  out.mask = Mask(width, height);
  out.depth = Tensor32::full({height, width}, std::numeric_limits<float>::infinity());
  for (int c = 0; c < 3; ++c)
    for (int64_t p = 0; p < plane; ++p)
      out.image[c * plane + p] = static_cast<float>(background[c]);
  if (normals_out) *normals_out = Tensor32({3, height, width});

  const Eigen::Index nv = mesh.vertices.rows();
  std::vector<Vec3> screen(static_cast<size_t>(nv));
  for (Eigen::Index i = 0; i < nv; ++i)
    screen[static_cast<size_t>(i)] = project(cam, mesh.vertices.row(i).transpose(), width, height);

  for (Eigen::Index f = 0; f < mesh.faces.rows(); ++f) {
    const int i0 = mesh.faces(f, 0), i1 = mesh.faces(f, 1), i2 = mesh.faces(f, 2);
    Vec3 a = mesh.vertices.row(i0).transpose();
    Vec3 b = mesh.vertices.row(i1).transpose();
    Vec3 c = mesh.vertices.row(i2).transpose();
    Vec3 geo_n = (b - a).cross(c - a);
    if (geo_n.z() <= 0.0) continue;  // back-facing for a camera looking down -z

    const Vec3& p0 = screen[static_cast<size_t>(i0)];
    const Vec3& p1 = screen[static_cast<size_t>(i1)];
    const Vec3& p2 = screen[static_cast<size_t>(i2)];
    double area = (p1.x() - p0.x()) * (p2.y() - p0.y()) - (p1.y() - p0.y()) * (p2.x() - p0.x());
    if (area == 0.0) continue;

    int min_x = std::max(0, static_cast<int>(std::floor(std::min({p0.x(), p1.x(), p2.x()}) - 0.5)));
    int max_x = std::min(width - 1, static_cast<int>(std::ceil(std::max({p0.x(), p1.x(), p2.x()}))));
    int min_y = std::max(0, static_cast<int>(std::floor(std::min({p0.y(), p1.y(), p2.y()}) - 0.5)));
    int max_y = std::min(height - 1, static_cast<int>(std::ceil(std::max({p0.y(), p1.y(), p2.y()}))));

    for (int y = min_y; y <= max_y; ++y) {
      double cy = y + 0.5;
      for (int x = min_x; x <= max_x; ++x) {
        double cx = x + 0.5;
        double w0 = (p1.x() - cx) * (p2.y() - cy) - (p1.y() - cy) * (p2.x() - cx);
        double w1 = (p2.x() - cx) * (p0.y() - cy) - (p2.y() - cy) * (p0.x() - cx);
        double w2 = (p0.x() - cx) * (p1.y() - cy) - (p0.y() - cy) * (p1.x() - cx);
        double b0 = w0 / area, b1 = w1 / area, b2 = w2 / area;
        if (b0 < 0.0 || b1 < 0.0 || b2 < 0.0) continue;
        double depth = b0 * p0.z() + b1 * p1.z() + b2 * p2.z();
        int64_t p = static_cast<int64_t>(y) * width + x;
        if (!(depth < out.depth[p])) continue;  // equal depth keeps the earlier (lower) index
        Vec3 n = b0 * mesh.vertex_normals.row(i0).transpose() +
                 b1 * mesh.vertex_normals.row(i1).transpose() +
                 b2 * mesh.vertex_normals.row(i2).transpose();
        double nn = n.norm();
        n = nn > 1e-12 ? Vec3(n / nn) : Vec3(0, 0, 1);
        Vec3 rgb = shade(n);
        out.depth[p] = static_cast<float>(depth);
        out.mask.on[static_cast<size_t>(p)] = 1;
        for (int ch = 0; ch < 3; ++ch) out.image[ch * plane + p] = static_cast<float>(rgb[ch]);
        if (normals_out)
          for (int ch = 0; ch < 3; ++ch) (*normals_out)[ch * plane + p] = static_cast<float>(n[ch]);
      }
    }
  }
  return out;
}

namespace {

// Watertight enough for desk scale: Moller-Trumbore with a small parallel
// tolerance; hits at t > 0 count.
bool ray_hits_triangle(const Vec3& origin, const Vec3& dir, const Vec3& a, const Vec3& b,
                       const Vec3& c) {
  const Vec3 e1 = b - a, e2 = c - a;
  const Vec3 p = dir.cross(e2);
  double det = e1.dot(p);
  if (std::abs(det) < 1e-14) return false;
  double inv = 1.0 / det;
  const Vec3 tv = origin - a;
  double u = tv.dot(p) * inv;
  if (u < 0.0 || u > 1.0) return false;
  const Vec3 q = tv.cross(e1);
  double v = dir.dot(q) * inv;
  if (v < 0.0 || u + v > 1.0) return false;
  double t = e2.dot(q) * inv;
  return t > 0.0;
}

}  // namespace

Tensor32 hard_shadow_mask(const Mesh& mesh, const Vec3& light_direction, const Camera& cam,
                          int width, int height) {
  check(std::abs(light_direction.norm() - 1.0) <= 1e-6,
        "hard_shadow_mask: light direction must be unit length");
  RenderOutput pass = rasterize(
      mesh, cam, width, height, [](const Vec3&) { return Vec3::Zero(); }, Vec3::Zero());

  Vec3 lo = mesh.vertices.colwise().minCoeff().transpose();
  Vec3 hi = mesh.vertices.colwise().maxCoeff().transpose();
  double eps = 1e-4 * (hi - lo).norm();

  Tensor32 factors = Tensor32::full({height, width}, 1.f);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      int64_t p = static_cast<int64_t>(y) * width + x;
      if (!pass.mask.on[static_cast<size_t>(p)]) continue;
      Vec3 point = unproject(cam, x + 0.5, y + 0.5, pass.depth[p], width, height);
      Vec3 origin = point + eps * light_direction;
      for (Eigen::Index f = 0; f < mesh.faces.rows(); ++f) {
        Vec3 a = mesh.vertices.row(mesh.faces(f, 0)).transpose();
        Vec3 b = mesh.vertices.row(mesh.faces(f, 1)).transpose();
        Vec3 c = mesh.vertices.row(mesh.faces(f, 2)).transpose();
        if (ray_hits_triangle(origin, light_direction, a, b, c)) {
          factors[p] = 0.f;
          break;
        }
      }
    }
  }
  return factors;
}

}  // namespace relight::geom
