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

#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <cstdint>
#include <functional>
#include <vector>

#include "relight/core/image.h"
#include "relight/core/tensor.h"

namespace relight::geom {

using Vec3 = Eigen::Vector3d;
using Vertices = Eigen::Matrix<double, Eigen::Dynamic, 3>;
using Faces = Eigen::Matrix<int, Eigen::Dynamic, 3>;

struct ShapeDims {
  int identity = 8;
  int pose = 4;
  int expression = 4;

  int total() const { return identity + pose + expression; }
  bool operator==(const ShapeDims&) const = default;
};

// Blendshape weights, concatenated as (beta, theta, psi).
struct ShapeParams {
  Eigen::VectorXd beta;
  Eigen::VectorXd theta;
  Eigen::VectorXd psi;

  static ShapeParams zeros(const ShapeDims& dims);
  ShapeDims dims() const {
    return ShapeDims{static_cast<int>(beta.size()), static_cast<int>(theta.size()),
                     static_cast<int>(psi.size())};
  }
  Eigen::VectorXd concat() const;
};

// Linear blendshape head: base vertices plus identity/pose/expression
// displacement bases. Bases are stored per coefficient as Nx3 fields and are
// mutually orthonormal after flattening.
struct BlendshapeModel {
  Vertices base_vertices;
  Faces faces;
  std::vector<Vertices> identity_basis;
  std::vector<Vertices> pose_basis;
  std::vector<Vertices> expression_basis;

  ShapeDims dims() const {
    return ShapeDims{static_cast<int>(identity_basis.size()), static_cast<int>(pose_basis.size()),
                     static_cast<int>(expression_basis.size())};
  }
  int vertex_count() const { return static_cast<int>(base_vertices.rows()); }
};

struct Mesh {
  Vertices vertices;
  Faces faces;
  Vertices vertex_normals;
};

// Icosphere with V = 10*4^level + 2 vertices and F = 20*4^level faces.
void icosphere(int level, Vertices* vertices, Faces* faces);

// Head-like base mesh (anisotropically scaled icosphere with a nose bump)
// plus smooth, low-frequency random displacement bases, orthonormalized.
// Deterministic in seed. Requires dims >= 1 each and >= 100 vertices.
BlendshapeModel make_synthetic_model(uint64_t seed, const ShapeDims& dims, int resolution_level);

// vertices = base + B_beta*beta + B_theta*theta + B_psi*psi, normals recomputed.
Mesh apply_blendshape(const BlendshapeModel& model, const ShapeParams& s);

// Area-weighted vertex normals. Isolated vertices (zero incident area) get
// (0,0,1) and a flag in `isolated` when provided.
Vertices vertex_normals(const Vertices& vertices, const Faces& faces,
                        std::vector<uint8_t>* isolated = nullptr);

// Orthographic camera: isotropic scale plus 2D translation.
struct Camera {
  double scale = 1.0;
  double tx = 0.0;
  double ty = 0.0;
};

// px = (scale*(x+tx) + 1)/2 * width
// py = (1 - (scale*(y+ty) + 1)/2) * height   (y flipped to image coords)
// depth = -z (camera looks down -z; smaller depth is nearer)
Vec3 project(const Camera& cam, const Vec3& vertex, int width, int height);

// Inverse of `project` for a continuous pixel position.
Vec3 unproject(const Camera& cam, double px, double py, double depth, int width, int height);

struct RenderOutput {
  Tensor32 image;  // {3,H,W}, linear; clamped below at 0 by the shade fn
  Mask mask;       // head coverage
  Tensor32 depth;  // {H,W}; +inf outside the mask
};

using ShadeFn = std::function<Vec3(const Vec3& normal)>;

// Z-buffered triangle rasterization at pixel centers with barycentric
// normal interpolation (renormalized). Back-facing (geometric normal z <= 0)
// and off-screen fragments are discarded. Nearest depth wins; at equal depth
// the lower triangle index wins. Optional per-pixel unit normals come back
// through `normals_out` as {3,H,W}.
RenderOutput rasterize(const Mesh& mesh, const Camera& cam, int width, int height,
                       const ShadeFn& shade, const Vec3& background,
                       Tensor32* normals_out = nullptr);

// Per-pixel hard shadow factors in {0,1}: 0 where the surface point seen at
// the pixel is occluded toward the light, 1 otherwise (and 1 outside the
// coverage mask). Ray origins are offset by 1e-4 x bbox diagonal.
Tensor32 hard_shadow_mask(const Mesh& mesh, const Vec3& light_direction, const Camera& cam,
                          int width, int height);

}  // namespace relight::geom
