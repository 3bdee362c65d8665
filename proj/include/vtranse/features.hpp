#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "vtranse/numerics.hpp"

namespace vtranse {

// Axis-aligned box in image pixels: top-left corner plus extent.
struct BoundingBox {
  double x = 0.0;
  double y = 0.0;
  double w = 1.0;
  double h = 1.0;

  double area() const { return w * h; }
  double right() const { return x + w; }
  double bottom() const { return y + h; }
  bool valid() const;
  std::array<double, 4> as_array() const { return {x, y, w, h}; }
  static BoundingBox from_array(std::span<const double, 4> v) { return {v[0], v[1], v[2], v[3]}; }

  bool operator==(const BoundingBox&) const = default;
};

// Throws DegenerateBoxError unless w, h > 0 and all coordinates are finite.
void require_valid(const BoundingBox& box, const char* what);

// Smallest box containing both.
BoundingBox box_union(const BoundingBox& a, const BoundingBox& b);

// Intersects the box with [0, width] x [0, height]; the result may be degenerate.
BoundingBox clamp_box(const BoundingBox& box, double width, double height);

// Dense W' x H' x C grid stored (i', j', c) row-major. `stride` is image
// pixels per cell; cell (i', j') sits at map coordinate (i', j').
class FeatureMap {
 public:
  FeatureMap() = default;
  FeatureMap(std::size_t width, std::size_t height, std::size_t channels, double stride = 1.0);
  FeatureMap(std::size_t width, std::size_t height, std::size_t channels, double stride, Vector values);

  std::size_t width() const { return width_; }
  std::size_t height() const { return height_; }
  std::size_t channels() const { return channels_; }
  double stride() const { return stride_; }

  std::size_t index(std::size_t i, std::size_t j, std::size_t c) const { return (i * height_ + j) * channels_ + c; }
  double& at(std::size_t i, std::size_t j, std::size_t c) { return values_[index(i, j, c)]; }
  double at(std::size_t i, std::size_t j, std::size_t c) const { return values_[index(i, j, c)]; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  bool operator==(const FeatureMap&) const = default;

 private:
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::size_t channels_ = 0;
  double stride_ = 1.0;
  Vector values_;
};

// Sampling positions of an X x Y split of a box, in map coordinates.
// Keeps the generating box and stride so gradients can be chained back to it.
struct SampleGrid {
  std::size_t cols = 0;  // X, along the first map axis
  std::size_t rows = 0;  // Y, along the second map axis
  BoundingBox box;
  double stride = 1.0;
  std::vector<std::array<double, 2>> positions;  // index i * rows + j

  const std::array<double, 2>& at(std::size_t i, std::size_t j) const { return positions[i * rows + j]; }
};

struct GridSize {
  std::size_t x = 2;
  std::size_t y = 2;
  bool operator==(const GridSize&) const = default;
};

// (t_x, t_y, t_w, t_h) of `subject` relative to `counterpart`.
std::array<double, 4> location_feature(const BoundingBox& subject, const BoundingBox& counterpart);

// Even cell centres: G_ij = ((x + (i + 1/2) w / X) / stride, (y + (j + 1/2) h / Y) / stride), i, j from 0.
SampleGrid grid_positions(const BoundingBox& box, GridSize size, double stride);

// Tent kernel max(0, 1 - |t|).
double bilinear_kernel(double t);

// V_{i,j,c} = sum_{i',j'} F_{i',j',c} k(i' - G_ij1) k(j' - G_ij2); output (i, j, c) row-major.
Vector bilinear_sample(const FeatureMap& map, const SampleGrid& grid);

struct BilinearGradients {
  Vector map;                                 // same layout as FeatureMap::values
  std::vector<std::array<double, 2>> grid;    // same layout as SampleGrid::positions
  std::array<double, 4> box{};                // d/d(x, y, w, h)
};

// Exact derivatives of bilinear_sample; the kernel slope is taken as 0 where
// |t| is 0 or 1.
BilinearGradients bilinear_backward(const FeatureMap& map, const SampleGrid& grid, std::span<const double> upstream);

// Chains grid-position gradients through the affine box -> grid map.
std::array<double, 4> grid_backward(const SampleGrid& grid, std::span<const std::array<double, 2>> grid_gradient);

using FeatureScales = std::array<double, 3>;

// [s1 * classeme, s2 * location, s3 * visual]
Vector fuse(std::span<const double> classeme, std::span<const double> location, std::span<const double> visual,
            const FeatureScales& scales);

struct FuseGradients {
  Vector classeme;
  Vector location;
  Vector visual;
  FeatureScales scales{};
};

FuseGradients fuse_backward(std::span<const double> classeme, std::span<const double> location,
                            std::span<const double> visual, const FeatureScales& scales,
                            std::span<const double> upstream);

// The fused M = (N + 1) + 4 + D vector plus the blocks it was built from.
struct ObjectFeature {
  Vector classeme;
  std::array<double, 4> location{};
  Vector visual;
  Vector fused;
};

ObjectFeature make_object_feature(Vector classeme, const std::array<double, 4>& location, Vector visual,
                                  const FeatureScales& scales);

inline std::size_t fused_dimension(std::size_t num_classes, std::size_t visual_dim) {
  return num_classes + 1 + 4 + visual_dim;
}

}  // namespace vtranse
