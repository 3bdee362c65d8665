#include "vtranse/features.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "vtranse/error.hpp"

namespace vtranse {

bool BoundingBox::valid() const {
  return std::isfinite(x) && std::isfinite(y) && std::isfinite(w) && std::isfinite(h) && w > 0.0 && h > 0.0;
}

void require_valid(const BoundingBox& box, const char* what) {
  if (!box.valid())
    throw DegenerateBoxError(std::string(what) + " (" + std::to_string(box.x) + ", " + std::to_string(box.y) + ", " +
                             std::to_string(box.w) + ", " + std::to_string(box.h) + ")");
}

BoundingBox box_union(const BoundingBox& a, const BoundingBox& b) {
  const double x0 = std::min(a.x, b.x);
  const double y0 = std::min(a.y, b.y);
  const double x1 = std::max(a.right(), b.right());
  const double y1 = std::max(a.bottom(), b.bottom());
  return {x0, y0, x1 - x0, y1 - y0};
}

BoundingBox clamp_box(const BoundingBox& box, double width, double height) {
  if (box.x >= 0.0 && box.y >= 0.0 && box.right() <= width && box.bottom() <= height) return box;
  const double x0 = std::clamp(box.x, 0.0, width);
  const double y0 = std::clamp(box.y, 0.0, height);
  const double x1 = std::clamp(box.right(), 0.0, width);
  const double y1 = std::clamp(box.bottom(), 0.0, height);
  return {x0, y0, x1 - x0, y1 - y0};
}

FeatureMap::FeatureMap(std::size_t width, std::size_t height, std::size_t channels, double stride)
    : FeatureMap(width, height, channels, stride, Vector(width * height * channels, 0.0)) {}

FeatureMap::FeatureMap(std::size_t width, std::size_t height, std::size_t channels, double stride, Vector values)
    : width_(width), height_(height), channels_(channels), stride_(stride), values_(std::move(values)) {
  if (width == 0 || height == 0 || channels == 0) throw DimensionError("feature map dimensions must be positive");
  if (!(stride > 0.0) || !std::isfinite(stride)) throw ConfigError("feature map stride must be positive");
  if (values_.size() != width * height * channels)
    throw DimensionError("feature map payload has " + std::to_string(values_.size()) + " values, expected " +
                         std::to_string(width * height * channels));
  require_finite(values_, "feature map");
}

std::array<double, 4> location_feature(const BoundingBox& subject, const BoundingBox& counterpart) {
  require_valid(subject, "location_feature subject");
  require_valid(counterpart, "location_feature counterpart");
  return {(subject.x - counterpart.x) / counterpart.w, (subject.y - counterpart.y) / counterpart.h,
          std::log(subject.w / counterpart.w), std::log(subject.h / counterpart.h)};
}

SampleGrid grid_positions(const BoundingBox& box, GridSize size, double stride) {
  require_valid(box, "grid_positions");
  if (size.x == 0 || size.y == 0) throw ConfigError("sample grid needs at least one cell per axis");
  if (!(stride > 0.0)) throw ConfigError("sample grid stride must be positive");
  SampleGrid grid{size.x, size.y, box, stride, {}};
  grid.positions.reserve(size.x * size.y);
  const double cell_w = box.w / static_cast<double>(size.x);
  const double cell_h = box.h / static_cast<double>(size.y);
  for (std::size_t i = 0; i < size.x; ++i)
    for (std::size_t j = 0; j < size.y; ++j)
      grid.positions.push_back({(box.x + (static_cast<double>(i) + 0.5) * cell_w) / stride,
                                (box.y + (static_cast<double>(j) + 0.5) * cell_h) / stride});
  return grid;
}

double bilinear_kernel(double t) { return std::max(0.0, 1.0 - std::abs(t)); }

namespace {

// d/dg k(n - g): +1 on (g - 1, g), -1 on (g, g + 1), 0 elsewhere incl. the kinks.
double kernel_slope(double n, double g) {
  const double t = n - g;
  if (t > 0.0 && t < 1.0) return 1.0;
  if (t < 0.0 && t > -1.0) return -1.0;
  return 0.0;
}

struct Neighbours {
  long lo[2];
  double weight[2][2];  // [axis][lo or hi]
};

Neighbours neighbours_of(const std::array<double, 2>& g) {
  Neighbours n{};
  for (int axis = 0; axis < 2; ++axis) {
    const double base = std::floor(g[axis]);
    n.lo[axis] = static_cast<long>(base);
    n.weight[axis][0] = bilinear_kernel(base - g[axis]);
    n.weight[axis][1] = bilinear_kernel(base + 1.0 - g[axis]);
  }
  return n;
}

bool inside(long v, std::size_t extent) { return v >= 0 && static_cast<std::size_t>(v) < extent; }

void require_grid_finite(const SampleGrid& grid) {
  for (const auto& p : grid.positions)
    if (!std::isfinite(p[0]) || !std::isfinite(p[1])) throw NumericError("sample grid has non-finite positions");
}

}  // namespace

Vector bilinear_sample(const FeatureMap& map, const SampleGrid& grid) {
  require_grid_finite(grid);
  const std::size_t channels = map.channels();
  Vector out(grid.positions.size() * channels, 0.0);
  for (std::size_t p = 0; p < grid.positions.size(); ++p) {
    const Neighbours n = neighbours_of(grid.positions[p]);
    double* dst = out.data() + p * channels;
    for (int a = 0; a < 2; ++a) {
      const long ii = n.lo[0] + a;
      if (!inside(ii, map.width()) || n.weight[0][a] == 0.0) continue;
      for (int b = 0; b < 2; ++b) {
        const long jj = n.lo[1] + b;
        if (!inside(jj, map.height()) || n.weight[1][b] == 0.0) continue;
        const double w = n.weight[0][a] * n.weight[1][b];
        const auto base = map.index(static_cast<std::size_t>(ii), static_cast<std::size_t>(jj), 0);
        for (std::size_t c = 0; c < channels; ++c) dst[c] += w * map.values()[base + c];
      }
    }
  }
  return out;
}

BilinearGradients bilinear_backward(const FeatureMap& map, const SampleGrid& grid, std::span<const double> upstream) {
  require_grid_finite(grid);
  const std::size_t channels = map.channels();
  if (upstream.size() != grid.positions.size() * channels)
    throw DimensionError("bilinear upstream has " + std::to_string(upstream.size()) + " values, expected " +
                         std::to_string(grid.positions.size() * channels));
  BilinearGradients out;
  out.map.assign(map.values().size(), 0.0);
  out.grid.assign(grid.positions.size(), {0.0, 0.0});
  for (std::size_t p = 0; p < grid.positions.size(); ++p) {
    const auto& g = grid.positions[p];
    const Neighbours n = neighbours_of(g);
    const double* dv = upstream.data() + p * channels;
    for (int a = 0; a < 2; ++a) {
      const long ii = n.lo[0] + a;
      if (!inside(ii, map.width())) continue;
      const double wx = n.weight[0][a];
      const double sx = kernel_slope(static_cast<double>(ii), g[0]);
      for (int b = 0; b < 2; ++b) {
        const long jj = n.lo[1] + b;
        if (!inside(jj, map.height())) continue;
        const double wy = n.weight[1][b];
        const double sy = kernel_slope(static_cast<double>(jj), g[1]);
        const auto base = map.index(static_cast<std::size_t>(ii), static_cast<std::size_t>(jj), 0);
        double contracted = 0.0;
        for (std::size_t c = 0; c < channels; ++c) {
          out.map[base + c] += dv[c] * wx * wy;
          contracted += dv[c] * map.values()[base + c];
        }
        out.grid[p][0] += contracted * sx * wy;
        out.grid[p][1] += contracted * wx * sy;
      }
    }
  }
  out.box = grid_backward(grid, out.grid);
  return out;
}

std::array<double, 4> grid_backward(const SampleGrid& grid, std::span<const std::array<double, 2>> grid_gradient) {
  if (grid_gradient.size() != grid.positions.size()) throw DimensionError("grid gradient size mismatch");
  std::array<double, 4> d{};
  const double inv = 1.0 / grid.stride;
  for (std::size_t i = 0; i < grid.cols; ++i) {
    for (std::size_t j = 0; j < grid.rows; ++j) {
      const auto& dg = grid_gradient[i * grid.rows + j];
      d[0] += dg[0] * inv;
      d[1] += dg[1] * inv;
      d[2] += dg[0] * inv * (static_cast<double>(i) + 0.5) / static_cast<double>(grid.cols);
      d[3] += dg[1] * inv * (static_cast<double>(j) + 0.5) / static_cast<double>(grid.rows);
    }
  }
  return d;
}

Vector fuse(std::span<const double> classeme, std::span<const double> location, std::span<const double> visual,
            const FeatureScales& scales) {
  if (location.size() != 4) throw DimensionError("location block must have 4 entries");
  Vector out;
  out.reserve(classeme.size() + location.size() + visual.size());
  for (double v : classeme) out.push_back(scales[0] * v);
  for (double v : location) out.push_back(scales[1] * v);
  for (double v : visual) out.push_back(scales[2] * v);
  return out;
}

FuseGradients fuse_backward(std::span<const double> classeme, std::span<const double> location,
                            std::span<const double> visual, const FeatureScales& scales,
                            std::span<const double> upstream) {
  if (location.size() != 4) throw DimensionError("location block must have 4 entries");
  if (upstream.size() != classeme.size() + location.size() + visual.size())
    throw DimensionError("fuse upstream size mismatch");
  FuseGradients g;
  const std::span<const double> blocks[3] = {classeme, location, visual};
  Vector* outs[3] = {&g.classeme, &g.location, &g.visual};
  std::size_t offset = 0;
  for (int b = 0; b < 3; ++b) {
    const auto up = upstream.subspan(offset, blocks[b].size());
    outs[b]->resize(blocks[b].size());
    for (std::size_t k = 0; k < up.size(); ++k) (*outs[b])[k] = scales[b] * up[k];
    g.scales[b] = dot(up, blocks[b]);
    offset += blocks[b].size();
  }
  return g;
}

ObjectFeature make_object_feature(Vector classeme, const std::array<double, 4>& location, Vector visual,
                                  const FeatureScales& scales) {
  double total = 0.0;
  for (double p : classeme) {
    if (!(p >= 0.0 && p <= 1.0)) throw ContractError("classeme entries must lie in [0, 1]");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ContractError("classeme must sum to 1");
  ObjectFeature f{std::move(classeme), location, std::move(visual), {}};
  f.fused = fuse(f.classeme, f.location, f.visual, scales);
  return f;
}

}  // namespace vtranse
