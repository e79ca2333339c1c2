#include "skelcover/occupancy_grid.hpp"

#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>

namespace skelcover {

OccupancyGrid::OccupancyGrid(const Vec3& origin, double voxel_size,
                             const Vec3i& dims)
    : origin_(origin), voxel_size_(voxel_size), dims_(dims) {
  if (!(voxel_size > 0)) throw std::invalid_argument("voxel_size must be > 0");
  if ((dims.array() <= 0).any())
    throw std::invalid_argument("dims must be positive");
  std::size_t n = (std::size_t)dims[0] * dims[1] * dims[2];
  states_.assign(n, (std::uint8_t)VoxelState::Free);
  inflated_.assign(n, 0);
}

Vec3i OccupancyGrid::world_to_voxel(const Vec3& p) const {
  Vec3 rel = (p - origin_) / voxel_size_;
  return Vec3i((int)std::floor(rel[0]), (int)std::floor(rel[1]),
               (int)std::floor(rel[2]));
}

Vec3 OccupancyGrid::voxel_center(const Vec3i& v) const {
  return origin_ + (v.cast<double>() + Vec3::Constant(0.5)) * voxel_size_;
}

bool OccupancyGrid::in_bounds(const Vec3i& v) const {
  return (v.array() >= 0).all() && (v.array() < dims_.array()).all();
}

bool OccupancyGrid::in_bounds_world(const Vec3& p) const {
  return in_bounds(world_to_voxel(p));
}

std::size_t OccupancyGrid::linear_index(const Vec3i& v) const {
  if (!in_bounds(v)) throw std::out_of_range("out of bounds");
  return ((std::size_t)v[2] * dims_[1] + v[1]) * dims_[0] + v[0];
}

Vec3i OccupancyGrid::from_linear(std::size_t i) const {
  int x = (int)(i % dims_[0]);
  int y = (int)((i / dims_[0]) % dims_[1]);
  int z = (int)(i / ((std::size_t)dims_[0] * dims_[1]));
  return Vec3i(x, y, z);
}

void OccupancyGrid::set_occupied(const Vec3i& v) {
  states_[linear_index(v)] = (std::uint8_t)VoxelState::Occupied;
}

void OccupancyGrid::mark_internal(const Vec3i& v) {
  std::uint8_t& s = states_[linear_index(v)];
  if (s == (std::uint8_t)VoxelState::Free)
    s = (std::uint8_t)VoxelState::Internal;
}

std::size_t OccupancyGrid::occupied_count() const {
  std::size_t n = 0;
  for (auto s : states_)
    if (s == (std::uint8_t)VoxelState::Occupied) ++n;
  return n;
}

std::vector<Vec3i> OccupancyGrid::occupied_voxels() const {
  std::vector<Vec3i> out;
  for (std::size_t i = 0; i < states_.size(); ++i)
    if (states_[i] == (std::uint8_t)VoxelState::Occupied)
      out.push_back(from_linear(i));
  return out;
}

void OccupancyGrid::set_clearance(double clearance_m) {
  clearance_m_ = clearance_m;
  inflated_.assign(states_.size(), 0);
  if (!(clearance_m > 0)) return;
  int r = (int)std::floor(clearance_m / voxel_size_ + 1e-9);
  // Center-to-center ball offsets, precomputed once.
  std::vector<Vec3i> offsets;
  double r_vox = clearance_m / voxel_size_;
  for (int dz = -r; dz <= r; ++dz)
    for (int dy = -r; dy <= r; ++dy)
      for (int dx = -r; dx <= r; ++dx) {
        if (dx == 0 && dy == 0 && dz == 0) continue;
        double d = std::sqrt(double(dx * dx + dy * dy + dz * dz));
        if (d <= r_vox + 1e-12) offsets.emplace_back(dx, dy, dz);
      }
  for (std::size_t i = 0; i < states_.size(); ++i) {
    if (states_[i] != (std::uint8_t)VoxelState::Occupied) continue;
    Vec3i v = from_linear(i);
    for (const auto& o : offsets) {
      Vec3i w = v + o;
      if (in_bounds(w)) inflated_[linear_index(w)] = 1;
    }
  }
}

namespace {
constexpr char kMagic[4] = {'S', 'K', 'G', 'R'};
}

void OccupancyGrid::serialize(std::ostream& os) const {
  os.write(kMagic, 4);
  double o[3] = {origin_[0], origin_[1], origin_[2]};
  os.write(reinterpret_cast<const char*>(o), sizeof(o));
  os.write(reinterpret_cast<const char*>(&voxel_size_), sizeof(double));
  std::int64_t d[3] = {dims_[0], dims_[1], dims_[2]};
  os.write(reinterpret_cast<const char*>(d), sizeof(d));
  os.write(reinterpret_cast<const char*>(states_.data()),
           (std::streamsize)states_.size());
}

OccupancyGrid OccupancyGrid::deserialize(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("bad grid file: magic mismatch");
  double o[3];
  double vs;
  std::int64_t d[3];
  is.read(reinterpret_cast<char*>(o), sizeof(o));
  is.read(reinterpret_cast<char*>(&vs), sizeof(double));
  is.read(reinterpret_cast<char*>(d), sizeof(d));
  if (!is) throw std::runtime_error("bad grid file: truncated header");
  OccupancyGrid g(Vec3(o[0], o[1], o[2]), vs,
                  Vec3i((int)d[0], (int)d[1], (int)d[2]));
  is.read(reinterpret_cast<char*>(g.states_.data()),
          (std::streamsize)g.states_.size());
  if (!is) throw std::runtime_error("bad grid file: truncated body");
  return g;
}

OccupancyGrid build_grid(const PointCloud& cloud, double voxel_size,
                         int padding, std::size_t max_voxels) {
  cloud.require_nonempty();
  if (!(voxel_size > 0)) throw std::invalid_argument("voxel_size must be > 0");
  if (padding < 1) throw std::invalid_argument("padding must be >= 1");

  Aabb box = bounding_box(cloud.points);
  Vec3 origin = box.lo - Vec3::Constant(padding * voxel_size);
  Vec3i dims;
  for (int a = 0; a < 3; ++a) {
    // Voxels spanned by the data itself, floor convention on both ends.
    int lo = (int)std::floor(0.0);
    int hi = (int)std::floor((box.hi[a] - box.lo[a]) / voxel_size);
    dims[a] = (hi - lo + 1) + 2 * padding;
  }
  std::size_t n = (std::size_t)dims[0] * dims[1] * dims[2];
  if (n > max_voxels) throw std::invalid_argument("grid too large");

  OccupancyGrid grid(origin, voxel_size, dims);
  for (const auto& p : cloud.points) grid.set_occupied(grid.world_to_voxel(p));
  return grid;
}

}  // namespace skelcover
