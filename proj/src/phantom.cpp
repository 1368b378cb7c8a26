#include "lungcrowd/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "lungcrowd/error.hpp"

namespace lungcrowd {

namespace {

constexpr double kPi = 3.14159265358979323846;

constexpr Hu kAirHu = -1000;
constexpr Hu kBodyHu = 40;
constexpr Hu kLungHu = -850;
constexpr Hu kNoduleHu = 60;
constexpr Hu kVesselHu = 40;

struct Vec3 {
  double x = 0, y = 0, z = 0;
};

struct Ellipsoid {
  Vec3 c;
  Vec3 r;
  double rho(const Vec3& p) const {
    const double dx = (p.x - c.x) / r.x;
    const double dy = (p.y - c.y) / r.y;
    const double dz = (p.z - c.z) / r.z;
    return std::sqrt(dx * dx + dy * dy + dz * dz);
  }
};

struct Sphere {
  Vec3 c;
  double r = 0;
};

struct Vessel {
  double x = 0, y = 0, radius = 0;
  double z0 = 0, z1 = 0;
};

class Grid {
 public:
  Grid(const Dims3& d, const Spacing3& s) : dims_(d), sp_(s) {}
  Vec3 center(int x, int y, int z) const { return {(x + 0.5) * sp_.sx, (y + 0.5) * sp_.sy, (z + 0.5) * sp_.sz}; }
  int to_x(double mm) const { return std::clamp(static_cast<int>(std::floor(mm / sp_.sx)), 0, dims_.nx - 1); }
  int to_y(double mm) const { return std::clamp(static_cast<int>(std::floor(mm / sp_.sy)), 0, dims_.ny - 1); }
  int to_z(double mm) const { return std::clamp(static_cast<int>(std::floor(mm / sp_.sz)), 0, dims_.nz - 1); }
  // Snap a point to the nearest voxel centre so tiny spheres still own a voxel.
  Vec3 snap(const Vec3& p) const { return center(to_x(p.x), to_y(p.y), to_z(p.z)); }

 private:
  Dims3 dims_;
  Spacing3 sp_;
};

template <typename F>
void for_sphere_voxels(const Grid& grid, const Dims3& dims, const Sphere& s, F&& f) {
  const int x0 = grid.to_x(s.c.x - s.r), x1 = grid.to_x(s.c.x + s.r);
  const int y0 = grid.to_y(s.c.y - s.r), y1 = grid.to_y(s.c.y + s.r);
  const int z0 = grid.to_z(s.c.z - s.r), z1 = grid.to_z(s.c.z + s.r);
  for (int z = z0; z <= z1; ++z)
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        const auto p = grid.center(x, y, z);
        const double dx = p.x - s.c.x, dy = p.y - s.c.y, dz = p.z - s.c.z;
        if (dx * dx + dy * dy + dz * dz <= s.r * s.r && dims.inside(x, y, z)) f(x, y, z);
      }
}

}  // namespace

Phantom make_phantom(const PhantomConfig& config, const std::string& patient_id) {
  const Dims3& dims = config.dims;
  const Spacing3& sp = config.spacing;
  if (dims.nx < 24 || dims.ny < 24 || dims.nz < 12)
    fail(ErrorKind::invalid_argument, "phantom needs at least 24 x 24 x 12 voxels");
  if (sp.sx <= 0 || sp.sy <= 0 || sp.sz <= 0) fail(ErrorKind::invalid_argument, "phantom spacing must be positive");
  if (config.nodules < 0 || config.min_diameter_mm <= 0 || config.max_diameter_mm < config.min_diameter_mm)
    fail(ErrorKind::invalid_argument, "invalid phantom nodule settings");

  std::mt19937_64 rng(config.seed);
  auto unit = [&] { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); };
  auto around = [&](double v, double frac) { return v * (1.0 + frac * (2.0 * unit() - 1.0)); };

  const Grid grid(dims, sp);
  const double W = dims.nx * sp.sx, H = dims.ny * sp.sy, D = dims.nz * sp.sz;
  const double body_a = 0.46 * W, body_b = 0.42 * H;
  const double gap = 0.06 * W;
  const Vec3 radii{around(0.17 * W, 0.06), around(0.30 * H, 0.06), around(0.40 * D, 0.04)};
  Ellipsoid lungs[2];
  lungs[0] = {{W / 2 - gap / 2 - radii.x, around(H / 2, 0.03), D / 2}, radii};
  lungs[1] = {{W / 2 + gap / 2 + radii.x, around(H / 2, 0.03), D / 2}, {around(radii.x, 0.04), radii.y, radii.z}};

  Vessel vessels[2];
  for (int side = 0; side < 2; ++side) {
    const auto& e = lungs[side];
    const double dir = side == 0 ? -1.0 : 1.0;  // lateral
    vessels[side].x = e.c.x + dir * 0.3 * e.r.x;
    vessels[side].y = e.c.y + 0.2 * e.r.y;
    vessels[side].radius = 1.5;
    // keep the vessel where it runs well inside the lung cross-section
    const double q = std::pow(0.3, 2) + std::pow(0.2, 2);
    const double half = e.r.z * std::sqrt(std::max(0.0, 0.8 - q));
    vessels[side].z0 = e.c.z - half;
    vessels[side].z1 = e.c.z + half;
  }

  // Nodules: attachment decides where the sphere goes.
  Phantom ph;
  ph.patient_id = patient_id;
  std::vector<Sphere> spheres;
  std::vector<Box> footprints;  // in-plane voxel boxes, kept disjoint
  std::vector<int> sphere_side;
  int placed = 0;
  for (int n = 0; n < config.nodules; ++n) {
    const auto attachment = kAllAttachments[static_cast<std::size_t>(n) % kAllAttachments.size()];
    const double diameter = config.min_diameter_mm + unit() * (config.max_diameter_mm - config.min_diameter_mm);
    const double r = diameter / 2;
    bool ok = false;
    for (int attempt = 0; attempt < 400 && !ok; ++attempt) {
      const int side = static_cast<int>(rng() % 2);
      const auto& e = lungs[side];
      const double lateral = side == 0 ? -1.0 : 1.0;
      Vec3 c;
      switch (attachment) {
        case Attachment::pleural:
        case Attachment::hilar: {
          // direction on the lateral (pleural) or medial (hilar) wall
          const double sign = attachment == Attachment::pleural ? lateral : -lateral;
          const double theta = (unit() - 0.5) * (attachment == Attachment::hilar ? 0.6 : 1.6);
          const double phi = (unit() - 0.5) * 1.2;
          Vec3 u{sign * std::cos(theta) * std::cos(phi), std::sin(theta) * std::cos(phi), std::sin(phi)};
          const double s = 1.0 - (r + 1.5) / std::min({e.r.x, e.r.y, e.r.z});
          if (s <= 0.2) continue;
          c = {e.c.x + s * u.x * e.r.x, e.c.y + s * u.y * e.r.y, e.c.z + s * u.z * e.r.z};
          break;
        }
        case Attachment::vessel: {
          const auto& v = vessels[side];
          const double ang = unit() * 2 * kPi;
          const double d = v.radius + r + 0.5;
          c = {v.x + d * std::cos(ang), v.y + d * std::sin(ang), v.z0 + unit() * (v.z1 - v.z0)};
          break;
        }
        case Attachment::central: {
          const double rad = 0.5 * std::cbrt(unit());
          const double ang = unit() * 2 * kPi;
          const double zz = 2 * unit() - 1;
          const double rr = std::sqrt(1 - zz * zz);
          c = {e.c.x + rad * rr * std::cos(ang) * e.r.x, e.c.y + rad * rr * std::sin(ang) * e.r.y,
               e.c.z + rad * zz * e.r.z};
          break;
        }
      }
      const Sphere s{grid.snap(c), r};
      // fully inside the lung, clear of the vessel unless attached to it
      bool inside = true;
      Box fp;
      int zmin = dims.nz, zmax = -1;
      for_sphere_voxels(grid, dims, s, [&](int x, int y, int z) {
        if (e.rho(grid.center(x, y, z)) > 0.97) inside = false;
        fp = bounding_union(fp, Box{x, y, 1, 1});
        zmin = std::min(zmin, z);
        zmax = std::max(zmax, z);
      });
      if (!inside || fp.empty()) continue;
      if (attachment != Attachment::vessel) {
        const auto& v = vessels[side];
        const double dxy = std::hypot(s.c.x - v.x, s.c.y - v.y);
        if (dxy < v.radius + r + 2.0) continue;
      }
      const Box grown{fp.x - 3, fp.y - 3, fp.w + 6, fp.h + 6};
      if (std::any_of(footprints.begin(), footprints.end(), [&](const Box& b) { return intersection_area(b, grown) > 0; }))
        continue;
      spheres.push_back(s);
      footprints.push_back(fp);
      sphere_side.push_back(side);
      ok = true;

      GroundTruthNodule g;
      char id[32];
      std::snprintf(id, sizeof id, "%s-N%02d", patient_id.c_str(), ++placed);
      g.nodule_id = id;
      g.patient_id = patient_id;
      g.diameter_mm = std::round(diameter * 10.0) / 10.0;
      g.attachment = attachment;
      g.location = e.rho(s.c) > 0.7 ? Location::peripheral : Location::non_peripheral;
      std::vector<Box> per_slice(static_cast<std::size_t>(zmax - zmin + 1));
      for_sphere_voxels(grid, dims, s, [&](int x, int y, int z) {
        auto& b = per_slice[static_cast<std::size_t>(z - zmin)];
        b = bounding_union(b, Box{x, y, 1, 1});
      });
      for (int z = zmin; z <= zmax; ++z)
        if (!per_slice[static_cast<std::size_t>(z - zmin)].empty())
          g.extent.push_back(ExtentSlice{z, per_slice[static_cast<std::size_t>(z - zmin)]});
      ph.nodules.push_back(std::move(g));
    }
  }

  // Rasterize.
  std::vector<Hu> hu(dims.count(), kAirHu);
  ph.left_truth = LungMask::zeros(dims, sp, LungLabel::left);
  ph.right_truth = LungMask::zeros(dims, sp, LungLabel::right);
  const Vec3 pocket{W / 2, H / 2 - 0.33 * H, D / 2};
  const double pocket_r = 4.0;
  const double bridge_r = 2.5;
  for (int z = 0; z < dims.nz; ++z) {
    for (int y = 0; y < dims.ny; ++y) {
      for (int x = 0; x < dims.nx; ++x) {
        const auto p = grid.center(x, y, z);
        const auto i = dims.index(x, y, z);
        const double bx = (p.x - W / 2) / body_a, by = (p.y - H / 2) / body_b;
        if (bx * bx + by * by > 1.0) continue;
        hu[i] = kBodyHu;
        for (int side = 0; side < 2; ++side) {
          if (lungs[side].rho(p) > 1.0) continue;
          hu[i] = kLungHu;
          (side == 0 ? ph.left_truth : ph.right_truth).bits[i] = 1;
          const auto& v = vessels[side];
          if (p.z >= v.z0 && p.z <= v.z1 && std::hypot(p.x - v.x, p.y - v.y) <= v.radius) hu[i] = kVesselHu;
        }
        if (config.bridge && hu[i] == kBodyHu && p.x > lungs[0].c.x && p.x < lungs[1].c.x &&
            std::hypot(p.y - lungs[0].c.y, p.z - D / 2) <= bridge_r)
          hu[i] = kLungHu;
        if (config.gas_pocket && std::hypot(p.x - pocket.x, p.y - pocket.y, p.z - pocket.z) <= pocket_r)
          hu[i] = kAirHu;
      }
    }
  }
  for (const auto& s : spheres)
    for_sphere_voxels(grid, dims, s, [&](int x, int y, int z) { hu[dims.index(x, y, z)] = kNoduleHu; });

  if (config.noise_sigma_hu > 0) {
    std::normal_distribution<double> noise(0.0, config.noise_sigma_hu);
    for (auto& v : hu) {
      const double n = std::round(v + noise(rng));
      v = static_cast<Hu>(std::clamp(n, static_cast<double>(kMinHu), static_cast<double>(kMaxHu)));
    }
  }
  ph.volume = CtVolume(dims, sp, std::move(hu));
  return ph;
}

}  // namespace lungcrowd
