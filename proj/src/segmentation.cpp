#include "lungcrowd/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "lungcrowd/error.hpp"

namespace lungcrowd {

namespace {

constexpr double kFar = 1e30;

// Lower envelope of parabolas, one line at a time (Felzenszwalb & Huttenlocher).
void distance_1d(const double* f, double* d, int n, double weight, std::vector<int>& v, std::vector<double>& z) {
  v.assign(static_cast<std::size_t>(n), 0);
  z.assign(static_cast<std::size_t>(n) + 1, 0.0);
  std::size_t k = 0;
  z[0] = -std::numeric_limits<double>::infinity();
  z[1] = std::numeric_limits<double>::infinity();
  auto meet = [&](int q, int p) {
    return ((f[q] + weight * q * q) - (f[p] + weight * p * p)) / (2.0 * weight * (q - p));
  };
  for (int q = 1; q < n; ++q) {
    double s = meet(q, v[k]);
    while (s <= z[k]) {
      --k;
      s = meet(q, v[k]);
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = std::numeric_limits<double>::infinity();
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    const double dq = q - v[k];
    d[q] = f[v[k]] + weight * dq * dq;
  }
}

// Squared physical distance from every voxel to the nearest seed voxel.
std::vector<double> squared_distance(const std::vector<std::uint8_t>& seeds, const Dims3& dims,
                                     const Spacing3& spacing) {
  std::vector<double> dist(dims.count());
  for (std::size_t i = 0; i < dist.size(); ++i) dist[i] = seeds[i] ? 0.0 : kFar;

  const int longest = std::max({dims.nx, dims.ny, dims.nz});
  std::vector<double> f(static_cast<std::size_t>(longest)), d(static_cast<std::size_t>(longest));
  std::vector<int> v;
  std::vector<double> z;

  auto pass = [&](int n, double weight, auto index_of, int outer_a, int outer_b) {
    for (int b = 0; b < outer_b; ++b) {
      for (int a = 0; a < outer_a; ++a) {
        for (int i = 0; i < n; ++i) f[static_cast<std::size_t>(i)] = dist[index_of(i, a, b)];
        distance_1d(f.data(), d.data(), n, weight, v, z);
        for (int i = 0; i < n; ++i) dist[index_of(i, a, b)] = d[static_cast<std::size_t>(i)];
      }
    }
  };
  pass(dims.nx, spacing.sx * spacing.sx, [&](int i, int a, int b) { return dims.index(i, a, b); }, dims.ny,
       dims.nz);
  pass(dims.ny, spacing.sy * spacing.sy, [&](int i, int a, int b) { return dims.index(a, i, b); }, dims.nx,
       dims.nz);
  pass(dims.nz, spacing.sz * spacing.sz, [&](int i, int a, int b) { return dims.index(a, b, i); }, dims.nx,
       dims.ny);
  return dist;
}

// Background pixels of one slice not 8-connected to the slice border become foreground.
void fill_holes_slice(std::vector<std::uint8_t>& bits, const Dims3& dims, int z, std::vector<std::uint8_t>& seen,
                      std::vector<int>& stack) {
  const int nx = dims.nx;
  const int ny = dims.ny;
  std::fill(seen.begin(), seen.end(), 0);
  stack.clear();
  auto background = [&](int x, int y) { return bits[dims.index(x, y, z)] == 0; };
  auto push = [&](int x, int y) {
    const int p = y * nx + x;
    if (!seen[static_cast<std::size_t>(p)] && background(x, y)) {
      seen[static_cast<std::size_t>(p)] = 1;
      stack.push_back(p);
    }
  };
  for (int x = 0; x < nx; ++x) {
    push(x, 0);
    push(x, ny - 1);
  }
  for (int y = 0; y < ny; ++y) {
    push(0, y);
    push(nx - 1, y);
  }
  while (!stack.empty()) {
    const int p = stack.back();
    stack.pop_back();
    const int x = p % nx;
    const int y = p / nx;
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        const int qx = x + dx;
        const int qy = y + dy;
        if ((dx || dy) && qx >= 0 && qy >= 0 && qx < nx && qy < ny) push(qx, qy);
      }
    }
  }
  for (int y = 0; y < ny; ++y) {
    for (int x = 0; x < nx; ++x) {
      if (!seen[static_cast<std::size_t>(y * nx + x)]) bits[dims.index(x, y, z)] = 1;
    }
  }
}

Box padded_box(int x0, int y0, int x1, int y1, int pad, const Dims3& dims) {
  const int bx0 = std::max(0, x0 - pad);
  const int by0 = std::max(0, y0 - pad);
  const int bx1 = std::min(dims.nx - 1, x1 + pad);
  const int by1 = std::min(dims.ny - 1, y1 + pad);
  return Box{bx0, by0, bx1 - bx0 + 1, by1 - by0 + 1};
}

Quadrant quadrant_from_mask(QuadrantId id, LungMask mask, int pad) {
  Quadrant q;
  q.id = id;
  const auto& d = mask.dims;
  int x0 = d.nx, y0 = d.ny, z0 = d.nz, x1 = -1, y1 = -1, z1 = -1;
  for (int z = 0; z < d.nz; ++z) {
    for (int y = 0; y < d.ny; ++y) {
      for (int x = 0; x < d.nx; ++x) {
        if (!mask.at(x, y, z)) continue;
        x0 = std::min(x0, x);
        x1 = std::max(x1, x);
        y0 = std::min(y0, y);
        y1 = std::max(y1, y);
        z0 = std::min(z0, z);
        z1 = std::max(z1, z);
      }
    }
  }
  if (x1 < 0) {
    q.empty = true;
    q.slice_range = {0, 0};
    q.bbox2d = {0, 0, 0, 0};
  } else {
    q.empty = false;
    q.slice_range = {z0, z1};
    q.bbox2d = padded_box(x0, y0, x1, y1, pad, d);
  }
  q.mask = std::move(mask);
  return q;
}

std::pair<Quadrant, Quadrant> split_lung(const LungMask& lung, QuadrantId upper_id, QuadrantId lower_id,
                                         const SegmentationConfig& config) {
  const auto& d = lung.dims;
  const bool axial = config.split_axis == SplitAxis::superior_inferior;
  const int extent = axial ? d.nz : d.ny;
  std::vector<std::size_t> per_layer(static_cast<std::size_t>(extent), 0);
  for (int z = 0; z < d.nz; ++z)
    for (int y = 0; y < d.ny; ++y)
      for (int x = 0; x < d.nx; ++x)
        if (lung.at(x, y, z)) ++per_layer[static_cast<std::size_t>(axial ? z : y)];

  std::vector<int> occupied;
  for (int i = 0; i < extent; ++i)
    if (per_layer[static_cast<std::size_t>(i)] > 0) occupied.push_back(i);

  auto upper = LungMask::zeros(d, lung.spacing, lung.label);
  auto lower = LungMask::zeros(d, lung.spacing, lung.label);
  if (!occupied.empty()) {
    const int median = occupied[occupied.size() / 2];
    for (int z = 0; z < d.nz; ++z) {
      for (int y = 0; y < d.ny; ++y) {
        for (int x = 0; x < d.nx; ++x) {
          const auto i = d.index(x, y, z);
          if (!lung.bits[i]) continue;
          const int layer = axial ? z : y;
          (layer < median ? upper : lower).bits[i] = 1;
        }
      }
    }
  }
  return {quadrant_from_mask(upper_id, std::move(upper), config.bbox_padding),
          quadrant_from_mask(lower_id, std::move(lower), config.bbox_padding)};
}

double centroid_x(const LungMask& m) {
  double sum = 0;
  std::size_t n = 0;
  for (int z = 0; z < m.dims.nz; ++z)
    for (int y = 0; y < m.dims.ny; ++y)
      for (int x = 0; x < m.dims.nx; ++x)
        if (m.at(x, y, z)) {
          sum += x;
          ++n;
        }
  return n ? sum / static_cast<double>(n) : 0.0;
}

}  // namespace

std::size_t LungMask::count() const {
  return static_cast<std::size_t>(std::count_if(bits.begin(), bits.end(), [](std::uint8_t b) { return b != 0; }));
}

std::string_view to_string(QuadrantId id) {
  switch (id) {
    case QuadrantId::left_upper: return "left_upper";
    case QuadrantId::left_lower: return "left_lower";
    case QuadrantId::right_upper: return "right_upper";
    case QuadrantId::right_lower: return "right_lower";
  }
  return "unknown";
}

QuadrantId quadrant_from_string(std::string_view text) {
  for (auto id : kAllQuadrants)
    if (to_string(id) == text) return id;
  fail(ErrorKind::format, "unknown quadrant id '" + std::string(text) + "'");
}

ComponentLabels label_components_26(const std::vector<std::uint8_t>& bits, const Dims3& dims) {
  ComponentLabels out;
  out.labels.assign(dims.count(), 0);
  std::vector<std::size_t> stack;
  std::int32_t next = 0;
  for (int z = 0; z < dims.nz; ++z) {
    for (int y = 0; y < dims.ny; ++y) {
      for (int x = 0; x < dims.nx; ++x) {
        const auto seed = dims.index(x, y, z);
        if (!bits[seed] || out.labels[seed]) continue;
        ++next;
        std::size_t size = 0;
        out.labels[seed] = next;
        stack.push_back(seed);
        while (!stack.empty()) {
          const auto i = stack.back();
          stack.pop_back();
          ++size;
          const int px = static_cast<int>(i % static_cast<std::size_t>(dims.nx));
          const int py = static_cast<int>((i / static_cast<std::size_t>(dims.nx)) % static_cast<std::size_t>(dims.ny));
          const int pz = static_cast<int>(i / dims.plane());
          for (int dz = -1; dz <= 1; ++dz) {
            for (int dy = -1; dy <= 1; ++dy) {
              for (int dx = -1; dx <= 1; ++dx) {
                const int qx = px + dx, qy = py + dy, qz = pz + dz;
                if (!dims.inside(qx, qy, qz)) continue;
                const auto j = dims.index(qx, qy, qz);
                if (bits[j] && !out.labels[j]) {
                  out.labels[j] = next;
                  stack.push_back(j);
                }
              }
            }
          }
        }
        out.sizes.push_back(size);
      }
    }
  }
  return out;
}

double optimal_threshold(const CtVolume& volume, const SegmentationConfig& config) {
  constexpr int kBins = kMaxHu - kMinHu + 1;
  std::vector<std::uint64_t> hist(kBins, 0);
  for (Hu v : volume.voxels()) ++hist[static_cast<std::size_t>(v - kMinHu)];

  int lo = kMinHu, hi = kMaxHu;
  while (hist[static_cast<std::size_t>(lo - kMinHu)] == 0) ++lo;
  while (hist[static_cast<std::size_t>(hi - kMinHu)] == 0) --hi;
  if (lo == hi) fail(ErrorKind::algorithm, "degenerate histogram: all voxels equal " + std::to_string(lo));

  // Prefix sums so each split costs O(1).
  std::vector<double> count_prefix(kBins + 1, 0.0), sum_prefix(kBins + 1, 0.0);
  for (int i = 0; i < kBins; ++i) {
    count_prefix[static_cast<std::size_t>(i) + 1] = count_prefix[static_cast<std::size_t>(i)] + static_cast<double>(hist[static_cast<std::size_t>(i)]);
    sum_prefix[static_cast<std::size_t>(i) + 1] =
        sum_prefix[static_cast<std::size_t>(i)] + static_cast<double>(hist[static_cast<std::size_t>(i)]) * (i + kMinHu);
  }
  const double total_count = count_prefix.back();
  const double total_sum = sum_prefix.back();

  double t = config.initial_threshold;
  // An initial guess outside the data range leaves one class empty; restart mid-range.
  if (t < lo || t >= hi) t = (lo + hi) / 2.0;
  for (int iter = 0; iter < config.max_iterations; ++iter) {
    // number of bins with value <= t
    const int cut = std::clamp(static_cast<int>(std::floor(t)) - kMinHu + 1, 0, kBins);
    const double n_low = count_prefix[static_cast<std::size_t>(cut)];
    const double s_low = sum_prefix[static_cast<std::size_t>(cut)];
    const double mean_low = s_low / n_low;
    const double mean_high = (total_sum - s_low) / (total_count - n_low);
    const double next = (mean_low + mean_high) / 2.0;
    const bool converged = std::abs(next - t) < config.convergence_hu;
    t = next;
    if (converged) break;
  }
  return t;
}

LungMask extract_lungs(const CtVolume& volume, double threshold, const SegmentationConfig& config) {
  const auto& d = volume.dims();
  std::vector<std::uint8_t> candidate(d.count());
  const auto voxels = volume.voxels();
  for (std::size_t i = 0; i < candidate.size(); ++i) candidate[i] = voxels[i] <= threshold ? 1 : 0;

  const auto comps = label_components_26(candidate, d);
  std::vector<std::uint8_t> touches_side(comps.sizes.size() + 1, 0);
  for (int z = 0; z < d.nz; ++z) {
    for (int y = 0; y < d.ny; ++y) {
      for (int x = 0; x < d.nx; ++x) {
        if (x != 0 && y != 0 && x != d.nx - 1 && y != d.ny - 1) continue;
        touches_side[static_cast<std::size_t>(comps.labels[d.index(x, y, z)])] = 1;
      }
    }
  }
  const double floor_count = config.component_fraction * static_cast<double>(d.count());
  std::vector<std::uint8_t> keep(comps.sizes.size() + 1, 0);
  bool any = false;
  for (std::size_t c = 1; c <= comps.sizes.size(); ++c) {
    if (!touches_side[c] && static_cast<double>(comps.sizes[c - 1]) >= floor_count) {
      keep[c] = 1;
      any = true;
    }
  }
  if (!any) fail(ErrorKind::algorithm, "no lung found");

  auto mask = LungMask::zeros(d, volume.spacing(), LungLabel::combined);
  for (std::size_t i = 0; i < mask.bits.size(); ++i) mask.bits[i] = keep[static_cast<std::size_t>(comps.labels[i])];

  std::vector<std::uint8_t> seen(d.plane());
  std::vector<int> stack;
  for (int z = 0; z < d.nz; ++z) fill_holes_slice(mask.bits, d, z, seen, stack);
  return mask;
}

std::pair<LungMask, LungMask> separate_lungs(const LungMask& combined) {
  const auto& d = combined.dims;
  auto left = LungMask::zeros(d, combined.spacing, LungLabel::left);
  auto right = LungMask::zeros(d, combined.spacing, LungLabel::right);

  const auto comps = label_components_26(combined.bits, d);
  if (comps.sizes.empty()) fail(ErrorKind::invalid_argument, "cannot separate an empty lung mask");

  if (comps.sizes.size() >= 2) {
    std::vector<double> sum_x(comps.sizes.size() + 1, 0.0);
    double global_sum = 0;
    std::size_t global_n = 0;
    for (int z = 0; z < d.nz; ++z)
      for (int y = 0; y < d.ny; ++y)
        for (int x = 0; x < d.nx; ++x) {
          const auto c = comps.labels[d.index(x, y, z)];
          if (!c) continue;
          sum_x[static_cast<std::size_t>(c)] += x;
          global_sum += x;
          ++global_n;
        }
    const double global_cx = global_sum / static_cast<double>(global_n);
    for (std::size_t i = 0; i < combined.bits.size(); ++i) {
      const auto c = static_cast<std::size_t>(comps.labels[i]);
      if (!c) continue;
      const double cx = sum_x[c] / static_cast<double>(comps.sizes[c - 1]);
      (cx < global_cx ? left : right).bits[i] = 1;
    }
    return {std::move(left), std::move(right)};
  }

  // Fused lungs: cut at the thinnest sagittal plane of the central third.
  std::vector<std::size_t> per_x(static_cast<std::size_t>(d.nx), 0);
  for (int z = 0; z < d.nz; ++z)
    for (int y = 0; y < d.ny; ++y)
      for (int x = 0; x < d.nx; ++x)
        if (combined.at(x, y, z)) ++per_x[static_cast<std::size_t>(x)];
  int xmin = 0, xmax = d.nx - 1;
  while (per_x[static_cast<std::size_t>(xmin)] == 0) ++xmin;
  while (per_x[static_cast<std::size_t>(xmax)] == 0) --xmax;
  const int extent = xmax - xmin + 1;
  const int lo = xmin + extent / 3;
  const int hi = std::max(lo, xmax - extent / 3);
  const double center = (xmin + xmax) / 2.0;
  int cut = lo;
  for (int x = lo; x <= hi; ++x) {
    const auto cx = per_x[static_cast<std::size_t>(x)];
    const auto cb = per_x[static_cast<std::size_t>(cut)];
    if (cx < cb || (cx == cb && std::abs(x - center) < std::abs(cut - center))) cut = x;
  }
  for (int z = 0; z < d.nz; ++z)
    for (int y = 0; y < d.ny; ++y)
      for (int x = 0; x < d.nx; ++x) {
        const auto i = d.index(x, y, z);
        if (combined.bits[i]) (x < cut ? left : right).bits[i] = 1;
      }
  return {std::move(left), std::move(right)};
}

LungMask smooth_boundaries(const LungMask& mask, double radius_mm) {
  if (radius_mm < 0) fail(ErrorKind::invalid_argument, "closing radius must be >= 0");
  if (radius_mm == 0) return mask;
  const double r2 = radius_mm * radius_mm;
  const auto& d = mask.dims;

  // Dilation: out-of-volume voxels count as background.
  const auto to_mask = squared_distance(mask.bits, d, mask.spacing);
  std::vector<std::uint8_t> dilated_complement(d.count());
  for (std::size_t i = 0; i < dilated_complement.size(); ++i) dilated_complement[i] = to_mask[i] <= r2 ? 0 : 1;

  // Erosion: out-of-volume voxels count as foreground, so only in-volume gaps erode.
  LungMask out = mask;
  if (std::none_of(dilated_complement.begin(), dilated_complement.end(), [](std::uint8_t b) { return b != 0; })) {
    std::fill(out.bits.begin(), out.bits.end(), 1);
    return out;
  }
  const auto to_gap = squared_distance(dilated_complement, d, mask.spacing);
  for (std::size_t i = 0; i < out.bits.size(); ++i) out.bits[i] = to_gap[i] > r2 ? 1 : 0;
  return out;
}

std::array<Quadrant, 4> make_quadrants(const LungMask& left, const LungMask& right, const SegmentationConfig& config) {
  if (left.dims != right.dims) fail(ErrorKind::invalid_argument, "left/right mask dims differ");
  for (std::size_t i = 0; i < left.bits.size(); ++i)
    if (left.bits[i] && right.bits[i]) fail(ErrorKind::invalid_argument, "left and right masks overlap");
  auto [lu, ll] = split_lung(left, QuadrantId::left_upper, QuadrantId::left_lower, config);
  auto [ru, rl] = split_lung(right, QuadrantId::right_upper, QuadrantId::right_lower, config);
  return {std::move(lu), std::move(ll), std::move(ru), std::move(rl)};
}

SegmentationResult segment_lungs(const CtVolume& volume, const SegmentationConfig& config) {
  SegmentationResult result;
  result.threshold = config.threshold_override ? *config.threshold_override : optimal_threshold(volume, config);
  const auto extracted = extract_lungs(volume, result.threshold, config);
  auto [left_raw, right_raw] = separate_lungs(extracted);

  result.left = smooth_boundaries(left_raw, config.closing_radius_mm);
  result.right = smooth_boundaries(right_raw, config.closing_radius_mm);
  result.left.label = LungLabel::left;
  result.right.label = LungLabel::right;

  // Closing each side independently can claim the same voxel twice; the
  // original owner keeps it, otherwise the nearer lung centroid wins.
  const double cl = centroid_x(left_raw);
  const double cr = centroid_x(right_raw);
  const auto& d = volume.dims();
  for (int z = 0; z < d.nz; ++z)
    for (int y = 0; y < d.ny; ++y)
      for (int x = 0; x < d.nx; ++x) {
        const auto i = d.index(x, y, z);
        if (!(result.left.bits[i] && result.right.bits[i])) continue;
        bool to_left;
        if (left_raw.bits[i]) to_left = true;
        else if (right_raw.bits[i]) to_left = false;
        else to_left = std::abs(x - cl) <= std::abs(x - cr);
        (to_left ? result.right : result.left).bits[i] = 0;
      }

  result.combined = LungMask::zeros(d, volume.spacing(), LungLabel::combined);
  for (std::size_t i = 0; i < result.combined.bits.size(); ++i)
    result.combined.bits[i] = (result.left.bits[i] || result.right.bits[i]) ? 1 : 0;
  result.quadrants = make_quadrants(result.left, result.right, config);
  return result;
}

double dice_coefficient(const LungMask& a, const LungMask& b) {
  if (a.bits.size() != b.bits.size()) fail(ErrorKind::invalid_argument, "dice: mask sizes differ");
  std::size_t na = 0, nb = 0, both = 0;
  for (std::size_t i = 0; i < a.bits.size(); ++i) {
    na += a.bits[i] != 0;
    nb += b.bits[i] != 0;
    both += (a.bits[i] && b.bits[i]);
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

}  // namespace lungcrowd
