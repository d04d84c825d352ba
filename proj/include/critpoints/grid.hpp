#ifndef CRITPOINTS_GRID_HPP
#define CRITPOINTS_GRID_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <ostream>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include "critpoints/errors.hpp"

namespace critpoints::sphere {

using Vec3 = std::array<double, 3>;

inline double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
inline Vec3 normalized(Vec3 v) {
  const double n = std::sqrt(dot(v, v));
  return {v[0] / n, v[1] / n, v[2] / n};
}

enum class Scheme { Healpix, Icosphere };

inline const char* to_string(Scheme s) { return s == Scheme::Healpix ? "healpix" : "icosphere"; }

/// Pixel centers on S^2 with a symmetric neighbor relation stored as CSR.
class SphereGrid {
 public:
  /// From per-vertex neighbor lists; rows are sorted.
  SphereGrid(Scheme scheme, int resolution, std::vector<Vec3> centers, std::vector<std::vector<std::int32_t>> adj)
      : scheme_(scheme), resolution_(resolution), centers_(std::move(centers)) {
    offsets_.reserve(adj.size() + 1);
    offsets_.push_back(0);
    for (auto& row : adj) {
      std::sort(row.begin(), row.end());
      neighbors_.insert(neighbors_.end(), row.begin(), row.end());
      offsets_.push_back(static_cast<std::int64_t>(neighbors_.size()));
    }
  }

  /// From CSR arrays with sorted rows.
  SphereGrid(Scheme scheme, int resolution, std::vector<Vec3> centers, std::vector<std::int64_t> offsets,
             std::vector<std::int32_t> neighbors)
      : scheme_(scheme),
        resolution_(resolution),
        centers_(std::move(centers)),
        offsets_(std::move(offsets)),
        neighbors_(std::move(neighbors)) {}

  Scheme scheme() const noexcept { return scheme_; }
  /// HEALPix order r (nside = 2^r) or icosphere subdivision count.
  int resolution() const noexcept { return resolution_; }
  std::size_t size() const noexcept { return centers_.size(); }
  const std::vector<Vec3>& centers() const noexcept { return centers_; }
  const Vec3& center(std::size_t i) const { return centers_[i]; }
  std::span<const std::int32_t> neighbors(std::size_t i) const {
    return {neighbors_.data() + offsets_[i], static_cast<std::size_t>(offsets_[i + 1] - offsets_[i])};
  }

  /// "pixel,neighbor" rows, one per directed adjacency.
  void write_adjacency_csv(std::ostream& os) const {
    os << "pixel,neighbor\n";
    for (std::size_t i = 0; i < size(); ++i)
      for (std::int32_t j : neighbors(i)) os << i << ',' << j << '\n';
  }

 private:
  Scheme scheme_;
  int resolution_;
  std::vector<Vec3> centers_;
  std::vector<std::int64_t> offsets_;
  std::vector<std::int32_t> neighbors_;
};

// ---------------------------------------------------------------------------
// HEALPix, NESTED numbering

namespace healpix {

inline constexpr int kJrll[12] = {2, 2, 2, 2, 3, 3, 3, 3, 4, 4, 4, 4};
inline constexpr int kJpll[12] = {1, 3, 5, 7, 0, 2, 4, 6, 1, 3, 5, 7};

/// Interleaves the bits of x (even positions) and y (odd positions).
inline std::int64_t spread_bits(std::int64_t v) {
  std::uint64_t x = static_cast<std::uint64_t>(v) & 0xffffffffULL;
  x = (x | (x << 16)) & 0x0000ffff0000ffffULL;
  x = (x | (x << 8)) & 0x00ff00ff00ff00ffULL;
  x = (x | (x << 4)) & 0x0f0f0f0f0f0f0f0fULL;
  x = (x | (x << 2)) & 0x3333333333333333ULL;
  x = (x | (x << 1)) & 0x5555555555555555ULL;
  return static_cast<std::int64_t>(x);
}

inline std::int64_t compress_bits(std::int64_t v) {
  std::uint64_t x = static_cast<std::uint64_t>(v) & 0x5555555555555555ULL;
  x = (x | (x >> 1)) & 0x3333333333333333ULL;
  x = (x | (x >> 2)) & 0x0f0f0f0f0f0f0f0fULL;
  x = (x | (x >> 4)) & 0x00ff00ff00ff00ffULL;
  x = (x | (x >> 8)) & 0x0000ffff0000ffffULL;
  x = (x | (x >> 16)) & 0x00000000ffffffffULL;
  return static_cast<std::int64_t>(x);
}

struct Xyf {
  int ix, iy, face;
};

inline Xyf nest2xyf(std::int64_t pix, int order) {
  const std::int64_t npface = std::int64_t{1} << (2 * order);
  const int face = static_cast<int>(pix / npface);
  const std::int64_t p = pix & (npface - 1);
  return {static_cast<int>(compress_bits(p)), static_cast<int>(compress_bits(p >> 1)), face};
}

inline std::int64_t xyf2nest(int ix, int iy, int face, int order) {
  return (static_cast<std::int64_t>(face) << (2 * order)) + spread_bits(ix) + (spread_bits(iy) << 1);
}

/// Unit vector of the center of NESTED pixel `pix`.
inline Vec3 pix2vec(std::int64_t pix, int order) {
  const std::int64_t nside = std::int64_t{1} << order;
  const double fact2 = 4.0 / (12.0 * static_cast<double>(nside * nside));
  const double fact1 = 2.0 * static_cast<double>(nside) * fact2;
  const Xyf c = nest2xyf(pix, order);
  const std::int64_t jr = static_cast<std::int64_t>(kJrll[c.face]) * nside - c.ix - c.iy - 1;
  std::int64_t nr, kshift;
  double z, sth;
  if (jr < nside) {
    nr = jr;
    const double tmp = static_cast<double>(nr * nr) * fact2;
    z = 1.0 - tmp;
    sth = std::sqrt(tmp * (2.0 - tmp));
    kshift = 0;
  } else if (jr > 3 * nside) {
    nr = 4 * nside - jr;
    const double tmp = static_cast<double>(nr * nr) * fact2;
    z = tmp - 1.0;
    sth = std::sqrt(tmp * (2.0 - tmp));
    kshift = 0;
  } else {
    nr = nside;
    z = static_cast<double>(2 * nside - jr) * fact1;
    sth = std::sqrt((1.0 - z) * (1.0 + z));
    kshift = (jr - nside) & 1;
  }
  std::int64_t jp = (static_cast<std::int64_t>(kJpll[c.face]) * nr + c.ix - c.iy + 1 + kshift) / 2;
  if (jp > 4 * nside) jp -= 4 * nside;
  if (jp < 1) jp += 4 * nside;
  const double phi = (static_cast<double>(jp) - (kshift + 1) * 0.5) * (0.5 * std::numbers::pi / static_cast<double>(nr));
  return {sth * std::cos(phi), sth * std::sin(phi), z};
}

/// The eight neighbors of a NESTED pixel (-1 where a polar corner has only seven).
inline std::array<std::int64_t, 8> neighbors(std::int64_t pix, int order) {
  static constexpr int xoffset[] = {-1, -1, 0, 1, 1, 1, 0, -1};
  static constexpr int yoffset[] = {0, 1, 1, 1, 0, -1, -1, -1};
  static constexpr int facearray[9][12] = {{8, 9, 10, 11, -1, -1, -1, -1, 10, 11, 8, 9},
                                           {5, 6, 7, 4, 8, 9, 10, 11, 9, 10, 11, 8},
                                           {-1, -1, -1, -1, 5, 6, 7, 4, -1, -1, -1, -1},
                                           {4, 5, 6, 7, 11, 8, 9, 10, 11, 8, 9, 10},
                                           {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11},
                                           {1, 2, 3, 0, 0, 1, 2, 3, 5, 6, 7, 4},
                                           {-1, -1, -1, -1, 7, 4, 5, 6, -1, -1, -1, -1},
                                           {3, 0, 1, 2, 3, 0, 1, 2, 4, 5, 6, 7},
                                           {2, 3, 0, 1, -1, -1, -1, -1, 0, 1, 2, 3}};
  static constexpr int swaparray[9][12] = {{0, 0, 0, 0, 0, 0, 0, 0, 3, 3, 3, 3}, {0, 0, 0, 0, 0, 0, 0, 0, 6, 6, 6, 6},
                                           {0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0}, {0, 0, 0, 0, 0, 0, 0, 0, 5, 5, 5, 5},
                                           {0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0}, {5, 5, 5, 5, 0, 0, 0, 0, 0, 0, 0, 0},
                                           {0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0}, {6, 6, 6, 6, 0, 0, 0, 0, 0, 0, 0, 0},
                                           {3, 3, 3, 3, 0, 0, 0, 0, 0, 0, 0, 0}};
  const int nside = 1 << order;
  const Xyf c = nest2xyf(pix, order);
  std::array<std::int64_t, 8> out{};
  for (int m = 0; m < 8; ++m) {
    int x = c.ix + xoffset[m], y = c.iy + yoffset[m];
    int nbnum = 4;
    if (x < 0) {
      x += nside;
      nbnum -= 1;
    } else if (x >= nside) {
      x -= nside;
      nbnum += 1;
    }
    if (y < 0) {
      y += nside;
      nbnum -= 3;
    } else if (y >= nside) {
      y -= nside;
      nbnum += 3;
    }
    const int f = facearray[nbnum][c.face];
    if (f < 0) {
      out[m] = -1;
      continue;
    }
    const int swap = swaparray[nbnum][c.face];
    if (swap & 1) x = nside - x - 1;
    if (swap & 2) y = nside - y - 1;
    if (swap & 4) std::swap(x, y);
    out[m] = xyf2nest(x, y, f, order);
  }
  return out;
}

}  // namespace healpix

inline constexpr int kMaxHealpixOrder = 13;
inline constexpr int kMaxIcosphereSubdivisions = 9;

inline SphereGrid build_healpix(int order) {
  if (order < 0 || order > kMaxHealpixOrder) throw ArgumentError("build_grid: HEALPix order must lie in [0, 13]");
  const std::int64_t nside = std::int64_t{1} << order;
  const std::int64_t npix = 12 * nside * nside;
  std::vector<Vec3> centers(npix);
  for (std::int64_t p = 0; p < npix; ++p) centers[p] = healpix::pix2vec(p, order);
  if (order == 0) {
    // the stencil at nside = 1 repeats and is one-sided in places
    std::vector<std::vector<std::int32_t>> adj(npix);
    for (std::int64_t p = 0; p < npix; ++p)
      for (std::int64_t q : healpix::neighbors(p, order))
        if (q >= 0 && q != p) {
          adj[p].push_back(static_cast<std::int32_t>(q));
          adj[q].push_back(static_cast<std::int32_t>(p));
        }
    for (auto& row : adj) {
      std::sort(row.begin(), row.end());
      row.erase(std::unique(row.begin(), row.end()), row.end());
    }
    return SphereGrid(Scheme::Healpix, order, std::move(centers), std::move(adj));
  }
  std::vector<std::int64_t> offsets(npix + 1, 0);
  std::vector<std::int32_t> nbrs;
  nbrs.reserve(npix * 8);
  for (std::int64_t p = 0; p < npix; ++p) {
    auto nb = healpix::neighbors(p, order);
    std::sort(nb.begin(), nb.end());
    for (std::size_t k = 0; k < nb.size(); ++k)
      if (nb[k] >= 0 && nb[k] != p && (k == 0 || nb[k] != nb[k - 1])) nbrs.push_back(static_cast<std::int32_t>(nb[k]));
    offsets[p + 1] = static_cast<std::int64_t>(nbrs.size());
  }
  return SphereGrid(Scheme::Healpix, order, std::move(centers), std::move(offsets), std::move(nbrs));
}

inline SphereGrid build_icosphere(int subdivisions) {
  if (subdivisions < 0 || subdivisions > kMaxIcosphereSubdivisions)
    throw ArgumentError("build_grid: icosphere subdivisions must lie in [0, 9]");
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> v = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                         {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  for (auto& p : v) p = normalized(p);
  std::vector<std::array<std::int32_t, 3>> faces = {
      {0, 11, 5}, {0, 5, 1}, {0, 1, 7}, {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
      {3, 9, 4}, {3, 4, 2}, {3, 2, 6}, {3, 6, 8}, {3, 8, 9}, {4, 9, 5}, {2, 4, 11}, {6, 2, 10}, {8, 6, 7}, {9, 8, 1}};
  for (int s = 0; s < subdivisions; ++s) {
    std::unordered_map<std::uint64_t, std::int32_t> midpoint;
    midpoint.reserve(faces.size() * 2);
    auto mid = [&](std::int32_t a, std::int32_t b) {
      const auto [lo, hi] = std::minmax(a, b);
      const std::uint64_t key = (static_cast<std::uint64_t>(lo) << 32) | static_cast<std::uint32_t>(hi);
      auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      const Vec3& p = v[a];
      const Vec3& q = v[b];
      v.push_back(normalized({p[0] + q[0], p[1] + q[1], p[2] + q[2]}));
      const auto idx = static_cast<std::int32_t>(v.size() - 1);
      midpoint.emplace(key, idx);
      return idx;
    };
    std::vector<std::array<std::int32_t, 3>> next;
    next.reserve(faces.size() * 4);
    for (const auto& f : faces) {
      const std::int32_t a = mid(f[0], f[1]), b = mid(f[1], f[2]), c = mid(f[2], f[0]);
      next.push_back({f[0], a, c});
      next.push_back({f[1], b, a});
      next.push_back({f[2], c, b});
      next.push_back({a, b, c});
    }
    faces = std::move(next);
  }
  std::vector<std::vector<std::int32_t>> adj(v.size());
  for (const auto& f : faces)
    for (int e = 0; e < 3; ++e) {
      adj[f[e]].push_back(f[(e + 1) % 3]);
      adj[f[(e + 1) % 3]].push_back(f[e]);
    }
  for (auto& row : adj) {
    std::sort(row.begin(), row.end());
    row.erase(std::unique(row.begin(), row.end()), row.end());
  }
  return SphereGrid(Scheme::Icosphere, subdivisions, std::move(v), std::move(adj));
}

inline SphereGrid build_grid(Scheme scheme, int resolution) {
  return scheme == Scheme::Healpix ? build_healpix(resolution) : build_icosphere(resolution);
}

}  // namespace critpoints::sphere

#endif  // CRITPOINTS_GRID_HPP
