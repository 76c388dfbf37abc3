#pragma once

#include <cmath>
#include <numbers>

#include "pivotsched/common.hpp"

namespace pivotsched {

// Cell-centered cylindrical grid over a circular field of radius R and soil
// depth Z. Node (i, j, k) covers ring i (i = 0 at the center), sector j, and
// layer k with k = 0 at the bottom and k = nz-1 at the surface. Flattened ids
// run k fastest, then j, then i.
class CylGrid {
 public:
  CylGrid(double radius, double depth, int nr, int ntheta, int nz)
      : radius_(radius), depth_(depth), nr_(nr), ntheta_(ntheta), nz_(nz) {
    if (!(radius > 0.0)) throw ParameterError("grid: radius must be > 0");
    if (!(depth > 0.0)) throw ParameterError("grid: depth must be > 0");
    if (nr < 1) throw ParameterError("grid: need at least 1 ring");
    if (ntheta < 1) throw ParameterError("grid: need at least 1 sector");
    if (nz < 2) throw ParameterError("grid: need at least 2 layers");
    dr_ = radius_ / nr_;
    dtheta_ = 2.0 * std::numbers::pi / ntheta_;
    dz_ = depth_ / nz_;
  }

  double radius() const { return radius_; }
  double depth() const { return depth_; }
  int nr() const { return nr_; }
  int ntheta() const { return ntheta_; }
  int nz() const { return nz_; }
  int size() const { return nr_ * ntheta_ * nz_; }

  double dr() const { return dr_; }
  double dtheta() const { return dtheta_; }
  double dz() const { return dz_; }

  int id(int i, int j, int k) const { return (i * ntheta_ + j) * nz_ + k; }

  struct Node {
    int i, j, k;
  };

  Node node(int id) const {
    Node n;
    n.k = id % nz_;
    id /= nz_;
    n.j = id % ntheta_;
    n.i = id / ntheta_;
    return n;
  }

  double r_center(int i) const { return (i + 0.5) * dr_; }
  double z_center(int k) const { return (k + 0.5) * dz_; }       // height above the bottom
  double depth_below_surface(int k) const { return depth_ - z_center(k); }

  double cell_volume(int i) const { return r_center(i) * dr_ * dtheta_ * dz_; }

  // Horizontal (top/bottom) face area of a cell in ring i.
  double horizontal_area(int i) const { return r_center(i) * dr_ * dtheta_; }

  // Cylindrical face between rings i-1 and i, at r = i*dr.
  double radial_face_area(int i_face) const { return i_face * dr_ * dtheta_ * dz_; }

  // Face between adjacent sectors.
  double azimuthal_face_area() const { return dr_ * dz_; }

  // Arc length between the centers of adjacent sectors in ring i.
  double azimuthal_spacing(int i) const { return r_center(i) * dtheta_; }

  int surface_node(int i, int j) const { return id(i, j, nz_ - 1); }

 private:
  double radius_, depth_;
  int nr_, ntheta_, nz_;
  double dr_, dtheta_, dz_;
};

}  // namespace pivotsched
