#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace ccfpca {

//! Midpoint grid on [0,1]^2 with G nodes per axis. Node a (0-based) sits at
//! (a + 0.5) / G, so every node is strictly inside the unit square and the
//! equal-weight quadrature integrates constants exactly.
class Grid2D
{
public:
  explicit Grid2D(std::size_t nodes_per_axis);

  std::size_t size() const { return g_; }
  std::size_t num_nodes() const { return g_ * g_; }
  double node(std::size_t a) const { return (static_cast<double>(a) + 0.5) / static_cast<double>(g_); }
  const std::vector<double>& nodes() const { return nodes_; }
  //! Quadrature weight of one cell, 1/G^2.
  double cell_weight() const { return cell_weight_; }

  //! Flat row-major index of node (a, b); a runs along u, b along v.
  std::size_t index(std::size_t a, std::size_t b) const { return a * g_ + b; }

  bool operator==(const Grid2D& other) const { return g_ == other.g_; }

private:
  std::size_t g_;
  double cell_weight_;
  std::vector<double> nodes_;
};

Grid2D make_grid(std::size_t nodes_per_axis);

//! A real function sampled at the nodes of a Grid2D. Values are stored
//! row-major: values()[grid.index(a, b)] = f(u_a, v_b).
class GridFunction
{
public:
  GridFunction(Grid2D grid, std::vector<double> values);
  //! Constant function.
  GridFunction(Grid2D grid, double value);

  //! Samples f(u, v) at every node.
  static GridFunction from(const Grid2D& grid,
                           const std::function<double(double, double)>& f);

  const Grid2D& grid() const { return grid_; }
  std::span<const double> values() const { return values_; }
  double operator()(std::size_t a, std::size_t b) const { return values_[grid_.index(a, b)]; }
  double at(std::size_t flat) const { return values_[flat]; }

  //! Bilinear interpolation at an arbitrary point; outside the node hull the
  //! nearest edge value is extended.
  double interpolate(double u, double v) const;

  GridFunction operator+(const GridFunction& other) const;
  GridFunction operator-(const GridFunction& other) const;
  GridFunction operator*(double s) const;

private:
  Grid2D grid_;
  std::vector<double> values_;
};

void require_same_grid(const GridFunction& f, const GridFunction& g);

//! Midpoint-rule approximation of the L2([0,1]^2) inner product.
double inner_product(const GridFunction& f, const GridFunction& g);
double l2_norm(const GridFunction& f);
double l2_distance(const GridFunction& f, const GridFunction& g);
//! Max over grid nodes of |f - g|.
double sup_distance(const GridFunction& f, const GridFunction& g);
//! Quadrature integral of f over the unit square.
double integral(const GridFunction& f);

// CSV with header `u,v,value`, rows ordered by (a, b), 17 significant digits.
void write_grid_csv(std::ostream& out, const GridFunction& f);
void write_grid_csv(const std::string& path, const GridFunction& f);
GridFunction read_grid_csv(std::istream& in);
GridFunction read_grid_csv(const std::string& path);

//! Shortest decimal rendering used by every text format in the project.
std::string format_double(double x);

} // namespace ccfpca
