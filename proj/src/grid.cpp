#include "ccfpca/grid.hpp"

#include "ccfpca/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace ccfpca {

Grid2D::Grid2D(std::size_t nodes_per_axis)
  : g_(nodes_per_axis)
{
  if (g_ == 0) {
    throw ValidationError("empty grid");
  }
  cell_weight_ = 1.0 / static_cast<double>(g_ * g_);
  nodes_.resize(g_);
  for (std::size_t a = 0; a < g_; ++a) {
    nodes_[a] = node(a);
  }
}

Grid2D make_grid(std::size_t nodes_per_axis)
{
  return Grid2D(nodes_per_axis);
}

GridFunction::GridFunction(Grid2D grid, std::vector<double> values)
  : grid_(std::move(grid))
  , values_(std::move(values))
{
  if (values_.size() != grid_.num_nodes()) {
    throw ValidationError("grid function has " + std::to_string(values_.size()) +
                          " values, grid needs " + std::to_string(grid_.num_nodes()));
  }
  for (double v : values_) {
    if (!std::isfinite(v)) {
      throw ValidationError("grid function value is not finite");
    }
  }
}

GridFunction::GridFunction(Grid2D grid, double value)
  : grid_(std::move(grid))
  , values_(grid_.num_nodes(), value)
{
  if (!std::isfinite(value)) {
    throw ValidationError("grid function value is not finite");
  }
}

GridFunction GridFunction::from(const Grid2D& grid,
                                const std::function<double(double, double)>& f)
{
  std::vector<double> vals(grid.num_nodes());
  for (std::size_t a = 0; a < grid.size(); ++a) {
    for (std::size_t b = 0; b < grid.size(); ++b) {
      vals[grid.index(a, b)] = f(grid.node(a), grid.node(b));
    }
  }
  return GridFunction(grid, std::move(vals));
}

namespace {

// Locates t among the midpoint nodes: returns lower index and weight of the
// upper neighbour, clamped to the outermost nodes.
std::pair<std::size_t, double> bracket(const Grid2D& grid, double t)
{
  const auto g = grid.size();
  if (g == 1) {
    return {0, 0.0};
  }
  const double pos = t * static_cast<double>(g) - 0.5;
  if (pos <= 0.0) {
    return {0, 0.0};
  }
  if (pos >= static_cast<double>(g - 1)) {
    return {g - 2, 1.0};
  }
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  return {lo, pos - static_cast<double>(lo)};
}

} // namespace

double GridFunction::interpolate(double u, double v) const
{
  const auto [a, wa] = bracket(grid_, u);
  const auto [b, wb] = bracket(grid_, v);
  if (grid_.size() == 1) {
    return values_[0];
  }
  const double f00 = (*this)(a, b);
  const double f10 = (*this)(a + 1, b);
  const double f01 = (*this)(a, b + 1);
  const double f11 = (*this)(a + 1, b + 1);
  return (1 - wa) * (1 - wb) * f00 + wa * (1 - wb) * f10 + (1 - wa) * wb * f01 + wa * wb * f11;
}

void require_same_grid(const GridFunction& f, const GridFunction& g)
{
  if (!(f.grid() == g.grid())) {
    throw ValidationError("grid mismatch: " + std::to_string(f.grid().size()) + " vs " +
                          std::to_string(g.grid().size()) + " nodes per axis");
  }
}

GridFunction GridFunction::operator+(const GridFunction& other) const
{
  require_same_grid(*this, other);
  std::vector<double> out(values_.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = values_[i] + other.values_[i];
  }
  return GridFunction(grid_, std::move(out));
}

GridFunction GridFunction::operator-(const GridFunction& other) const
{
  require_same_grid(*this, other);
  std::vector<double> out(values_.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = values_[i] - other.values_[i];
  }
  return GridFunction(grid_, std::move(out));
}

GridFunction GridFunction::operator*(double s) const
{
  std::vector<double> out(values_);
  for (double& v : out) {
    v *= s;
  }
  return GridFunction(grid_, std::move(out));
}

double inner_product(const GridFunction& f, const GridFunction& g)
{
  require_same_grid(f, g);
  const auto fv = f.values();
  const auto gv = g.values();
  double s = 0.0;
  for (std::size_t i = 0; i < fv.size(); ++i) {
    s += fv[i] * gv[i];
  }
  return s * f.grid().cell_weight();
}

double l2_norm(const GridFunction& f)
{
  return std::sqrt(inner_product(f, f));
}

double l2_distance(const GridFunction& f, const GridFunction& g)
{
  return l2_norm(f - g);
}

double sup_distance(const GridFunction& f, const GridFunction& g)
{
  require_same_grid(f, g);
  const auto fv = f.values();
  const auto gv = g.values();
  double m = 0.0;
  for (std::size_t i = 0; i < fv.size(); ++i) {
    m = std::max(m, std::abs(fv[i] - gv[i]));
  }
  return m;
}

double integral(const GridFunction& f)
{
  double s = 0.0;
  for (double v : f.values()) {
    s += v;
  }
  return s * f.grid().cell_weight();
}

std::string format_double(double x)
{
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

void write_grid_csv(std::ostream& out, const GridFunction& f)
{
  const auto& grid = f.grid();
  out << "u,v,value\n";
  for (std::size_t a = 0; a < grid.size(); ++a) {
    for (std::size_t b = 0; b < grid.size(); ++b) {
      out << format_double(grid.node(a)) << ',' << format_double(grid.node(b)) << ','
          << format_double(f(a, b)) << '\n';
    }
  }
}

void write_grid_csv(const std::string& path, const GridFunction& f)
{
  std::ofstream out(path);
  if (!out) {
    throw ValidationError("cannot open " + path + " for writing");
  }
  write_grid_csv(out, f);
}

GridFunction read_grid_csv(std::istream& in)
{
  std::string line;
  if (!std::getline(in, line) || line != "u,v,value") {
    throw ValidationError("grid CSV: expected header `u,v,value`");
  }
  std::vector<double> vals;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) {
      continue;
    }
    std::istringstream row(line);
    std::string cell;
    double fields[3];
    for (int c = 0; c < 3; ++c) {
      if (!std::getline(row, cell, ',')) {
        throw ValidationError("grid CSV line " + std::to_string(lineno) + ": expected 3 fields");
      }
      char* end = nullptr;
      fields[c] = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str() || !std::isfinite(fields[c])) {
        throw ValidationError("grid CSV line " + std::to_string(lineno) + ": bad number `" +
                              cell + "`");
      }
    }
    vals.push_back(fields[2]);
  }
  const auto g = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(vals.size()))));
  if (g == 0 || g * g != vals.size()) {
    throw ValidationError("grid CSV: " + std::to_string(vals.size()) +
                          " rows is not a square grid");
  }
  return GridFunction(Grid2D(g), std::move(vals));
}

GridFunction read_grid_csv(const std::string& path)
{
  std::ifstream in(path);
  if (!in) {
    throw ValidationError("cannot open " + path);
  }
  return read_grid_csv(in);
}

} // namespace ccfpca
