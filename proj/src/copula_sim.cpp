#include "ccfpca/copula_sim.hpp"

#include "ccfpca/error.hpp"
#include "ccfpca/stats.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace ccfpca {

CopulaFamily parse_copula_family(const std::string& name)
{
  if (name == "independence") {
    return CopulaFamily::Independence;
  }
  if (name == "clayton") {
    return CopulaFamily::Clayton;
  }
  if (name == "frank") {
    return CopulaFamily::Frank;
  }
  if (name == "fgm") {
    return CopulaFamily::Fgm;
  }
  if (name == "gumbel") {
    return CopulaFamily::Gumbel;
  }
  throw ValidationError("unknown copula family `" + name +
                        "` (independence|clayton|frank|fgm|gumbel)");
}

std::string to_string(CopulaFamily family)
{
  switch (family) {
    case CopulaFamily::Independence:
      return "independence";
    case CopulaFamily::Clayton:
      return "clayton";
    case CopulaFamily::Frank:
      return "frank";
    case CopulaFamily::Fgm:
      return "fgm";
    case CopulaFamily::Gumbel:
      return "gumbel";
  }
  return "?";
}

void CopulaModel::validate() const
{
  bool ok = std::isfinite(theta);
  switch (family) {
    case CopulaFamily::Independence:
      break;
    case CopulaFamily::Clayton:
      ok = ok && theta > 0.0;
      break;
    case CopulaFamily::Frank:
      ok = ok && theta != 0.0;
      break;
    case CopulaFamily::Fgm:
      ok = ok && theta >= -1.0 && theta <= 1.0;
      break;
    case CopulaFamily::Gumbel:
      ok = ok && theta >= 1.0;
      break;
  }
  if (!ok) {
    throw ValidationError(to_string(family) + " parameter out of range: theta = " +
                          format_double(theta));
  }
}

double CopulaModel::cdf(double u, double v) const
{
  u = std::clamp(u, 0.0, 1.0);
  v = std::clamp(v, 0.0, 1.0);
  if (u == 0.0 || v == 0.0) {
    return 0.0;
  }
  if (u == 1.0) {
    return v;
  }
  if (v == 1.0) {
    return u;
  }
  switch (family) {
    case CopulaFamily::Independence:
      return u * v;
    case CopulaFamily::Clayton:
      return std::pow(std::pow(u, -theta) + std::pow(v, -theta) - 1.0, -1.0 / theta);
    case CopulaFamily::Frank:
      return -std::log1p(std::expm1(-theta * u) * std::expm1(-theta * v) / std::expm1(-theta)) /
             theta;
    case CopulaFamily::Fgm:
      return u * v * (1.0 + theta * (1.0 - u) * (1.0 - v));
    case CopulaFamily::Gumbel: {
      const double a = std::pow(-std::log(u), theta) + std::pow(-std::log(v), theta);
      return std::exp(-std::pow(a, 1.0 / theta));
    }
  }
  return 0.0;
}

double CopulaModel::h(double u, double v) const
{
  u = std::clamp(u, 1e-300, 1.0);
  v = std::clamp(v, 0.0, 1.0);
  if (v == 0.0) {
    return 0.0;
  }
  if (v == 1.0) {
    return 1.0;
  }
  switch (family) {
    case CopulaFamily::Independence:
      return v;
    case CopulaFamily::Clayton:
      return std::pow(u, -theta - 1.0) *
             std::pow(std::pow(u, -theta) + std::pow(v, -theta) - 1.0, -1.0 / theta - 1.0);
    case CopulaFamily::Frank: {
      const double eu = std::expm1(-theta * u);
      const double ev = std::expm1(-theta * v);
      const double e1 = std::expm1(-theta);
      return std::exp(-theta * u) * ev / (e1 + eu * ev);
    }
    case CopulaFamily::Fgm:
      return v * (1.0 + theta * (1.0 - 2.0 * u) * (1.0 - v));
    case CopulaFamily::Gumbel: {
      if (u >= 1.0) {
        return v;
      }
      const double x = -std::log(u);
      const double y = -std::log(v);
      const double a = std::pow(x, theta) + std::pow(y, theta);
      const double c = std::exp(-std::pow(a, 1.0 / theta));
      return c * std::pow(a, 1.0 / theta - 1.0) * std::pow(x, theta - 1.0) / u;
    }
  }
  return v;
}

double CopulaModel::h_inverse(double w, double u) const
{
  w = std::clamp(w, 0.0, 1.0);
  switch (family) {
    case CopulaFamily::Independence:
      return w;
    case CopulaFamily::Clayton: {
      const double t = (std::pow(w, -theta / (1.0 + theta)) - 1.0) * std::pow(u, -theta) + 1.0;
      return std::pow(t, -1.0 / theta);
    }
    case CopulaFamily::Frank:
      return -std::log1p(w * std::expm1(-theta) / (w + (1.0 - w) * std::exp(-theta * u))) / theta;
    case CopulaFamily::Fgm: {
      const double a = theta * (1.0 - 2.0 * u);
      if (std::abs(a) < 1e-12) {
        return w;
      }
      const double b = 1.0 + a;
      return 2.0 * w / (b + std::sqrt(b * b - 4.0 * a * w));
    }
    case CopulaFamily::Gumbel: {
      double lo = 1e-12;
      double hi = 1.0 - 1e-12;
      if (h(u, lo) >= w) {
        return lo;
      }
      if (h(u, hi) <= w) {
        return hi;
      }
      while (hi - lo > 1e-12) {
        const double mid = 0.5 * (lo + hi);
        if (h(u, mid) < w) {
          lo = mid;
        } else {
          hi = mid;
        }
      }
      return 0.5 * (lo + hi);
    }
  }
  return w;
}

double copula_cdf(const CopulaModel& m, double u, double v)
{
  m.validate();
  return m.cdf(u, v);
}

double debye1(double x)
{
  if (x == 0.0) {
    return 1.0;
  }
  if (x < 0.0) {
    return debye1(-x) - x / 2.0;
  }
  auto integrand = [](double t) { return t == 0.0 ? 1.0 : t / std::expm1(t); };
  const double integral =
    boost::math::quadrature::gauss_kronrod<double, 31>::integrate(integrand, 0.0, x, 20, 1e-12);
  return integral / x;
}

std::pair<double, double> tau_range(CopulaFamily family)
{
  switch (family) {
    case CopulaFamily::Independence:
      return {0.0, 0.0};
    case CopulaFamily::Clayton:
      return {0.0, 1.0};
    case CopulaFamily::Frank:
      return {-1.0, 1.0};
    case CopulaFamily::Fgm:
      return {-2.0 / 9.0, 2.0 / 9.0};
    case CopulaFamily::Gumbel:
      return {0.0, 1.0};
  }
  return {0.0, 0.0};
}

bool tau_attainable(CopulaFamily family, double tau)
{
  if (!std::isfinite(tau)) {
    return false;
  }
  switch (family) {
    case CopulaFamily::Independence:
      return tau == 0.0;
    case CopulaFamily::Clayton:
      return tau > 0.0 && tau < 1.0;
    case CopulaFamily::Frank:
      return tau > -1.0 && tau < 1.0 && tau != 0.0;
    case CopulaFamily::Fgm:
      return tau >= -2.0 / 9.0 - 1e-15 && tau <= 2.0 / 9.0 + 1e-15;
    case CopulaFamily::Gumbel:
      return tau >= 0.0 && tau < 1.0;
  }
  return false;
}

namespace {

double frank_tau(double theta)
{
  if (std::abs(theta) < 1e-4) {
    return theta / 9.0 - theta * theta * theta / 900.0;
  }
  return 1.0 - 4.0 / theta * (1.0 - debye1(theta));
}

} // namespace

double theta_to_tau(CopulaFamily family, double theta)
{
  CopulaModel{family, theta}.validate();
  switch (family) {
    case CopulaFamily::Independence:
      return 0.0;
    case CopulaFamily::Clayton:
      return theta / (theta + 2.0);
    case CopulaFamily::Frank:
      return frank_tau(theta);
    case CopulaFamily::Fgm:
      return 2.0 * theta / 9.0;
    case CopulaFamily::Gumbel:
      return 1.0 - 1.0 / theta;
  }
  return 0.0;
}

double tau_to_theta(CopulaFamily family, double tau)
{
  if (!tau_attainable(family, tau)) {
    const auto [lo, hi] = tau_range(family);
    throw ValidationError("Kendall tau " + format_double(tau) + " is not attainable by the " +
                          to_string(family) + " family (range " + format_double(lo) + " .. " +
                          format_double(hi) + ")");
  }
  switch (family) {
    case CopulaFamily::Independence:
      return 0.0;
    case CopulaFamily::Clayton:
      return 2.0 * tau / (1.0 - tau);
    case CopulaFamily::Fgm:
      return std::clamp(4.5 * tau, -1.0, 1.0);
    case CopulaFamily::Gumbel:
      return 1.0 / (1.0 - tau);
    case CopulaFamily::Frank: {
      if (tau < 0.0) {
        return -tau_to_theta(family, -tau);
      }
      double lo = 0.0;
      double hi = 1.0;
      while (frank_tau(hi) < tau) {
        hi *= 2.0;
      }
      for (int it = 0; it < 200 && hi - lo > 1e-12 * std::max(1.0, hi); ++it) {
        const double mid = 0.5 * (lo + hi);
        if (frank_tau(mid) < tau) {
          lo = mid;
        } else {
          hi = mid;
        }
      }
      return 0.5 * (lo + hi);
    }
  }
  return 0.0;
}

double TauLink::operator()(double x) const
{
  switch (kind) {
    case Kind::Constant:
      return p0;
    case Kind::Linear:
      return p0 + p1 * x;
    case Kind::Sine:
      return p0 + p1 * std::sin(2.0 * std::numbers::pi * x);
  }
  return p0;
}

namespace {

std::vector<double> parse_numbers(const std::string& text, const std::string& what)
{
  std::vector<double> out;
  std::istringstream in(text);
  std::string cell;
  while (std::getline(in, cell, ',')) {
    char* end = nullptr;
    const double v = std::strtod(cell.c_str(), &end);
    if (cell.empty() || *end != '\0' || !std::isfinite(v)) {
      throw ValidationError("bad number `" + cell + "` in " + what);
    }
    out.push_back(v);
  }
  return out;
}

} // namespace

TauLink TauLink::parse(const std::string& text)
{
  const auto colon = text.find(':');
  if (colon == std::string::npos) {
    throw ValidationError("link `" + text + "` must look like const:c, linear:a,b or "
                                            "sine:amplitude,center");
  }
  const auto kind = text.substr(0, colon);
  const auto args = parse_numbers(text.substr(colon + 1), "link `" + text + "`");
  TauLink link;
  if (kind == "const" && args.size() == 1) {
    link.kind = Kind::Constant;
    link.p0 = args[0];
  } else if (kind == "linear" && args.size() == 2) {
    link.kind = Kind::Linear;
    link.p0 = args[0];
    link.p1 = args[1];
  } else if (kind == "sine" && args.size() == 2) {
    // Command-line order is amplitude, then center.
    link.kind = Kind::Sine;
    link.p1 = args[0];
    link.p0 = args[1];
  } else {
    throw ValidationError("link `" + text + "` must look like const:c, linear:a,b or "
                                            "sine:amplitude,center");
  }
  return link;
}

std::string TauLink::to_string() const
{
  switch (kind) {
    case Kind::Constant:
      return "const:" + format_double(p0);
    case Kind::Linear:
      return "linear:" + format_double(p0) + "," + format_double(p1);
    case Kind::Sine:
      return "sine:" + format_double(p1) + "," + format_double(p0);
  }
  return "";
}

double CovariateLaw::draw(double uniform) const
{
  if (kind == Kind::Uniform) {
    return a + (b - a) * uniform;
  }
  return a + b * normal_quantile(uniform);
}

void ConditionalModel::validate() const
{
  for (const auto* m : {&margin1, &margin2}) {
    if (!(m->sd > 0.0) || !std::isfinite(m->intercept) || !std::isfinite(m->slope)) {
      throw ValidationError("margin standard deviation must be positive");
    }
  }
  if (covariate.kind == CovariateLaw::Kind::Uniform && !(covariate.b > covariate.a)) {
    throw ValidationError("uniform covariate needs a < b");
  }
  if (covariate.kind == CovariateLaw::Kind::Normal && !(covariate.b > 0.0)) {
    throw ValidationError("normal covariate needs a positive standard deviation");
  }
  if (family == CopulaFamily::Independence || covariate.kind != CovariateLaw::Kind::Uniform) {
    return;
  }
  constexpr int steps = 1000;
  for (int s = 0; s <= steps; ++s) {
    const double x = covariate.a + (covariate.b - covariate.a) * s / steps;
    if (!tau_attainable(family, link(x))) {
      throw ValidationError("link " + link.to_string() + " gives tau = " + format_double(link(x)) +
                            " at x = " + format_double(x) + ", outside the " +
                            to_string(family) + " range");
    }
  }
}

CopulaModel ConditionalModel::copula_at(double x) const
{
  if (family == CopulaFamily::Independence) {
    return {family, 0.0};
  }
  return {family, tau_to_theta(family, link(x))};
}

nlohmann::ordered_json ConditionalModel::to_json() const
{
  nlohmann::ordered_json j;
  j["family"] = to_string(family);
  j["link"] = link.to_string();
  auto margin = [](const NormalMargin& m) {
    return nlohmann::ordered_json{{"intercept", m.intercept}, {"slope", m.slope}, {"sd", m.sd}};
  };
  j["margin1"] = margin(margin1);
  j["margin2"] = margin(margin2);
  j["covariate"] = {{"law", covariate.kind == CovariateLaw::Kind::Uniform ? "uniform" : "normal"},
                    {"a", covariate.a},
                    {"b", covariate.b}};
  return j;
}

ConditionalModel conditional_model_from_json(const nlohmann::json& j)
{
  try {
    ConditionalModel m;
    m.family = parse_copula_family(j.at("family").get<std::string>());
    m.link = TauLink::parse(j.at("link").get<std::string>());
    auto margin = [](const nlohmann::json& mj) {
      return NormalMargin{mj.at("intercept").get<double>(), mj.at("slope").get<double>(),
                          mj.at("sd").get<double>()};
    };
    m.margin1 = margin(j.at("margin1"));
    m.margin2 = margin(j.at("margin2"));
    const auto& c = j.at("covariate");
    m.covariate.kind = c.at("law").get<std::string>() == "normal" ? CovariateLaw::Kind::Normal
                                                                  : CovariateLaw::Kind::Uniform;
    m.covariate.a = c.at("a").get<double>();
    m.covariate.b = c.at("b").get<double>();
    m.validate();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed model JSON: ") + e.what());
  }
}

SimulatedData sample_conditional(const ConditionalModel& m, std::size_t n, std::uint64_t seed)
{
  m.validate();
  SimulatedData d;
  d.sample.y1.resize(n);
  d.sample.y2.resize(n);
  d.sample.x.resize(n);
  d.known.e1.resize(n);
  d.known.e2.resize(n);
  d.known.provenance = Provenance::KnownMargins;
  d.theta.resize(n);
  std::string failure;
  std::size_t failed_at = n;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(n); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    Rng rng(seed, 1, i);
    const double x = m.covariate.draw(rng.uniform());
    const double u = rng.uniform();
    const double w = rng.uniform();
    try {
      const auto cop = m.copula_at(x);
      const double v = std::clamp(cop.h_inverse(w, u), 1e-300, 1.0 - 1e-16);
      d.sample.x[i] = x;
      d.known.e1[i] = u;
      d.known.e2[i] = v;
      d.theta[i] = cop.theta;
      d.sample.y1[i] = m.margin1.mean(x) + m.margin1.sd * normal_quantile(u);
      d.sample.y2[i] = m.margin2.mean(x) + m.margin2.sd * normal_quantile(v);
    } catch (const ValidationError& e) {
#pragma omp critical(ccfpca_sim_failure)
      if (i < failed_at) {
        failed_at = i;
        failure = e.what();
      }
    }
  }
  if (failed_at < n) {
    throw ValidationError("observation " + std::to_string(failed_at) + ": " + failure);
  }
  d.known.ties = count_ties(d.known.e1) + count_ties(d.known.e2);
  return d;
}

GridFunction true_conditional_copula(const ConditionalModel& m, double x, const Grid2D& grid)
{
  const auto cop = m.copula_at(x);
  cop.validate();
  return GridFunction::from(grid, [&](double u, double v) { return cop.cdf(u, v); });
}

nlohmann::ordered_json truth_sidecar(const ConditionalModel& m, std::size_t n, std::uint64_t seed,
                                     const SimulatedData* with_epsilons)
{
  nlohmann::ordered_json j;
  j["model"] = m.to_json();
  j["n"] = n;
  j["seed"] = seed;
  if (with_epsilons != nullptr) {
    j["epsilon1"] = with_epsilons->known.e1;
    j["epsilon2"] = with_epsilons->known.e2;
    j["theta"] = with_epsilons->theta;
  }
  return j;
}

GridFunction cosine_tensor(const Grid2D& grid, int p, int q)
{
  if (p < 0 || q < 0) {
    throw ValidationError("cosine tensor indices must be non-negative");
  }
  const double cp = p == 0 ? 1.0 : std::numbers::sqrt2;
  const double cq = q == 0 ? 1.0 : std::numbers::sqrt2;
  return GridFunction::from(grid, [&](double u, double v) {
    return cp * cq * std::cos(p * std::numbers::pi * u) * std::cos(q * std::numbers::pi * v);
  });
}

SyntheticKLModel::SyntheticKLModel(GridFunction mean, std::vector<double> eigenvalues,
                                   std::vector<std::pair<int, int>> modes, double link_strength)
  : mean_(std::move(mean))
  , eigenvalues_(std::move(eigenvalues))
  , r_(link_strength)
{
  if (eigenvalues_.empty() || eigenvalues_.size() != modes.size()) {
    throw ValidationError("synthetic KL model needs one mode per eigenvalue");
  }
  if (!(r_ >= 0.0 && r_ <= 1.0)) {
    throw ValidationError("link strength must lie in [0, 1]");
  }
  for (std::size_t k = 0; k < eigenvalues_.size(); ++k) {
    if (!(eigenvalues_[k] >= 0.0)) {
      throw ValidationError("synthetic eigenvalues must be non-negative");
    }
    if (k > 0 && eigenvalues_[k - 1] - eigenvalues_[k] < 1e-10) {
      throw ValidationError("synthetic eigenvalues " + std::to_string(k) + " and " +
                            std::to_string(k + 1) + " are not distinct and decreasing");
    }
    const auto [p, q] = modes[k];
    if (p >= static_cast<int>(mean_.grid().size()) || q >= static_cast<int>(mean_.grid().size())) {
      throw ValidationError("cosine mode exceeds grid resolution");
    }
    phis_.push_back(cosine_tensor(mean_.grid(), p, q));
  }
  for (std::size_t j = 0; j < phis_.size(); ++j) {
    for (std::size_t k = 0; k <= j; ++k) {
      const double target = j == k ? 1.0 : 0.0;
      if (std::abs(inner_product(phis_[j], phis_[k]) - target) > 1e-10) {
        throw ValidationError("synthetic eigenfunctions are not orthonormal (repeated mode?)");
      }
    }
  }
}

SyntheticKLModel SyntheticKLModel::standard(const Grid2D& grid, std::vector<double> eigenvalues,
                                            double link_strength)
{
  static const std::vector<std::pair<int, int>> order = {{1, 0}, {0, 1}, {1, 1}, {2, 0},
                                                         {0, 2}, {2, 1}, {1, 2}, {2, 2}};
  if (eigenvalues.size() > order.size()) {
    throw ValidationError("at most 8 synthetic components are supported");
  }
  std::vector<std::pair<int, int>> modes(order.begin(),
                                         order.begin() + static_cast<std::ptrdiff_t>(eigenvalues.size()));
  auto mean = GridFunction::from(grid, [](double u, double v) { return u * v; });
  return SyntheticKLModel(std::move(mean), std::move(eigenvalues), std::move(modes), link_strength);
}

std::vector<double> SyntheticKLModel::alpha(double x) const
{
  std::vector<double> a(eigenvalues_.size());
  for (std::size_t k = 0; k < a.size(); ++k) {
    a[k] = std::sqrt(2.0 * r_ * eigenvalues_[k]) *
           std::cos(2.0 * std::numbers::pi * static_cast<double>(k + 1) * x);
  }
  return a;
}

GridFunction SyntheticKLModel::conditional_surface(double x) const
{
  const auto a = alpha(x);
  auto out = mean_;
  for (std::size_t k = 0; k < a.size(); ++k) {
    out = out + phis_[k] * a[k];
  }
  return out;
}

CovarianceField SyntheticKLModel::covariance() const
{
  return CovarianceField::from_eigenpairs(eigenvalues_, phis_);
}

EigenSystem SyntheticKLModel::eigensystem() const
{
  EigenSystem es;
  es.eigenvalues = eigenvalues_;
  es.eigenfunctions = phis_;
  es.flipped.assign(phis_.size(), false);
  return es;
}

SyntheticDraw synthetic_kl_sample(const SyntheticKLModel& m, std::size_t n, std::uint64_t seed)
{
  if (n == 0) {
    throw ValidationError("synthetic sample size must be at least 1");
  }
  const auto K = m.eigenvalues().size();
  const auto& grid = m.grid();
  SyntheticDraw d;
  d.ensemble.mode = TrajectoryMode::Oracle;
  d.ensemble.xs.resize(n);
  d.scores.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(K));
  std::vector<std::vector<double>> vals(n);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(n); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    Rng rng(seed, 2, i);
    const double x = rng.uniform();
    const auto a = m.alpha(x);
    std::vector<double> v(m.mean().values().begin(), m.mean().values().end());
    for (std::size_t k = 0; k < K; ++k) {
      const double noise = std::sqrt((1.0 - m.link_strength()) * m.eigenvalues()[k]) * rng.normal();
      const double xi = a[k] + noise;
      d.scores(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = xi;
      const auto phi = m.eigenfunctions()[k].values();
      for (std::size_t p = 0; p < v.size(); ++p) {
        v[p] += xi * phi[p];
      }
    }
    d.ensemble.xs[i] = x;
    vals[i] = std::move(v);
  }
  d.ensemble.trajs.reserve(n);
  for (auto& v : vals) {
    d.ensemble.trajs.emplace_back(grid, std::move(v));
  }
  return d;
}

} // namespace ccfpca
