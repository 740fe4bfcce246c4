#include "gbf/family.hpp"

#include <algorithm>
#include <cmath>

#include "gbf/error.hpp"

namespace gbf {
namespace {

void require_finite(double t) {
  if (!std::isfinite(t)) {
    throw Error("non-finite link value");
  }
}

double clamp_link(double t) { return std::clamp(t, -kLinkClamp, kLinkClamp); }

// log(1 + e^t) without overflow.
double softplus(double t) { return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); }

double logistic(double t) {
  if (t >= 0.0) {
    return 1.0 / (1.0 + std::exp(-t));
  }
  const double e = std::exp(t);
  return e / (1.0 + e);
}

// p (1 - p) written so that it never rounds to zero inside the clamp range.
double logistic_var(double t) {
  const double e = std::exp(-std::abs(t));
  return e / ((1.0 + e) * (1.0 + e));
}

double trials_of(const Observation& obs) {
  if (!obs.trials) {
    throw Error("binomial observation without a trial count");
  }
  return static_cast<double>(*obs.trials);
}

bool is_integer(double v) { return std::isfinite(v) && v == std::floor(v); }

}  // namespace

std::string_view to_string(Family family) {
  switch (family) {
    case Family::gaussian:
      return "gaussian";
    case Family::binomial:
      return "binomial";
    case Family::poisson:
      return "poisson";
  }
  return "unknown";
}

Family parse_family(std::string_view name) {
  if (name == "gaussian") return Family::gaussian;
  if (name == "binomial" || name == "bernoulli") return Family::binomial;
  if (name == "poisson") return Family::poisson;
  throw Error("unknown family '" + std::string(name) + "'");
}

void validate(Family family, const Observation& obs) {
  switch (family) {
    case Family::gaussian:
      if (!std::isfinite(obs.y)) throw Error("gaussian response must be finite");
      if (obs.trials) throw Error("trial count given for a non-binomial family");
      return;
    case Family::binomial: {
      if (!obs.trials || *obs.trials < 1) throw Error("binomial observation needs a positive trial count");
      if (!is_integer(obs.y) || obs.y < 0.0 || obs.y > static_cast<double>(*obs.trials)) {
        throw Error("binomial response must be an integer in [0, trials]");
      }
      return;
    }
    case Family::poisson:
      if (obs.trials) throw Error("trial count given for a non-binomial family");
      if (!is_integer(obs.y) || obs.y < 0.0) throw Error("poisson response must be a non-negative integer");
      return;
  }
}

void validate(Family family, std::span<const Observation> observations) {
  for (const auto& obs : observations) {
    validate(family, obs);
  }
}

double log_lik(Family family, double t, const Observation& obs) {
  require_finite(t);
  switch (family) {
    case Family::gaussian: {
      const double r = obs.y - t;
      return -0.5 * r * r;
    }
    case Family::binomial: {
      const double c = clamp_link(t);
      return obs.y * c - trials_of(obs) * softplus(c);
    }
    case Family::poisson: {
      const double c = clamp_link(t);
      return obs.y * c - std::exp(c);
    }
  }
  return 0.0;
}

double d1(Family family, double t, const Observation& obs) {
  require_finite(t);
  switch (family) {
    case Family::gaussian:
      return obs.y - t;
    case Family::binomial:
      return obs.y - trials_of(obs) * logistic(clamp_link(t));
    case Family::poisson:
      return obs.y - std::exp(clamp_link(t));
  }
  return 0.0;
}

double d2(Family family, double t, const Observation& obs) {
  require_finite(t);
  switch (family) {
    case Family::gaussian:
      return -1.0;
    case Family::binomial:
      return -trials_of(obs) * logistic_var(clamp_link(t));
    case Family::poisson:
      return -std::exp(clamp_link(t));
  }
  return 0.0;
}

double mle_constant(Family family, std::span<const Observation> observations) {
  if (observations.empty()) {
    throw Error("mle_constant needs at least one observation");
  }
  validate(family, observations);
  double sum_y = 0.0;
  double sum_n = 0.0;
  for (const auto& obs : observations) {
    sum_y += obs.y;
    if (obs.trials) sum_n += static_cast<double>(*obs.trials);
  }
  const auto n = static_cast<double>(observations.size());
  switch (family) {
    case Family::gaussian:
      return sum_y / n;
    case Family::binomial:
      if (sum_y <= 0.0 || sum_y >= sum_n) throw Error("degenerate MLE at infinity");
      return std::log(sum_y / (sum_n - sum_y));
    case Family::poisson:
      if (sum_y <= 0.0) throw Error("degenerate MLE at infinity");
      return std::log(sum_y / n);
  }
  return 0.0;
}

std::vector<double> mle_derivatives(Family family, std::span<const Observation> observations) {
  // Also checks the degenerate cases.
  (void)mle_constant(family, observations);
  const auto n = static_cast<double>(observations.size());
  double y_bar = 0.0;
  double n_bar = 0.0;
  for (const auto& obs : observations) {
    y_bar += obs.y;
    if (obs.trials) n_bar += static_cast<double>(*obs.trials);
  }
  y_bar /= n;
  n_bar /= n;

  std::vector<double> u;
  u.reserve(observations.size());
  for (const auto& obs : observations) {
    switch (family) {
      case Family::gaussian:
        u.push_back(obs.y - y_bar);
        break;
      case Family::binomial: {
        const double ni = static_cast<double>(*obs.trials);
        u.push_back((n_bar * obs.y - ni * y_bar) / (y_bar * (n_bar - y_bar)));
        break;
      }
      case Family::poisson:
        u.push_back((obs.y - y_bar) / y_bar);
        break;
    }
  }
  return u;
}

NewtonTargets newton_residuals_weights(Family family, std::span<const double> eta,
                                       std::span<const Observation> observations) {
  if (eta.size() != observations.size()) {
    throw Error("newton_residuals_weights: eta and observations differ in length");
  }
  NewtonTargets out;
  out.residuals.resize(eta.size());
  out.weights.resize(eta.size());
  for (std::size_t i = 0; i < eta.size(); ++i) {
    const double curvature = -d2(family, eta[i], observations[i]);
    if (!(curvature > 0.0)) {
      throw Error("vanishing curvature");
    }
    out.residuals[i] = d1(family, eta[i], observations[i]) / curvature;
    out.weights[i] = curvature;
  }
  return out;
}

double inv_link(Family family, double t) {
  switch (family) {
    case Family::gaussian:
      return t;
    case Family::binomial:
      return logistic(clamp_link(t));
    case Family::poisson:
      return std::exp(clamp_link(t));
  }
  return t;
}

double inv_link_deriv(Family family, double t) {
  switch (family) {
    case Family::gaussian:
      return 1.0;
    case Family::binomial:
      return logistic_var(clamp_link(t));
    case Family::poisson:
      return std::exp(clamp_link(t));
  }
  return 1.0;
}

}  // namespace gbf
