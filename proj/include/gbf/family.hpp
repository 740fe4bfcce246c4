#ifndef GBF_FAMILY_HPP_
#define GBF_FAMILY_HPP_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace gbf {

// Exponential family of the response together with its canonical link:
// identity (gaussian), logit (binomial with per-observation trials), log (poisson).
enum class Family { gaussian, binomial, poisson };

std::string_view to_string(Family family);
Family parse_family(std::string_view name);

// One response. `trials` is present iff the family is binomial.
struct Observation {
  double y = 0.0;
  std::optional<std::int64_t> trials;
};

// Link values are clamped to this magnitude before any exponentiation
// (binomial and poisson only).
inline constexpr double kLinkClamp = 500.0;

void validate(Family family, const Observation& obs);
void validate(Family family, std::span<const Observation> observations);

// Per-observation log-likelihood l_i(t) in link space, additive constants
// dropped. Gaussian uses -(y - t)^2 / 2, i.e. unit variance.
double log_lik(Family family, double t, const Observation& obs);
double d1(Family family, double t, const Observation& obs);
double d2(Family family, double t, const Observation& obs);

// argmax_t sum_i l_i(t) via the closed forms (mean, log-mean, log-odds).
double mle_constant(Family family, std::span<const Observation> observations);

// Infinitesimal-jackknife directional derivatives U_i of mle_constant.
std::vector<double> mle_derivatives(Family family, std::span<const Observation> observations);

struct NewtonTargets {
  std::vector<double> residuals;  // l'(eta) / -l''(eta)
  std::vector<double> weights;    // -l''(eta)
};

NewtonTargets newton_residuals_weights(Family family, std::span<const double> eta,
                                       std::span<const Observation> observations);

double inv_link(Family family, double t);
double inv_link_deriv(Family family, double t);

}  // namespace gbf

#endif  // GBF_FAMILY_HPP_
