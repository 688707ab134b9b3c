#pragma once

#include <textim/types.hpp>

#include <cmath>

namespace textim {

// Linear noise schedule. Index t is 1-based everywhere: betas[t-1] is the
// variance added at step t, alpha_bars[t-1] the cumulative signal fraction.
template <typename Scalar>
struct DiffusionScheduleT {
  VecX<Scalar> betas;
  VecX<Scalar> alphas;
  VecX<Scalar> alpha_bars;

  Index steps() const { return betas.size(); }

  Scalar beta(int t) const { checkStep(t); return betas[t - 1]; }
  Scalar alpha(int t) const { checkStep(t); return alphas[t - 1]; }
  Scalar alphaBar(int t) const { checkStep(t); return alpha_bars[t - 1]; }

  void checkStep(int t) const {
    require(t >= 1 && t <= steps(), "diffusion: step index out of [1, T]");
  }
};

using DiffusionSchedule = DiffusionScheduleT<double>;

// betas interpolate linearly from beta_start to beta_end inclusive.
template <typename Scalar>
DiffusionScheduleT<Scalar> makeSchedule(Index t_steps, Scalar beta_start,
                                        Scalar beta_end) {
  require(t_steps >= 1, "makeSchedule: need at least one step");
  require(beta_start > Scalar(0) && beta_end < Scalar(1) &&
              beta_start <= beta_end,
          "makeSchedule: need 0 < beta_start <= beta_end < 1");

  DiffusionScheduleT<Scalar> s;
  s.betas.resize(t_steps);
  for (Index i = 0; i < t_steps; ++i) {
    Scalar frac = t_steps == 1 ? Scalar(0) : Scalar(i) / Scalar(t_steps - 1);
    s.betas[i] = beta_start + frac * (beta_end - beta_start);
  }
  s.alphas = VecX<Scalar>::Ones(t_steps) - s.betas;
  s.alpha_bars.resize(t_steps);
  Scalar prod = Scalar(1);
  for (Index i = 0; i < t_steps; ++i) {
    prod *= s.alphas[i];
    s.alpha_bars[i] = prod;
  }
  return s;
}

inline DiffusionSchedule makeSchedule(Index t_steps, double beta_start,
                                      double beta_end) {
  return makeSchedule<double>(t_steps, beta_start, beta_end);
}

// Draws x_t ~ N(sqrt(alpha_bar_t) x0, (1 - alpha_bar_t) I) in closed form.
template <typename Scalar>
MatX<Scalar> forwardSample(const MatX<Scalar>& x0, int t,
                           const DiffusionScheduleT<Scalar>& schedule,
                           Rng& rng) {
  schedule.checkStep(t);
  const Scalar ab = schedule.alphaBar(t);
  MatX<Scalar> noise =
      rng.normalMatrix(x0.rows(), x0.cols()).template cast<Scalar>();
  return std::sqrt(ab) * x0 + std::sqrt(Scalar(1) - ab) * noise;
}

// Two reverse-mean parameterizations. Standard is the exact Gaussian
// posterior mean rewritten through the implied noise estimate; AsPrinted
// scales that estimate by sqrt(1 - alpha_bar_t) instead of (1 - alpha_bar_t)
// and is kept only for side-by-side comparison.
enum class PosteriorForm { kStandard, kAsPrinted };

template <typename Scalar>
MatX<Scalar> posteriorMean(const MatX<Scalar>& x_t, const MatX<Scalar>& x0_hat,
                           int t, const DiffusionScheduleT<Scalar>& schedule,
                           PosteriorForm form = PosteriorForm::kStandard) {
  schedule.checkStep(t);
  require(x_t.rows() == x0_hat.rows() && x_t.cols() == x0_hat.cols(),
          "posteriorMean: shape mismatch");
  const Scalar a = schedule.alpha(t);
  const Scalar b = schedule.beta(t);
  const Scalar ab = schedule.alphaBar(t);
  const Scalar coef = form == PosteriorForm::kStandard
                          ? b / (Scalar(1) - ab)
                          : b / std::sqrt(Scalar(1) - ab);
  return (x_t - coef * (x_t - std::sqrt(ab) * x0_hat)) / std::sqrt(a);
}

// One reverse transition. Noise variance is beta_t; the final step (t == 1)
// is deterministic regardless of `stochastic`.
template <typename Scalar>
MatX<Scalar> reverseStep(const MatX<Scalar>& x_t, const MatX<Scalar>& x0_hat,
                         int t, const DiffusionScheduleT<Scalar>& schedule,
                         Rng& rng, bool stochastic = true,
                         PosteriorForm form = PosteriorForm::kStandard) {
  MatX<Scalar> mean = posteriorMean(x_t, x0_hat, t, schedule, form);
  if (!stochastic || t == 1) return mean;
  MatX<Scalar> noise =
      rng.normalMatrix(x_t.rows(), x_t.cols()).template cast<Scalar>();
  return mean + std::sqrt(schedule.beta(t)) * noise;
}

// Guided estimate: uncond + scale * (cond - uncond). The endpoints return
// the corresponding branch unchanged, so scale 0 and 1 are exact.
template <typename DerivedU, typename DerivedC>
MatX<typename DerivedU::Scalar> cfgCombine(
    const Eigen::MatrixBase<DerivedU>& uncond,
    const Eigen::MatrixBase<DerivedC>& cond, double scale) {
  using Scalar = typename DerivedU::Scalar;
  require(uncond.rows() == cond.rows() && uncond.cols() == cond.cols(),
          "cfgCombine: shape mismatch");
  if (scale == 0.0) return uncond;
  if (scale == 1.0) return cond;
  return uncond + Scalar(scale) * (cond - uncond);
}

// Overwrite composition: masked columns are copied bit-exactly from
// x_inter, the rest kept from x0_hat. No arithmetic touches either side.
template <typename Scalar>
MatX<Scalar> composeOverwrite(const MatX<Scalar>& x0_hat,
                              const MatX<Scalar>& x_inter,
                              const Eigen::Ref<const IntVector>& mask_bits) {
  require(x0_hat.rows() == x_inter.rows() && x0_hat.cols() == x_inter.cols(),
          "composeOverwrite: shape mismatch");
  require(x0_hat.cols() == mask_bits.size(), "composeOverwrite: mask width");
  MatX<Scalar> out = x0_hat;
  for (Index d = 0; d < mask_bits.size(); ++d)
    if (mask_bits[d]) out.col(d) = x_inter.col(d);
  return out;
}

}  // namespace textim
