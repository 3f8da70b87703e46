#include "dvd/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <torch/torch.h>

#include "dvd/errors.hpp"

namespace dvd {

NoiseSchedule::NoiseSchedule(int T, double beta_start, double beta_end, double eta)
    : T_(T), beta_start_(beta_start), beta_end_(beta_end), eta_(eta) {
  if (T < 1) throw InvalidArgument("make_schedule: T must be >= 1");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw InvalidArgument("make_schedule: need 0 < beta_start <= beta_end < 1");
  }
  if (!(eta >= 0.0)) throw InvalidArgument("make_schedule: eta must be >= 0");
  beta_.assign(T + 1, 0.0);
  alpha_bar_.assign(T + 1, 1.0);
  sigma_.assign(T + 1, 0.0);
  for (int t = 1; t <= T; ++t) {
    beta_[t] = T == 1 ? beta_start : beta_start + (beta_end - beta_start) * (t - 1) / (T - 1);
    alpha_bar_[t] = alpha_bar_[t - 1] * (1.0 - beta_[t]);
  }
  for (int t = 1; t <= T; ++t) sigma_[t] = sigma(t, t - 1);
}

void NoiseSchedule::check(int t) const {
  if (t < 0 || t > T_) {
    throw InvalidArgument("timestep " + std::to_string(t) + " outside [0, " + std::to_string(T_) + "]");
  }
}

double NoiseSchedule::beta(int t) const {
  if (t < 1 || t > T_) throw InvalidArgument("beta: timestep outside [1, T]");
  return beta_[t];
}

double NoiseSchedule::alpha_bar(int t) const {
  check(t);
  return alpha_bar_[t];
}

double NoiseSchedule::sigma(int t) const {
  if (t < 1 || t > T_) throw InvalidArgument("sigma: timestep outside [1, T]");
  return sigma_[t];
}

double NoiseSchedule::sigma(int t, int t_prev) const {
  check(t);
  check(t_prev);
  if (eta_ == 0.0) return 0.0;
  const double ab_t = alpha_bar_[t], ab_prev = alpha_bar_[t_prev];
  return eta_ * std::sqrt((1.0 - ab_prev) / (1.0 - ab_t)) * std::sqrt(1.0 - ab_t / ab_prev);
}

NoiseSchedule make_schedule(int T, double beta_start, double beta_end, double eta) {
  return NoiseSchedule(T, beta_start, beta_end, eta);
}

torch::Tensor forward_diffuse(const torch::Tensor& m0, int t, const torch::Tensor& z,
                              const NoiseSchedule& sched) {
  if (t < 0 || t > sched.T()) throw InvalidArgument("forward_diffuse: t outside [0, T]");
  if (!z.sizes().equals(m0.sizes())) throw InvalidArgument("forward_diffuse: noise shape mismatch");
  const double ab = sched.alpha_bar(t);
  if (ab == 1.0) return m0.clone();
  return std::sqrt(ab) * m0 + std::sqrt(1.0 - ab) * z;
}

torch::Tensor ddim_step(const torch::Tensor& m_t, const torch::Tensor& x0_hat, int t, int t_prev,
                        const NoiseSchedule& sched, const torch::Tensor& z) {
  if (t < 1 || t > sched.T()) throw InvalidArgument("ddim_step: t outside [1, T]");
  if (t_prev < 0 || t_prev >= t) throw InvalidArgument("ddim_step: need 0 <= t_prev < t");
  if (!m_t.sizes().equals(x0_hat.sizes())) throw InvalidArgument("ddim_step: shape mismatch");
  const double ab_t = sched.alpha_bar(t), ab_prev = sched.alpha_bar(t_prev);
  const double s = sched.sigma(t, t_prev);
  const double rem = 1.0 - ab_prev - s * s;
  // Exactly zero at t_prev = 0 with s = 0; tolerate round-off otherwise.
  if (rem < -1e-12) {
    throw ScheduleError("ddim_step: 1 - abar_prev - sigma^2 < 0 at t=" + std::to_string(t));
  }
  const double dir = std::sqrt(std::max(rem, 0.0)) / std::sqrt(1.0 - ab_t);
  torch::Tensor out = std::sqrt(ab_prev) * x0_hat;
  if (dir != 0.0) out = out + dir * (m_t - std::sqrt(ab_t) * x0_hat);
  if (s != 0.0) {
    if (!z.defined() || !z.sizes().equals(m_t.sizes())) {
      throw InvalidArgument("ddim_step: sigma > 0 needs noise of matching shape");
    }
    out = out + s * z;
  }
  return out;
}

torch::Tensor ddim_step(const torch::Tensor& m_t, const torch::Tensor& x0_hat, int t,
                        const NoiseSchedule& sched, const torch::Tensor& z) {
  return ddim_step(m_t, x0_hat, t, t - 1, sched, z);
}

std::vector<int> uniform_timesteps(int from, int to, int count) {
  if (from < to || count < 1) throw InvalidArgument("uniform_timesteps: bad range");
  count = std::min(count, from - to + 1);
  if (count == 1) return {from};
  std::vector<int> ts(count);
  for (int i = 0; i < count; ++i) {
    ts[i] = from - static_cast<int>(std::lround(static_cast<double>(i) * (from - to) / (count - 1)));
  }
  return ts;
}

}  // namespace dvd
