#pragma once

#include <cstdint>
#include <vector>

#include <torch/types.h>

namespace dvd {

/// Linear variance schedule with precomputed tables indexed by timestep
/// 0..T; index 0 is the clean state (alpha_bar = 1).
class NoiseSchedule {
 public:
  NoiseSchedule(int T, double beta_start, double beta_end, double eta);

  int T() const noexcept { return T_; }
  double eta() const noexcept { return eta_; }
  double beta_start() const noexcept { return beta_start_; }
  double beta_end() const noexcept { return beta_end_; }

  double beta(int t) const;
  double alpha_bar(int t) const;
  /// sigma for the single step t -> t - 1.
  double sigma(int t) const;
  /// sigma for a strided step t -> t_prev (DDIM form, scaled by eta).
  double sigma(int t, int t_prev) const;

 private:
  void check(int t) const;

  int T_;
  double beta_start_, beta_end_, eta_;
  std::vector<double> beta_;       // [0] unused
  std::vector<double> alpha_bar_;  // [0] = 1
  std::vector<double> sigma_;      // [0] unused
};

NoiseSchedule make_schedule(int T, double beta_start, double beta_end, double eta);

/// m_t = sqrt(abar_t) m0 + sqrt(1 - abar_t) z. Accepts t = 0 (returns m0).
torch::Tensor forward_diffuse(const torch::Tensor& m0, int t, const torch::Tensor& z,
                              const NoiseSchedule& sched);

/// One reverse step from t to t_prev < t given the network's clean estimate:
///   m_prev = sqrt(abar_prev) x0 + sqrt(1 - abar_prev - s^2) / sqrt(1 - abar_t)
///            * (m_t - sqrt(abar_t) x0) + s z,   s = sigma(t, t_prev).
/// `z` may be undefined when s = 0.
torch::Tensor ddim_step(const torch::Tensor& m_t, const torch::Tensor& x0_hat, int t, int t_prev,
                        const NoiseSchedule& sched, const torch::Tensor& z);
torch::Tensor ddim_step(const torch::Tensor& m_t, const torch::Tensor& x0_hat, int t,
                        const NoiseSchedule& sched, const torch::Tensor& z);

/// `count` timesteps spaced uniformly from `from` down to `to`, inclusive,
/// strictly decreasing. count is clipped to from - to + 1.
std::vector<int> uniform_timesteps(int from, int to, int count);

}  // namespace dvd
