#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace ddcset {

inline constexpr double kEulerGamma = std::numbers::egamma_v<double>;
inline constexpr double kInf = std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------------------
// Keyed counter-free RNG. Every logical stream is derived by hashing a tuple
// of identifiers (seed, purpose, unit, path); draws within a stream are
// sequential. Work is scheduled in whole streams, so results do not depend on
// thread count or evaluation order.
// ---------------------------------------------------------------------------

inline uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline uint64_t mix_key(std::initializer_list<uint64_t> parts) {
  uint64_t s = 0x6a09e667f3bcc909ULL;
  for (uint64_t p : parts) {
    s ^= splitmix64(p) + 0x9e3779b97f4a7c15ULL + (s << 6) + (s >> 2);
  }
  return s;
}

// Stream purposes; part of the RNG key so independent uses never collide.
enum class Rp : uint64_t {
  kAgentX = 1,
  kBurnIn = 2,
  kAction = 3,
  kTransition = 4,
  kMoment = 5,
  kCorrStart = 6,
  kCorrTraj = 7,
  kCorrReset = 8,
  kCoin = 9,
  kFold = 10,
  kOracleState = 11,
  kBlocks = 12,
  kOpponent = 13,
};

// standard normal inverse cdf: Acklam's rational approximation plus one
// Halley refinement, good to ~1e-15 over (0,1)
double normal_icdf(double p);

class RngStream {
 public:
  explicit RngStream(uint64_t key) : state_(key) {}
  RngStream(Rp purpose, std::initializer_list<uint64_t> parts) {
    uint64_t k = mix_key(parts);
    state_ = mix_key({static_cast<uint64_t>(purpose), k});
  }

  uint64_t next_u64() { return splitmix64(state_); }

  // uniform on (0,1), never returns an endpoint
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1p-53;
  }

  // type 1 extreme value: -log(-log U)
  double t1ev() { return -std::log(-std::log(uniform())); }

  double normal() { return normal_icdf(uniform()); }

  bool coin() { return (next_u64() & 1ULL) != 0; }

 private:
  uint64_t state_;
};

// ---------------------------------------------------------------------------
// small math helpers
// ---------------------------------------------------------------------------

inline double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

inline double logit(double p) { return std::log(p / (1.0 - p)); }

inline double clip(double v, double lo, double hi) {
  return v < lo ? lo : (v > hi ? hi : v);
}

inline double log_sum_exp(double a, double b) {
  double m = a > b ? a : b;
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

// theta is at most (R, mu, delta_gap); dim 2 for the single-agent model
using Vec3 = std::array<double, 3>;

struct Affine {
  Vec3 lin{0.0, 0.0, 0.0};
  double cst = 0.0;

  double eval(const Vec3& theta) const {
    return lin[0] * theta[0] + lin[1] * theta[1] + lin[2] * theta[2] + cst;
  }
  Affine& operator+=(const Affine& o) {
    for (int k = 0; k < 3; ++k) lin[k] += o.lin[k];
    cst += o.cst;
    return *this;
  }
  Affine& operator-=(const Affine& o) {
    for (int k = 0; k < 3; ++k) lin[k] -= o.lin[k];
    cst -= o.cst;
    return *this;
  }
  Affine& operator*=(double c) {
    for (int k = 0; k < 3; ++k) lin[k] *= c;
    cst *= c;
    return *this;
  }
  friend Affine operator-(Affine a, const Affine& b) { return a -= b; }
  friend Affine operator+(Affine a, const Affine& b) { return a += b; }
  friend Affine operator*(Affine a, double c) { return a *= c; }
};

// ---------------------------------------------------------------------------
// simple statistics
// ---------------------------------------------------------------------------

double mean(const std::vector<double>& v);
double sample_sd(const std::vector<double>& v);
double median(std::vector<double> v);
// empirical quantile as the ceil(q*n)-th order statistic, q in (0,1]
double order_quantile(std::vector<double> v, double q);

struct MeanSe {
  double value = 0.0;
  double se = 0.0;
};
MeanSe mean_se(const std::vector<double>& v);

uint64_t fnv1a64(const std::string& s);

}  // namespace ddcset
