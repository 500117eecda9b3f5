#pragma once

#include <cmath>
#include <cstdint>

namespace csnn {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// xoshiro256++, hand-rolled so streams are bit-identical across platforms
// and standard-library versions (std distributions are implementation-defined).
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) {
    std::uint64_t sm = seed;
    for (auto& word : state_) word = splitmix64(sm);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform in [0,1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  float uniform_f(float lo, float hi) {
    return static_cast<float>(uniform(lo, hi));
  }

  // Uniform integer in [0, n), n > 0. Rejection-free modulo is fine here:
  // n is tiny relative to 2^64, the bias is unobservable.
  std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

  double normal(double mean = 0.0, double stddev = 1.0) {
    if (have_spare_) {
      have_spare_ = false;
      return mean + stddev * spare_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return mean + stddev * r * std::cos(theta);
  }

  template <typename T>
  void shuffle(T* data, std::size_t n) {
    for (std::size_t i = n; i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      T tmp = data[i - 1];
      data[i - 1] = data[j];
      data[j] = tmp;
    }
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  std::uint64_t state_[4] = {};
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// Named sub-streams derived from one master seed, so each component
// (data split, per-layer init, dropout, sampling, ...) is independently
// reproducible.
enum class SeedStream : std::uint64_t {
  data_split = 1,
  som_init = 2,
  mask_init = 3,
  probe_init = 4,
  dropout = 5,
  shuffle = 6,
  few_shot = 7,
  fold_assign = 8,
  ablation = 9,
  synth = 10,
};

inline std::uint64_t derive_seed(std::uint64_t master, SeedStream stream,
                                 std::uint64_t index = 0) {
  std::uint64_t s = master;
  std::uint64_t a = splitmix64(s);
  s = a ^ (static_cast<std::uint64_t>(stream) * 0x9e3779b97f4a7c15ULL);
  std::uint64_t b = splitmix64(s);
  s = b ^ (index * 0xd1342543de82ef95ULL + 0x2545f4914f6cdd1dULL);
  return splitmix64(s);
}

inline Rng make_rng(std::uint64_t master, SeedStream stream,
                    std::uint64_t index = 0) {
  return Rng(derive_seed(master, stream, index));
}

}  // namespace csnn
