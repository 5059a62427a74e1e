#include "tailflow/synthetic.hpp"

#include <stdexcept>

#include "tailflow/special.hpp"

namespace tailflow::experiments {

void SyntheticDeSpec::validate() const {
  if (d < 2) throw std::invalid_argument("synthetic model needs d >= 2");
  if (!(nu > 0.0)) throw std::invalid_argument("synthetic model needs nu > 0");
  if (n < 3) throw std::invalid_argument("synthetic model needs at least 3 observations");
  if (train_fraction <= 0.0 || valid_fraction <= 0.0 || test_fraction <= 0.0 ||
      std::abs(train_fraction + valid_fraction + test_fraction - 1.0) > 1e-12)
    throw std::invalid_argument("split fractions must be positive and sum to 1");
}

Matrix sample_synthetic(std::size_t d, double nu, std::size_t n, Rng& rng) {
  if (d < 2) throw std::invalid_argument("synthetic model needs d >= 2");
  Matrix m(n, d);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t i = 0; i + 1 < d; ++i) m(r, i) = special::sample_student_t(nu, rng);
    m(r, d - 1) = m(r, d - 2) + rng.normal();
  }
  return m;
}

Splits gen_synthetic_de(const SyntheticDeSpec& spec) {
  spec.validate();
  Rng rng(mix_seed(spec.seed, 0x64617461ULL));
  const Matrix all = sample_synthetic(spec.d, spec.nu, spec.n, rng);
  const auto n_train = static_cast<std::size_t>(std::llround(spec.train_fraction * static_cast<double>(spec.n)));
  const auto n_valid = static_cast<std::size_t>(std::llround(spec.valid_fraction * static_cast<double>(spec.n)));
  return {all.slice(0, n_train), all.slice(n_train, n_train + n_valid), all.slice(n_train + n_valid, spec.n)};
}

train::LogTarget synthetic_target(std::size_t d, double nu) {
  if (d < 2) throw std::invalid_argument("synthetic target needs d >= 2");
  return train::make_log_target([nu](auto x) {
    using S = typename decltype(x)::value_type;
    return synthetic_log_density<S>(x, nu);
  });
}

Standardizer Standardizer::fit(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols() && !b.empty()) throw std::invalid_argument("Standardizer: width mismatch");
  const std::size_t d = a.cols();
  const double n = static_cast<double>(a.rows() + b.rows());
  if (n < 2) throw std::invalid_argument("Standardizer: need at least two rows");
  Standardizer s;
  s.mean.assign(d, 0.0);
  s.sd.assign(d, 0.0);
  for (const Matrix* m : {&a, &b})
    for (std::size_t r = 0; r < m->rows(); ++r)
      for (std::size_t j = 0; j < d; ++j) s.mean[j] += (*m)(r, j);
  for (auto& v : s.mean) v /= n;
  for (const Matrix* m : {&a, &b})
    for (std::size_t r = 0; r < m->rows(); ++r)
      for (std::size_t j = 0; j < d; ++j) s.sd[j] += ((*m)(r, j) - s.mean[j]) * ((*m)(r, j) - s.mean[j]);
  for (auto& v : s.sd) {
    v = std::sqrt(v / (n - 1.0));
    if (!(v > 0.0)) v = 1.0;
  }
  return s;
}

void Standardizer::apply(Matrix& m) const {
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t j = 0; j < m.cols(); ++j) m(r, j) = (m(r, j) - mean[j]) / sd[j];
}

double Standardizer::log_jacobian() const {
  double s = 0.0;
  for (double v : sd) s -= std::log(v);
  return s;
}

}  // namespace tailflow::experiments
