#pragma once

#include <span>
#include <string>
#include <variant>
#include <vector>

#include "tailflow/flows/params.hpp"
#include "tailflow/rng.hpp"

namespace tailflow::flows {

struct StdNormalBase {
  std::size_t dim = 0;
};

/// Independent Student-T marginals; nu_i = softplus(pre_i).
struct StudentTBase {
  std::size_t dim = 0;
  std::size_t nu_offset = 0;
  bool trainable = true;
};

/// Mixture of diagonal Gaussians; std = softplus(pre) + 1e-3.
struct GaussianMixtureBase {
  static constexpr double kMinStd = 1e-3;
  std::size_t dim = 0;
  std::size_t components = 5;
  std::size_t logits = 0;  // components
  std::size_t means = 0;   // components x dim, row-major
  std::size_t stds = 0;    // components x dim
};

/// Independent generalized normals with unit scale, density
/// beta / (2 Gamma(1/beta)) exp(-|x|^beta); beta = softplus(pre) + 0.1.
struct GeneralizedNormalBase {
  static constexpr double kMinShape = 0.1;
  std::size_t dim = 0;
  std::size_t shape_offset = 0;
};

using BaseDistribution = std::variant<StdNormalBase, StudentTBase, GaussianMixtureBase, GeneralizedNormalBase>;

StudentTBase make_student_t_base(std::size_t dim, std::span<const double> nu, bool trainable, ParamSet& params);
GaussianMixtureBase make_gaussian_mixture_base(std::size_t dim, std::size_t components, ParamSet& params, Rng& rng);
GeneralizedNormalBase make_generalized_normal_base(std::size_t dim, double shape, ParamSet& params);

std::size_t base_dim(const BaseDistribution& base);
const char* base_kind(const BaseDistribution& base);

template <class S>
S base_log_prob(const BaseDistribution& base, const ParamView<S>& p, std::span<const S> z);

/// Reparameterized draw: for S = ad::Var the sample carries derivatives with
/// respect to the trainable distribution parameters (Student-T via the
/// clamped gamma construction, generalized normal via implicit gamma
/// derivatives). Mixture component choice is not differentiated.
template <class S>
std::vector<S> base_sample(const BaseDistribution& base, const ParamView<S>& p, Rng& rng);

/// Current degrees of freedom of a Student-T base.
std::vector<double> student_t_dof(const StudentTBase& base, const ParamView<double>& p);

}  // namespace tailflow::flows
