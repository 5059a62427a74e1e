#include "tailflow/flows/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <type_traits>

namespace tailflow::flows {

namespace {

using ad::Var;

template <class S>
S sum_all(const std::vector<S>& xs) {
  return ad::sum(std::span<const S>(xs));
}

template <class S>
void check_dim(std::span<const S> v, std::size_t d, const char* who) {
  if (v.size() != d) throw std::invalid_argument(std::string(who) + ": dimension mismatch");
}

// Softmax as fused nodes: dw_k/dr_j = w_k (delta_kj - w_j).
template <class S>
std::vector<S> softmax(std::span<const S> r) {
  double m = -std::numeric_limits<double>::infinity();
  for (const S& v : r) m = std::max(m, ad::value(v));
  std::vector<double> w(r.size());
  double total = 0.0;
  for (std::size_t k = 0; k < r.size(); ++k) total += w[k] = std::exp(ad::value(r[k]) - m);
  for (double& v : w) v /= total;
  if constexpr (std::is_same_v<S, double>) {
    return w;
  } else {
    ad::Tape* tape = nullptr;
    for (const Var& v : r)
      if (!v.is_constant()) tape = v.tape;
    std::vector<Var> out(r.size());
    for (std::size_t k = 0; k < r.size(); ++k) {
      if (!tape) {
        out[k] = Var(w[k]);
        continue;
      }
      tape->begin_node();
      for (std::size_t j = 0; j < r.size(); ++j) tape->push_edge(r[j], w[k] * ((k == j ? 1.0 : 0.0) - w[j]));
      out[k] = tape->finish_node(w[k]);
    }
    return out;
  }
}

// Bin index for v among knots[1..K-1].
std::size_t find_bin(const std::vector<double>& knots, double v) {
  const std::size_t K = knots.size() - 1;
  std::size_t idx = 0;
  for (std::size_t i = 1; i < K; ++i)
    if (knots[i] <= v) idx = i;
  return idx;
}

}  // namespace

double spline_identity_derivative(const SplineConfig& cfg) { return ad::softplus_inverse(1.0 - cfg.min_derivative); }

template <class S>
SplineResult<S> rqs_spline(const S& x, std::span<const S> raw, const SplineConfig& cfg, bool inverse) {
  const std::size_t K = cfg.bins;
  if (raw.size() != cfg.raw_size()) throw std::invalid_argument("rqs_spline: raw parameter size mismatch");
  const double left = -cfg.bound;
  const double right = cfg.bound;
  const double xv = ad::value(x);
  if (!(xv >= left && xv <= right)) return {x, S(0.0)};

  const std::vector<S> sw = softmax<S>(raw.subspan(0, K));
  const std::vector<S> sh = softmax<S>(raw.subspan(K, K));
  std::vector<S> aw(K), ah(K);
  for (std::size_t k = 0; k < K; ++k) {
    aw[k] = cfg.min_width + (1.0 - cfg.min_width * K) * sw[k];
    ah[k] = cfg.min_height + (1.0 - cfg.min_height * K) * sh[k];
  }
  const double span = right - left;
  auto knots = [&](const std::vector<S>& a) {
    std::vector<double> out(K + 1);
    out[0] = left;
    double acc = 0.0;
    for (std::size_t i = 1; i < K; ++i) {
      acc += ad::value(a[i - 1]);
      out[i] = left + span * acc;
    }
    out[K] = right;
    return out;
  };
  auto knot = [&](const std::vector<S>& a, std::size_t i) -> S {
    if (i == 0) return S(left);
    if (i == K) return S(right);
    return left + span * ad::sum(std::span<const S>(a.data(), i));
  };

  const std::size_t idx = find_bin(inverse ? knots(ah) : knots(aw), xv);
  const S cw = knot(aw, idx);
  const S w = knot(aw, idx + 1) - cw;
  const S ch = knot(ah, idx);
  const S h = knot(ah, idx + 1) - ch;
  const S d0 = idx == 0 ? S(1.0) : cfg.min_derivative + ad::softplus(raw[2 * K + idx - 1]);
  const S d1 = idx == K - 1 ? S(1.0) : cfg.min_derivative + ad::softplus(raw[2 * K + idx]);
  const S delta = h / w;
  const S curv = d0 + d1 - 2.0 * delta;

  if (!inverse) {
    const S theta = (x - cw) / w;
    const S t1mt = theta * (1.0 - theta);
    const S numer = h * (delta * theta * theta + d0 * t1mt);
    const S denom = delta + curv * t1mt;
    const S y = ch + numer / denom;
    const S dnum = delta * delta * (d1 * theta * theta + 2.0 * delta * t1mt + d0 * ad::square(1.0 - theta));
    return {y, ad::log(dnum) - 2.0 * ad::log(denom)};
  }

  const S dy = x - ch;
  const S a = dy * curv + h * (delta - d0);
  const S b = h * d0 - dy * curv;
  const S c = -delta * dy;
  S disc = b * b - 4.0 * a * c;
  if (ad::value(disc) < 0.0) disc = S(0.0);
  const S root = 2.0 * c / (-b - ad::sqrt(disc));
  const S out = root * w + cw;
  const S t1mt = root * (1.0 - root);
  const S denom = delta + curv * t1mt;
  const S dnum = delta * delta * (d1 * root * root + 2.0 * delta * t1mt + d0 * ad::square(1.0 - root));
  return {out, 2.0 * ad::log(denom) - ad::log(dnum)};
}

// ---------------------------------------------------------------------------

RqsLayer::RqsLayer(std::size_t dim, std::size_t hidden, Activation act, const SplineConfig& cfg, ParamSet& params,
                   Rng& rng, const std::string& name)
    : cfg_(cfg) {
  if (cfg.bins < 2) throw std::invalid_argument("RqsLayer: need at least 2 bins");
  if (!(cfg.bound > 0.0)) throw std::invalid_argument("RqsLayer: bound must be positive");
  if (cfg.min_width * cfg.bins >= 1.0 || cfg.min_height * cfg.bins >= 1.0)
    throw std::invalid_argument("RqsLayer: minimum bin size too large for the number of bins");
  if (!(cfg.min_derivative > 0.0 && cfg.min_derivative < 1.0))
    throw std::invalid_argument("RqsLayer: minimum derivative must lie in (0, 1)");
  std::vector<double> bias(cfg.raw_size(), 0.0);
  std::fill(bias.begin() + 2 * cfg.bins, bias.end(), spline_identity_derivative(cfg));
  conditioner_ = MaskedConditioner(dim, cfg.raw_size(), hidden, act, params, rng, name + ".cond", bias);
}

template <class S>
LayerResult<S> RqsLayer::inverse(const ParamView<S>& p, std::span<const S> x) const {
  const std::size_t d = dim();
  const std::size_t R = cfg_.raw_size();
  check_dim(x, d, "RqsLayer");
  std::vector<S> raw(d * R);
  conditioner_.eval(p, x, std::span<S>(raw));
  LayerResult<S> out;
  out.values.resize(d);
  std::vector<S> ld(d);
  for (std::size_t i = 0; i < d; ++i) {
    auto r = rqs_spline<S>(x[i], std::span<const S>(raw).subspan(i * R, R), cfg_, false);
    out.values[i] = r.value;
    ld[i] = r.log_det;
  }
  out.log_det = sum_all(ld);
  return out;
}

template <class S>
LayerResult<S> RqsLayer::forward(const ParamView<S>& p, std::span<const S> z) const {
  const std::size_t d = dim();
  const std::size_t R = cfg_.raw_size();
  check_dim(z, d, "RqsLayer");
  LayerResult<S> out;
  out.values.assign(d, S(0.0));
  std::vector<S> block(R), ld(d);
  for (std::size_t i = 0; i < d; ++i) {
    conditioner_.eval_block(p, std::span<const S>(out.values), i, std::span<S>(block));
    auto r = rqs_spline<S>(z[i], std::span<const S>(block), cfg_, true);
    out.values[i] = r.value;
    ld[i] = r.log_det;
  }
  out.log_det = sum_all(ld);
  return out;
}

// ---------------------------------------------------------------------------

namespace {
const double kAffineScaleShift = ad::softplus_inverse(1.0 - AffineArLayer::kMinScale);

template <class S>
S affine_scale(const S& raw) {
  return ad::softplus(raw + kAffineScaleShift) + AffineArLayer::kMinScale;
}
}  // namespace

AffineArLayer::AffineArLayer(std::size_t dim, std::size_t hidden, Activation act, ParamSet& params, Rng& rng,
                             const std::string& name) {
  const double bias[2] = {0.0, 0.0};
  conditioner_ = MaskedConditioner(dim, 2, hidden, act, params, rng, name + ".cond", bias);
}

template <class S>
LayerResult<S> AffineArLayer::inverse(const ParamView<S>& p, std::span<const S> x) const {
  const std::size_t d = dim();
  check_dim(x, d, "AffineArLayer");
  std::vector<S> raw(2 * d);
  conditioner_.eval(p, x, std::span<S>(raw));
  LayerResult<S> out;
  out.values.resize(d);
  std::vector<S> ld(d);
  for (std::size_t i = 0; i < d; ++i) {
    const S scale = affine_scale(raw[2 * i + 1]);
    out.values[i] = (x[i] - raw[2 * i]) / scale;
    ld[i] = -ad::log(scale);
  }
  out.log_det = sum_all(ld);
  return out;
}

template <class S>
LayerResult<S> AffineArLayer::forward(const ParamView<S>& p, std::span<const S> z) const {
  const std::size_t d = dim();
  check_dim(z, d, "AffineArLayer");
  LayerResult<S> out;
  out.values.assign(d, S(0.0));
  std::vector<S> block(2), ld(d);
  for (std::size_t i = 0; i < d; ++i) {
    conditioner_.eval_block(p, std::span<const S>(out.values), i, std::span<S>(block));
    const S scale = affine_scale(block[1]);
    out.values[i] = block[0] + scale * z[i];
    ld[i] = ad::log(scale);
  }
  out.log_det = sum_all(ld);
  return out;
}

// ---------------------------------------------------------------------------

namespace {
std::size_t lower_index(std::size_t i, std::size_t j) { return i * (i - 1) / 2 + j; }
std::size_t upper_index(std::size_t d, std::size_t i, std::size_t j) { return i * d - i * (i + 1) / 2 + (j - i - 1); }

template <class S>
S lu_diag(const ParamView<S>& p, std::size_t offset) {
  return ad::softplus(p[offset]) + LuLinearLayer::kMinDiagonal;
}
}  // namespace

LuLinearLayer::LuLinearLayer(std::size_t dim, ParamSet& params, const std::string& name,
                             std::vector<std::size_t> permutation)
    : dim_(dim), perm_(std::move(permutation)) {
  if (dim == 0) throw std::invalid_argument("LuLinearLayer: dimension must be positive");
  if (perm_.empty()) {
    perm_.resize(dim);
    for (std::size_t i = 0; i < dim; ++i) perm_[i] = i;
  }
  if (perm_.size() != dim) throw std::invalid_argument("LuLinearLayer: permutation size mismatch");
  std::vector<bool> seen(dim, false);
  for (auto v : perm_) {
    if (v >= dim || seen[v]) throw std::invalid_argument("LuLinearLayer: not a permutation");
    seen[v] = true;
  }
  const std::size_t tri = dim * (dim - 1) / 2;
  lower_ = params.allocate(name + ".lower", tri);
  upper_ = params.allocate(name + ".upper", tri);
  diag_ = params.allocate(name + ".diag", dim, ad::softplus_inverse(1.0 - kMinDiagonal));
}

template <class S>
LayerResult<S> LuLinearLayer::forward(const ParamView<S>& p, std::span<const S> z) const {
  const std::size_t d = dim_;
  check_dim(z, d, "LuLinearLayer");
  std::vector<S> u(d), v(d), row, rhs;
  std::vector<S> ld(d);
  for (std::size_t i = 0; i < d; ++i) {
    const S diag = lu_diag(p, diag_ + i);
    ld[i] = ad::log(diag);
    row.clear();
    rhs.clear();
    row.push_back(diag);
    rhs.push_back(z[i]);
    for (std::size_t j = i + 1; j < d; ++j) {
      row.push_back(p[upper_ + upper_index(d, i, j)]);
      rhs.push_back(z[j]);
    }
    u[i] = ad::dot(std::span<const S>(row), std::span<const S>(rhs));
  }
  for (std::size_t i = 0; i < d; ++i) {
    row.clear();
    rhs.clear();
    row.push_back(S(1.0));
    rhs.push_back(u[i]);
    for (std::size_t j = 0; j < i; ++j) {
      row.push_back(p[lower_ + lower_index(i, j)]);
      rhs.push_back(u[j]);
    }
    v[i] = ad::dot(std::span<const S>(row), std::span<const S>(rhs));
  }
  LayerResult<S> out;
  out.values.resize(d);
  for (std::size_t i = 0; i < d; ++i) out.values[i] = v[perm_[i]];
  out.log_det = sum_all(ld);
  return out;
}

template <class S>
LayerResult<S> LuLinearLayer::inverse(const ParamView<S>& p, std::span<const S> x) const {
  const std::size_t d = dim_;
  check_dim(x, d, "LuLinearLayer");
  std::vector<S> v(d), u(d), row, rhs;
  for (std::size_t i = 0; i < d; ++i) v[perm_[i]] = x[i];
  for (std::size_t i = 0; i < d; ++i) {
    row.clear();
    rhs.clear();
    for (std::size_t j = 0; j < i; ++j) {
      row.push_back(p[lower_ + lower_index(i, j)]);
      rhs.push_back(u[j]);
    }
    u[i] = i == 0 ? v[i] : v[i] - ad::dot(std::span<const S>(row), std::span<const S>(rhs));
  }
  LayerResult<S> out;
  out.values.resize(d);
  std::vector<S> ld(d);
  for (std::size_t ii = d; ii-- > 0;) {
    row.clear();
    rhs.clear();
    for (std::size_t j = ii + 1; j < d; ++j) {
      row.push_back(p[upper_ + upper_index(d, ii, j)]);
      rhs.push_back(out.values[j]);
    }
    const S diag = lu_diag(p, diag_ + ii);
    const S r = ii + 1 == d ? u[ii] : u[ii] - ad::dot(std::span<const S>(row), std::span<const S>(rhs));
    out.values[ii] = r / diag;
    ld[ii] = -ad::log(diag);
  }
  out.log_det = sum_all(ld);
  return out;
}

std::vector<double> LuLinearLayer::dense(const ParamView<double>& p) const {
  const std::size_t d = dim_;
  std::vector<double> L(d * d, 0.0), U(d * d, 0.0), M(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    L[i * d + i] = 1.0;
    U[i * d + i] = lu_diag(p, diag_ + i);
    for (std::size_t j = 0; j < i; ++j) L[i * d + j] = p[lower_ + lower_index(i, j)];
    for (std::size_t j = i + 1; j < d; ++j) U[i * d + j] = p[upper_ + upper_index(d, i, j)];
  }
  std::vector<double> LU(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t k = 0; k < d; ++k)
      for (std::size_t j = 0; j < d; ++j) LU[i * d + j] += L[i * d + k] * U[k * d + j];
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) M[i * d + j] = LU[perm_[i] * d + j];
  return M;
}

// ---------------------------------------------------------------------------

TailLayer::TailLayer(std::size_t dim, std::span<const double> lambdas, bool freeze_lambda, ParamSet& params,
                     const std::string& name)
    : dim_(dim), frozen_(freeze_lambda) {
  if (dim == 0) throw std::invalid_argument("TailLayer: dimension must be positive");
  if (lambdas.size() != dim) throw std::invalid_argument("TailLayer: need one initial lambda per dimension");
  for (double l : lambdas)
    if (!(l > 0.0) || !std::isfinite(l)) throw std::invalid_argument("TailLayer: lambda must be positive");
  mu_ = params.allocate(name + ".mu", dim, 0.0);
  sigma_ = params.allocate(name + ".sigma", dim, ad::softplus_inverse(1.0));
  lambda_pos_ = params.allocate(name + ".lambda_pos", dim);
  lambda_neg_ = params.allocate(name + ".lambda_neg", dim);
  for (std::size_t i = 0; i < dim; ++i) {
    params.values[lambda_pos_ + i] = ad::softplus_inverse(lambdas[i]);
    params.values[lambda_neg_ + i] = ad::softplus_inverse(lambdas[i]);
  }
  if (freeze_lambda) {
    params.freeze(lambda_pos_, dim);
    params.freeze(lambda_neg_, dim);
  }
}

template <class S>
ttf::TailParamsT<S> TailLayer::params_for(const ParamView<S>& p, std::size_t i) const {
  return {p[mu_ + i], ad::softplus(p[sigma_ + i]), ad::softplus(p[lambda_pos_ + i]), ad::softplus(p[lambda_neg_ + i])};
}

std::vector<ttf::TailParams> TailLayer::tail_params(const ParamView<double>& p) const {
  std::vector<ttf::TailParams> out(dim_);
  for (std::size_t i = 0; i < dim_; ++i) {
    const auto t = params_for(p, i);
    out[i] = {t.mu, t.sigma, t.lambda_pos, t.lambda_neg};
  }
  return out;
}

template <class S>
LayerResult<S> TailLayer::forward(const ParamView<S>& p, std::span<const S> z) const {
  check_dim(z, dim_, "TailLayer");
  LayerResult<S> out;
  out.values.resize(dim_);
  std::vector<S> ld(dim_);
  for (std::size_t i = 0; i < dim_; ++i) {
    const auto t = params_for(p, i);
    out.values[i] = ttf::forward<S>(z[i], t);
    ld[i] = ttf::log_deriv<S>(z[i], t);
  }
  out.log_det = sum_all(ld);
  return out;
}

template <class S>
LayerResult<S> TailLayer::inverse(const ParamView<S>& p, std::span<const S> x) const {
  check_dim(x, dim_, "TailLayer");
  LayerResult<S> out;
  out.values.resize(dim_);
  std::vector<S> ld(dim_);
  for (std::size_t i = 0; i < dim_; ++i) {
    const auto t = params_for(p, i);
    out.values[i] = ttf::inverse<S>(x[i], t);
    ld[i] = -ttf::log_deriv<S>(out.values[i], t);
  }
  out.log_det = sum_all(ld);
  return out;
}

// ---------------------------------------------------------------------------

namespace {
template <class S>
S attach(const S& input, double value, double slope) {
  if constexpr (std::is_same_v<S, double>) {
    (void)input;
    (void)slope;
    return value;
  } else {
    return ad::apply_unary(input, value, slope);
  }
}
}  // namespace

template <class S>
LayerResult<S> CometLayer::forward(const ParamView<S>&, std::span<const S> z) const {
  check_dim(z, dim(), "CometLayer");
  LayerResult<S> out;
  out.values.resize(dim());
  double ld = 0.0;
  for (std::size_t i = 0; i < dim(); ++i) {
    const double v = ad::value(z[i]);
    const double x = marginals_[i].inv_logit_cdf(v);
    // d x / d v = sigmoid'(v) / f(x)
    const double l = -ad::softplus(-v) - ad::softplus(v) - marginals_[i].log_pdf(x);
    out.values[i] = attach<S>(z[i], x, std::exp(l));
    ld += l;
  }
  out.log_det = S(ld);
  return out;
}

template <class S>
LayerResult<S> CometLayer::inverse(const ParamView<S>&, std::span<const S> x) const {
  check_dim(x, dim(), "CometLayer");
  LayerResult<S> out;
  out.values.resize(dim());
  double ld = 0.0;
  for (std::size_t i = 0; i < dim(); ++i) {
    const double xv = ad::value(x[i]);
    const auto& m = marginals_[i];
    const double l = m.log_pdf(xv) - m.log_cdf(xv) - m.log_survival(xv);
    out.values[i] = attach<S>(x[i], m.logit_cdf(xv), std::exp(l));
    ld += l;
  }
  out.log_det = S(ld);
  return out;
}

// ---------------------------------------------------------------------------

#define TAILFLOW_INSTANTIATE_LAYER(Layer, S)                                                       \
  template LayerResult<S> Layer::forward<S>(const ParamView<S>&, std::span<const S>) const; \
  template LayerResult<S> Layer::inverse<S>(const ParamView<S>&, std::span<const S>) const;

TAILFLOW_INSTANTIATE_LAYER(RqsLayer, double)
TAILFLOW_INSTANTIATE_LAYER(RqsLayer, ad::Var)
TAILFLOW_INSTANTIATE_LAYER(AffineArLayer, double)
TAILFLOW_INSTANTIATE_LAYER(AffineArLayer, ad::Var)
TAILFLOW_INSTANTIATE_LAYER(LuLinearLayer, double)
TAILFLOW_INSTANTIATE_LAYER(LuLinearLayer, ad::Var)
TAILFLOW_INSTANTIATE_LAYER(TailLayer, double)
TAILFLOW_INSTANTIATE_LAYER(TailLayer, ad::Var)
TAILFLOW_INSTANTIATE_LAYER(CometLayer, double)
TAILFLOW_INSTANTIATE_LAYER(CometLayer, ad::Var)
#undef TAILFLOW_INSTANTIATE_LAYER

template ttf::TailParamsT<double> TailLayer::params_for<double>(const ParamView<double>&, std::size_t) const;
template ttf::TailParamsT<ad::Var> TailLayer::params_for<ad::Var>(const ParamView<ad::Var>&, std::size_t) const;
template SplineResult<double> rqs_spline<double>(const double&, std::span<const double>, const SplineConfig&, bool);
template SplineResult<ad::Var> rqs_spline<ad::Var>(const ad::Var&, std::span<const ad::Var>, const SplineConfig&,
                                                   bool);

}  // namespace tailflow::flows
