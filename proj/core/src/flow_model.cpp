#include "tailflow/flows/flow_model.hpp"

#include <stdexcept>

namespace tailflow::flows {

template <class S>
LayerResult<S> FlowModel::to_base(const ParamView<S>& p, std::span<const S> x) const {
  if (x.size() != dim) throw std::invalid_argument("FlowModel: expected dimension " + std::to_string(dim));
  LayerResult<S> cur{std::vector<S>(x.begin(), x.end()), S(0.0)};
  std::vector<S> terms;
  terms.reserve(layers.size());
  for (std::size_t k = layers.size(); k-- > 0;) {
    auto r = std::visit([&](const auto& layer) { return layer.inverse(p, std::span<const S>(cur.values)); }, layers[k]);
    cur.values = std::move(r.values);
    terms.push_back(r.log_det);
  }
  cur.log_det = ad::sum(std::span<const S>(terms));
  return cur;
}

template <class S>
LayerResult<S> FlowModel::from_base(const ParamView<S>& p, std::span<const S> z) const {
  if (z.size() != dim) throw std::invalid_argument("FlowModel: expected dimension " + std::to_string(dim));
  LayerResult<S> cur{std::vector<S>(z.begin(), z.end()), S(0.0)};
  std::vector<S> terms;
  terms.reserve(layers.size());
  for (const Layer& l : layers) {
    auto r = std::visit([&](const auto& layer) { return layer.forward(p, std::span<const S>(cur.values)); }, l);
    cur.values = std::move(r.values);
    terms.push_back(r.log_det);
  }
  cur.log_det = ad::sum(std::span<const S>(terms));
  return cur;
}

template <class S>
S FlowModel::log_prob(const ParamView<S>& p, std::span<const S> x) const {
  const LayerResult<S> r = to_base(p, x);
  return base_log_prob(base, p, std::span<const S>(r.values)) + r.log_det;
}

double FlowModel::log_prob(std::span<const double> x) const { return log_prob<double>(view(), x); }

template <class S>
FlowModel::Sample<S> FlowModel::sample_with_log_prob(const ParamView<S>& p, Rng& rng) const {
  const std::vector<S> z = base_sample(base, p, rng);
  const S log_base = base_log_prob(base, p, std::span<const S>(z));
  LayerResult<S> r = from_base(p, std::span<const S>(z));
  return {std::move(r.values), log_base - r.log_det};
}

std::vector<double> FlowModel::sample(Rng& rng) const {
  const ParamView<double> p = view();
  const std::vector<double> z = base_sample(base, p, rng);
  return from_base(p, std::span<const double>(z)).values;
}

const TailLayer* FlowModel::tail_layer() const {
  for (const Layer& l : layers)
    if (const auto* t = std::get_if<TailLayer>(&l)) return t;
  return nullptr;
}

std::vector<ttf::TailParams> FlowModel::tail_params() const {
  const TailLayer* t = tail_layer();
  return t ? t->tail_params(view()) : std::vector<ttf::TailParams>{};
}

template LayerResult<double> FlowModel::to_base<double>(const ParamView<double>&, std::span<const double>) const;
template LayerResult<ad::Var> FlowModel::to_base<ad::Var>(const ParamView<ad::Var>&, std::span<const ad::Var>) const;
template LayerResult<double> FlowModel::from_base<double>(const ParamView<double>&, std::span<const double>) const;
template LayerResult<ad::Var> FlowModel::from_base<ad::Var>(const ParamView<ad::Var>&, std::span<const ad::Var>) const;
template double FlowModel::log_prob<double>(const ParamView<double>&, std::span<const double>) const;
template ad::Var FlowModel::log_prob<ad::Var>(const ParamView<ad::Var>&, std::span<const ad::Var>) const;
template FlowModel::Sample<double> FlowModel::sample_with_log_prob<double>(const ParamView<double>&, Rng&) const;
template FlowModel::Sample<ad::Var> FlowModel::sample_with_log_prob<ad::Var>(const ParamView<ad::Var>&, Rng&) const;

}  // namespace tailflow::flows
