#include <algorithm>
#include <stdexcept>

#include "tailflow/flows/flow_model.hpp"

namespace tailflow::flows {

const std::vector<std::string>& architecture_names() {
  static const std::vector<std::string> names = {"normal", "m_normal", "g_normal",  "mTAF", "gTAF",
                                                 "TTF",    "TTFfix",   "TTF_tBase", "COMET"};
  return names;
}

namespace {

std::vector<double> random_shapes(std::size_t d, const ArchitectureOptions& o, Rng& rng) {
  if (!(o.shape_init_lo > 0.0 && o.shape_init_hi >= o.shape_init_lo))
    throw std::invalid_argument("shape initialisation range must satisfy 0 < lo <= hi");
  std::vector<double> out(d);
  for (auto& v : out) v = o.shape_init_lo + (o.shape_init_hi - o.shape_init_lo) * rng.uniform();
  return out;
}

const std::vector<double>& fixed_shapes(const std::string& name, std::size_t d, const ArchitectureOptions& o) {
  if (o.tail_shapes.size() != d)
    throw std::invalid_argument(name + " needs one fixed tail shape per dimension (got " +
                                std::to_string(o.tail_shapes.size()) + ")");
  for (double s : o.tail_shapes)
    if (!(s > 0.0)) throw std::invalid_argument(name + ": tail shapes must be positive");
  return o.tail_shapes;
}

std::vector<double> reciprocal(std::vector<double> v) {
  for (auto& x : v) x = 1.0 / x;
  return v;
}

}  // namespace

FlowModel build_architecture(const std::string& name, std::size_t d, const ArchitectureOptions& options) {
  const auto& names = architecture_names();
  if (std::find(names.begin(), names.end(), name) == names.end())
    throw std::invalid_argument("unknown architecture '" + name + "'");
  if (d == 0) throw std::invalid_argument("architecture dimension must be positive");

  FlowModel m;
  m.name = name;
  m.dim = d;
  m.options = options;
  Rng rng(options.init_seed);

  if (name == "m_normal") {
    m.base = make_gaussian_mixture_base(d, options.mixture_components, m.params, rng);
  } else if (name == "g_normal") {
    m.base = make_generalized_normal_base(d, options.generalized_normal_shape, m.params);
  } else if (name == "mTAF") {
    const auto nu = reciprocal(fixed_shapes(name, d, options));
    m.base = make_student_t_base(d, nu, false, m.params);
  } else if (name == "gTAF" || name == "TTF_tBase") {
    const auto nu = reciprocal(random_shapes(d, options, rng));
    m.base = make_student_t_base(d, nu, true, m.params);
  } else {
    m.base = StdNormalBase{d};
  }

  const std::size_t hidden = options.hidden_width(d);
  m.layers.emplace_back(RqsLayer(d, hidden, options.activation, options.spline, m.params, rng, "rqs"));
  m.layers.emplace_back(AffineArLayer(d, hidden, options.activation, m.params, rng, "affine"));

  const bool tail = name == "TTF" || name == "TTFfix" || name == "TTF_tBase";
  if (options.lu_layer) m.layers.emplace_back(LuLinearLayer(d, m.params, "lu"));
  if (tail) {
    const bool fixed = name == "TTFfix";
    const std::vector<double> lambdas = fixed ? fixed_shapes(name, d, options) : random_shapes(d, options, rng);
    m.layers.emplace_back(TailLayer(d, lambdas, fixed, m.params, "tail"));
  } else if (name == "COMET") {
    if (options.comet_marginals.size() != d)
      throw std::invalid_argument("COMET needs one fitted marginal per dimension");
    m.layers.emplace_back(CometLayer(options.comet_marginals));
  }
  // The marginals live in the layer; keep a single copy.
  m.options.comet_marginals.clear();
  return m;
}

}  // namespace tailflow::flows
