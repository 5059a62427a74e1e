#include "tailflow/flows/serialization.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace tailflow::flows {

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw std::runtime_error("bad number '" + s + "'");
  return v;
}

namespace {

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  std::string word() {
    std::string w;
    if (!(in_ >> w)) throw std::runtime_error("model file truncated");
    return w;
  }
  void expect(const std::string& key) {
    const std::string w = word();
    if (w != key) throw std::runtime_error("model file: expected '" + key + "', found '" + w + "'");
  }
  double real() { return parse_double(word()); }
  std::uint64_t count() {
    const std::string w = word();
    std::uint64_t v = 0;
    const auto res = std::from_chars(w.data(), w.data() + w.size(), v);
    if (res.ec != std::errc() || res.ptr != w.data() + w.size()) throw std::runtime_error("bad integer '" + w + "'");
    return v;
  }
  std::vector<double> reals() {
    std::vector<double> v(count());
    for (auto& x : v) x = real();
    return v;
  }

 private:
  std::istream& in_;
};

void write_reals(std::ostream& out, const std::vector<double>& v) {
  out << v.size();
  for (double x : v) out << ' ' << format_double(x);
  out << '\n';
}

void write_tail(std::ostream& out, const comet::GpdTail& t) {
  out << format_double(t.threshold) << ' ' << format_double(t.shape) << ' ' << format_double(t.scale) << ' '
      << (t.fallback ? 1 : 0);
}

comet::GpdTail read_tail(Reader& r) {
  comet::GpdTail t;
  t.threshold = r.real();
  t.shape = r.real();
  t.scale = r.real();
  t.fallback = r.count() != 0;
  return t;
}

}  // namespace

void save_model(const FlowModel& model, std::ostream& out) {
  const ArchitectureOptions& o = model.options;
  out << "tailflow-model " << kModelFormatVersion << '\n';
  out << "name " << model.name << '\n';
  out << "dim " << model.dim << '\n';
  out << "lu_layer " << (o.lu_layer ? 1 : 0) << '\n';
  out << "hidden " << o.hidden << '\n';
  out << "activation " << to_string(o.activation) << '\n';
  out << "spline " << o.spline.bins << ' ' << format_double(o.spline.bound) << ' ' << format_double(o.spline.min_width)
      << ' ' << format_double(o.spline.min_height) << ' ' << format_double(o.spline.min_derivative) << '\n';
  out << "tail_shapes ";
  write_reals(out, o.tail_shapes);
  out << "shape_init " << format_double(o.shape_init_lo) << ' ' << format_double(o.shape_init_hi) << '\n';
  out << "mixture_components " << o.mixture_components << '\n';
  out << "generalized_normal_shape " << format_double(o.generalized_normal_shape) << '\n';
  out << "init_seed " << o.init_seed << '\n';

  const CometLayer* comet_layer = nullptr;
  for (const Layer& l : model.layers)
    if (const auto* c = std::get_if<CometLayer>(&l)) comet_layer = c;
  const std::size_t nm = comet_layer ? comet_layer->dim() : 0;
  out << "comet_marginals " << nm << '\n';
  for (std::size_t i = 0; i < nm; ++i) {
    const auto& m = comet_layer->marginals()[i];
    out << "marginal " << format_double(m.bandwidth()) << ' ' << format_double(m.tail_mass()) << ' ';
    write_tail(out, m.lower());
    out << ' ';
    write_tail(out, m.upper());
    out << ' ';
    write_reals(out, m.body());
  }

  out << "params " << model.params.size() << '\n';
  for (std::size_t i = 0; i < model.params.size(); ++i)
    out << format_double(model.params.values[i]) << ' ' << int(model.params.frozen[i]) << '\n';
  out << "end\n";
  if (!out) throw std::runtime_error("failed to write model");
}

FlowModel load_model(std::istream& in) {
  Reader r(in);
  r.expect("tailflow-model");
  const auto version = r.count();
  if (version != static_cast<std::uint64_t>(kModelFormatVersion))
    throw std::runtime_error("unsupported model format version " + std::to_string(version));
  r.expect("name");
  const std::string name = r.word();
  r.expect("dim");
  const std::size_t dim = r.count();

  ArchitectureOptions o;
  r.expect("lu_layer");
  o.lu_layer = r.count() != 0;
  r.expect("hidden");
  o.hidden = r.count();
  r.expect("activation");
  o.activation = activation_from_string(r.word());
  r.expect("spline");
  o.spline.bins = r.count();
  o.spline.bound = r.real();
  o.spline.min_width = r.real();
  o.spline.min_height = r.real();
  o.spline.min_derivative = r.real();
  r.expect("tail_shapes");
  o.tail_shapes = r.reals();
  r.expect("shape_init");
  o.shape_init_lo = r.real();
  o.shape_init_hi = r.real();
  r.expect("mixture_components");
  o.mixture_components = r.count();
  r.expect("generalized_normal_shape");
  o.generalized_normal_shape = r.real();
  r.expect("init_seed");
  o.init_seed = r.count();

  r.expect("comet_marginals");
  const std::size_t nm = r.count();
  for (std::size_t i = 0; i < nm; ++i) {
    r.expect("marginal");
    const double bw = r.real();
    const double mass = r.real();
    const comet::GpdTail lo = read_tail(r);
    const comet::GpdTail hi = read_tail(r);
    o.comet_marginals.emplace_back(r.reals(), bw, mass, lo, hi);
  }

  FlowModel model = build_architecture(name, dim, o);
  r.expect("params");
  const std::size_t np = r.count();
  if (np != model.params.size())
    throw std::runtime_error("model file has " + std::to_string(np) + " parameters, architecture needs " +
                             std::to_string(model.params.size()));
  for (std::size_t i = 0; i < np; ++i) {
    model.params.values[i] = r.real();
    model.params.frozen[i] = static_cast<std::uint8_t>(r.count() != 0);
  }
  r.expect("end");
  return model;
}

void save_model(const FlowModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  save_model(model, out);
}

FlowModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  return load_model(in);
}

}  // namespace tailflow::flows
