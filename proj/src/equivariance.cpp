#include "emnn/equivariance.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "emnn/error.hpp"
#include "emnn/transforms.hpp"

namespace emnn {

namespace {

struct Outputs {
  std::vector<double> h, x, logits;
  std::size_t n = 0, h_dim = 0, channels = 0, classes = 0;
};

Outputs run(Model& model, const Sample& sample) {
  ad::Tape tape;
  BoundParameters p(tape, model.parameters());
  const ForwardResult r = model.forward(sample, p);
  Outputs o;
  o.n = sample.num_nodes;
  o.h_dim = r.encoded.h.dim(1);
  o.channels = r.encoded.channels();
  o.classes = r.logits.dim(1);
  o.h.assign(r.encoded.h.values().begin(), r.encoded.h.values().end());
  o.x.assign(r.encoded.x.values().begin(), r.encoded.x.values().end());
  o.logits.assign(r.logits.values().begin(), r.logits.values().end());
  return o;
}

// How a transformed run should relate to the reference.
struct Expectation {
  Mat3 q = identity3();
  Vec3 t{0, 0, 0};                // added to the position channel only
  std::vector<std::size_t> perm;  // empty means identity
};

std::size_t target(const Expectation& e, std::size_t v) { return e.perm.empty() ? v : e.perm[v]; }

double rows_deviation(const std::vector<double>& ref, const std::vector<double>& got, std::size_t n, std::size_t w,
                      const Expectation& e) {
  double dev = 0.0;
  for (std::size_t v = 0; v < n; ++v) {
    const std::size_t u = target(e, v);
    for (std::size_t k = 0; k < w; ++k) dev = std::max(dev, std::abs(got[u * w + k] - ref[v * w + k]));
  }
  return dev;
}

double invariant_deviation(const Outputs& ref, const Outputs& got, const Expectation& e) {
  double dev = rows_deviation(ref.h, got.h, ref.n, ref.h_dim, e);
  if (ref.logits.size() == ref.classes) {
    for (std::size_t k = 0; k < ref.classes; ++k) dev = std::max(dev, std::abs(got.logits[k] - ref.logits[k]));
  } else {
    dev = std::max(dev, rows_deviation(ref.logits, got.logits, ref.n, ref.classes, e));
  }
  return dev;
}

double covariant_deviation(const Outputs& ref, const Outputs& got, const Expectation& e) {
  double dev = 0.0;
  const std::size_t w = 3 * ref.channels;
  for (std::size_t v = 0; v < ref.n; ++v) {
    const std::size_t u = target(e, v);
    for (std::size_t c = 0; c < ref.channels; ++c) {
      const Vec3 x{ref.x[v * w + 3 * c], ref.x[v * w + 3 * c + 1], ref.x[v * w + 3 * c + 2]};
      Vec3 want = mat_vec(e.q, x);
      if (c == 0) want = want + e.t;
      for (std::size_t a = 0; a < 3; ++a) dev = std::max(dev, std::abs(got.x[u * w + 3 * c + a] - want[a]));
    }
  }
  return dev;
}

// The prepared sample with its node state moved by (q, t): positions get the
// translation, the other channels only rotate. The hierarchy is rebuilt from
// the moved positions.
Sample move_state(const Sample& base, const ModelConfig& config, const Mat3& q, const Vec3& t, bool reverse_winding,
                  CornerOrder order) {
  Sample s = base;
  const std::size_t w = 3 * s.channels;
  std::vector<Vec3> pos(s.num_nodes);
  for (std::size_t v = 0; v < s.num_nodes; ++v) {
    for (std::size_t c = 0; c < s.channels; ++c) {
      double* x = s.x0.data() + v * w + 3 * c;
      Vec3 y = mat_vec(q, Vec3{x[0], x[1], x[2]});
      if (c == 0) y = y + t;
      std::copy(y.begin(), y.end(), x);
    }
    pos[v] = {s.x0[v * w], s.x0[v * w + 1], s.x0[v * w + 2]};
  }
  s.mesh = s.mesh.with_positions(pos);
  if (reverse_winding) s.mesh = s.mesh.with_reversed_winding();
  s.incidence = Incidence::from_mesh(s.mesh, order);
  HierarchyOptions ho = config.hierarchy;
  ho.depth = config.effective_depth();
  s.hierarchy = build_hierarchy(pos, ho);
  return s;
}

std::string format_deviation(double d) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", d);
  return buf;
}

}  // namespace

const CheckResult& EquivarianceReport::at(const std::string& name) const {
  for (const auto& c : checks) {
    if (c.name == name) return c;
  }
  throw ConfigError("no check named " + name);
}

std::vector<std::string> EquivarianceReport::failing() const {
  std::vector<std::string> out;
  for (const auto& c : checks) {
    if (!c.passed) out.push_back(c.name);
  }
  return out;
}

std::string EquivarianceReport::to_text() const {
  std::ostringstream os;
  os << "trials " << trials << ", tolerance " << format_deviation(tolerance) << "\n";
  for (const auto& c : checks) {
    os << (c.passed ? "  ok    " : "  FAIL  ") << c.name;
    os << std::string(c.name.size() < 20 ? 20 - c.name.size() : 1, ' ');
    os << format_deviation(c.deviation) << (c.expect_violation ? "  (must exceed tolerance)" : "") << "  "
       << c.description << "\n";
  }
  os << (passed ? "PASS" : "FAIL");
  if (!passed) {
    os << ":";
    for (const auto& n : failing()) os << " " << n;
  }
  os << "\n";
  return os.str();
}

EquivarianceReport check_equivariance(Model& model, const Mesh& mesh, const CheckOptions& options) {
  if (options.trials == 0) throw ConfigError("check-equivariance needs at least one trial");
  const ModelConfig& config = model.config();
  PrepareOptions prep;
  prep.corner_order = options.inject_fault ? CornerOrder::vertex_index : CornerOrder::winding;

  const Sample base = prepare_sample(mesh, config, prep);
  const Outputs ref = run(model, base);
  const std::size_t n = mesh.num_vertices();

  double dev_h = 0.0, dev_x = 0.0, dev_ref = 0.0, dev_noswap = 0.0, dev_perm = 0.0, dev_scale = 0.0;
  Rng rng(options.seed);
  for (std::size_t trial = 0; trial < options.trials; ++trial) {
    Mat3 proper = identity3(), improper = identity3();
    Vec3 t{0, 0, 0}, t2{0, 0, 0};
    double alpha = 1.0;
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    bool swap = false;
    if (!options.identity) {
      proper = random_orthogonal(rng, 1);
      improper = random_orthogonal(rng, -1);
      t = random_vector(rng, 2.0);
      t2 = random_vector(rng, 2.0);
      alpha = std::exp(rng.uniform(-3.0, 3.0));
      perm = random_permutation(n, rng);
      swap = true;
    }

    // Proper motion, on the node state and on the raw mesh.
    {
      const Outputs s = run(model, move_state(base, config, proper, t, false, prep.corner_order));
      const Expectation e{proper, t, {}};
      dev_h = std::max(dev_h, invariant_deviation(ref, s, e));
      dev_x = std::max(dev_x, covariant_deviation(ref, s, e));

      const Outputs m = run(model, prepare_sample(transform_mesh(mesh, proper, t, false), config, prep));
      const Expectation em{proper, {0, 0, 0}, {}};
      dev_h = std::max(dev_h, invariant_deviation(ref, m, em));
      dev_x = std::max(dev_x, covariant_deviation(ref, m, em));
    }

    // Improper motion with and without the winding swap.
    {
      const Expectation e{improper, t2, {}};
      const Expectation em{improper, {0, 0, 0}, {}};
      const Outputs s = run(model, move_state(base, config, improper, t2, swap, prep.corner_order));
      const Outputs m = run(model, prepare_sample(transform_mesh(mesh, improper, t2, swap), config, prep));
      dev_ref = std::max({dev_ref, invariant_deviation(ref, s, e), covariant_deviation(ref, s, e),
                          invariant_deviation(ref, m, em), covariant_deviation(ref, m, em)});

      const Outputs ns = run(model, move_state(base, config, improper, t2, false, prep.corner_order));
      const Outputs nm = run(model, prepare_sample(transform_mesh(mesh, improper, t2, false), config, prep));
      dev_noswap = std::max({dev_noswap, invariant_deviation(ref, ns, e), covariant_deviation(ref, ns, e),
                             invariant_deviation(ref, nm, em), covariant_deviation(ref, nm, em)});
    }

    // Relabeling. Index tie-breaks in sampling cannot be label-independent on
    // symmetric meshes, so the base hierarchy is carried over under the new labels.
    {
      Sample p = prepare_sample(permute_mesh(mesh, perm), config, prep);
      p.hierarchy = relabel_hierarchy(base.hierarchy, perm);
      const Outputs o = run(model, p);
      const Expectation e{identity3(), {0, 0, 0}, perm};
      dev_perm = std::max({dev_perm, invariant_deviation(ref, o, e), covariant_deviation(ref, o, e)});
    }

    // Uniform scaling before normalization.
    {
      const Outputs o = run(model, prepare_sample(scale_mesh(mesh, alpha), config, prep));
      const Expectation e;
      dev_scale = std::max({dev_scale, invariant_deviation(ref, o, e), covariant_deviation(ref, o, e)});
    }
  }

  EquivarianceReport r;
  r.trials = options.trials;
  r.tolerance = options.tolerance;
  const double tol = options.tolerance;
  const bool sensitive = config.orientation_sensitive() && !options.identity;
  r.checks = {
      {"h_invariance", "h and logits under rotation + translation", dev_h, false, dev_h <= tol},
      {"x_covariance", "X under rotation + translation", dev_x, false, dev_x <= tol},
      {"reflection_swap", "reflection with winding reversed", dev_ref, false, dev_ref <= tol},
      {"reflection_no_swap",
       sensitive ? "reflection keeping the winding (orientation-sensitive model)"
                 : "reflection keeping the winding (model ignores orientation)",
       dev_noswap, sensitive, sensitive ? dev_noswap > tol : dev_noswap <= tol},
      {"permutation", "vertex relabeling", dev_perm, false, dev_perm <= tol},
      {"scale", "uniform scaling before normalization", dev_scale, false, dev_scale <= tol},
  };
  r.passed = std::all_of(r.checks.begin(), r.checks.end(), [](const CheckResult& c) { return c.passed; });
  return r;
}

}  // namespace emnn
