#include "fedecho/verify.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "fedecho/distill.hpp"
#include "fedecho/gradient_identity.hpp"
#include "fedecho/model.hpp"
#include "fedecho/rng.hpp"

namespace fedecho {
namespace {

Index draw_dim(RngStream& rng, Index lo, Index hi) {
  return lo + static_cast<Index>(rng.uniform_index(static_cast<std::uint64_t>(hi - lo + 1)));
}

DenseMatrix normal_matrix(RngStream& rng, Index rows, Index cols, double scale = 1.0) {
  DenseMatrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

ModelParams random_model(const Architecture& arch, RngStream& rng) {
  DenseVector theta(arch.parameter_count());
  for (Index i = 0; i < theta.size(); ++i) theta(i) = rng.normal();
  return {arch, theta};
}

std::vector<int> random_labels(RngStream& rng, Index n, Index classes) {
  std::vector<int> y(static_cast<std::size_t>(n));
  for (auto& v : y) v = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(classes)));
  return y;
}

VerifyReport grad_fd(int trials, std::uint64_t seed) {
  VerifyReport rep{VerifyKind::GradFd, trials, 0.0, 1e-6, false, {}};
  for (int t = 0; t < trials; ++t) {
    RngStream rng = RngStream::named(seed, "verify-grad-fd", static_cast<std::uint64_t>(t));
    const Index d = draw_dim(rng, 1, 6), k = draw_dim(rng, 2, 6), n = draw_dim(rng, 1, 5);
    const Architecture arch = t % 2 == 0 ? Architecture::linear(d, k)
                                         : Architecture::mlp(d, draw_dim(rng, 1, 6), k);
    const ModelParams m = random_model(arch, rng);
    Batch b{normal_matrix(rng, n, d), random_labels(rng, n, k)};
    const Logits teacher = normal_matrix(rng, n, k, 2.0);

    auto ce = [&](const DenseVector& th) { return ce_loss_and_grad({arch, th}, b).loss; };
    rep.max_error = std::max(rep.max_error,
                             max_fd_relative_error(ce, m.theta, ce_loss_and_grad(m, b).grad));
    for (double alpha : {0.0, 0.5, 1.0}) {
      auto fd = [&](const DenseVector& th) {
        return distill_loss_and_grad({arch, th}, b.inputs, teacher, alpha).loss;
      };
      rep.max_error = std::max(
          rep.max_error,
          max_fd_relative_error(fd, m.theta, distill_loss_and_grad(m, b.inputs, teacher, alpha).grad));
    }
  }
  rep.passed = rep.max_error < rep.threshold;
  return rep;
}

VerifyReport identity_linear(int trials, std::uint64_t seed) {
  VerifyReport rep{VerifyKind::IdentityLinear, trials, 0.0, 1e-10, false, {}};
  for (int t = 0; t < trials; ++t) {
    RngStream rng = RngStream::named(seed, "verify-identity-linear", static_cast<std::uint64_t>(t));
    const Index d = draw_dim(rng, 1, 8), k = draw_dim(rng, 2, 5), n = draw_dim(rng, 1, 6);
    const Index teachers = draw_dim(rng, 1, 10);
    const Architecture arch = Architecture::linear(d, k);
    const ModelParams student = random_model(arch, rng);
    std::vector<ModelParams> ts;
    for (Index i = 0; i < teachers; ++i) ts.push_back(random_model(arch, rng));
    const DenseMatrix a = normal_matrix(rng, n, d);
    const auto labels = random_labels(rng, n, k);
    rep.max_error = std::max(rep.max_error, verify_identity_linear(student, ts, a, labels));
  }
  rep.passed = rep.max_error < rep.threshold;
  return rep;
}

VerifyReport identity_generic(int trials, std::uint64_t seed) {
  VerifyReport rep{VerifyKind::IdentityGeneric, trials, 0.0, 1e-8, false, {}};
  double fd_error = 0.0;
  for (int t = 0; t < trials; ++t) {
    RngStream rng = RngStream::named(seed, "verify-identity-generic", static_cast<std::uint64_t>(t));
    const Index d = draw_dim(rng, 1, 6), h = draw_dim(rng, 1, 6), k = draw_dim(rng, 2, 6);
    const Index n = draw_dim(rng, 1, 5), teachers = draw_dim(rng, 1, 5);
    const Architecture arch = Architecture::mlp(d, h, k);
    const ModelParams student = random_model(arch, rng);
    std::vector<ModelParams> ts;
    for (Index i = 0; i < teachers; ++i) ts.push_back(random_model(arch, rng));
    const DenseMatrix a = normal_matrix(rng, n, d);
    const auto labels = random_labels(rng, n, k);
    rep.max_error = std::max(rep.max_error, verify_identity_generic(student, ts, a, labels));

    const Logits teacher = teacher_soft_labels(ts, a).array().log().matrix();
    auto fd = [&](const DenseVector& th) { return distill_loss_and_grad({arch, th}, a, teacher, 1.0).loss; };
    fd_error = std::max(fd_error, max_fd_relative_error(
                                      fd, student.theta, distill_loss_and_grad(student, a, teacher, 1.0).grad));
  }
  std::ostringstream os;
  os << "finite-difference relative error " << fd_error << " (threshold 1e-06)";
  rep.detail = os.str();
  rep.passed = rep.max_error < rep.threshold && fd_error < 1e-6;
  return rep;
}

VerifyReport clip(int trials, std::uint64_t seed) {
  VerifyReport rep{VerifyKind::Clip, trials, 0.0, 1e-12, false, {}};
  for (int t = 0; t < trials; ++t) {
    RngStream rng = RngStream::named(seed, "verify-clip", static_cast<std::uint64_t>(t));
    const Index p = draw_dim(rng, 1, 64);
    const double scale = std::pow(10.0, rng.uniform(-3.0, 3.0));
    const DenseVector g = normal_matrix(rng, p, 1, scale);
    const double nu = t % 5 == 4 ? std::numeric_limits<double>::infinity()
                                 : std::pow(10.0, rng.uniform(-2.0, 2.0));
    const DenseVector out = clip_gradient(g, nu);
    if (out.norm() > nu) {
      rep.max_error = std::max(rep.max_error, out.norm() - nu);
      rep.passed = false;
      rep.detail = "post-clip norm exceeded the threshold";
      return rep;
    }
    if (g.norm() <= nu) {
      rep.max_error = std::max(rep.max_error, (out - g).cwiseAbs().maxCoeff());
    } else if (g.norm() > 0.0) {
      const double cosine = out.dot(g) / (out.norm() * g.norm());
      rep.max_error = std::max(rep.max_error, std::abs(1.0 - cosine));
    }
  }
  rep.passed = rep.max_error <= rep.threshold;
  return rep;
}

VerifyReport entropy(int trials, std::uint64_t seed) {
  VerifyReport rep{VerifyKind::Entropy, trials, 0.0, 1e-12, false, {}};
  DistillConfig cfg;
  bool ok = true;
  std::ostringstream why;
  for (int t = 0; t < trials; ++t) {
    RngStream rng = RngStream::named(seed, "verify-entropy", static_cast<std::uint64_t>(t));
    const Index k = draw_dim(rng, 2, 10), n = draw_dim(rng, 1, 8);
    const DenseMatrix flat = DenseMatrix::Constant(n, k, rng.normal());
    rep.max_error = std::max(rep.max_error, std::abs(batch_entropy(flat, k).normalized - 1.0));

    DenseMatrix peaked = DenseMatrix::Zero(n, k);
    for (Index r = 0; r < n; ++r) peaked(r, static_cast<Index>(rng.uniform_index(static_cast<std::uint64_t>(k)))) = 1000.0;
    if (!(batch_entropy(peaked, k).normalized < 1e-3)) {
      ok = false;
      why << "near-one-hot entropy not below 1e-3; ";
    }

    const double h = batch_entropy(normal_matrix(rng, n, k, 3.0), k).normalized;
    cfg.alpha_min = rng.uniform(0.0, 0.5);
    cfg.alpha_max = rng.uniform(cfg.alpha_min, 1.0);
    const double a = interpolate_alpha(h, cfg);
    if (!(h >= 0.0 && h <= 1.0) || !(a >= cfg.alpha_min && a <= cfg.alpha_max)) {
      ok = false;
      why << "entropy or alpha out of range; ";
    }
    if (interpolate_alpha(0.0, cfg) != cfg.alpha_min || interpolate_alpha(1.0, cfg) != cfg.alpha_max) {
      ok = false;
      why << "alpha endpoints not exact; ";
    }
  }
  rep.detail = why.str();
  rep.passed = ok && rep.max_error <= rep.threshold;
  return rep;
}

}  // namespace

std::optional<VerifyKind> parse_verify_kind(const std::string& name) {
  if (name == "grad-fd") return VerifyKind::GradFd;
  if (name == "identity-linear") return VerifyKind::IdentityLinear;
  if (name == "identity-generic") return VerifyKind::IdentityGeneric;
  if (name == "clip") return VerifyKind::Clip;
  if (name == "entropy") return VerifyKind::Entropy;
  return std::nullopt;
}

std::string to_string(VerifyKind kind) {
  switch (kind) {
    case VerifyKind::GradFd:
      return "grad-fd";
    case VerifyKind::IdentityLinear:
      return "identity-linear";
    case VerifyKind::IdentityGeneric:
      return "identity-generic";
    case VerifyKind::Clip:
      return "clip";
    case VerifyKind::Entropy:
      return "entropy";
  }
  return "unknown";
}

double max_fd_relative_error(const std::function<double(const DenseVector&)>& loss,
                             const DenseVector& at, const DenseVector& analytic, double h) {
  double worst = 0.0;
  DenseVector probe = at;
  for (Index i = 0; i < at.size(); ++i) {
    probe(i) = at(i) + h;
    const double up = loss(probe);
    probe(i) = at(i) - h;
    const double down = loss(probe);
    probe(i) = at(i);
    const double numeric = (up - down) / (2.0 * h);
    const double denom = std::max({1.0, std::abs(analytic(i)), std::abs(numeric)});
    worst = std::max(worst, std::abs(analytic(i) - numeric) / denom);
  }
  return worst;
}

VerifyReport run_verify(VerifyKind kind, int trials, std::uint64_t seed) {
  if (trials < 1) throw ConfigError("verify: trials must be at least 1");
  switch (kind) {
    case VerifyKind::GradFd:
      return grad_fd(trials, seed);
    case VerifyKind::IdentityLinear:
      return identity_linear(trials, seed);
    case VerifyKind::IdentityGeneric:
      return identity_generic(trials, seed);
    case VerifyKind::Clip:
      return clip(trials, seed);
    case VerifyKind::Entropy:
      return entropy(trials, seed);
  }
  throw ConfigError("unknown verify kind");
}

}  // namespace fedecho
