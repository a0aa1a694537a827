#include "dcvae/metrics.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

#include "dcvae/rng.hpp"

namespace dcvae {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

// log N(z; mu, diag(exp(logvar)))
double log_gauss(const std::vector<double>& z, const BankEntry& e) {
  double acc = 0.0;
  for (std::size_t d = 0; d < z.size(); ++d) {
    const double lv = e.logvar[d];
    const double diff = z[d] - e.mu[d];
    acc += lv + diff * diff * std::exp(-lv) + kLog2Pi;
  }
  return -0.5 * acc;
}

double log_sum_exp(const std::vector<double>& xs) {
  double mx = xs[0];
  for (double x : xs) mx = std::max(mx, x);
  double s = 0.0;
  for (double x : xs) s += std::exp(x - mx);
  return mx + std::log(s);
}

}  // namespace

MiEstimate mutual_information(const PosteriorBank& bank, int samples_per_class,
                              std::uint64_t seed) {
  if (samples_per_class < 100)
    throw ConfigError("mutual_information: samples_per_class must be >= 100");
  if (bank.n_classes < 1 || bank.entries.empty())
    throw Error("mutual_information: empty posterior bank");
  std::vector<std::vector<const BankEntry*>> by_class(
      static_cast<std::size_t>(bank.n_classes));
  for (const BankEntry& e : bank.entries) {
    if (e.class_id < 0 || e.class_id >= bank.n_classes)
      throw Error("mutual_information: class id out of range");
    if (static_cast<int>(e.mu.size()) != bank.dim ||
        static_cast<int>(e.logvar.size()) != bank.dim)
      throw ShapeError("mutual_information: posterior dim mismatch");
    by_class[static_cast<std::size_t>(e.class_id)].push_back(&e);
  }
  for (int c = 0; c < bank.n_classes; ++c)
    if (by_class[static_cast<std::size_t>(c)].empty())
      throw Error("mutual_information: class " + std::to_string(c) +
                  " has no posteriors");

  const double log_nc = std::log(static_cast<double>(bank.n_classes));
  std::vector<double> z(static_cast<std::size_t>(bank.dim));
  std::vector<double> comp_logs;
  std::vector<double> class_logs(static_cast<std::size_t>(bank.n_classes));

  auto log_mixture = [&](const std::vector<const BankEntry*>& comps) {
    comp_logs.clear();
    const double logw = -std::log(static_cast<double>(comps.size()));
    for (const BankEntry* e : comps) comp_logs.push_back(logw + log_gauss(z, *e));
    return log_sum_exp(comp_logs);
  };

  double total = 0.0;
  for (int c = 0; c < bank.n_classes; ++c) {
    // per-class sub-stream so classes can be drawn independently
    RngState rng(RngState::derive(seed, static_cast<std::uint64_t>(c)));
    const auto& comps = by_class[static_cast<std::size_t>(c)];
    double class_acc = 0.0;
    for (int s = 0; s < samples_per_class; ++s) {
      const BankEntry* e =
          comps[rng.below(static_cast<std::uint32_t>(comps.size()))];
      for (int d = 0; d < bank.dim; ++d)
        z[static_cast<std::size_t>(d)] =
            e->mu[static_cast<std::size_t>(d)] +
            std::exp(0.5 * e->logvar[static_cast<std::size_t>(d)]) *
                static_cast<double>(rng.normal());
      const double log_qc = log_mixture(comps);
      for (int c2 = 0; c2 < bank.n_classes; ++c2)
        class_logs[static_cast<std::size_t>(c2)] =
            -log_nc + log_mixture(by_class[static_cast<std::size_t>(c2)]);
      const double log_q = log_sum_exp(class_logs);
      class_acc += log_qc - log_q;
    }
    total += class_acc / samples_per_class;
  }
  MiEstimate est;
  est.raw = total / bank.n_classes;
  est.nats = std::max(0.0, est.raw);
  return est;
}

double accuracy(const Tensor& images, const std::vector<int>& targets,
                const LabelPredictor& classifier) {
  if (images.rank() != 4 || images.dim(0) == 0)
    throw Error("accuracy: empty or malformed image set " +
                shape_str(images.shape()));
  if (static_cast<std::size_t>(images.dim(0)) != targets.size())
    throw ShapeError("accuracy: " + std::to_string(targets.size()) +
                     " targets for " + std::to_string(images.dim(0)) +
                     " images");
  for (int t : targets)
    if (t < 0 || t >= classifier.n_classes())
      throw ConfigError("accuracy: target label " + std::to_string(t) +
                        " outside the classifier's label space [0," +
                        std::to_string(classifier.n_classes()) + ")");
  const std::vector<int> pred = classifier.predict(images);
  if (pred.size() != targets.size())
    throw ShapeError("accuracy: classifier returned wrong count");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < targets.size(); ++i)
    if (pred[i] == targets[i]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(targets.size());
}

namespace {

Eigen::MatrixXd sqrtm_psd(const Eigen::MatrixXd& a) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
  Eigen::VectorXd ev = es.eigenvalues();
  for (int i = 0; i < ev.size(); ++i)
    ev[i] = std::sqrt(std::max(ev[i], 1e-10));
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double feature_frechet(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1))
    throw ShapeError("feature_frechet: expected (N,d) sets with equal d, got " +
                     shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const int d = a.dim(1);
  if (a.dim(0) < d + 1 || b.dim(0) < d + 1)
    throw Error("feature_frechet: need at least d+1 = " + std::to_string(d + 1) +
                " rows per set, got " + std::to_string(a.dim(0)) + " and " +
                std::to_string(b.dim(0)));
  check_finite(a, "feature_frechet");
  check_finite(b, "feature_frechet");

  auto to_eigen = [](const Tensor& t) {
    Eigen::MatrixXd m(t.dim(0), t.dim(1));
    for (int r = 0; r < t.dim(0); ++r)
      for (int c = 0; c < t.dim(1); ++c)
        m(r, c) = t[static_cast<std::size_t>(r) * t.dim(1) + c];
    return m;
  };
  Eigen::MatrixXd ma = to_eigen(a), mb = to_eigen(b);
  Eigen::VectorXd mu_a = ma.colwise().mean(), mu_b = mb.colwise().mean();
  Eigen::MatrixXd ca = ma.rowwise() - mu_a.transpose();
  Eigen::MatrixXd cb = mb.rowwise() - mu_b.transpose();
  Eigen::MatrixXd sa = ca.transpose() * ca / (ma.rows() - 1);
  Eigen::MatrixXd sb = cb.transpose() * cb / (mb.rows() - 1);

  Eigen::MatrixXd sa_half = sqrtm_psd(sa);
  Eigen::MatrixXd inner = sa_half * sb * sa_half;
  inner = (inner + inner.transpose()) / 2.0;  // symmetrize fp noise away
  Eigen::MatrixXd cross = sqrtm_psd(inner);

  const double mean_term = (mu_a - mu_b).squaredNorm();
  const double trace_term = sa.trace() + sb.trace() - 2.0 * cross.trace();
  return mean_term + trace_term;
}

}  // namespace dcvae
