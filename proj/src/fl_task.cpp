#include "wfl/fl_task.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace wfl {

namespace {

using MatrixXd = Eigen::MatrixXd;
using ConstWeights = Eigen::Map<const MatrixXd>;

ConstWeights weights_of(const ModelParams& params, const Dataset& ds)
{
  if (params.size() != ds.param_count()) { throw std::invalid_argument("model dimension does not match dataset"); }
  return ConstWeights(params.data(), ds.num_classes, ds.dim() + 1);
}

// Row-wise softmax probabilities for the selected rows; returns the mean
// cross-entropy through `loss` when non-null.
MatrixXd probabilities(const ModelParams& params, const Dataset& ds, std::span<const Eigen::Index> rows,
                       double* loss)
{
  const auto w = weights_of(params, ds);
  const Eigen::Index d = ds.dim();
  const auto m = static_cast<Eigen::Index>(rows.size());
  MatrixXd logits(m, ds.num_classes);
  for (Eigen::Index i = 0; i < m; ++i) {
    logits.row(i) = ds.features.row(rows[static_cast<std::size_t>(i)]) * w.leftCols(d).transpose() +
                    w.col(d).transpose();
  }
  double total = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    double top = logits.row(i).maxCoeff();
    logits.row(i).array() -= top;
    double lse = std::log(logits.row(i).array().exp().sum());
    total += lse - logits(i, ds.labels[static_cast<std::size_t>(rows[static_cast<std::size_t>(i)])]);
    logits.row(i) = (logits.row(i).array() - lse).exp();
  }
  if (loss != nullptr) { *loss = m > 0 ? total / static_cast<double>(m) : 0.0; }
  return logits;
}

std::vector<Eigen::Index> all_rows(const Dataset& ds)
{
  std::vector<Eigen::Index> rows(static_cast<std::size_t>(ds.rows()));
  std::iota(rows.begin(), rows.end(), Eigen::Index{0});
  return rows;
}

ModelParams gradient_from_probabilities(MatrixXd probs, const Dataset& ds, std::span<const Eigen::Index> rows)
{
  const Eigen::Index d = ds.dim();
  const auto m = static_cast<Eigen::Index>(rows.size());
  for (Eigen::Index i = 0; i < m; ++i) {
    probs(i, ds.labels[static_cast<std::size_t>(rows[static_cast<std::size_t>(i)])]) -= 1.0;
  }
  MatrixXd grad = MatrixXd::Zero(ds.num_classes, d + 1);
  for (Eigen::Index i = 0; i < m; ++i) {
    grad.leftCols(d).noalias() += probs.row(i).transpose() * ds.features.row(rows[static_cast<std::size_t>(i)]);
    grad.col(d) += probs.row(i).transpose();
  }
  grad /= static_cast<double>(std::max<Eigen::Index>(m, 1));
  return Eigen::Map<ModelParams>(grad.data(), grad.size());
}

} // namespace

void Dataset::validate() const
{
  if (features.rows() < 1 || features.cols() < 1) { throw std::invalid_argument("dataset must have n >= 1 and d >= 1"); }
  if (num_classes < 2) { throw std::invalid_argument("dataset needs at least two classes"); }
  if (labels.size() != static_cast<std::size_t>(features.rows())) {
    throw std::invalid_argument("label count does not match feature rows");
  }
  std::vector<int> seen(static_cast<std::size_t>(num_classes), 0);
  for (int y : labels) {
    if (y < 0 || y >= num_classes) { throw std::invalid_argument("label out of range"); }
    seen[static_cast<std::size_t>(y)] = 1;
  }
  if (std::find(seen.begin(), seen.end(), 0) != seen.end()) {
    throw std::invalid_argument("every class label must appear at least once");
  }
}

Eigen::MatrixXd draw_cluster_means(int classes, int dim, double separation, Rng& rng)
{
  std::normal_distribution<double> normal(0.0, 1.0);
  MatrixXd means(classes, dim);
  for (Eigen::Index k = 0; k < means.rows(); ++k) {
    for (Eigen::Index j = 0; j < means.cols(); ++j) { means(k, j) = normal(rng); }
    // Fix every mean at distance `separation` from the origin.
    means.row(k) *= separation / std::max(means.row(k).norm(), 1e-12);
  }
  return means;
}

Dataset sample_clusters(const Eigen::MatrixXd& means, int n, double cluster_spread, Rng& rng)
{
  if (n < means.rows()) { throw std::invalid_argument("need at least one sample per class"); }
  std::normal_distribution<double> normal(0.0, 1.0);
  Dataset ds;
  ds.num_classes = static_cast<int>(means.rows());
  ds.features.resize(n, means.cols());
  ds.labels.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    int y = i % ds.num_classes;
    ds.labels[static_cast<std::size_t>(i)] = y;
    for (Eigen::Index j = 0; j < means.cols(); ++j) { ds.features(i, j) = means(y, j) + cluster_spread * normal(rng); }
  }
  return ds;
}

Dataset generate_synthetic_dataset(int n, int classes, int dim, double cluster_spread, Rng& rng)
{
  if (classes < 2 || dim < 1 || n < classes) { throw std::invalid_argument("invalid synthetic dataset shape"); }
  auto means = draw_cluster_means(classes, dim, std::sqrt(static_cast<double>(dim)), rng);
  return sample_clusters(means, n, cluster_spread, rng);
}

SyntheticTask generate_synthetic_task(int n_train, int n_test, int classes, int dim, double cluster_spread,
                                      double separation, Rng& rng)
{
  if (classes < 2 || dim < 1 || n_train < classes || n_test < classes) {
    throw std::invalid_argument("invalid synthetic task shape");
  }
  auto means = draw_cluster_means(classes, dim, separation, rng);
  SyntheticTask task;
  task.train = sample_clusters(means, n_train, cluster_spread, rng);
  task.test = sample_clusters(means, n_test, cluster_spread, rng);
  return task;
}

Dataset load_dataset_csv(const std::string& path)
{
  std::ifstream in(path);
  if (!in) { throw std::runtime_error("cannot open dataset file " + path); }
  std::string line;
  std::getline(in, line);
  std::replace(line.begin(), line.end(), ',', ' ');
  std::istringstream header(line);
  long n = 0, d = 0, k = 0;
  if (!(header >> n >> d >> k) || n < 1 || d < 1 || k < 2) {
    throw std::runtime_error("dataset header must be 'n,d,K'");
  }
  Dataset ds;
  ds.num_classes = static_cast<int>(k);
  ds.features.resize(n, d);
  ds.labels.resize(static_cast<std::size_t>(n));
  for (long i = 0; i < n; ++i) {
    if (!std::getline(in, line)) { throw std::runtime_error("dataset file has fewer rows than its header"); }
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream row(line);
    for (long j = 0; j < d; ++j) {
      if (!(row >> ds.features(i, j))) { throw std::runtime_error("malformed dataset row " + std::to_string(i)); }
    }
    if (!(row >> ds.labels[static_cast<std::size_t>(i)])) {
      throw std::runtime_error("missing label on dataset row " + std::to_string(i));
    }
  }
  ds.validate();
  return ds;
}

std::vector<Shard> dirichlet_partition(const Dataset& dataset, int n_clients, double tau, Rng& rng)
{
  if (n_clients < 1) { throw std::invalid_argument("dirichlet_partition: need at least one client"); }
  if (!(tau > 0.0)) { throw std::invalid_argument("dirichlet_partition: tau must be positive"); }
  if (n_clients > dataset.rows()) { throw std::invalid_argument("dirichlet_partition: more clients than samples"); }

  std::vector<Shard> shards(static_cast<std::size_t>(n_clients));
  for (int c = 0; c < n_clients; ++c) { shards[static_cast<std::size_t>(c)].owner = c; }

  std::vector<std::vector<Eigen::Index>> by_class(static_cast<std::size_t>(dataset.num_classes));
  for (Eigen::Index i = 0; i < dataset.rows(); ++i) {
    by_class[static_cast<std::size_t>(dataset.labels[static_cast<std::size_t>(i)])].push_back(i);
  }

  std::gamma_distribution<double> gamma(tau, 1.0);
  std::vector<double> share(static_cast<std::size_t>(n_clients));
  for (auto& members : by_class) {
    std::shuffle(members.begin(), members.end(), rng);
    double total = 0.0;
    for (auto& s : share) {
      s = gamma(rng);
      total += s;
    }
    if (!(total > 0.0)) {
      // Every gamma draw underflowed; hand the class to one client.
      std::fill(share.begin(), share.end(), 0.0);
      share[std::uniform_int_distribution<std::size_t>(0, share.size() - 1)(rng)] = 1.0;
      total = 1.0;
    }
    // Cut the shuffled class list at the cumulative proportions.
    double cumulative = 0.0;
    std::size_t begin = 0;
    for (std::size_t c = 0; c < share.size(); ++c) {
      cumulative += share[c] / total;
      auto end = c + 1 == share.size()
                     ? members.size()
                     : std::min(members.size(), static_cast<std::size_t>(std::llround(cumulative * members.size())));
      end = std::max(end, begin);
      shards[c].indices.insert(shards[c].indices.end(), members.begin() + static_cast<std::ptrdiff_t>(begin),
                               members.begin() + static_cast<std::ptrdiff_t>(end));
      begin = end;
    }
  }

  // Rebalance: every empty shard takes one sample from the currently largest shard.
  for (auto& shard : shards) {
    if (!shard.indices.empty()) { continue; }
    auto largest = std::max_element(shards.begin(), shards.end(),
                                    [](const Shard& a, const Shard& b) { return a.size() < b.size(); });
    shard.indices.push_back(largest->indices.back());
    largest->indices.pop_back();
  }
  for (auto& shard : shards) { std::sort(shard.indices.begin(), shard.indices.end()); }
  return shards;
}

ModelParams zero_model(const Dataset& dataset) { return ModelParams::Zero(dataset.param_count()); }

double local_loss(const ModelParams& params, const Dataset& dataset, const Shard& shard)
{
  if (shard.indices.empty()) { throw std::invalid_argument("local_loss: empty shard"); }
  double loss = 0.0;
  probabilities(params, dataset, shard.indices, &loss);
  return loss;
}

double full_loss(const ModelParams& params, const Dataset& dataset)
{
  auto rows = all_rows(dataset);
  double loss = 0.0;
  probabilities(params, dataset, rows, &loss);
  return loss;
}

double accuracy(const ModelParams& params, const Dataset& dataset)
{
  auto rows = all_rows(dataset);
  MatrixXd probs = probabilities(params, dataset, rows, nullptr);
  Eigen::Index hits = 0;
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    Eigen::Index arg = 0;
    probs.row(i).maxCoeff(&arg);
    hits += arg == dataset.labels[static_cast<std::size_t>(i)] ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(probs.rows());
}

ModelParams loss_gradient(const ModelParams& params, const Dataset& dataset, std::span<const Eigen::Index> rows)
{
  return gradient_from_probabilities(probabilities(params, dataset, rows, nullptr), dataset, rows);
}

ModelParams local_train(const ModelParams& start, const Dataset& dataset, const Shard& shard, int epochs, double lr,
                        int batch, Rng& rng)
{
  if (shard.indices.empty()) { throw std::invalid_argument("local_train: empty shard"); }
  if (!(lr > 0.0) || batch < 1) { throw std::invalid_argument("local_train: lr and batch must be positive"); }
  ModelParams params = start;
  std::vector<Eigen::Index> order = shard.indices;
  const auto b = static_cast<std::size_t>(batch);
  for (int e = 0; e < epochs; ++e) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t begin = 0; begin < order.size(); begin += b) {
      std::span<const Eigen::Index> rows(order.data() + begin, std::min(b, order.size() - begin));
      params -= lr * loss_gradient(params, dataset, rows);
    }
  }
  return params;
}

AggregationWeights data_proportional_weights(std::span<const Shard* const> shards)
{
  double total = 0.0;
  for (const Shard* s : shards) { total += static_cast<double>(s->size()); }
  if (!(total > 0.0)) { throw std::invalid_argument("data_proportional_weights: no data"); }
  AggregationWeights w;
  for (const Shard* s : shards) { w[s->owner] = static_cast<double>(s->size()) / total; }
  return w;
}

ModelParams aggregate(std::span<const ModelParams> models, std::span<const double> weights)
{
  if (models.empty() || models.size() != weights.size()) {
    throw std::invalid_argument("aggregate: weights must cover exactly the listed models");
  }
  double sum = 0.0;
  for (double w : weights) {
    if (w < 0.0) { throw std::invalid_argument("aggregate: negative weight"); }
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9) { throw std::invalid_argument("aggregate: weights do not sum to 1"); }
  ModelParams out = ModelParams::Zero(models.front().size());
  for (std::size_t i = 0; i < models.size(); ++i) {
    if (models[i].size() != out.size()) { throw std::invalid_argument("aggregate: model dimensions differ"); }
    out += weights[i] * models[i];
  }
  return out;
}

double global_loss(const std::map<int, ModelParams>& models, const std::map<int, const Shard*>& shards,
                   const AggregationWeights& weights, const Dataset& dataset)
{
  if (models.empty()) { throw std::invalid_argument("global_loss: empty participant set"); }
  if (models.size() != shards.size() || models.size() != weights.size()) {
    throw std::invalid_argument("global_loss: participant sets differ");
  }
  double total_weight = 0.0;
  for (const auto& [id, w] : weights) {
    if (!models.contains(id) || !shards.contains(id)) { throw std::invalid_argument("global_loss: participant sets differ"); }
    total_weight += w;
  }
  if (!(total_weight > 0.0)) { throw std::invalid_argument("global_loss: zero total weight"); }
  double loss = 0.0;
  for (const auto& [id, w] : weights) { loss += w / total_weight * local_loss(models.at(id), dataset, *shards.at(id)); }
  return loss;
}

OracleResult optimal_loss_oracle(const Dataset& dataset, double tolerance, int max_iterations)
{
  return optimal_loss_oracle(dataset, tolerance, zero_model(dataset), max_iterations);
}

OracleResult optimal_loss_oracle(const Dataset& dataset, double tolerance, const ModelParams& start,
                                 int max_iterations)
{
  dataset.validate();
  const auto rows = all_rows(dataset);
  const Eigen::Index n = dataset.rows();
  const Eigen::Index d1 = dataset.dim() + 1;
  const Eigen::Index k = dataset.num_classes;
  const Eigen::Index p = k * d1;

  MatrixXd augmented(n, d1);
  augmented.leftCols(d1 - 1) = dataset.features;
  augmented.col(d1 - 1).setOnes();

  ModelParams w = start;
  double loss = 0.0;
  MatrixXd probs = probabilities(w, dataset, rows, &loss);
  for (int it = 0; it < max_iterations; ++it) {
    ModelParams grad = gradient_from_probabilities(probs, dataset, rows);
    double gnorm = grad.norm();
    if (gnorm < tolerance) { return {loss, w, it}; }

    // Hessian block (a, b) = X^T diag(p_a (delta_ab - p_b)) X / n in the column-major parameter layout.
    MatrixXd hessian(p, p);
    for (Eigen::Index a = 0; a < k; ++a) {
      for (Eigen::Index b = a; b < k; ++b) {
        Eigen::VectorXd c = (probs.col(a).array() * ((a == b ? 1.0 : 0.0) - probs.col(b).array())).matrix();
        MatrixXd block = augmented.transpose() * c.asDiagonal() * augmented / static_cast<double>(n);
        for (Eigen::Index i = 0; i < d1; ++i) {
          for (Eigen::Index j = 0; j < d1; ++j) {
            hessian(a + k * i, b + k * j) = block(i, j);
            hessian(b + k * j, a + k * i) = block(i, j);
          }
        }
      }
    }
    // The softmax objective is flat along a common shift of all classes; a small ridge fixes that direction.
    hessian.diagonal().array() += 1e-8 + 1e-6 * gnorm;
    ModelParams step = -hessian.ldlt().solve(grad);
    if (!step.allFinite() || step.dot(grad) >= 0.0) { step = -grad; }

    double t = 1.0;
    double slope = step.dot(grad);
    ModelParams candidate;
    double candidate_loss = loss;
    MatrixXd candidate_probs;
    for (int ls = 0; ls < 60; ++ls) {
      candidate = w + t * step;
      candidate_probs = probabilities(candidate, dataset, rows, &candidate_loss);
      if (candidate_loss <= loss + 1e-4 * t * slope) { break; }
      t *= 0.5;
    }
    if (!(candidate_loss < loss)) {
      // No further progress possible in floating point.
      if (gnorm < 10.0 * tolerance) { return {loss, w, it}; }
      throw OracleNotConverged(loss, gnorm);
    }
    w = std::move(candidate);
    loss = candidate_loss;
    probs = std::move(candidate_probs);
  }
  ModelParams grad = gradient_from_probabilities(probs, dataset, rows);
  if (grad.norm() < tolerance) { return {loss, w, max_iterations}; }
  throw OracleNotConverged(loss, grad.norm());
}

} // namespace wfl
